/** Spawns the Python service for end-to-end tests and cleans it up. */

import { spawn, type ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));
export const repoRoot = join(here, "..", "..");

export interface LiveService {
  base: string;
  stop: () => void;
}

export async function startService(): Promise<LiveService> {
  const port = 8420 + (process.pid % 400);
  const base = `http://127.0.0.1:${port}`;
  const child: ChildProcess = spawn(
    "python3",
    ["-m", "bats.cli", "serve", "--bind", `127.0.0.1:${port}`],
    {
      cwd: repoRoot,
      env: { ...process.env, PYTHONPATH: join(repoRoot, "src") },
      stdio: ["ignore", "pipe", "pipe"],
    },
  );
  let stderr = "";
  child.stderr?.on("data", (chunk) => (stderr += String(chunk)));

  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const response = await fetch(`${base}/api/health`);
      if (response.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      child.kill();
      throw new Error(`service did not come up on ${base}\n${stderr}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  return {
    base,
    stop: () => {
      child.kill("SIGTERM");
    },
  };
}

export function benchDocument(): unknown {
  const raw = readFileSync(join(repoRoot, "sample_models", "bench.bats.json"), "utf-8");
  return JSON.parse(raw);
}

/** Fetch wrapper that counts requests and keeps response payload copies. */
export function recordingFetch() {
  const log: { url: string; method: string; payload: unknown }[] = [];
  const fetchFn = async (input: string, init?: RequestInit): Promise<Response> => {
    const response = await fetch(input, init);
    const copy = response.clone();
    let payload: unknown = null;
    try {
      payload = await copy.json();
    } catch {
      payload = null;
    }
    log.push({ url: input, method: init?.method ?? "GET", payload });
    return response;
  };
  return { fetchFn, log };
}
