// @vitest-environment jsdom
/** Author workspace against a live service: coupled sliders and wish fitting. */

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { AuthorController } from "../src/author.js";
import type { ChangedCell, SliderResponse } from "../src/types.js";
import { benchDocument, recordingFetch, startService, type LiveService } from "./harness.js";

let service: LiveService;

beforeAll(async () => {
  service = await startService();
  const api = new ApiClient(service.base);
  await api.uploadModel(benchDocument());
});

afterAll(() => {
  service?.stop();
});

function cells(root: HTMLElement): Map<string, HTMLElement> {
  const map = new Map<string, HTMLElement>();
  for (const node of root.querySelectorAll<HTMLElement>('[data-role="cell"]')) {
    map.set(`${node.dataset.cause}/${node.dataset.answer}`, node);
  }
  return map;
}

describe("author workspace against a live service", () => {
  it("slider drag sends exactly one request and re-renders exactly the changed cells", async () => {
    const { fetchFn, log } = recordingFetch();
    const api = new ApiClient(service.base, fetchFn);
    const root = document.createElement("div");
    const author = new AuthorController(api, root);
    await author.load("bench", "q-recent-change");

    const before = cells(root);
    const target = before.get("driver/yes")!;
    const oldValue = Number(target.dataset.value);
    const input = target.querySelector<HTMLInputElement>("input")!;
    input.value = String(oldValue / 2);

    log.length = 0;
    input.dispatchEvent(new window.Event("change"));
    await new Promise((resolve) => setTimeout(resolve, 150));

    // Exactly one network call, to the slider endpoint.
    expect(log.length).toBe(1);
    expect(log[0].method).toBe("POST");
    expect(log[0].url).toContain("/questions/q-recent-change/slider");
    const response = log[0].payload as SliderResponse;
    const changed = response.changed_cells as ChangedCell[];
    expect(changed.length).toBeGreaterThan(0);

    // Cells named in the response were re-rendered (rev bumped to 1) with the
    // server's values; every other cell is untouched at rev 0.
    const after = cells(root);
    const changedKeys = new Set(changed.map((c) => `${c.cause}/${c.answer}`));
    for (const [key, node] of after) {
      if (changedKeys.has(key)) {
        expect(node.dataset.rev).toBe("1");
        const fromServer = changed.find((c) => `${c.cause}/${c.answer}` === key)!;
        expect(Number(node.dataset.value)).toBe(fromServer.value);
      } else {
        expect(node.dataset.rev).toBe("0");
      }
    }
  });

  it("infeasible drags surface the server clamp instead of local math", async () => {
    const api = new ApiClient(service.base);
    const root = document.createElement("div");
    const author = new AuthorController(api, root);
    await author.load("bench", "q-recent-change");

    // Dragging to 1.0 exceeds P(cause)/P(answer); the server clamps and the
    // clamped value is what lands in the cell.
    await author.drag("driver", "yes", 1.0);
    const node = cells(root).get("driver/yes")!;
    const value = Number(node.dataset.value);
    expect(value).toBeLessThan(1.0);
    expect(value).toBeGreaterThan(0.0);
  });

  it("fit with all-zero wishes snaps the table to neutral and badges satisfied", async () => {
    const api = new ApiClient(service.base);
    const root = document.createElement("div");
    const author = new AuthorController(api, root);
    await author.load("bench", "q-recent-change");

    const grid = root.querySelector<HTMLElement>('[data-role="wish-grid"]')!;
    const selects = grid.querySelectorAll<HTMLSelectElement>('[data-role="wish"]');
    expect(selects.length).toBe(4); // 2 causes x 2 answers
    for (const select of selects) {
      select.value = "0";
      select.dispatchEvent(new window.Event("change"));
    }
    const fitResponse = await api.postFit("bench", "q-recent-change", [
      { cause_id: "driver", answer: "yes", level: 0 },
      { cause_id: "driver", answer: "no", level: 0 },
      { cause_id: "firmware", answer: "yes", level: 0 },
      { cause_id: "firmware", answer: "no", level: 0 },
    ]);
    for (const wish of fitResponse.fit_report.wishes) {
      expect(wish.status).toBe("satisfied");
    }
    // Neutral means P(cause | answer) = P(cause) in every cell of a row.
    for (const row of Object.values(fitResponse.table)) {
      const values = Object.values(row);
      for (const value of values) {
        expect(Math.abs(value - values[0])).toBeLessThan(1e-9);
      }
    }

    // Drive the same thing through the UI button and check the badges render.
    root.querySelector<HTMLButtonElement>('[data-role="fit"]')!.click();
    await new Promise((resolve) => setTimeout(resolve, 150));
    const badges = root.querySelectorAll<HTMLElement>('[data-role="badge"]');
    expect(badges.length).toBeGreaterThan(0);
    for (const badge of badges) {
      expect(badge.textContent).toBe("satisfied");
    }
  });
});
