import { ApiClient } from "./api.js";
import { clear, el, fmt } from "./dom.js";
import { ApiError, SessionState } from "./types.js";

/**
 * Troubleshoot wizard: one recommendation card at a time, outcome buttons,
 * posterior bars, history with undo.
 *
 * State discipline: the rendered numbers are always the last server response,
 * never computed locally; at most one mutation request is in flight, and its
 * `seq` is the last one the server confirmed. A 409 means another writer got
 * there first: refetch silently and re-render.
 */
export class WizardController {
  state: SessionState | null = null;
  inFlight = false;
  lastError = "";

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
  ) {}

  async start(modelId: string, profile?: string): Promise<void> {
    this.state = await this.api.createSession(modelId, profile);
    this.lastError = "";
    this.render();
  }

  async choose(outcome: string): Promise<void> {
    if (!this.state || this.inFlight || !this.state.recommendation) return;
    await this.mutate(() =>
      this.api.postOutcome(
        this.state!.session_id,
        this.state!.seq,
        this.state!.recommendation!.step_id,
        outcome,
      ),
    );
  }

  async undo(): Promise<void> {
    if (!this.state || this.inFlight) return;
    await this.mutate(() => this.api.postUndo(this.state!.session_id, this.state!.seq));
  }

  private async mutate(send: () => Promise<SessionState>): Promise<void> {
    this.inFlight = true;
    try {
      this.state = await send();
      this.lastError = "";
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // Stale seq: somebody else moved the session. Recover silently.
        this.state = await this.api.getSession(this.state!.session_id);
        this.lastError = "";
      } else if (error instanceof ApiError) {
        this.lastError = `${error.code}: ${error.message}`;
      } else {
        throw error;
      }
    } finally {
      this.inFlight = false;
    }
    this.render();
  }

  render(): void {
    const root = clear(this.root);
    const state = this.state;
    if (!state) {
      root.append(el("p", { class: "hint" }, "Pick a model to start troubleshooting."));
      return;
    }

    if (state.terminal) {
      const banner = el(
        "div",
        { class: `banner ${state.terminal.status}`, "data-role": "terminal" },
        state.terminal.status === "resolved"
          ? `Problem resolved by ${state.terminal.resolved_by ?? "?"}.`
          : "Out of steps; handing off to a support agent with the history below.",
      );
      root.append(banner);
    } else if (state.recommendation) {
      const rec = state.recommendation;
      const card = el("div", { class: "card", "data-role": "recommendation" });
      card.append(el("h3", {}, rec.name));
      if (rec.explanation) card.append(el("p", { class: "explanation" }, rec.explanation));
      const facts = el("p", { class: "facts" });
      facts.append(`cost ${fmt(rec.cost)}`);
      if (rec.success_probability !== null) {
        facts.append(` · success ${fmt(rec.success_probability)}`);
      }
      facts.append(` · plan cost ${fmt(rec.ecr)}`);
      card.append(facts);
      const buttons = el("div", { class: "outcomes" });
      for (const outcome of rec.outcomes) {
        const button = el(
          "button",
          { "data-outcome": outcome, "data-step": rec.step_id },
          outcome,
        ) as HTMLButtonElement;
        button.disabled = this.inFlight;
        button.addEventListener("click", () => void this.choose(outcome));
        buttons.append(button);
      }
      card.append(buttons);
      root.append(card);
    }

    if (this.lastError) {
      root.append(el("p", { class: "error", "data-role": "error" }, this.lastError));
    }

    const bars = el("div", { class: "posterior", "data-role": "posterior" });
    for (const [cause, value] of Object.entries(state.posterior)) {
      const bar = el("div", { class: "bar", "data-cause": cause, "data-value": String(value) });
      const fill = el("span", { class: "fill" });
      fill.style.width = `${(value * 100).toFixed(2)}%`;
      bar.append(fill, el("label", {}, `${cause} ${fmt(value)}`));
      bars.append(bar);
    }
    root.append(bars);

    const historyBox = el("div", { class: "history", "data-role": "history" });
    historyBox.append(el("h4", {}, "History"));
    const list = el("ol", {});
    for (const item of state.history) {
      list.append(el("li", {}, `${item.step_id} → ${item.outcome}`));
    }
    historyBox.append(list);
    const undoButton = el("button", { "data-role": "undo" }, "Undo") as HTMLButtonElement;
    undoButton.disabled = this.inFlight || state.history.length === 0;
    undoButton.addEventListener("click", () => void this.undo());
    historyBox.append(undoButton);
    root.append(historyBox);
  }
}
