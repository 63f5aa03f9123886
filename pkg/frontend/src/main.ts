/** Page wiring: query params pick the mode, the controller runs trials.
 *
 * Live mode (default): trials come from /api/session, every value arrives
 * through /api/reveal at click time, and the finished session POSTs to
 * /api/upload (download fallback on failure, same bytes).
 *
 * Practice mode (?mode=practice): trials are built locally under a visible
 * banner; nothing is ever uploaded.
 */

import { ApiClient } from "./api.js";
import { pathTo } from "./model.js";
import { PracticeSession, practiceSession } from "./offline.js";
import { SessionState, newParticipantId } from "./state.js";
import { TreeView } from "./render.js";

interface PageOptions {
  mode: "live" | "practice";
  condition: string;
  trials: number;
  seed: number;
}

function readOptions(): PageOptions {
  const q = new URLSearchParams(window.location.search);
  const mode = q.get("mode") === "practice" ? "practice" : "live";
  return {
    mode,
    condition: q.get("condition") ?? "exp1-far",
    trials: Math.max(1, Number(q.get("trials") ?? "5")),
    seed: Number(q.get("seed") ?? String(Math.floor(Math.random() * 1e6))),
  };
}

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing page element #${id}`);
  return node as T;
}

function downloadBytes(bytes: string, filename: string) {
  const blob = new Blob([bytes], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = filename;
  a.click();
  URL.revokeObjectURL(url);
}

class GameController {
  private readonly opts: PageOptions;
  private readonly api: ApiClient;
  private readonly view: TreeView;
  private session!: SessionState;
  private practice: PracticeSession | null = null;
  private busy = false;

  constructor(opts: PageOptions) {
    this.opts = opts;
    this.api = new ApiClient("");
    this.view = new TreeView(byId<HTMLElement>("tree") as unknown as SVGSVGElement);
  }

  async start() {
    const participant = newParticipantId();
    if (this.opts.mode === "practice") {
      byId("banner").hidden = false;
      this.practice = practiceSession(
        this.opts.condition, this.opts.trials, this.opts.seed);
      this.session = new SessionState(
        "practice", this.practice.condition, this.practice.click_cost,
        this.practice.specs, participant, true);
    } else {
      const doc = await this.api.session(
        this.opts.condition, this.opts.trials, this.opts.seed);
      this.session = SessionState.fromSessionDoc(doc, participant);
    }
    this.nextTrial();
  }

  private nextTrial() {
    if (this.session.done) {
      void this.finish();
      return;
    }
    const trial = this.session.beginTrial();
    this.view.render(trial.spec, {
      onReveal: (id) => void this.handleReveal(id),
      onChoose: (leaf) => void this.handleChoose(leaf),
    });
    this.updateStatus(
      `Trial ${trial.index + 1} of ${this.session.trialCount}. ` +
      `Each look costs ${trial.spec.click_cost}.`);
  }

  private async valueOf(trialIndex: number, node: number): Promise<number> {
    if (this.practice) {
      return this.practice.truths[trialIndex].get(node)!;
    }
    return this.api.reveal(this.session.sessionId, trialIndex, node);
  }

  private async handleReveal(node: number) {
    const trial = this.session.liveTrial;
    if (!trial || this.busy) return;
    if (trial.isRevealed(node)) {
      this.view.flash(node);
      return;
    }
    this.busy = true;
    try {
      const value = await this.valueOf(trial.index, node);
      if (trial.click(node, value)) {
        this.view.setValue(node, value);
        this.updateStatus(
          `Looked at ${trial.clickCount} ` +
          `node${trial.clickCount === 1 ? "" : "s"} ` +
          `(cost so far ${trial.cost}).`);
      }
    } catch (e) {
      this.showMessage(`Could not reveal that node: ${(e as Error).message}`);
    } finally {
      this.busy = false;
    }
  }

  private async handleChoose(leaf: number) {
    const trial = this.session.liveTrial;
    if (!trial || this.busy) return;
    this.busy = true;
    try {
      const path = pathTo(trial.spec, leaf);
      const values = new Map<number, number>();
      for (const id of trial.missingOnPath(path)) {
        values.set(id, await this.valueOf(trial.index, id));
      }
      const entry = this.session.commitCurrent(path, values);
      this.view.markPath(path);
      for (const id of path) {
        this.view.setValue(id, values.get(id) ?? trial.revealed.get(id)!);
      }
      this.view.setEnabled(false);
      this.showMessage(
        `Path earned ${entry.score >= 0 ? "+" : ""}${entry.score} ` +
        `(running total ${this.session.runningScore}).`);
      setTimeout(() => this.nextTrial(), 1400);
    } catch (e) {
      this.showMessage(`Could not commit: ${(e as Error).message}`);
    } finally {
      this.busy = false;
    }
  }

  private async finish() {
    const bytes = this.session.exportBytes();
    if (this.session.practice) {
      this.updateStatus("Practice finished.");
      this.showMessage(
        `Practice over - total ${this.session.runningScore}. ` +
        "Nothing was uploaded.");
      this.offerDownload(bytes, "practice-session.json", "save practice log");
      return;
    }
    this.updateStatus("Uploading session...");
    try {
      const ack = await this.api.upload(bytes);
      this.updateStatus("Session uploaded.");
      this.showMessage(
        `All done - total ${this.session.runningScore}. ` +
        `Recorded ${ack.n_trials} trials as ${ack.participant}. Thank you!`);
    } catch (e) {
      downloadBytes(bytes, `session-${this.session.participant}.json`);
      this.updateStatus("Upload failed; session saved locally.");
      this.showMessage(
        `The upload did not go through (${(e as Error).message}), so your ` +
        "session file was downloaded instead. Nothing was lost.");
      this.offerDownload(bytes, `session-${this.session.participant}.json`,
                         "download again");
    }
  }

  private offerDownload(bytes: string, filename: string, label: string) {
    const controls = byId("controls");
    controls.replaceChildren();
    const button = document.createElement("button");
    button.textContent = label;
    button.addEventListener("click", () => downloadBytes(bytes, filename));
    controls.appendChild(button);
  }

  private updateStatus(text: string) {
    byId("status").textContent =
      `${text} Score: ${this.session.runningScore}.`;
  }

  private showMessage(text: string) {
    byId("message").textContent = text;
  }
}

window.addEventListener("DOMContentLoaded", () => {
  const controller = new GameController(readOptions());
  controller.start().catch((e) => {
    byId("message").textContent =
      `Could not start the session: ${(e as Error).message}`;
  });
});
