/** Session bookkeeping, kept free of DOM and network so it is testable.
 *
 * A TrialPlay mirrors exactly what the player knows: values arrive one at
 * a time through click(), never wholesale. Committing computes
 * score = sum of values along the chosen path - click_cost * n_clicks,
 * the same arithmetic the service replays when validating an upload.
 */

import { isPath, nonRootIds, pathReturn } from "./model.js";
import {
  SessionDoc,
  TERMINATE,
  TrialSpecDoc,
  TrialUpload,
  UPLOAD_SCHEMA,
  UploadPayload,
  canonicalJson,
} from "./schema.js";

export interface TrialLogEntry {
  computations: number[];
  path: number[];
  score: number;
}

export class TrialPlay {
  readonly spec: TrialSpecDoc;
  readonly index: number;
  private clicks: number[] = [];
  private values = new Map<number, number>();
  private valid: Set<number>;
  committed: TrialLogEntry | null = null;

  constructor(spec: TrialSpecDoc, index: number) {
    this.spec = spec;
    this.index = index;
    this.valid = new Set(nonRootIds(spec));
  }

  get clickCount(): number {
    return this.clicks.length;
  }

  get cost(): number {
    return this.clicks.length * this.spec.click_cost;
  }

  /** The belief mirror: exactly the values revealed so far. */
  get revealed(): ReadonlyMap<number, number> {
    return this.values;
  }

  isRevealed(node: number): boolean {
    return this.values.has(node);
  }

  /** Record a click and its revealed value. Returns false (and charges
   *  nothing) when the node is already revealed - a no-op for the UI to
   *  flag visually. */
  click(node: number, value: number): boolean {
    if (this.committed) throw new Error("trial already committed");
    if (!this.valid.has(node)) throw new Error(`node ${node} does not exist`);
    if (this.values.has(node)) return false;
    this.clicks.push(node);
    this.values.set(node, value);
    return true;
  }

  /** Path nodes whose values are still hidden and need a reveal before
   *  the score can be computed. */
  missingOnPath(path: number[]): number[] {
    return path.filter((id) => !this.values.has(id));
  }

  /** Commit a root-to-leaf path. pathValues supplies the realized values
   *  of any path nodes the player never clicked (the service reveals them
   *  after the commit; walking the path shows what it paid). */
  commit(path: number[], pathValues: ReadonlyMap<number, number>): TrialLogEntry {
    if (this.committed) throw new Error("trial already committed");
    if (!isPath(this.spec, path)) {
      throw new Error("commit blocked: not a root-to-leaf path");
    }
    for (const [id, v] of pathValues) this.values.set(id, v);
    const score = pathReturn(path, this.values) - this.cost;
    const entry: TrialLogEntry = {
      computations: [...this.clicks, TERMINATE],
      path: [...path],
      score,
    };
    this.committed = entry;
    return entry;
  }
}

export class SessionState {
  readonly sessionId: string;
  readonly condition: string;
  readonly clickCost: number;
  readonly specs: TrialSpecDoc[];
  readonly participant: string;
  readonly practice: boolean;
  private entries: TrialLogEntry[] = [];
  private current: TrialPlay | null = null;

  constructor(
    sessionId: string,
    condition: string,
    clickCost: number,
    specs: TrialSpecDoc[],
    participant: string,
    practice = false,
  ) {
    if (specs.length === 0) throw new Error("session has no trials");
    this.sessionId = sessionId;
    this.condition = condition;
    this.clickCost = clickCost;
    this.specs = specs;
    this.participant = participant;
    this.practice = practice;
  }

  static fromSessionDoc(doc: SessionDoc, participant: string): SessionState {
    return new SessionState(
      doc.session, doc.condition, doc.click_cost, doc.specs, participant);
  }

  get trialCount(): number {
    return this.specs.length;
  }

  get completed(): number {
    return this.entries.length;
  }

  get done(): boolean {
    return this.entries.length === this.specs.length;
  }

  get runningScore(): number {
    return this.entries.reduce((acc, e) => acc + e.score, 0);
  }

  get log(): readonly TrialLogEntry[] {
    return this.entries;
  }

  /** Open the next trial. One trial is live at a time. */
  beginTrial(): TrialPlay {
    if (this.current) throw new Error("a trial is already in progress");
    if (this.done) throw new Error("session is complete");
    this.current = new TrialPlay(this.specs[this.entries.length],
                                 this.entries.length);
    return this.current;
  }

  get liveTrial(): TrialPlay | null {
    return this.current;
  }

  commitCurrent(path: number[],
                pathValues: ReadonlyMap<number, number>): TrialLogEntry {
    if (!this.current) throw new Error("no trial in progress");
    const entry = this.current.commit(path, pathValues);
    this.entries.push(entry);
    this.current = null;
    return entry;
  }

  exportPayload(): UploadPayload {
    if (this.entries.length === 0) throw new Error("nothing to export");
    const trials: TrialUpload[] = this.entries.map((e) => ({
      computations: e.computations,
      path: e.path,
      score: e.score,
    }));
    return {
      schema: UPLOAD_SCHEMA,
      session: this.sessionId,
      participant: this.participant,
      trials,
    };
  }

  /** The exact bytes of the upload body; the download fallback writes
   *  these same bytes, so no data is lost when the POST fails. */
  exportBytes(): string {
    return canonicalJson(this.exportPayload());
  }
}

/** Client-generated participant id. */
export function newParticipantId(): string {
  const bytes = new Uint8Array(6);
  if (typeof crypto !== "undefined" && crypto.getRandomValues) {
    crypto.getRandomValues(bytes);
  } else {
    for (let i = 0; i < bytes.length; i++) {
      bytes[i] = Math.floor(Math.random() * 256);
    }
  }
  const hex = Array.from(bytes, (b) => b.toString(16).padStart(2, "0"));
  return "w-" + hex.join("");
}
