/** Wire schemas shared with the collection service.
 *
 * These shapes are frozen: the service validates uploads against them and
 * any change is a new @N version on both sides.
 *
 *   GET  /api/session  -> session@1   (trial structure, never hidden values)
 *   GET  /api/reveal   -> reveal@1    (one realized node value per call)
 *   POST /api/upload   <- upload@1 -> uploaded@1
 */

export const SESSION_SCHEMA = "session@1";
export const REVEAL_SCHEMA = "reveal@1";
export const UPLOAD_SCHEMA = "upload@1";
export const UPLOADED_SCHEMA = "uploaded@1";
export const TRIALSPEC_SCHEMA = "trialspec@1";

/** The stop-deliberating action; every trial's computations end with it. */
export const TERMINATE = 0;

export interface NodeSpec {
  id: number;
  depth: number;
  parent: number | null;
}

export interface RewardDist {
  support: number[];
  probs: number[];
}

export interface TrialSpecDoc {
  schema: string;
  click_cost: number;
  condition: string;
  seed: number;
  nodes: NodeSpec[];
  reward_dists: Record<string, RewardDist>;
}

export interface SessionDoc {
  schema: string;
  session: string;
  condition: string;
  click_cost: number;
  specs: TrialSpecDoc[];
}

export interface RevealDoc {
  schema: string;
  trial: number;
  node: number;
  value: number;
}

export interface TrialUpload {
  computations: number[];
  path: number[];
  score: number;
}

export interface UploadPayload {
  schema: string;
  session: string;
  participant: string;
  trials: TrialUpload[];
}

export interface UploadedDoc {
  schema: string;
  ok: boolean;
  participant: string;
  n_trials: number;
}

function isObj(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null && !Array.isArray(x);
}

function isNum(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

export function isTrialSpecDoc(x: unknown): x is TrialSpecDoc {
  return (
    isObj(x) &&
    x.schema === TRIALSPEC_SCHEMA &&
    isNum(x.click_cost) &&
    typeof x.condition === "string" &&
    Array.isArray(x.nodes) &&
    x.nodes.every(
      (n) =>
        isObj(n) &&
        isNum(n.id) &&
        isNum(n.depth) &&
        (n.parent === null || isNum(n.parent)),
    ) &&
    isObj(x.reward_dists)
  );
}

export function isSessionDoc(x: unknown): x is SessionDoc {
  return (
    isObj(x) &&
    x.schema === SESSION_SCHEMA &&
    typeof x.session === "string" &&
    x.session.length > 0 &&
    typeof x.condition === "string" &&
    isNum(x.click_cost) &&
    Array.isArray(x.specs) &&
    x.specs.length > 0 &&
    x.specs.every(isTrialSpecDoc)
  );
}

export function isRevealDoc(x: unknown): x is RevealDoc {
  return (
    isObj(x) &&
    x.schema === REVEAL_SCHEMA &&
    isNum(x.trial) &&
    isNum(x.node) &&
    isNum(x.value)
  );
}

export function isUploadedDoc(x: unknown): x is UploadedDoc {
  return (
    isObj(x) &&
    x.schema === UPLOADED_SCHEMA &&
    x.ok === true &&
    typeof x.participant === "string" &&
    isNum(x.n_trials)
  );
}

/** Problems that would make the service reject the payload; empty = clean. */
export function validateUpload(p: UploadPayload): string[] {
  const bad: string[] = [];
  if (p.schema !== UPLOAD_SCHEMA) bad.push(`schema must be '${UPLOAD_SCHEMA}'`);
  if (!p.session) bad.push("missing session id");
  if (!p.participant) bad.push("missing participant id");
  if (!Array.isArray(p.trials) || p.trials.length === 0) {
    bad.push("upload has no trials");
    return bad;
  }
  p.trials.forEach((t, i) => {
    if (!Array.isArray(t.computations) || t.computations.length === 0 ||
        t.computations[t.computations.length - 1] !== TERMINATE) {
      bad.push(`trial ${i}: computations must end with terminate (0)`);
    }
    if (!Array.isArray(t.path) || t.path.length === 0) {
      bad.push(`trial ${i}: missing committed path`);
    }
    if (!isNum(t.score)) bad.push(`trial ${i}: score must be a finite number`);
  });
  return bad;
}

/** Deterministic JSON: recursively sorted keys, no whitespace. The exported
 *  session file and the upload POST body are both produced by this, so the
 *  two are byte-identical. */
export function canonicalJson(x: unknown): string {
  if (x === null || typeof x === "number" || typeof x === "boolean" ||
      typeof x === "string") {
    return JSON.stringify(x);
  }
  if (Array.isArray(x)) {
    return "[" + x.map(canonicalJson).join(",") + "]";
  }
  if (isObj(x)) {
    const keys = Object.keys(x).sort();
    const parts = keys.map((k) => JSON.stringify(k) + ":" + canonicalJson(x[k]));
    return "{" + parts.join(",") + "}";
  }
  throw new Error(`cannot serialize value of type ${typeof x}`);
}
