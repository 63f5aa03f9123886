/** Typed client for the collection service's three endpoints. */

import {
  RevealDoc,
  SessionDoc,
  UploadedDoc,
  isRevealDoc,
  isSessionDoc,
  isUploadedDoc,
} from "./schema.js";

export class ApiError extends Error {
  readonly status: number;

  constructor(message: string, status: number) {
    super(message);
    this.status = status;
  }
}

async function bodyError(res: Response): Promise<ApiError> {
  let message = `request failed with status ${res.status}`;
  try {
    const doc = await res.json();
    if (doc && typeof doc.error === "string") message = doc.error;
  } catch {
    // non-JSON error body; keep the status message
  }
  return new ApiError(message, res.status);
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: typeof fetch;

  constructor(base = "", fetchFn: typeof fetch = fetch) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async session(condition: string, count: number,
                seed: number): Promise<SessionDoc> {
    const q = new URLSearchParams({
      condition,
      count: String(count),
      seed: String(seed),
    });
    const res = await this.fetchFn(`${this.base}/api/session?${q}`);
    if (!res.ok) throw await bodyError(res);
    const doc = await res.json();
    if (!isSessionDoc(doc)) {
      throw new ApiError("malformed session document", res.status);
    }
    return doc;
  }

  async reveal(session: string, trial: number, node: number): Promise<number> {
    const q = new URLSearchParams({
      session,
      trial: String(trial),
      node: String(node),
    });
    const res = await this.fetchFn(`${this.base}/api/reveal?${q}`);
    if (!res.ok) throw await bodyError(res);
    const doc: unknown = await res.json();
    if (!isRevealDoc(doc)) {
      throw new ApiError("malformed reveal document", res.status);
    }
    return (doc as RevealDoc).value;
  }

  /** POST the already-serialized export bytes, unmodified, so the body is
   *  byte-identical to the download fallback. */
  async upload(body: string): Promise<UploadedDoc> {
    const res = await this.fetchFn(`${this.base}/api/upload`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
    });
    if (!res.ok) throw await bodyError(res);
    const doc = await res.json();
    if (!isUploadedDoc(doc)) {
      throw new ApiError("malformed upload acknowledgement", res.status);
    }
    return doc;
  }
}
