/**
 * Service clients.  Real deployments speak JSON over HTTP to a VQA service
 * and a text-encoder service; tests and offline runs use the deterministic
 * mocks.  Wiring a real model is configuration, not code.
 */

import { Embedding } from "./hemb.js";
import { SplitMix64, fnv1a64 } from "./rng.js";

export interface VqaClient {
  /** Answer one standalone question about one image (no chat history). */
  ask(imagePath: string, question: string): Promise<string>;
}

export interface TextEncoderClient {
  /** Encode a caption into a T x d context matrix. */
  encode(text: string): Promise<Embedding>;
}

export interface RetryPolicy {
  attempts: number;
  backoffMs: number;
}

export const DEFAULT_RETRY: RetryPolicy = { attempts: 3, backoffMs: 250 };

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export async function withRetry<T>(
  fn: () => Promise<T>,
  policy: RetryPolicy = DEFAULT_RETRY,
): Promise<T> {
  let lastError: unknown;
  for (let attempt = 0; attempt < policy.attempts; attempt++) {
    try {
      return await fn();
    } catch (err) {
      lastError = err;
      if (attempt + 1 < policy.attempts) {
        await sleep(policy.backoffMs * 2 ** attempt);
      }
    }
  }
  throw new Error(`service unreachable after ${policy.attempts} attempts: ${lastError}`);
}

// ---------------------------------------------------------------------------
// HTTP clients

export class HttpVqaClient implements VqaClient {
  constructor(
    private endpoint: string,
    private retry: RetryPolicy = DEFAULT_RETRY,
  ) {}

  async ask(imagePath: string, question: string): Promise<string> {
    return withRetry(async () => {
      const res = await fetch(this.endpoint, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ image: imagePath, question }),
      });
      if (!res.ok) {
        throw new Error(`VQA service returned ${res.status}`);
      }
      const payload = (await res.json()) as { answer?: string };
      return payload.answer ?? "";
    }, this.retry);
  }
}

export class HttpTextEncoderClient implements TextEncoderClient {
  constructor(
    private endpoint: string,
    private retry: RetryPolicy = DEFAULT_RETRY,
  ) {}

  async encode(text: string): Promise<Embedding> {
    return withRetry(async () => {
      const res = await fetch(this.endpoint, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ text }),
      });
      if (!res.ok) {
        throw new Error(`encoder service returned ${res.status}`);
      }
      const payload = (await res.json()) as { embedding: number[][] };
      const rows = payload.embedding.length;
      const dim = rows ? payload.embedding[0].length : 0;
      const data = new Float32Array(rows * dim);
      payload.embedding.forEach((row, i) => {
        row.forEach((v, j) => {
          data[i * dim + j] = v;
        });
      });
      return { rows, dim, data };
    }, this.retry);
  }
}

// ---------------------------------------------------------------------------
// deterministic mocks

export class MockVqaClient implements VqaClient {
  calls: Array<{ imagePath: string; question: string }> = [];

  constructor(
    private canned: Map<string, string> = new Map(),
    private failuresBeforeSuccess = 0,
  ) {}

  async ask(imagePath: string, question: string): Promise<string> {
    if (this.failuresBeforeSuccess > 0) {
      this.failuresBeforeSuccess--;
      throw new Error("mock transient failure");
    }
    this.calls.push({ imagePath, question });
    const hit = this.canned.get(question);
    if (hit !== undefined) {
      return hit;
    }
    // deterministic synthetic answer derived from the inputs
    const h = fnv1a64(`${imagePath}|${question}`);
    return `observation ${h.toString(16).slice(0, 8)}`;
  }
}

/**
 * Deterministic stand-in encoder: token rows are unit vectors from an
 * FNV-1a hash of the token seeding a splitmix64 Gaussian stream (matching
 * the generator's builtin embedder construction).
 */
export class MockTextEncoderClient implements TextEncoderClient {
  constructor(
    private rows = 16,
    private dim = 64,
  ) {}

  async encode(text: string): Promise<Embedding> {
    const tokens = text
      .toLowerCase()
      .split(/[^a-z0-9]+/)
      .filter((t) => t.length > 0);
    const data = new Float32Array(this.rows * this.dim);
    const mask64 = (1n << 64n) - 1n;
    for (let k = 0; k < Math.min(tokens.length, this.rows); k++) {
      const seed =
        fnv1a64(tokens[k]) ^ ((BigInt(k) * 0x9e3779b97f4a7c15n) & mask64);
      const rng = new SplitMix64(seed);
      const row = new Float64Array(this.dim);
      for (let i = 0; i < this.dim; i += 2) {
        const u1 = rng.nextFloat();
        const u2 = rng.nextFloat();
        const r = Math.sqrt(-2 * Math.log(1 - u1));
        row[i] = r * Math.cos(2 * Math.PI * u2);
        if (i + 1 < this.dim) {
          row[i + 1] = r * Math.sin(2 * Math.PI * u2);
        }
      }
      let norm = 0;
      for (const v of row) {
        norm += v * v;
      }
      norm = Math.sqrt(norm);
      for (let i = 0; i < this.dim; i++) {
        data[k * this.dim + i] = row[i] / norm;
      }
    }
    return { rows: this.rows, dim: this.dim, data };
  }
}
