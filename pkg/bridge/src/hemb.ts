/**
 * HEMB prompt-embedding container, byte-compatible with the generator's
 * reader:
 *
 *   "HEMB" | u32 version=1 | u32 T | u32 d_ctx |
 *   T*d_ctx float32 little-endian row-major | crc32 over preceding bytes
 */

import { promises as fs } from "node:fs";
import { crc32 } from "./crc32.js";

export const HEMB_VERSION = 1;

export interface Embedding {
  rows: number; // T
  dim: number; // d_ctx
  data: Float32Array; // length rows * dim, row-major
}

export function encodeHemb(embedding: Embedding): Buffer {
  const { rows, dim, data } = embedding;
  if (data.length !== rows * dim) {
    throw new Error(
      `embedding data length ${data.length} != ${rows} * ${dim}`,
    );
  }
  const body = Buffer.alloc(4 + 12 + 4 * data.length);
  body.write("HEMB", 0, "ascii");
  body.writeUInt32LE(HEMB_VERSION, 4);
  body.writeUInt32LE(rows, 8);
  body.writeUInt32LE(dim, 12);
  for (let i = 0; i < data.length; i++) {
    body.writeFloatLE(data[i], 16 + 4 * i);
  }
  const trailer = Buffer.alloc(4);
  trailer.writeUInt32LE(crc32(body), 0);
  return Buffer.concat([body, trailer]);
}

export function decodeHemb(blob: Buffer): Embedding {
  if (blob.length < 20) {
    throw new Error(`truncated HEMB blob (${blob.length} bytes)`);
  }
  if (blob.toString("ascii", 0, 4) !== "HEMB") {
    throw new Error("bad HEMB magic");
  }
  const version = blob.readUInt32LE(4);
  if (version !== HEMB_VERSION) {
    throw new Error(`unsupported HEMB version ${version}`);
  }
  const rows = blob.readUInt32LE(8);
  const dim = blob.readUInt32LE(12);
  const expected = 16 + 4 * rows * dim + 4;
  if (blob.length !== expected) {
    throw new Error(
      `HEMB size mismatch: ${blob.length} bytes, expected ${expected}`,
    );
  }
  const body = blob.subarray(0, blob.length - 4);
  const stored = blob.readUInt32LE(blob.length - 4);
  const actual = crc32(body);
  if (stored !== actual) {
    throw new Error(
      `HEMB CRC mismatch (stored ${stored.toString(16)}, computed ${actual.toString(16)})`,
    );
  }
  const data = new Float32Array(rows * dim);
  for (let i = 0; i < data.length; i++) {
    data[i] = blob.readFloatLE(16 + 4 * i);
  }
  return { rows, dim, data };
}

export async function writeHembFile(
  path: string,
  embedding: Embedding,
): Promise<void> {
  await fs.writeFile(path, encodeHemb(embedding));
}

export async function readHembFile(path: string): Promise<Embedding> {
  return decodeHemb(await fs.readFile(path));
}

/** Elementwise mean of equal-shape embeddings (e.g. frontal + back views). */
export function averageEmbeddings(embeddings: Embedding[]): Embedding {
  if (embeddings.length === 0) {
    throw new Error("cannot average zero embeddings");
  }
  const { rows, dim } = embeddings[0];
  for (const e of embeddings) {
    if (e.rows !== rows || e.dim !== dim) {
      throw new Error(
        `embedding shape mismatch: ${e.rows}x${e.dim} vs ${rows}x${dim}`,
      );
    }
  }
  const acc = new Float64Array(rows * dim);
  for (const e of embeddings) {
    for (let i = 0; i < acc.length; i++) {
      acc[i] += e.data[i];
    }
  }
  const data = new Float32Array(rows * dim);
  for (let i = 0; i < acc.length; i++) {
    data[i] = acc[i] / embeddings.length;
  }
  return { rows, dim, data };
}
