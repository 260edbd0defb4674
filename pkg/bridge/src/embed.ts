/**
 * Per-view caption embeddings averaged into one conditioning embedding and
 * persisted as an HEMB file the generator reads directly.
 */

import { TextEncoderClient } from "./client.js";
import { Embedding, averageEmbeddings, writeHembFile } from "./hemb.js";

export async function embedCaptions(
  captions: string[],
  encoder: TextEncoderClient,
): Promise<Embedding> {
  if (captions.length === 0) {
    throw new Error("need at least one caption");
  }
  const embeddings: Embedding[] = [];
  for (const text of captions) {
    embeddings.push(await encoder.encode(text));
  }
  const { rows, dim } = embeddings[0];
  for (const e of embeddings) {
    if (e.rows !== rows || e.dim !== dim) {
      throw new Error(
        `view embeddings disagree on shape: ${e.rows}x${e.dim} vs ${rows}x${dim}`,
      );
    }
  }
  return averageEmbeddings(embeddings);
}

export async function embedCaptionsToFile(
  captions: string[],
  encoder: TextEncoderClient,
  path: string,
): Promise<Embedding> {
  const embedding = await embedCaptions(captions, encoder);
  await writeHembFile(path, embedding);
  return embedding;
}
