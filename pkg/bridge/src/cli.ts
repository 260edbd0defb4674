/**
 * Offline annotation pipeline: images -> captions -> HEMB files.
 *
 *   annotate --manifest styles.json --out dir [--questions file]
 *            [--k 8] [--seed 0] [--mock | --vqa-endpoint URL
 *             --encoder-endpoint URL] [--dim 64] [--tokens 16]
 *
 * The manifest maps style ids to rendered views:
 *   { "styles": [ { "id": "style_0000", "frontal": "f.png", "back": "b.png" } ] }
 */

import { promises as fs } from "node:fs";
import path from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { captionStyle } from "./caption.js";
import {
  HttpTextEncoderClient,
  HttpVqaClient,
  MockTextEncoderClient,
  MockVqaClient,
  TextEncoderClient,
  VqaClient,
} from "./client.js";
import { embedCaptionsToFile } from "./embed.js";
import { DEFAULT_QUESTIONS } from "./prompts.js";

interface ManifestStyle {
  id: string;
  frontal: string;
  back: string;
}

interface Manifest {
  styles: ManifestStyle[];
}

/** Run tasks with at most `limit` in flight (order of results preserved). */
export async function boundedPool<T, R>(
  items: T[],
  limit: number,
  worker: (item: T) => Promise<R>,
): Promise<R[]> {
  const results: R[] = new Array(items.length);
  let next = 0;
  const lanes = Array.from(
    { length: Math.max(1, Math.min(limit, items.length)) },
    async () => {
      while (next < items.length) {
        const i = next++;
        results[i] = await worker(items[i]);
      }
    },
  );
  await Promise.all(lanes);
  return results;
}

export async function runAnnotate(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .command("annotate", "caption styles and emit HEMB embeddings")
    .option("manifest", { type: "string", demandOption: true })
    .option("out", { type: "string", demandOption: true })
    .option("questions", { type: "string" })
    .option("k", { type: "number", default: 8 })
    .option("seed", { type: "number", default: 0 })
    .option("mock", { type: "boolean", default: false })
    .option("vqa-endpoint", { type: "string" })
    .option("encoder-endpoint", { type: "string" })
    .option("tokens", { type: "number", default: 16 })
    .option("dim", { type: "number", default: 64 })
    .option("concurrency", { type: "number", default: 4 })
    .strict()
    .parse();

  const manifest: Manifest = JSON.parse(
    await fs.readFile(args.manifest, "utf-8"),
  );
  if (!manifest.styles || manifest.styles.length === 0) {
    throw new Error("manifest lists no styles");
  }
  let questions = DEFAULT_QUESTIONS;
  if (args.questions) {
    const text = await fs.readFile(args.questions, "utf-8");
    questions = text
      .split("\n")
      .map((l) => l.trim())
      .filter((l) => l.length > 0);
  }

  let vqa: VqaClient;
  let encoder: TextEncoderClient;
  if (args.mock) {
    vqa = new MockVqaClient();
    encoder = new MockTextEncoderClient(args.tokens, args.dim);
  } else {
    if (!args.vqaEndpoint || !args.encoderEndpoint) {
      throw new Error(
        "need --vqa-endpoint and --encoder-endpoint (or --mock)",
      );
    }
    vqa = new HttpVqaClient(args.vqaEndpoint);
    encoder = new HttpTextEncoderClient(args.encoderEndpoint);
  }

  await fs.mkdir(args.out, { recursive: true });
  await boundedPool(manifest.styles, args.concurrency, async (style) => {
    const styleSeed = args.seed ^ hashId(style.id);
    const captions = await captionStyle(
      { frontal: style.frontal, back: style.back },
      vqa,
      { questions, subsetSize: args.k, seed: styleSeed },
    );
    const captionPath = path.join(args.out, `${style.id}.txt`);
    await fs.writeFile(
      captionPath,
      `${captions.frontal}\n${captions.back}\n`,
    );
    const hembPath = path.join(args.out, `${style.id}.hemb`);
    await embedCaptionsToFile(
      [captions.frontal, captions.back],
      encoder,
      hembPath,
    );
    process.stdout.write(`${style.id}: caption + embedding written\n`);
  });
  return 0;
}

function hashId(id: string): number {
  let h = 2166136261;
  for (let i = 0; i < id.length; i++) {
    h ^= id.charCodeAt(i);
    h = Math.imul(h, 16777619);
  }
  return h >>> 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(path.basename(process.argv[1]));

if (invokedDirectly) {
  runAnnotate(hideBin(process.argv))
    .then((code) => process.exit(code))
    .catch((err) => {
      process.stderr.write(
        JSON.stringify({ error: errorName(err), message: String(err?.message ?? err) }) +
          "\n",
      );
      process.exit(1);
    });
}

function errorName(err: unknown): string {
  return err instanceof Error ? err.constructor.name : "Error";
}
