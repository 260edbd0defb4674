/**
 * Caption assembly: a seeded random subset of the question list is asked
 * about each rendered view, one independent request per question (no chat
 * history), with the honesty suffix appended.  Non-empty answers are joined
 * in the original question order into a single description.
 */

import { VqaClient } from "./client.js";
import { HONESTY_SUFFIX } from "./prompts.js";
import { questionSubset } from "./rng.js";

export interface CaptionOptions {
  questions: string[];
  subsetSize: number; // expected number of questions per style
  seed: number;
}

export async function buildCaption(
  imagePath: string,
  client: VqaClient,
  options: CaptionOptions,
): Promise<string> {
  const { questions, subsetSize, seed } = options;
  if (questions.length === 0) {
    throw new Error("question set is empty");
  }
  const picked = questionSubset(seed, questions.length, subsetSize);
  const answers: Array<{ order: number; text: string }> = [];
  for (const idx of picked) {
    const prompt = `${questions[idx]} ${HONESTY_SUFFIX}`;
    const answer = (await client.ask(imagePath, prompt)).trim();
    if (answer.length === 0) {
      continue; // unanswered questions are skipped
    }
    answers.push({ order: idx, text: answer });
  }
  answers.sort((a, b) => a.order - b.order);
  return answers.map((a) => a.text).join(" ");
}

export interface ViewCaptions {
  frontal: string;
  back: string;
}

/** Caption both rendered views of one style with a shared seed. */
export async function captionStyle(
  views: { frontal: string; back: string },
  client: VqaClient,
  options: CaptionOptions,
): Promise<ViewCaptions> {
  const frontal = await buildCaption(views.frontal, client, options);
  const back = await buildCaption(views.back, client, options);
  return { frontal, back };
}
