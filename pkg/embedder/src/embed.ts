/** The embedding pipeline: parse, encode in batches, write ordered output. */

import { writeFileSync } from "node:fs";

import { Encoder, l2Normalize, loadEncoder } from "./encoder";
import {
  PromptIssue,
  headerLine,
  parsePromptFile,
  recordLine,
} from "./jsonl";

export interface EmbedOptions {
  input: string;
  output: string;
  encoder: string;
  batchSize: number;
  normalize: boolean;
}

export interface EmbedSummary {
  written: number;
  skipped: PromptIssue[];
  warningsPath: string | null;
  encoder: Encoder;
}

/**
 * Embed every valid prompt, preserving input order.
 *
 * Per-record failures (malformed rows, unreadable images, zero vectors)
 * are skipped and recorded in a `<output>.warnings.jsonl` manifest; they
 * never abort the run. An unknown encoder name or an unreadable input
 * file does abort.
 */
export function embedFile(options: EmbedOptions): EmbedSummary {
  if (!Number.isInteger(options.batchSize) || options.batchSize < 1) {
    throw new Error(`batch size must be a positive integer, got ${options.batchSize}`);
  }
  const encoder = loadEncoder(options.encoder);
  const { prompts, issues } = parsePromptFile(options.input);

  const outLines: string[] = [
    headerLine({
      encoder: encoder.name,
      dim: encoder.dim,
      revision: encoder.revision,
      normalized: options.normalize,
      pooling: encoder.pooling,
    }),
  ];
  const skipped: PromptIssue[] = [...issues];
  for (let start = 0; start < prompts.length; start += options.batchSize) {
    const batch = prompts.slice(start, start + options.batchSize);
    for (const { line, prompt } of batch) {
      try {
        let values = encoder.encode(prompt);
        if (options.normalize) {
          values = l2Normalize(values);
        }
        outLines.push(recordLine(prompt.id, values));
      } catch (err) {
        skipped.push({
          line,
          id: prompt.id,
          reason: err instanceof Error ? err.message : String(err),
        });
      }
    }
  }
  if (outLines.length === 1) {
    throw new Error(`no valid prompts in ${options.input}`);
  }
  writeFileSync(options.output, outLines.join("\n") + "\n", "utf-8");

  let warningsPath: string | null = null;
  if (skipped.length > 0) {
    warningsPath = `${options.output}.warnings.jsonl`;
    const sorted = [...skipped].sort((a, b) => a.line - b.line);
    writeFileSync(
      warningsPath,
      sorted.map((issue) => JSON.stringify(issue)).join("\n") + "\n",
      "utf-8"
    );
  }
  return {
    written: outLines.length - 1,
    skipped,
    warningsPath,
    encoder,
  };
}
