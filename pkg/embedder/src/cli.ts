#!/usr/bin/env node
/** CLI: embed a prompt file into the routing engine's embedding format. */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { embedFile } from "./embed";
import { availableEncoders } from "./encoder";

export function main(argv: string[]): number {
  const args = yargs(argv)
    .scriptName("routebench-embed")
    .usage(
      "$0 --in prompts.jsonl --out emb.jsonl --encoder hash-768 --batch 32 --normalize"
    )
    .option("in", { type: "string", demandOption: true, describe: "prompt JSONL file" })
    .option("out", { type: "string", demandOption: true, describe: "embedding output file" })
    .option("encoder", {
      type: "string",
      default: "hash-768",
      describe: `encoder name (${availableEncoders().join(", ")})`,
    })
    .option("batch", { type: "number", default: 32, describe: "batch size" })
    .option("normalize", {
      type: "boolean",
      default: true,
      describe: "L2-normalize embeddings to unit length",
    })
    .strict()
    .help()
    .parseSync();

  try {
    const summary = embedFile({
      input: args.in,
      output: args.out,
      encoder: args.encoder,
      batchSize: args.batch,
      normalize: args.normalize,
    });
    console.log(
      `wrote ${summary.written} embeddings (dim ${summary.encoder.dim}, ` +
        `encoder ${summary.encoder.name}@${summary.encoder.revision}) to ${args.out}`
    );
    if (summary.warningsPath) {
      console.warn(
        `skipped ${summary.skipped.length} record(s); see ${summary.warningsPath}`
      );
    }
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(hideBin(process.argv)));
}
