/**
 * Cross-component round trip: embedder output must load through the
 * routing engine's Python `dataio.load_embeddings` with zero schema
 * errors. The loader is the consumer-side contract, so the test drives
 * the real thing via a python3 subprocess.
 */

import { execFileSync, spawnSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { embedFile } from "../src/embed";

const LOADER_SNIPPET = `
import json, sys
import numpy as np
from routebench.dataio import load_embeddings
header, ids, matrix = load_embeddings(sys.argv[1])
norms = np.linalg.norm(matrix, axis=1)
print(json.dumps({
    "encoder": header["encoder"],
    "dim": header["dim"],
    "n": len(ids),
    "ids_head": ids[:3],
    "max_norm_err": float(np.abs(norms - 1.0).max()),
}))
`;

function pythonAvailable(): boolean {
  const probe = spawnSync("python3", ["-c", "import routebench"], {
    encoding: "utf-8",
  });
  return probe.status === 0;
}

describe("round trip into the routing engine's loader", () => {
  it("a 50-prompt fixture loads with zero schema errors", () => {
    expect(
      pythonAvailable(),
      "python3 with the routebench package must be installed for this test"
    ).toBe(true);

    const started = Date.now();
    const dir = mkdtempSync(join(tmpdir(), "embedder-roundtrip-"));
    const promptsPath = join(dir, "prompts.jsonl");
    const topics = [
      "summarize this week's incident report",
      "translate the release notes to spanish",
      "prove that the greedy cover is within a factor of two",
      "refactor the batch scheduler for readability",
      "explain retrieval augmented generation to a new hire",
    ];
    const lines: string[] = [];
    for (let i = 0; i < 50; i++) {
      lines.push(
        JSON.stringify({
          id: `prompt-${String(i).padStart(3, "0")}`,
          text: `${topics[i % topics.length]} (variant ${Math.floor(i / 5)})`,
        })
      );
    }
    writeFileSync(promptsPath, lines.join("\n") + "\n");

    const outputPath = join(dir, "embeddings.jsonl");
    const summary = embedFile({
      input: promptsPath,
      output: outputPath,
      encoder: "hash-768",
      batchSize: 32,
      normalize: true,
    });
    expect(summary.written).toBe(50);
    expect(summary.skipped).toHaveLength(0);

    const loaded = JSON.parse(
      execFileSync("python3", ["-c", LOADER_SNIPPET, outputPath], {
        encoding: "utf-8",
      })
    );
    expect(loaded.n).toBe(50);
    expect(loaded.dim).toBe(768);
    expect(loaded.encoder).toBe("hash-768");
    expect(loaded.ids_head).toEqual(["prompt-000", "prompt-001", "prompt-002"]);
    expect(loaded.max_norm_err).toBeLessThan(1e-4);

    // identical prompts map to identical vectors
    const dupPath = join(dir, "dup.jsonl");
    writeFileSync(
      dupPath,
      [
        JSON.stringify({ id: "a", text: "identical prompt" }),
        JSON.stringify({ id: "b", text: "identical prompt" }),
      ].join("\n") + "\n"
    );
    const dupOut = join(dir, "dup-emb.jsonl");
    embedFile({
      input: dupPath,
      output: dupOut,
      encoder: "hash-768",
      batchSize: 2,
      normalize: true,
    });
    const dupCheck = JSON.parse(
      execFileSync(
        "python3",
        [
          "-c",
          `
import json, sys
import numpy as np
from routebench.dataio import load_embeddings
_, _, matrix = load_embeddings(sys.argv[1])
print(json.dumps({"cosine_distance": float(1.0 - matrix[0] @ matrix[1])}))
`,
          dupOut,
        ],
        { encoding: "utf-8" }
      )
    );
    expect(dupCheck.cosine_distance).toBeLessThan(1e-6);

    const elapsedSeconds = (Date.now() - started) / 1000;
    expect(elapsedSeconds).toBeLessThan(120);
  });
});
