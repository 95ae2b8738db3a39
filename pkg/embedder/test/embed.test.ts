import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { embedFile } from "../src/embed";

function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "embedder-test-"));
}

function writePrompts(dir: string, lines: unknown[]): string {
  const path = join(dir, "prompts.jsonl");
  writeFileSync(
    path,
    lines.map((l) => (typeof l === "string" ? l : JSON.stringify(l))).join("\n") + "\n"
  );
  return path;
}

function readOutput(path: string): { header: any; rows: any[] } {
  const lines = readFileSync(path, "utf-8").trim().split("\n");
  return {
    header: JSON.parse(lines[0]),
    rows: lines.slice(1).map((l) => JSON.parse(l)),
  };
}

describe("embedFile", () => {
  it("preserves order and writes a header", () => {
    const dir = tempDir();
    const input = writePrompts(dir, [
      { id: "p1", text: "first prompt" },
      { id: "p2", text: "second prompt" },
      { id: "p3", text: "third prompt" },
    ]);
    const output = join(dir, "emb.jsonl");
    const summary = embedFile({
      input,
      output,
      encoder: "hash-256",
      batchSize: 2,
      normalize: true,
    });
    expect(summary.written).toBe(3);
    expect(summary.warningsPath).toBeNull();
    const { header, rows } = readOutput(output);
    expect(header.encoder).toBe("hash-256");
    expect(header.dim).toBe(256);
    expect(header.revision).toMatch(/^[0-9a-f]{16}$/);
    expect(header.normalized).toBe(true);
    expect(rows.map((r) => r.id)).toEqual(["p1", "p2", "p3"]);
    for (const row of rows) {
      expect(row.embedding).toHaveLength(256);
    }
  });

  it("normalizes to unit length when asked", () => {
    const dir = tempDir();
    const input = writePrompts(dir, [{ id: "p1", text: "normalize me please" }]);
    const output = join(dir, "emb.jsonl");
    embedFile({ input, output, encoder: "hash-256", batchSize: 8, normalize: true });
    const { rows } = readOutput(output);
    const norm = Math.sqrt(
      rows[0].embedding.reduce((acc: number, v: number) => acc + v * v, 0)
    );
    expect(Math.abs(norm - 1)).toBeLessThan(1e-4);
  });

  it("batch size does not change the output", () => {
    const dir = tempDir();
    const prompts = Array.from({ length: 9 }, (_, i) => ({
      id: `p${i}`,
      text: `prompt number ${i} with shared words`,
    }));
    const input = writePrompts(dir, prompts);
    const outA = join(dir, "a.jsonl");
    const outB = join(dir, "b.jsonl");
    embedFile({ input, output: outA, encoder: "hash-256", batchSize: 1, normalize: true });
    embedFile({ input, output: outB, encoder: "hash-256", batchSize: 64, normalize: true });
    expect(readFileSync(outA, "utf-8")).toBe(readFileSync(outB, "utf-8"));
  });

  it("skips bad records into a warning manifest", () => {
    const dir = tempDir();
    const input = writePrompts(dir, [
      { id: "ok1", text: "fine" },
      { id: "empty", text: "   " },
      "{broken json",
      { text: "no id" },
      { id: "ok1", text: "duplicate id" },
      { id: "img", text: "has image", image: join(dir, "missing.png") },
      { id: "ok2", text: "also fine" },
    ]);
    const output = join(dir, "emb.jsonl");
    const summary = embedFile({
      input,
      output,
      encoder: "hash-256",
      batchSize: 4,
      normalize: true,
    });
    expect(summary.written).toBe(2);
    expect(summary.skipped).toHaveLength(5);
    const { rows } = readOutput(output);
    expect(rows.map((r) => r.id)).toEqual(["ok1", "ok2"]);
    const warnings = readFileSync(summary.warningsPath!, "utf-8")
      .trim()
      .split("\n")
      .map((l) => JSON.parse(l));
    expect(warnings).toHaveLength(5);
    const reasons = warnings.map((w) => w.reason).join(" | ");
    expect(reasons).toContain("empty text");
    expect(reasons).toContain("duplicate id");
  });

  it("folds image bytes into the representation", () => {
    const dir = tempDir();
    const imagePath = join(dir, "tiny.png");
    writeFileSync(imagePath, Buffer.from([137, 80, 78, 71, 13, 10, 26, 10, 1, 2, 3]));
    const input = writePrompts(dir, [
      { id: "text-only", text: "describe the scene" },
      { id: "with-image", text: "describe the scene", image: imagePath },
    ]);
    const output = join(dir, "emb.jsonl");
    embedFile({ input, output, encoder: "hash-256", batchSize: 2, normalize: true });
    const { rows } = readOutput(output);
    expect(rows[0].embedding).not.toEqual(rows[1].embedding);
  });

  it("rejects unknown encoders", () => {
    const dir = tempDir();
    const input = writePrompts(dir, [{ id: "p", text: "hello" }]);
    expect(() =>
      embedFile({
        input,
        output: join(dir, "emb.jsonl"),
        encoder: "sbert-base",
        batchSize: 4,
        normalize: true,
      })
    ).toThrow(/unknown encoder/);
  });

  it("rejects inputs with no valid prompts", () => {
    const dir = tempDir();
    const input = writePrompts(dir, [{ id: "e", text: "" }]);
    expect(() =>
      embedFile({
        input,
        output: join(dir, "emb.jsonl"),
        encoder: "hash-256",
        batchSize: 4,
        normalize: true,
      })
    ).toThrow(/no valid prompts/);
  });
});
