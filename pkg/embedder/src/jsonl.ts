/** Prompt-file parsing and embedding-file writing. */

import { readFileSync } from "node:fs";

import { PromptInput } from "./encoder";

export interface ParsedPrompt {
  line: number;
  prompt: PromptInput;
}

export interface PromptIssue {
  line: number;
  id: string | null;
  reason: string;
}

export interface ParseResult {
  prompts: ParsedPrompt[];
  issues: PromptIssue[];
}

/**
 * Parse a line-delimited prompt file.
 *
 * Malformed records (bad JSON, missing id or text, empty text, duplicate
 * id) are reported as issues rather than aborting, so one bad row cannot
 * sink a batch job; callers decide whether issues are fatal.
 */
export function parsePromptFile(path: string): ParseResult {
  const raw = readFileSync(path, "utf-8");
  const prompts: ParsedPrompt[] = [];
  const issues: PromptIssue[] = [];
  const seen = new Set<string>();
  const lines = raw.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    const lineno = i + 1;
    let doc: unknown;
    try {
      doc = JSON.parse(line);
    } catch (err) {
      issues.push({ line: lineno, id: null, reason: `invalid JSON: ${err}` });
      continue;
    }
    if (typeof doc !== "object" || doc === null) {
      issues.push({ line: lineno, id: null, reason: "record must be an object" });
      continue;
    }
    const record = doc as Record<string, unknown>;
    const id = typeof record.id === "string" || typeof record.id === "number"
      ? String(record.id)
      : null;
    if (!id) {
      issues.push({ line: lineno, id: null, reason: "missing id" });
      continue;
    }
    if (seen.has(id)) {
      issues.push({ line: lineno, id, reason: `duplicate id ${JSON.stringify(id)}` });
      continue;
    }
    const text = typeof record.text === "string" ? record.text : "";
    if (!text.trim()) {
      issues.push({ line: lineno, id, reason: "empty text" });
      continue;
    }
    const image = typeof record.image === "string" && record.image
      ? record.image
      : undefined;
    seen.add(id);
    prompts.push({ line: lineno, prompt: { id, text, image } });
  }
  return { prompts, issues };
}

export interface EmbeddingHeader {
  encoder: string;
  dim: number;
  revision: string;
  normalized: boolean;
  pooling: string;
}

export function headerLine(header: EmbeddingHeader): string {
  return JSON.stringify({
    encoder: header.encoder,
    dim: header.dim,
    revision: header.revision,
    normalized: header.normalized,
    pooling: header.pooling,
  });
}

export function recordLine(id: string, embedding: number[]): string {
  return JSON.stringify({ id, embedding });
}
