/**
 * Encoders turn prompts (text, optionally with an image file) into
 * fixed-length vectors.
 *
 * The built-in family is a deterministic signed n-gram feature hasher:
 * word unigrams/bigrams and character trigrams are hashed into a
 * fixed-dimension vector with +/-1 signs (the classic hashing trick).
 * It needs no model weights, runs anywhere, and is exactly reproducible:
 * the revision hash in the output header pins the algorithm and its
 * parameters, so identical inputs always map to identical vectors.
 *
 * Transformer-based encoders can be plugged in behind the same interface;
 * none is bundled because this package ships with no model weights.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

export interface PromptInput {
  id: string;
  text: string;
  image?: string;
}

export interface Encoder {
  readonly name: string;
  readonly dim: number;
  /** Pins the exact algorithm + parameters for reproducibility. */
  readonly revision: string;
  readonly pooling: string;
  encode(prompt: PromptInput): number[];
}

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;
const MASK64 = 0xffffffffffffffffn;

function fnv1a64(text: string): bigint {
  let hash = FNV_OFFSET;
  for (let i = 0; i < text.length; i++) {
    hash ^= BigInt(text.charCodeAt(i) & 0xff) | (BigInt(text.charCodeAt(i) >> 8) << 8n);
    hash = (hash * FNV_PRIME) & MASK64;
  }
  return hash;
}

function fnv1a64Bytes(bytes: Uint8Array, seedText: string): bigint {
  let hash = fnv1a64(seedText);
  for (const byte of bytes) {
    hash ^= BigInt(byte);
    hash = (hash * FNV_PRIME) & MASK64;
  }
  return hash;
}

function tokenize(text: string): string[] {
  return text
    .toLowerCase()
    .split(/[^\p{L}\p{N}]+/u)
    .filter((t) => t.length > 0);
}

export class HashNgramEncoder implements Encoder {
  readonly name: string;
  readonly dim: number;
  readonly revision: string;
  readonly pooling = "signed-feature-sum";

  constructor(dim: number) {
    if (!Number.isInteger(dim) || dim < 8) {
      throw new Error(`encoder dimension must be an integer >= 8, got ${dim}`);
    }
    this.dim = dim;
    this.name = `hash-${dim}`;
    this.revision = createHash("sha256")
      .update(`hash-ngram-v1|fnv1a64|dim=${dim}|word1+word2+char3|image-bytes-8`)
      .digest("hex")
      .slice(0, 16);
  }

  private addFeature(values: number[], hash: bigint): void {
    const index = Number(hash % BigInt(this.dim));
    const sign = (hash >> 1n) & 1n ? 1.0 : -1.0;
    values[index] += sign;
  }

  encode(prompt: PromptInput): number[] {
    const values = new Array<number>(this.dim).fill(0);
    const tokens = tokenize(prompt.text);
    for (const token of tokens) {
      this.addFeature(values, fnv1a64(`w1:${token}`));
    }
    for (let i = 0; i + 1 < tokens.length; i++) {
      this.addFeature(values, fnv1a64(`w2:${tokens[i]}_${tokens[i + 1]}`));
    }
    const squashed = prompt.text.toLowerCase();
    for (let i = 0; i + 2 < squashed.length; i++) {
      this.addFeature(values, fnv1a64(`c3:${squashed.slice(i, i + 3)}`));
    }
    if (prompt.image) {
      const bytes = readFileSync(prompt.image); // throws -> per-record failure
      for (let i = 0; i < bytes.length; i += 8) {
        this.addFeature(values, fnv1a64Bytes(bytes.subarray(i, i + 8), "img:"));
      }
    }
    return values;
  }
}

const HASH_DIMS = [256, 512, 768, 1024];

export function availableEncoders(): string[] {
  return HASH_DIMS.map((d) => `hash-${d}`);
}

export function loadEncoder(name: string): Encoder {
  const match = /^hash-(\d+)$/.exec(name);
  if (match) {
    return new HashNgramEncoder(parseInt(match[1], 10));
  }
  throw new Error(
    `unknown encoder ${JSON.stringify(name)}; available: ${availableEncoders().join(", ")}`
  );
}

export function l2Normalize(values: number[]): number[] {
  let sumSquares = 0;
  for (const v of values) sumSquares += v * v;
  const norm = Math.sqrt(sumSquares);
  if (norm === 0) {
    throw new Error("cannot normalize a zero vector");
  }
  return values.map((v) => v / norm);
}
