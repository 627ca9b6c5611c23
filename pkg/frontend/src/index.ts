/**
 * Bindings over the orthopos CLI.
 *
 * `buildEncoder` shells out to `gen` and holds the resulting generator
 * and position-tensor stacks as Float64Arrays, exactly as the core
 * wrote them.  `BoundEncoder.scores` runs the factored score
 * contraction locally over those buffers: projected queries and keys
 * are rotated by their per-position matrices, then combined with one
 * dot product per pair.  Conversions round-trip through `convert`.
 */

import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { runCli } from "./cli.js";
import {
  TensorStack,
  encodeTensor,
  readTensorFile,
  slice,
  writeTensorFile,
} from "./dump.js";
import { dot, matVec, toFloat64Rows, vecMat } from "./linalg.js";

export { parseTensor, encodeTensor, readTensorFile, writeTensorFile, slice } from "./dump.js";
export type { TensorStack } from "./dump.js";
export { runCli, runCliRaw, PYTHON } from "./cli.js";

export type StructureKind = "seq" | "tree" | "grid";

export interface EncoderOptions {
  kind: StructureKind;
  dim: number;
  /** tree branching factor (default 2) */
  branching?: number;
  /** grid axis count (default 2) */
  axes?: number;
  /** sequence ladder extent: rows W^0..W^maxPos */
  maxPos?: number;
  /** complete-tree depth */
  depth?: number;
  /** per-axis grid extents */
  extents?: number[];
  /** cyclic order(s); builds periodic generators */
  period?: number | number[];
  seed?: number;
  init?: "random" | "rotary" | "near-identity";
  /** explicit parameter matrices, one per generator; overrides seed/init */
  params?: number[][][];
}

export interface ScoreOptions {
  /** d x d query projection (defaults to identity) */
  phiQ?: number[][];
  /** d x d key projection (defaults to identity) */
  phiK?: number[][];
  /** origin-fixed positions: modulate keys only */
  absolute?: boolean;
}

export type Position = number | number[];

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "orthopos-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

function structureArgs(opts: EncoderOptions): string[] {
  const args = ["--kind", opts.kind, "--dim", String(opts.dim)];
  if (opts.kind === "tree") {
    args.push("--k", String(opts.branching ?? 2));
  }
  if (opts.kind === "grid") {
    args.push("--axes", String(opts.axes ?? 2));
  }
  if (opts.period !== undefined) {
    const period = Array.isArray(opts.period) ? opts.period : [opts.period];
    args.push("--period", period.join(","));
  }
  if (opts.seed !== undefined) {
    args.push("--seed", String(opts.seed));
  }
  if (opts.init !== undefined) {
    args.push("--init", opts.init);
  }
  return args;
}

function extentArgs(opts: EncoderOptions): string[] {
  if (opts.kind === "seq") {
    if (opts.maxPos === undefined) {
      throw new Error("sequence encoders need maxPos");
    }
    return ["--max-pos", String(opts.maxPos)];
  }
  if (opts.kind === "tree") {
    if (opts.depth === undefined) {
      throw new Error("tree encoders need depth");
    }
    return ["--depth", String(opts.depth)];
  }
  if (!opts.extents || opts.extents.length === 0) {
    throw new Error("grid encoders need extents");
  }
  return ["--extents", opts.extents.join(",")];
}

export class BoundEncoder {
  readonly options: Readonly<EncoderOptions>;
  readonly dim: number;
  readonly generators: TensorStack;
  readonly tensor: TensorStack;
  private released = false;

  constructor(options: EncoderOptions, generators: TensorStack, tensor: TensorStack) {
    this.options = Object.freeze({ ...options });
    this.dim = options.dim;
    this.generators = generators;
    this.tensor = tensor;
  }

  private guard(): void {
    if (this.released) {
      throw new Error("encoder has been released");
    }
  }

  /** Drop the buffers; any further use throws instead of misbehaving. */
  release(): void {
    this.released = true;
  }

  get isReleased(): boolean {
    return this.released;
  }

  /** Row index of an absolute position inside the built tensor. */
  rowIndex(position: Position): number {
    this.guard();
    const opts = this.options;
    if (opts.kind === "seq") {
      const p = position as number;
      if (!Number.isInteger(p) || p < 0 || p > (opts.maxPos ?? -1)) {
        throw new Error(`sequence position ${p} outside 0..${opts.maxPos}`);
      }
      return p;
    }
    if (opts.kind === "tree") {
      const word = position as number[];
      const k = opts.branching ?? 2;
      const depth = opts.depth ?? 0;
      if (word.length > depth) {
        throw new Error(`tree position deeper than ${depth}`);
      }
      // Rows are ordered by depth, lexicographic within a level.
      let before = 0;
      for (let t = 0; t < word.length; t++) {
        before += Math.pow(k, t);
      }
      let rank = 0;
      for (let i = 0; i < word.length; i++) {
        const letter = word[i];
        if (!Number.isInteger(letter) || letter < 1 || letter > k) {
          throw new Error(`branch letter ${letter} outside 1..${k}`);
        }
        rank = rank * k + (letter - 1);
      }
      return before + rank;
    }
    const coords = position as number[];
    const extents = opts.extents ?? [];
    if (coords.length !== extents.length) {
      throw new Error(`expected ${extents.length} coordinates`);
    }
    let row = 0;
    for (let i = 0; i < coords.length; i++) {
      if (!Number.isInteger(coords[i]) || coords[i] < 0 || coords[i] >= extents[i]) {
        throw new Error(`coordinate ${coords[i]} outside 0..${extents[i] - 1}`);
      }
      row = row * extents[i] + coords[i];
    }
    return row;
  }

  /** Copy of the position's matrix (row-major d*d). */
  matrixAt(position: Position): Float64Array {
    this.guard();
    return slice(this.tensor, this.rowIndex(position)).slice();
  }

  /**
   * Factored modulated scores: project each row with its Phi, rotate it
   * by its position's matrix, then take one dot product per pair.
   * Under `absolute` the queries stay untouched and only keys are
   * modulated.
   */
  scores(
    queries: readonly (readonly number[])[],
    keys: readonly (readonly number[])[],
    queryPositions: readonly Position[],
    keyPositions: readonly Position[],
    opts: ScoreOptions = {},
  ): number[][] {
    this.guard();
    const d = this.dim;
    if (queries.length !== queryPositions.length) {
      throw new Error("one position per query row required");
    }
    if (keys.length !== keyPositions.length) {
      throw new Error("one position per key row required");
    }
    const phiQ = flattenSquare(opts.phiQ, d, "phiQ");
    const phiK = flattenSquare(opts.phiK, d, "phiK");
    const qRows = toFloat64Rows(queries);
    const kRows = toFloat64Rows(keys);
    const qt = qRows.map((row, i) => {
      const projected = phiQ ? vecMat(row, phiQ, d) : row;
      if (opts.absolute) {
        return projected;
      }
      return matVec(slice(this.tensor, this.rowIndex(queryPositions[i])), d, projected);
    });
    const kt = kRows.map((row, j) => {
      const projected = phiK ? vecMat(row, phiK, d) : row;
      return matVec(slice(this.tensor, this.rowIndex(keyPositions[j])), d, projected);
    });
    return qt.map((q) => kt.map((k) => dot(q, k)));
  }
}

function flattenSquare(
  mat: readonly (readonly number[])[] | undefined,
  d: number,
  name: string,
): Float64Array | null {
  if (mat === undefined) {
    return null;
  }
  if (mat.length !== d || mat.some((row) => row.length !== d)) {
    throw new Error(`${name} must be ${d}x${d}`);
  }
  const flat = new Float64Array(d * d);
  for (let r = 0; r < d; r++) {
    for (let c = 0; c < d; c++) {
      flat[r * d + c] = mat[r][c];
    }
  }
  return flat;
}

/**
 * Build an encoder through the CLI: one `gen --emit generators` call
 * for the generator stack, one `gen` call for the position tensor.
 * Buffers arrive bit-for-bit as the core wrote them.
 */
export function buildEncoder(opts: EncoderOptions): BoundEncoder {
  return withTempDir((dir) => {
    const common = structureArgs(opts);
    if (opts.params) {
      const paramFile = join(dir, "params.json");
      writeFileSync(paramFile, JSON.stringify(opts.params));
      common.push("--param-file", paramFile);
    }
    const genPath = join(dir, "generators.bin");
    runCli(["gen", ...common, "--emit", "generators", "--out", genPath]);
    const tensorPath = join(dir, "tensor.bin");
    runCli(["gen", ...common, ...extentArgs(opts), "--out", tensorPath]);
    return new BoundEncoder(opts, readTensorFile(genPath), readTensorFile(tensorPath));
  });
}

/** Raw bytes of the position tensor the CLI writes for these options. */
export function generateTensorBytes(opts: EncoderOptions): Buffer {
  return withTempDir((dir) => {
    const out = join(dir, "tensor.bin");
    runCli(["gen", ...structureArgs(opts), ...extentArgs(opts), "--out", out]);
    return readFileSync(out);
  });
}

export interface AnglesToGeneratorResult {
  dim: number;
  residual: number;
  generator: TensorStack;
}

export function anglesToGenerator(angles: readonly number[]): AnglesToGeneratorResult {
  return withTempDir((dir) => {
    const anglesPath = join(dir, "angles.json");
    writeFileSync(anglesPath, JSON.stringify(angles));
    const outPath = join(dir, "generator.bin");
    const stdout = runCli(["convert", "--in", anglesPath, "--out", outPath]);
    const payload = JSON.parse(stdout) as { dim: number; residual: number };
    return { ...payload, generator: readTensorFile(outPath) };
  });
}

export interface GeneratorToAnglesResult {
  dim: number;
  residual: number;
  angles: number[];
  basis: TensorStack;
}

export function generatorToAngles(generator: TensorStack): GeneratorToAnglesResult {
  if (generator.nu !== 1) {
    throw new Error("conversion expects a single-slice stack");
  }
  return withTempDir((dir) => {
    const inPath = join(dir, "generator.bin");
    writeTensorFile(inPath, generator);
    const basisPath = join(dir, "basis.bin");
    const stdout = runCli(["convert", "--in", inPath, "--basis-out", basisPath]);
    const payload = JSON.parse(stdout) as {
      dim: number;
      residual: number;
      angles: number[];
    };
    return { ...payload, basis: readTensorFile(basisPath) };
  });
}

export interface BatchDescription {
  structure: { kind: StructureKind; k?: number; axes?: number; period?: number | number[] };
  queries: number[][];
  keys: number[][];
  phi_q?: number[][];
  phi_k?: number[][];
  params: number[][][];
  query_positions: Position[];
  key_positions: Position[];
  mode?: "relative" | "absolute";
}

/** Scores computed by the core itself (`orthopos scores`); the oracle
 * the local contraction is tested against. */
export function scoresViaCli(desc: BatchDescription): number[][] {
  return withTempDir((dir) => {
    const batchPath = join(dir, "batch.json");
    writeFileSync(batchPath, JSON.stringify(desc));
    const stdout = runCli(["scores", "--batch", batchPath]);
    return (JSON.parse(stdout) as { scores: number[][] }).scores;
  });
}
