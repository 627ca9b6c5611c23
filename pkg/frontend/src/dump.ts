/**
 * Codec for the tensor dump format: one UTF-8 JSON header line
 * `{"nu": n, "dim": d, "order": "row-major", "dtype": "f64le"}`
 * followed by nu*d*d little-endian 64-bit floats, row-major.
 */

import { readFileSync, writeFileSync } from "node:fs";

export interface TensorStack {
  /** number of d x d slices */
  nu: number;
  /** side length of each slice */
  dim: number;
  /** row-major slice data, length nu * dim * dim */
  data: Float64Array;
}

interface Header {
  nu: number;
  dim: number;
  order: string;
  dtype: string;
}

export function parseTensor(raw: Buffer): TensorStack {
  const newline = raw.indexOf(0x0a);
  if (newline < 0) {
    throw new Error("tensor dump: missing header line");
  }
  const header = JSON.parse(raw.subarray(0, newline).toString("utf-8")) as Header;
  if (header.order !== "row-major" || header.dtype !== "f64le") {
    throw new Error(`tensor dump: unsupported layout ${JSON.stringify(header)}`);
  }
  const { nu, dim } = header;
  const count = nu * dim * dim;
  const body = raw.subarray(newline + 1);
  if (body.length !== count * 8) {
    throw new Error(
      `tensor dump: payload is ${body.length} bytes, header implies ${count * 8}`,
    );
  }
  const view = new DataView(body.buffer, body.byteOffset, body.byteLength);
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = view.getFloat64(i * 8, true);
  }
  return { nu, dim, data };
}

export function encodeTensor(stack: TensorStack): Buffer {
  const { nu, dim, data } = stack;
  if (data.length !== nu * dim * dim) {
    throw new Error(
      `tensor dump: data length ${data.length} != ${nu} * ${dim}^2`,
    );
  }
  const header = Buffer.from(
    JSON.stringify({ nu, dim, order: "row-major", dtype: "f64le" }) + "\n",
    "utf-8",
  );
  const body = Buffer.alloc(data.length * 8);
  for (let i = 0; i < data.length; i++) {
    body.writeDoubleLE(data[i], i * 8);
  }
  return Buffer.concat([header, body]);
}

export function readTensorFile(path: string): TensorStack {
  return parseTensor(readFileSync(path));
}

export function writeTensorFile(path: string, stack: TensorStack): void {
  writeFileSync(path, encodeTensor(stack));
}

/** View of slice `row` as a length dim*dim subarray (no copy). */
export function slice(stack: TensorStack, row: number): Float64Array {
  if (row < 0 || row >= stack.nu) {
    throw new Error(`slice ${row} out of range 0..${stack.nu - 1}`);
  }
  const size = stack.dim * stack.dim;
  return stack.data.subarray(row * size, (row + 1) * size);
}
