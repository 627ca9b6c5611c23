/** Minimal row-major Float64Array helpers for the score contraction. */

/** y = M x for a d x d matrix stored row-major in `mat` (no aliasing). */
export function matVec(mat: Float64Array, d: number, x: Float64Array): Float64Array {
  const y = new Float64Array(d);
  for (let r = 0; r < d; r++) {
    let acc = 0.0;
    const base = r * d;
    for (let c = 0; c < d; c++) {
      acc += mat[base + c] * x[c];
    }
    y[r] = acc;
  }
  return y;
}

/** y = x^T M (row vector times matrix), both length/side d. */
export function vecMat(x: Float64Array, mat: Float64Array, d: number): Float64Array {
  const y = new Float64Array(d);
  for (let c = 0; c < d; c++) {
    let acc = 0.0;
    for (let r = 0; r < d; r++) {
      acc += x[r] * mat[r * d + c];
    }
    y[c] = acc;
  }
  return y;
}

export function dot(a: Float64Array, b: Float64Array): number {
  let acc = 0.0;
  for (let i = 0; i < a.length; i++) {
    acc += a[i] * b[i];
  }
  return acc;
}

export function toFloat64Rows(rows: readonly (readonly number[])[]): Float64Array[] {
  return rows.map((row) => Float64Array.from(row));
}
