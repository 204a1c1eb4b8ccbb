/**
 * Binary tensor files consumed by the scenefuse toolkit.
 *
 * Layout (little-endian): magic "SICT", u32 version (1), u32 dtype
 * (1 = float32), u32 rank, rank x u64 dims, then row-major float32 payload.
 * Round-trips are bit-exact at 32-bit precision.
 */

import { readFileSync, writeFileSync } from "node:fs";

const MAGIC = Buffer.from("SICT", "ascii");
const VERSION = 1;
const DTYPE_F32 = 1;

export interface Tensor {
  dims: number[];
  /** Row-major values, dims product elements. */
  data: Float32Array;
}

export function encodeTensor(tensor: Tensor): Buffer {
  const count = tensor.dims.reduce((a, b) => a * b, 1);
  if (count !== tensor.data.length) {
    throw new Error(
      `dims ${JSON.stringify(tensor.dims)} need ${count} values, got ${tensor.data.length}`,
    );
  }
  const header = Buffer.alloc(16 + 8 * tensor.dims.length);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(DTYPE_F32, 8);
  header.writeUInt32LE(tensor.dims.length, 12);
  tensor.dims.forEach((dim, i) => header.writeBigUInt64LE(BigInt(dim), 16 + 8 * i));
  const payload = Buffer.alloc(4 * count);
  for (let i = 0; i < count; i++) payload.writeFloatLE(tensor.data[i], 4 * i);
  return Buffer.concat([header, payload]);
}

export function decodeTensor(blob: Buffer): Tensor {
  if (blob.length < 16 || !blob.subarray(0, 4).equals(MAGIC)) {
    throw new Error("bad magic bytes");
  }
  if (blob.readUInt32LE(4) !== VERSION) throw new Error("unsupported version");
  if (blob.readUInt32LE(8) !== DTYPE_F32) throw new Error("unknown dtype");
  const rank = blob.readUInt32LE(12);
  const dims: number[] = [];
  let count = 1;
  for (let i = 0; i < rank; i++) {
    const dim = Number(blob.readBigUInt64LE(16 + 8 * i));
    dims.push(dim);
    count *= dim;
  }
  const offset = 16 + 8 * rank;
  if (blob.length !== offset + 4 * count) {
    throw new Error(`payload holds ${blob.length - offset} bytes, need ${4 * count}`);
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) data[i] = blob.readFloatLE(offset + 4 * i);
  return { dims, data };
}

export function writeTensor(path: string, tensor: Tensor): void {
  writeFileSync(path, encodeTensor(tensor));
}

export function readTensor(path: string): Tensor {
  return decodeTensor(readFileSync(path));
}

export function stackRows(rows: Float32Array[]): Tensor {
  if (rows.length === 0) throw new Error("cannot stack zero rows");
  const width = rows[0].length;
  const data = new Float32Array(rows.length * width);
  rows.forEach((row, i) => {
    if (row.length !== width) {
      throw new Error(`row ${i} has length ${row.length}, expected ${width}`);
    }
    data.set(row, i * width);
  });
  return { dims: [rows.length, width], data };
}
