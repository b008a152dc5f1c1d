/**
 * Binary tensor formats shared with the inference engine.
 *
 * Weight container (.vrelw): 8-byte magic "VRELW001", u64 LE header length,
 * JSON header {name: {shape, offset, nbytes}} with offsets relative to the
 * payload start, then concatenated row-major little-endian float32 payloads.
 *
 * Raw tensor (.vrelv): 8-byte magic "VRELV001", four u32 LE extents
 * (C, T, H, W), then the row-major float32 payload.
 */

import * as fs from 'node:fs';
import * as os from 'node:os';

export const WEIGHT_MAGIC = 'VRELW001';
export const RAW_MAGIC = 'VRELV001';

export interface TensorEntry {
  shape: number[];
  data: Float32Array;
}

function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

function floatsToBufferLE(data: Float32Array): Buffer {
  if (os.endianness() === 'LE') {
    return Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  }
  const buf = Buffer.allocUnsafe(data.length * 4);
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], i * 4);
  }
  return buf;
}

function bufferToFloatsLE(buf: Buffer, count: number): Float32Array {
  if (os.endianness() === 'LE') {
    // copy so the result owns aligned memory
    const out = new Float32Array(count);
    out.set(new Float32Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + count * 4)));
    return out;
  }
  const out = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = buf.readFloatLE(i * 4);
  }
  return out;
}

export function writeWeightContainer(entries: Map<string, TensorEntry>, filePath: string): void {
  const header: Record<string, { shape: number[]; offset: number; nbytes: number }> = {};
  const blobs: Buffer[] = [];
  let offset = 0;
  for (const [name, entry] of entries) {
    const nbytes = numel(entry.shape) * 4;
    if (entry.data.length !== numel(entry.shape)) {
      throw new Error(`tensor ${name}: data length ${entry.data.length} does not match shape ` +
        JSON.stringify(entry.shape));
    }
    header[name] = { shape: entry.shape, offset, nbytes };
    blobs.push(floatsToBufferLE(entry.data));
    offset += nbytes;
  }
  const headerBytes = Buffer.from(JSON.stringify(header), 'utf-8');
  const lenField = Buffer.allocUnsafe(8);
  lenField.writeBigUInt64LE(BigInt(headerBytes.length));
  fs.writeFileSync(filePath, Buffer.concat([
    Buffer.from(WEIGHT_MAGIC, 'ascii'), lenField, headerBytes, ...blobs,
  ]));
}

export function readWeightContainer(filePath: string): Map<string, TensorEntry> {
  const data = fs.readFileSync(filePath);
  if (data.length < 16 || data.subarray(0, 8).toString('ascii') !== WEIGHT_MAGIC) {
    throw new Error(`bad magic in ${filePath}`);
  }
  const headerLen = Number(data.readBigUInt64LE(8));
  if (16 + headerLen > data.length) {
    throw new Error(`header length ${headerLen} exceeds file size ${data.length}`);
  }
  const header = JSON.parse(data.subarray(16, 16 + headerLen).toString('utf-8')) as
    Record<string, { shape: number[]; offset: number; nbytes: number }>;
  const payload = data.subarray(16 + headerLen);
  const entries = new Map<string, TensorEntry>();
  for (const [name, meta] of Object.entries(header)) {
    if (meta.nbytes !== numel(meta.shape) * 4) {
      throw new Error(`tensor ${name}: nbytes ${meta.nbytes} does not match shape`);
    }
    if (meta.offset < 0 || meta.offset + meta.nbytes > payload.length) {
      throw new Error(`tensor ${name}: payload truncated`);
    }
    const slice = payload.subarray(meta.offset, meta.offset + meta.nbytes);
    entries.set(name, { shape: meta.shape, data: bufferToFloatsLE(slice, meta.nbytes / 4) });
  }
  return entries;
}

/** Write a (C, T, H, W) clip or relevance map as a raw VRELV001 file. */
export function writeRawTensor(shape: number[], data: Float32Array, filePath: string): void {
  if (shape.length !== 4) {
    throw new Error(`raw tensor files hold rank-4 tensors, got shape ${JSON.stringify(shape)}`);
  }
  if (data.length !== numel(shape)) {
    throw new Error(`data length ${data.length} does not match shape ${JSON.stringify(shape)}`);
  }
  const extents = Buffer.allocUnsafe(16);
  shape.forEach((e, i) => extents.writeUInt32LE(e, i * 4));
  fs.writeFileSync(filePath, Buffer.concat([
    Buffer.from(RAW_MAGIC, 'ascii'), extents, floatsToBufferLE(data),
  ]));
}

export function readRawTensor(filePath: string): { shape: number[]; data: Float32Array } {
  const buf = fs.readFileSync(filePath);
  if (buf.length < 24 || buf.subarray(0, 8).toString('ascii') !== RAW_MAGIC) {
    throw new Error(`bad magic in ${filePath}`);
  }
  const shape = [0, 1, 2, 3].map((i) => buf.readUInt32LE(8 + i * 4));
  const count = numel(shape);
  if (buf.length !== 24 + count * 4) {
    throw new Error(`payload size mismatch in ${filePath}`);
  }
  return { shape, data: bufferToFloatsLE(buf.subarray(24), count) };
}
