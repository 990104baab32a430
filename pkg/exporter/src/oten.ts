/**
 * OTEN binary tensor container, little-endian:
 *
 *   bytes 0..3   magic "OTEN"
 *   byte  4      format version (1)
 *   byte  5      element type: 1=float32 2=float64 3=uint16 4=uint8
 *   byte  6      number of dimensions
 *   byte  7      reserved, zero
 *   next 8*ndim  dimension sizes, u64
 *   rest         payload, C row-major
 *
 * Round-trips are bit-exact, NaN payloads included: the payload moves as
 * raw bytes, never element by element through a Number (which would
 * canonicalize NaN bit patterns). Little-endian hosts only.
 */

import * as fs from 'node:fs'
import * as os from 'node:os'

export type TensorData = Float32Array | Float64Array | Uint16Array | Uint8Array

export interface Tensor {
  data: TensorData
  shape: number[]
}

const MAGIC = Buffer.from('OTEN', 'ascii')
const VERSION = 1

function requireLittleEndian(): void {
  if (os.endianness() !== 'LE') {
    throw new Error('OTEN payloads are little-endian; big-endian hosts are not supported')
  }
}

function dtypeCode(data: TensorData): number {
  if (data instanceof Float32Array) return 1
  if (data instanceof Float64Array) return 2
  if (data instanceof Uint16Array) return 3
  if (data instanceof Uint8Array) return 4
  throw new Error('unsupported tensor dtype')
}

function makeArray(code: number, count: number): TensorData {
  switch (code) {
    case 1: return new Float32Array(count)
    case 2: return new Float64Array(count)
    case 3: return new Uint16Array(count)
    case 4: return new Uint8Array(count)
    default: throw new Error(`unknown element type code ${code}`)
  }
}

function elementCount(shape: number[]): number {
  let n = 1
  for (const d of shape) {
    if (!Number.isInteger(d) || d < 0) throw new Error(`bad dimension ${d}`)
    n *= d
  }
  return n
}

export function tensorBytes(t: Tensor): Buffer {
  requireLittleEndian()
  const count = elementCount(t.shape)
  if (count !== t.data.length) {
    throw new Error(`shape [${t.shape}] implies ${count} elements, data has ${t.data.length}`)
  }
  const header = Buffer.alloc(8 + 8 * t.shape.length)
  MAGIC.copy(header, 0)
  header.writeUInt8(VERSION, 4)
  header.writeUInt8(dtypeCode(t.data), 5)
  header.writeUInt8(t.shape.length, 6)
  header.writeUInt8(0, 7)
  t.shape.forEach((d, i) => header.writeBigUInt64LE(BigInt(d), 8 + 8 * i))
  const payload = Buffer.from(t.data.buffer, t.data.byteOffset, t.data.byteLength)
  return Buffer.concat([header, payload])
}

export function parseTensor(buf: Buffer): Tensor {
  requireLittleEndian()
  if (buf.length < 8) throw new Error('tensor header truncated')
  if (!buf.subarray(0, 4).equals(MAGIC)) throw new Error('bad magic')
  if (buf.readUInt8(4) !== VERSION) throw new Error(`unsupported version ${buf.readUInt8(4)}`)
  if (buf.readUInt8(7) !== 0) throw new Error('reserved header byte must be zero')
  const code = buf.readUInt8(5)
  const ndim = buf.readUInt8(6)
  const offset = 8 + 8 * ndim
  if (buf.length < offset) throw new Error('dimension block truncated')
  const shape: number[] = []
  for (let i = 0; i < ndim; i++) {
    shape.push(Number(buf.readBigUInt64LE(8 + 8 * i)))
  }
  const out = makeArray(code, elementCount(shape))
  const expected = offset + out.byteLength
  if (buf.length !== expected) {
    throw new Error(`payload size mismatch: header implies ${expected} bytes, got ${buf.length}`)
  }
  // fresh aligned copy; also detaches the result from the input buffer
  new Uint8Array(out.buffer).set(buf.subarray(offset))
  return { data: out, shape }
}

export function writeTensor(path: string, t: Tensor): void {
  fs.writeFileSync(path, tensorBytes(t))
}

export function readTensor(path: string): Tensor {
  return parseTensor(fs.readFileSync(path))
}
