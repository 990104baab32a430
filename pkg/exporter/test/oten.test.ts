import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'

import { afterAll, describe, expect, it } from 'vitest'

import { Tensor, parseTensor, readTensor, tensorBytes, writeTensor } from '../src/oten.js'

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'oten-'))
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }))

function roundTrip(t: Tensor): Tensor {
  const file = path.join(tmp, `${Math.random().toString(36).slice(2)}.oten`)
  writeTensor(file, t)
  return readTensor(file)
}

describe('header layout', () => {
  it('writes magic, version, dtype code, ndim, reserved, u64 dims', () => {
    const buf = tensorBytes({ data: new Float32Array([1, 2, 3, 4, 5, 6]), shape: [2, 3] })
    expect(buf.subarray(0, 4).toString('ascii')).toBe('OTEN')
    expect(buf[4]).toBe(1) // version
    expect(buf[5]).toBe(1) // float32
    expect(buf[6]).toBe(2) // ndim
    expect(buf[7]).toBe(0) // reserved
    expect(buf.readBigUInt64LE(8)).toBe(2n)
    expect(buf.readBigUInt64LE(16)).toBe(3n)
    expect(buf.length).toBe(8 + 16 + 6 * 4)
  })

  it('uses the right dtype codes', () => {
    expect(tensorBytes({ data: new Float32Array(1), shape: [1] })[5]).toBe(1)
    expect(tensorBytes({ data: new Float64Array(1), shape: [1] })[5]).toBe(2)
    expect(tensorBytes({ data: new Uint16Array(1), shape: [1] })[5]).toBe(3)
    expect(tensorBytes({ data: new Uint8Array(1), shape: [1] })[5]).toBe(4)
  })
})

describe('round-trips', () => {
  it('f32', () => {
    const data = new Float32Array([0, -0, 1.5, -2.25, 3e20])
    const t = roundTrip({ data: new Float32Array(data), shape: [5] })
    expect(t.shape).toEqual([5])
    expect(t.data).toBeInstanceOf(Float32Array)
    expect(Array.from(t.data)).toEqual(Array.from(data))
  })

  it('f64', () => {
    const vals = [Math.PI, -Math.E, 1e-300, Number.MAX_VALUE]
    const t = roundTrip({ data: new Float64Array(vals), shape: [2, 2] })
    expect(t.shape).toEqual([2, 2])
    expect(Array.from(t.data)).toEqual(vals)
  })

  it('u16 and u8', () => {
    const a = roundTrip({ data: new Uint16Array([0, 65535, 256]), shape: [3] })
    expect(Array.from(a.data)).toEqual([0, 65535, 256])
    const b = roundTrip({ data: new Uint8Array([0, 255, 7]), shape: [3, 1, 1] })
    expect(b.shape).toEqual([3, 1, 1])
    expect(Array.from(b.data)).toEqual([0, 255, 7])
  })

  it('zero-dimensional scalar', () => {
    const t = roundTrip({ data: new Float64Array([42.5]), shape: [] })
    expect(t.shape).toEqual([])
    expect(t.data[0]).toBe(42.5)
  })

  it('empty tensor', () => {
    const t = roundTrip({ data: new Float32Array(0), shape: [0, 4] })
    expect(t.shape).toEqual([0, 4])
    expect(t.data.length).toBe(0)
  })

  it('preserves NaN payload bits in f32', () => {
    const bits = new Uint32Array([0x7fc00001, 0xffc00000, 0x7f800001, 0x7f800000, 0xff800000])
    const data = new Float32Array(bits.buffer)
    const back = roundTrip({ data, shape: [5] })
    const backBits = new Uint32Array(back.data.buffer, back.data.byteOffset, 5)
    expect(Array.from(backBits)).toEqual(Array.from(bits))
  })

  it('preserves NaN payload bits in f64', () => {
    const bits = new BigUint64Array([
      0x7ff8000000000001n, 0xfff8000000000000n, 0x7ff0000000000001n,
    ])
    const data = new Float64Array(bits.buffer)
    const back = roundTrip({ data, shape: [3] })
    const backBits = new BigUint64Array(back.data.buffer, back.data.byteOffset, 3)
    expect(Array.from(backBits)).toEqual(Array.from(bits))
  })

  it('bytes -> parse -> bytes is the identity', () => {
    const t: Tensor = { data: new Float32Array([1, NaN, -0, Infinity]), shape: [4] }
    const once = tensorBytes(t)
    const twice = tensorBytes(parseTensor(once))
    expect(twice.equals(once)).toBe(true)
  })
})

describe('validation', () => {
  const good = tensorBytes({ data: new Float32Array([1, 2]), shape: [2] })

  it('rejects bad magic', () => {
    const bad = Buffer.from(good)
    bad[0] = 0x58
    expect(() => parseTensor(bad)).toThrow(/magic/)
  })

  it('rejects unknown version', () => {
    const bad = Buffer.from(good)
    bad[4] = 9
    expect(() => parseTensor(bad)).toThrow(/version/)
  })

  it('rejects nonzero reserved byte', () => {
    const bad = Buffer.from(good)
    bad[7] = 1
    expect(() => parseTensor(bad)).toThrow(/reserved/)
  })

  it('rejects unknown dtype code', () => {
    const bad = Buffer.from(good)
    bad[5] = 77
    expect(() => parseTensor(bad)).toThrow(/element type/)
  })

  it('rejects truncated payload and trailing garbage', () => {
    expect(() => parseTensor(good.subarray(0, good.length - 1))).toThrow(/size mismatch/)
    expect(() => parseTensor(Buffer.concat([good, Buffer.from([0])]))).toThrow(/size mismatch/)
    expect(() => parseTensor(good.subarray(0, 4))).toThrow(/truncated/)
  })

  it('rejects shape/data disagreement on write', () => {
    expect(() => tensorBytes({ data: new Float32Array(3), shape: [2, 2] })).toThrow(/implies 4/)
  })
})
