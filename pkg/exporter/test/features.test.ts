import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'

import { afterAll, describe, expect, it } from 'vitest'

import {
  FeatureOptions,
  encodeImage,
  exportPixelFeatures,
  pixelFeature,
} from '../src/features.js'
import { RgbImage, readImage, readPpm, resizeRgb } from '../src/image.js'
import { readTensor, writeTensor } from '../src/oten.js'

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'features-'))
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }))

function testImage(width: number, height: number, seed = 1): RgbImage {
  // lcg keeps the fixture dependency-free and reproducible
  let s = seed >>> 0
  const data = new Uint8Array(width * height * 3)
  for (let i = 0; i < data.length; i++) {
    s = (Math.imul(s, 1664525) + 1013904223) >>> 0
    data[i] = s >>> 24
  }
  return { width, height, data }
}

function writePpm(img: RgbImage, file: string, comment = false): string {
  const header = comment
    ? `P6\n# synthetic fixture\n${img.width} ${img.height}\n255\n`
    : `P6\n${img.width} ${img.height}\n255\n`
  fs.writeFileSync(file, Buffer.concat([Buffer.from(header, 'ascii'), Buffer.from(img.data)]))
  return file
}

describe('ppm and oten image input', () => {
  it('round-trips through P6, comments included', () => {
    const img = testImage(5, 4)
    const back = readPpm(writePpm(img, path.join(tmp, 'plain.ppm')))
    expect(back.width).toBe(5)
    expect(back.height).toBe(4)
    expect(Array.from(back.data)).toEqual(Array.from(img.data))
    const commented = readPpm(writePpm(img, path.join(tmp, 'comment.ppm'), true))
    expect(Array.from(commented.data)).toEqual(Array.from(img.data))
  })

  it('rejects non-P6 and truncated files', () => {
    const bad = path.join(tmp, 'bad.ppm')
    fs.writeFileSync(bad, 'P3\n1 1\n255\n0 0 0\n')
    expect(() => readPpm(bad)).toThrow(/not a binary PPM/)
    const short = path.join(tmp, 'short.ppm')
    fs.writeFileSync(short, Buffer.from('P6\n2 2\n255\n\x00\x01', 'ascii'))
    expect(() => readPpm(short)).toThrow(/truncated/)
  })

  it('reads u8 (H, W, 3) tensors as images', () => {
    const img = testImage(3, 2)
    const file = path.join(tmp, 'img.oten')
    writeTensor(file, { data: img.data, shape: [2, 3, 3] })
    const back = readImage(file)
    expect(back.width).toBe(3)
    expect(back.height).toBe(2)
    expect(Array.from(back.data)).toEqual(Array.from(img.data))
  })

  it('rejects tensors that are not u8 (H, W, 3)', () => {
    const file = path.join(tmp, 'flat.oten')
    writeTensor(file, { data: new Uint8Array(6), shape: [2, 3] })
    expect(() => readImage(file)).toThrow(/shape \(H, W, 3\)/)
    expect(() => readImage(path.join(tmp, 'img.png'))).toThrow(/unsupported image type/)
  })
})

describe('resizeRgb', () => {
  it('is the identity at matching size', () => {
    const img = testImage(6, 4)
    const out = resizeRgb(img, 6, 4)
    expect(Array.from(out)).toEqual(Array.from(img.data))
  })

  it('keeps a constant image constant at any size', () => {
    const img: RgbImage = { width: 7, height: 5, data: new Uint8Array(7 * 5 * 3).fill(200) }
    // bilinear weights sum to 1 only up to rounding, hence the tolerance
    for (const v of resizeRgb(img, 3, 9)) expect(v).toBeCloseTo(200, 9)
  })

  it('averages neighbors on a 2x downsample', () => {
    // one row, pixels 0 and 100: the single output pixel sits midway
    const img: RgbImage = {
      width: 2, height: 1,
      data: new Uint8Array([0, 0, 0, 100, 100, 100]),
    }
    const out = resizeRgb(img, 1, 1)
    expect(Array.from(out)).toEqual([50, 50, 50])
  })
})

const OPTS: FeatureOptions = {
  modelId: 'mock-clip', channels: 16, normalize: true, width: 5, height: 4,
}

describe('pixelFeature and encodeImage', () => {
  it('keys features on color, unit norm', () => {
    const a = pixelFeature(10, 20, 30, OPTS)
    const b = pixelFeature(10, 20, 30, OPTS)
    const c = pixelFeature(10, 20, 31, OPTS)
    expect(Array.from(a)).toEqual(Array.from(b))
    expect(Array.from(a)).not.toEqual(Array.from(c))
    let s = 0
    for (const v of a) s += v * v
    expect(Math.abs(Math.sqrt(s) - 1)).toBeLessThan(1e-5)
  })

  it('maps each pixel to its color feature when no resize happens', () => {
    const img = testImage(5, 4)
    const out = encodeImage(img, OPTS)
    for (let p = 0; p < 5 * 4; p++) {
      const expected = pixelFeature(img.data[p * 3], img.data[p * 3 + 1], img.data[p * 3 + 2], OPTS)
      const got = out.subarray(p * 16, (p + 1) * 16)
      expect(Array.from(got)).toEqual(Array.from(expected))
    }
  })

  it('is deterministic across calls', () => {
    const img = testImage(5, 4, 9)
    const a = encodeImage(img, OPTS)
    const b = encodeImage(img, OPTS)
    expect(Buffer.from(a.buffer).equals(Buffer.from(b.buffer))).toBe(true)
  })
})

describe('exportPixelFeatures', () => {
  it('writes (H, W, C) f32 plus a manifest with matching dims', () => {
    const file = writePpm(testImage(5, 4, 3), path.join(tmp, 'cam_0.ppm'))
    const outDir = path.join(tmp, 'features')
    const out = exportPixelFeatures(file, OPTS, outDir)
    expect(out.otenPath).toBe(path.join(outDir, 'cam_0.oten'))
    const t = readTensor(out.otenPath)
    expect(t.shape).toEqual([4, 5, 16])
    expect(t.data).toBeInstanceOf(Float32Array)
    const manifest = JSON.parse(fs.readFileSync(out.jsonPath, 'utf-8'))
    expect(manifest.height).toBe(t.shape[0])
    expect(manifest.width).toBe(t.shape[1])
    expect(manifest.channels).toBe(t.shape[2])
    expect(manifest.source_image).toBe('cam_0.ppm')
    expect(manifest.model).toBe('mock-clip')
    expect(manifest.normalized).toBe(true)
  })

  it('reruns byte-identically', () => {
    const file = writePpm(testImage(4, 3, 5), path.join(tmp, 'rerun.ppm'))
    const a = exportPixelFeatures(file, OPTS, path.join(tmp, 'fa'))
    const b = exportPixelFeatures(file, OPTS, path.join(tmp, 'fb'))
    expect(fs.readFileSync(a.otenPath).equals(fs.readFileSync(b.otenPath))).toBe(true)
  })
})
