/** Minimal image input: binary PPM (P6, 8-bit) files, the lowest common
 * denominator every image tool can emit, or an OTEN u8 tensor of shape
 * (H, W, 3). */

import * as fs from 'node:fs'

import { readTensor } from './oten.js'

export interface RgbImage {
  width: number
  height: number
  /** H*W*3, row-major, 0..255 */
  data: Uint8Array
}

export function readPpm(file: string): RgbImage {
  const buf = fs.readFileSync(file)
  // header: "P6" <ws> width <ws> height <ws> maxval <single ws> payload
  let pos = 0
  const token = (): string => {
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++
    if (pos < buf.length && buf[pos] === 0x23) { // '#' comment runs to EOL
      while (pos < buf.length && buf[pos] !== 0x0a) pos++
      return token()
    }
    const start = pos
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++
    return buf.subarray(start, pos).toString('ascii')
  }
  if (token() !== 'P6') throw new Error(`${file}: not a binary PPM`)
  const width = parseInt(token(), 10)
  const height = parseInt(token(), 10)
  const maxval = parseInt(token(), 10)
  if (!(width > 0 && height > 0)) throw new Error(`${file}: bad dimensions`)
  if (maxval !== 255) throw new Error(`${file}: only 8-bit PPM supported`)
  pos++ // single whitespace after maxval
  const need = width * height * 3
  const data = buf.subarray(pos, pos + need)
  if (data.length !== need) throw new Error(`${file}: truncated pixel data`)
  return { width, height, data: new Uint8Array(data) }
}

export function readImage(file: string): RgbImage {
  if (file.endsWith('.ppm')) return readPpm(file)
  if (file.endsWith('.oten')) {
    const t = readTensor(file)
    if (t.shape.length !== 3 || t.shape[2] !== 3 || !(t.data instanceof Uint8Array)) {
      throw new Error(`${file}: image tensor must be u8 with shape (H, W, 3)`)
    }
    return { width: t.shape[1], height: t.shape[0], data: t.data }
  }
  throw new Error(`${file}: unsupported image type (use .ppm or .oten)`)
}

/** Bilinear resize with half-pixel centers; identity when sizes match. */
export function resizeRgb(img: RgbImage, outWidth: number, outHeight: number): Float64Array {
  if (outWidth < 1 || outHeight < 1) throw new Error('target size must be positive')
  const out = new Float64Array(outWidth * outHeight * 3)
  const sx = img.width / outWidth
  const sy = img.height / outHeight
  for (let y = 0; y < outHeight; y++) {
    let v = (y + 0.5) * sy - 0.5
    v = Math.min(Math.max(v, 0), img.height - 1)
    const v0 = Math.min(Math.floor(v), Math.max(img.height - 2, 0))
    const v1 = Math.min(v0 + 1, img.height - 1)
    const dv = v - v0
    for (let x = 0; x < outWidth; x++) {
      let u = (x + 0.5) * sx - 0.5
      u = Math.min(Math.max(u, 0), img.width - 1)
      const u0 = Math.min(Math.floor(u), Math.max(img.width - 2, 0))
      const u1 = Math.min(u0 + 1, img.width - 1)
      const du = u - u0
      for (let c = 0; c < 3; c++) {
        const p00 = img.data[(v0 * img.width + u0) * 3 + c]
        const p01 = img.data[(v0 * img.width + u1) * 3 + c]
        const p10 = img.data[(v1 * img.width + u0) * 3 + c]
        const p11 = img.data[(v1 * img.width + u1) * 3 + c]
        out[(y * outWidth + x) * 3 + c] =
          p00 * (1 - du) * (1 - dv) + p01 * du * (1 - dv) +
          p10 * (1 - du) * dv + p11 * du * dv
      }
    }
  }
  return out
}
