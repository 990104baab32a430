/**
 * Mock open-vocabulary segmenter: each pixel's feature is a deterministic
 * pseudo-random direction keyed by (model id, quantized RGB). Pixels with
 * the same color share a feature, which is exactly the degenerate behavior
 * a mock should have; a real segmenter slots in by replacing pixelFeature.
 * No post-processing beyond the optional L2 normalization.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { EncoderOptions } from './encoder.js'
import { RgbImage, readImage, resizeRgb } from './image.js'
import { writeTensor } from './oten.js'
import { Rng, hashSeed } from './rng.js'

export interface FeatureOptions extends EncoderOptions {
  /** target resolution the image is resized to before encoding */
  width: number
  height: number
}

export const DEFAULT_WIDTH = 704
export const DEFAULT_HEIGHT = 256

export function pixelFeature(
  r: number, g: number, b: number, opts: EncoderOptions,
): Float32Array {
  const rng = new Rng(hashSeed('pixel', opts.modelId, `${r},${g},${b}`))
  const row = new Float32Array(opts.channels)
  for (let i = 0; i < opts.channels; i++) row[i] = rng.gaussian()
  if (opts.normalize) {
    let norm = 0
    for (const v of row) norm += v * v
    norm = Math.sqrt(norm)
    for (let i = 0; i < row.length; i++) row[i] /= norm
  }
  return row
}

export function encodeImage(img: RgbImage, opts: FeatureOptions): Float32Array {
  const rgb = resizeRgb(img, opts.width, opts.height)
  const out = new Float32Array(opts.width * opts.height * opts.channels)
  const cache = new Map<number, Float32Array>()
  for (let p = 0; p < opts.width * opts.height; p++) {
    const r = Math.round(rgb[p * 3])
    const g = Math.round(rgb[p * 3 + 1])
    const b = Math.round(rgb[p * 3 + 2])
    const key = (r << 16) | (g << 8) | b
    let feat = cache.get(key)
    if (!feat) {
      feat = pixelFeature(r, g, b, opts)
      cache.set(key, feat)
    }
    out.set(feat, p * opts.channels)
  }
  return out
}

/** Writes <out>/<image stem>.oten of shape (H, W, C) f32 and a JSON
 * manifest recording exactly the dims the tensor has. */
export function exportPixelFeatures(
  imageFile: string,
  opts: FeatureOptions,
  outDir: string,
): { otenPath: string; jsonPath: string } {
  const img = readImage(imageFile)
  const data = encodeImage(img, opts)
  const stem = path.basename(imageFile).replace(/\.(ppm|oten)$/, '')
  fs.mkdirSync(outDir, { recursive: true })
  const otenPath = path.join(outDir, `${stem}.oten`)
  const jsonPath = path.join(outDir, `${stem}.json`)
  writeTensor(otenPath, { data, shape: [opts.height, opts.width, opts.channels] })
  const manifest = {
    source_image: path.basename(imageFile),
    model: opts.modelId,
    height: opts.height,
    width: opts.width,
    channels: opts.channels,
    normalized: opts.normalize,
  }
  fs.writeFileSync(jsonPath, JSON.stringify(manifest, null, 2) + '\n')
  return { otenPath, jsonPath }
}
