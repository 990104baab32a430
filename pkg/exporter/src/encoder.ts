/**
 * Mock text encoder with a CLIP-shaped interface: every prompt maps to a
 * deterministic pseudo-random direction keyed by (model id, prompt text).
 * Swapping in a real encoder means replacing encodePrompt and keeping the
 * file format.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { writeTensor } from './oten.js'
import { Rng, hashSeed } from './rng.js'

export interface EncoderOptions {
  modelId: string
  channels: number
  /** L2-normalize rows; on by default, cosine losses downstream expect it */
  normalize: boolean
}

export const DEFAULT_CHANNELS = 768

export function encodePrompt(text: string, opts: EncoderOptions): Float32Array {
  if (opts.channels < 1) throw new Error('channels must be positive')
  const rng = new Rng(hashSeed('text', opts.modelId, text))
  const row = new Float32Array(opts.channels)
  for (let i = 0; i < opts.channels; i++) row[i] = rng.gaussian()
  if (opts.normalize) {
    let norm = 0
    for (const v of row) norm += v * v
    norm = Math.sqrt(norm)
    if (norm === 0) throw new Error('degenerate zero embedding')
    for (let i = 0; i < row.length; i++) row[i] /= norm
  }
  return row
}

export interface PromptSpec {
  classId: number
  text: string
}

export interface PromptFile {
  classNames: string[]
  prompts: PromptSpec[]
}

export function readPromptFile(file: string): PromptFile {
  const doc = JSON.parse(fs.readFileSync(file, 'utf-8'))
  if (!Array.isArray(doc.class_names) || !Array.isArray(doc.prompts)) {
    throw new Error('prompt file needs "class_names" and "prompts" keys')
  }
  const prompts: PromptSpec[] = doc.prompts.map((p: any, i: number) => {
    if (typeof p.text !== 'string' || !Number.isInteger(p.class_id)) {
      throw new Error(`prompt ${i} needs string "text" and integer "class_id"`)
    }
    if (p.class_id < 0 || p.class_id >= doc.class_names.length) {
      throw new Error(`prompt ${i} class_id ${p.class_id} outside class list`)
    }
    return { classId: p.class_id, text: p.text }
  })
  if (prompts.length === 0) throw new Error('prompt file lists no prompts')
  return { classNames: doc.class_names, prompts }
}

/** Writes <stem>.oten (K x C, f32) plus the <stem>.json sidecar the
 * downstream loader expects: prompts in row order, class ids, class names,
 * source and channel count. */
export function exportTextEmbeddings(
  spec: PromptFile,
  opts: EncoderOptions,
  outStem: string,
): { otenPath: string; jsonPath: string } {
  const k = spec.prompts.length
  const data = new Float32Array(k * opts.channels)
  spec.prompts.forEach((p, row) => {
    data.set(encodePrompt(p.text, opts), row * opts.channels)
  })
  const otenPath = `${outStem}.oten`
  const jsonPath = `${outStem}.json`
  fs.mkdirSync(path.dirname(path.resolve(otenPath)), { recursive: true })
  writeTensor(otenPath, { data, shape: [k, opts.channels] })
  // "source" names the encoder family for downstream loaders; this package
  // only ships mock encoders, so it is always "mock". The model id only keys
  // the PRNG and rides along under "model".
  const sidecar = {
    prompts: spec.prompts.map(p => p.text),
    class_ids: spec.prompts.map(p => p.classId),
    class_names: spec.classNames,
    source: 'mock',
    model: opts.modelId,
    channels: opts.channels,
    normalized: opts.normalize,
  }
  fs.writeFileSync(jsonPath, JSON.stringify(sidecar, null, 2) + '\n')
  return { otenPath, jsonPath }
}
