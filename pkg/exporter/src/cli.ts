#!/usr/bin/env node
/**
 * embed-export text     --model <id> --prompts <file.json> --out <stem>
 *                       [--channels N] [--no-normalize]
 * embed-export features --model <id> --image <file> [--image <file> ...]
 *                       --out-dir <dir> [--width N] [--height N]
 *                       [--channels N] [--no-normalize]
 *
 * Exit codes: 0 success, 2 bad arguments or unreadable input.
 */

import { pathToFileURL } from 'node:url'

import { DEFAULT_CHANNELS, exportTextEmbeddings, readPromptFile } from './encoder.js'
import { DEFAULT_HEIGHT, DEFAULT_WIDTH, exportPixelFeatures } from './features.js'

interface Parsed {
  command: string
  flags: Map<string, string[]>
}

function parseArgs(argv: string[]): Parsed {
  if (argv.length === 0) throw new Error('missing command: text | features')
  const [command, ...rest] = argv
  const flags = new Map<string, string[]>()
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i]
    if (!arg.startsWith('--')) throw new Error(`unexpected argument ${arg}`)
    const name = arg.slice(2)
    if (name === 'no-normalize') {
      flags.set(name, ['true'])
      continue
    }
    const value = rest[++i]
    if (value === undefined) throw new Error(`flag --${name} needs a value`)
    const prev = flags.get(name) ?? []
    prev.push(value)
    flags.set(name, prev)
  }
  return { command, flags }
}

function one(p: Parsed, name: string, fallback?: string): string {
  const values = p.flags.get(name)
  if (!values) {
    if (fallback !== undefined) return fallback
    throw new Error(`missing required flag --${name}`)
  }
  if (values.length !== 1) throw new Error(`flag --${name} given ${values.length} times`)
  return values[0]
}

function intFlag(p: Parsed, name: string, fallback: number): number {
  const raw = one(p, name, String(fallback))
  const v = parseInt(raw, 10)
  if (!Number.isInteger(v) || v < 1) throw new Error(`--${name} must be a positive integer`)
  return v
}

export function main(argv: string[]): number {
  let parsed: Parsed
  try {
    parsed = parseArgs(argv)
    const normalize = !parsed.flags.has('no-normalize')
    const channels = intFlag(parsed, 'channels', DEFAULT_CHANNELS)
    const modelId = one(parsed, 'model', 'mock-clip')

    if (parsed.command === 'text') {
      const spec = readPromptFile(one(parsed, 'prompts'))
      const out = exportTextEmbeddings(spec, { modelId, channels, normalize },
                                       one(parsed, 'out'))
      console.log(`wrote ${spec.prompts.length} embeddings to ${out.otenPath}`)
      return 0
    }
    if (parsed.command === 'features') {
      const images = parsed.flags.get('image')
      if (!images || images.length === 0) throw new Error('missing required flag --image')
      const outDir = one(parsed, 'out-dir')
      const opts = {
        modelId, channels, normalize,
        width: intFlag(parsed, 'width', DEFAULT_WIDTH),
        height: intFlag(parsed, 'height', DEFAULT_HEIGHT),
      }
      for (const image of images) {
        const out = exportPixelFeatures(image, opts, outDir)
        console.log(`wrote ${opts.height}x${opts.width}x${opts.channels} features to ${out.otenPath}`)
      }
      return 0
    }
    throw new Error(`unknown command ${parsed.command}`)
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 2
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)))
}
