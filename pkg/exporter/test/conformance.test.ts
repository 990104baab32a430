/**
 * Cross-language conformance: everything this package writes must load in
 * the downstream Python pipeline, which is the real consumer of these files.
 * Each test shells out to python3 and lets that side's validating parsers
 * be the judge.
 */

import { execFileSync } from 'node:child_process'
import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'

import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { exportTextEmbeddings } from '../src/encoder.js'
import { FeatureOptions, exportPixelFeatures, pixelFeature } from '../src/features.js'
import { readTensor, writeTensor } from '../src/oten.js'

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'conform-'))
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }))

function py(script: string, ...args: string[]): any {
  const out = execFileSync('python3', ['-c', script, ...args], { encoding: 'utf-8' })
  return JSON.parse(out)
}

beforeAll(() => {
  // fail fast with a clear message when the consumer package is absent
  execFileSync('python3', ['-c', 'import openocc'])
})

describe('text embeddings load downstream', () => {
  const spec = {
    classNames: ['drivable surface', 'manmade', 'vegetation', 'barrier', 'car'],
    prompts: [
      { classId: 0, text: 'a drivable surface' },
      { classId: 1, text: 'a manmade structure' },
      { classId: 2, text: 'vegetation in a scene' },
      { classId: 3, text: 'a barrier in a scene' },
      { classId: 4, text: 'a car in a scene' },
      { classId: 4, text: 'a bus in a scene' },
    ],
  }
  const opts = { modelId: 'mock-clip', channels: 48, normalize: true }
  let stem: string
  let report: any

  beforeAll(() => {
    stem = path.join(tmp, 'classes')
    exportTextEmbeddings(spec, opts, stem)
    report = py(`
import json, sys
import numpy as np
from openocc.oten import read_tensor
from openocc.vocab import load_embeddings

stem = sys.argv[1]
raw = read_tensor(stem + ".oten")
embs, sidecar = load_embeddings(stem)
norms = np.linalg.norm(raw.astype(np.float64), axis=1)
print(json.dumps({
    "shape": list(raw.shape),
    "dtype": str(raw.dtype),
    "max_norm_err": float(np.max(np.abs(norms - 1.0))),
    "loaded_rows": len(embs),
    "class_ids": [int(i) for i in embs.class_ids],
    "source": embs.source,
    "prompts": sidecar["prompts"],
    "class_names": sidecar["class_names"],
    "cos_car_bus": float(embs.embeddings[4] @ embs.embeddings[5]),
}))
`, stem)
  })

  it('passes the tensor parser and the sidecar loader', () => {
    expect(report.shape).toEqual([6, 48])
    expect(report.dtype).toBe('float32')
    expect(report.loaded_rows).toBe(6)
  })

  it('keeps rows unit-norm within 1e-5 as stored', () => {
    expect(report.max_norm_err).toBeLessThan(1e-5)
  })

  it('carries prompts, class ids and names through the sidecar', () => {
    expect(report.prompts).toEqual(spec.prompts.map(p => p.text))
    expect(report.class_ids).toEqual([0, 1, 2, 3, 4, 4])
    expect(report.class_names).toEqual(spec.classNames)
    expect(report.source).toBe('mock')
  })

  it('separates prompts for the same class', () => {
    expect(report.cos_car_bus).toBeLessThan(0.999)
    expect(report.cos_car_bus).toBeGreaterThan(-0.999)
  })
})

describe('pixel features load downstream', () => {
  const opts: FeatureOptions = {
    modelId: 'mock-clip', channels: 12, normalize: true, width: 6, height: 4,
  }
  let otenPath: string

  beforeAll(() => {
    // image already at target size, so the resize is the identity and the
    // stored rows are exactly the per-color features
    const data = new Uint8Array(6 * 4 * 3)
    for (let i = 0; i < data.length; i++) data[i] = (i * 37 + 11) % 256
    const imageFile = path.join(tmp, 'cam_front.oten')
    writeTensor(imageFile, { data, shape: [4, 6, 3] })
    otenPath = exportPixelFeatures(imageFile, opts, path.join(tmp, 'pixfeat')).otenPath
  })

  it('integer-coordinate bilinear samples equal the stored pixels', () => {
    const report = py(`
import json, sys
import numpy as np
from openocc.lift import FeatureMap, bilinear_sample
from openocc.oten import read_tensor

t = read_tensor(sys.argv[1])
fm = FeatureMap(t)
exact = all(
    np.array_equal(bilinear_sample(fm, float(u), float(v)), fm.data[v, u])
    for v in range(fm.height) for u in range(fm.width)
)
mid = bilinear_sample(fm, 0.5, 0.5)
corner_mean = (fm.data[0, 0] + fm.data[0, 1] + fm.data[1, 0] + fm.data[1, 1]) / 4
print(json.dumps({
    "shape": list(t.shape),
    "dtype": str(t.dtype),
    "integer_samples_exact": bool(exact),
    "midpoint_blends": bool(np.allclose(mid, corner_mean)),
}))
`, otenPath)
    expect(report.shape).toEqual([4, 6, 12])
    expect(report.dtype).toBe('float32')
    expect(report.integer_samples_exact).toBe(true)
    expect(report.midpoint_blends).toBe(true)
  })

  it('stores the same rows this side computed', () => {
    const t = readTensor(otenPath)
    const row = (t.data as Float32Array).subarray(0, 12)
    const expected = pixelFeature(11, 48, 85, opts) // first pixel of the ramp
    expect(Array.from(row)).toEqual(Array.from(expected))
  })
})

describe('tensor container symmetry', () => {
  it('NaN payload bits survive into numpy', () => {
    const bits = new Uint32Array([0x7fc00001, 0xffc00000, 0x7f800001, 0x3f800000])
    const file = path.join(tmp, 'nan.oten')
    writeTensor(file, { data: new Float32Array(bits.buffer), shape: [2, 2] })
    const report = py(`
import json, sys
import numpy as np
from openocc.oten import read_tensor
t = read_tensor(sys.argv[1])
print(json.dumps({"bits": [int(b) for b in t.view(np.uint32).ravel()]}))
`, file)
    expect(report.bits).toEqual([0x7fc00001, 0xffc00000, 0x7f800001, 0x3f800000])
  })

  it('reads tensors the downstream side wrote', () => {
    const file = path.join(tmp, 'from_py.oten')
    py(`
import json, sys
import numpy as np
from openocc.oten import write_tensor
arr = np.arange(24, dtype=np.uint16).reshape(2, 3, 4)
write_tensor(sys.argv[1], arr)
print(json.dumps({"ok": True}))
`, file)
    const t = readTensor(file)
    expect(t.shape).toEqual([2, 3, 4])
    expect(t.data).toBeInstanceOf(Uint16Array)
    expect(Array.from(t.data)).toEqual(Array.from({ length: 24 }, (_, i) => i))
  })
})
