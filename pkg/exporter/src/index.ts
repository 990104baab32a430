export { parseTensor, readTensor, tensorBytes, writeTensor } from './oten.js'
export type { Tensor, TensorData } from './oten.js'
export { Rng, hashSeed } from './rng.js'
export {
  DEFAULT_CHANNELS,
  encodePrompt,
  exportTextEmbeddings,
  readPromptFile,
} from './encoder.js'
export type { EncoderOptions, PromptFile, PromptSpec } from './encoder.js'
export { readImage, readPpm, resizeRgb } from './image.js'
export type { RgbImage } from './image.js'
export {
  DEFAULT_HEIGHT,
  DEFAULT_WIDTH,
  encodeImage,
  exportPixelFeatures,
  pixelFeature,
} from './features.js'
export type { FeatureOptions } from './features.js'
export { main } from './cli.js'
