export { Rng } from "./rng.js";
export { DecodedImage, decodePng, loadImage } from "./decode.js";
export {
  ImageEncoder,
  ImageStats,
  LocalImageEncoder,
  STATS_DIM,
  statsOf,
  statsVector,
} from "./features.js";
export { Captioner, HashedBagEncoder, LocalCaptioner, TextEncoder } from "./caption.js";
export { FeatureRecord, recordLine, recordsToJsonl, writeRecordsJsonl } from "./records.js";
export {
  DEFAULT_LABEL_DIRS,
  DiscoveredImage,
  ExtractOptions,
  ExtractResult,
  SkipEntry,
  discoverImages,
  extractDataset,
} from "./extract.js";
