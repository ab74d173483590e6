/**
 * Deterministic image features.  All arithmetic is plain float64 adds,
 * multiplies and sqrt, so the same pixels give the same bits on every
 * platform; that property is what lets the repository commit the extracted
 * records and test against them byte for byte.
 */

import { DecodedImage } from "./decode.js";
import { Rng } from "./rng.js";

export interface ImageStats {
  meanR: number;
  meanG: number;
  meanB: number;
  stdR: number;
  stdG: number;
  stdB: number;
  meanLuma: number;
  stdLuma: number;
  /** fraction of horizontal neighbor pairs whose luma differs by > 0.125 */
  edgeRate: number;
  /** 4x4 grid of mean luma, row-major */
  blocks: number[];
}

export const STATS_DIM = 25; // 8 moments + edge rate + 16 block means

function luma(r: number, g: number, b: number): number {
  return (0.299 * r + 0.587 * g + 0.114 * b) / 255;
}

export function statsOf(img: DecodedImage): ImageStats {
  const { width, height, rgba } = img;
  const n = width * height;
  const lum = new Float64Array(n);
  let sumR = 0, sumG = 0, sumB = 0, sumSqR = 0, sumSqG = 0, sumSqB = 0;
  for (let i = 0; i < n; i++) {
    const r = rgba[4 * i] / 255;
    const g = rgba[4 * i + 1] / 255;
    const b = rgba[4 * i + 2] / 255;
    sumR += r; sumG += g; sumB += b;
    sumSqR += r * r; sumSqG += g * g; sumSqB += b * b;
    lum[i] = luma(rgba[4 * i], rgba[4 * i + 1], rgba[4 * i + 2]);
  }
  const mean = (s: number) => s / n;
  const std = (s: number, sq: number) => Math.sqrt(Math.max(sq / n - (s / n) ** 2, 0));

  let sumL = 0, sumSqL = 0;
  for (let i = 0; i < n; i++) {
    sumL += lum[i];
    sumSqL += lum[i] * lum[i];
  }

  let edges = 0, pairs = 0;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x + 1 < width; x++) {
      const d = lum[y * width + x] - lum[y * width + x + 1];
      if (d > 0.125 || d < -0.125) edges++;
      pairs++;
    }
  }

  const blockSum = new Float64Array(16);
  const blockCount = new Float64Array(16);
  for (let y = 0; y < height; y++) {
    const by = Math.min(Math.floor((y * 4) / height), 3);
    for (let x = 0; x < width; x++) {
      const bx = Math.min(Math.floor((x * 4) / width), 3);
      blockSum[by * 4 + bx] += lum[y * width + x];
      blockCount[by * 4 + bx] += 1;
    }
  }
  const blocks: number[] = [];
  for (let i = 0; i < 16; i++) {
    blocks.push(blockCount[i] > 0 ? blockSum[i] / blockCount[i] : 0);
  }

  return {
    meanR: mean(sumR), meanG: mean(sumG), meanB: mean(sumB),
    stdR: std(sumR, sumSqR), stdG: std(sumG, sumSqG), stdB: std(sumB, sumSqB),
    meanLuma: mean(sumL), stdLuma: std(sumL, sumSqL),
    edgeRate: pairs > 0 ? edges / pairs : 0,
    blocks,
  };
}

export function statsVector(s: ImageStats): number[] {
  return [
    s.meanR, s.meanG, s.meanB, s.stdR, s.stdG, s.stdB,
    s.meanLuma, s.stdLuma, s.edgeRate, ...s.blocks,
  ];
}

/** Anything that turns pixels into the trainer's image-feature vector. */
export interface ImageEncoder {
  readonly dim: number;
  encode(img: DecodedImage): number[];
}

/**
 * Fallback encoder: seeded random projection of the stats vector.  Each row
 * of the projection comes from its own derived stream, so the matrix does
 * not depend on call order or batch size.  The default dim matches the text
 * encoder's: image and caption embeddings share one space, which is what
 * lets the trainer ingest these records directly.
 */
export class LocalImageEncoder implements ImageEncoder {
  readonly dim: number;
  private readonly rows: number[][];

  constructor(dim = 16, seed = 2024) {
    this.dim = dim;
    const root = new Rng(seed);
    this.rows = [];
    for (let i = 0; i < dim; i++) {
      this.rows.push(root.derive(`row/${i}`).uniform(STATS_DIM).map((u) => 2 * u - 1));
    }
  }

  encode(img: DecodedImage): number[] {
    const v = statsVector(statsOf(img));
    return this.rows.map((row) => {
      let acc = 0;
      for (let k = 0; k < STATS_DIM; k++) acc += row[k] * v[k];
      return acc;
    });
  }
}
