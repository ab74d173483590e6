/**
 * Deterministic captioning and text embedding.  The captioner maps pixel
 * statistics to a short description; the text encoder hashes tokens into
 * seeded directions and averages them.  Both are stand-ins with the same
 * interfaces a learned captioner or sentence encoder would implement.
 */

import { statsOf } from "./features.js";
import { DecodedImage } from "./decode.js";
import { Rng } from "./rng.js";

export interface Captioner {
  caption(img: DecodedImage): string;
}

export class LocalCaptioner implements Captioner {
  caption(img: DecodedImage): string {
    const s = statsOf(img);
    const brightness =
      s.meanLuma < 0.25 ? "dark" : s.meanLuma < 0.5 ? "dim" : s.meanLuma < 0.75 ? "bright" : "glaring";
    const channels: Array<[number, string]> = [
      [s.meanR, "reddish"],
      [s.meanG, "greenish"],
      [s.meanB, "bluish"],
    ];
    channels.sort((a, b) => b[0] - a[0]);
    const tint = channels[0][0] - channels[1][0] > 0.03 ? channels[0][1] : "neutral";
    const texture =
      s.edgeRate < 0.05 ? "flat" : s.edgeRate < 0.2 ? "smooth" : s.edgeRate < 0.45 ? "textured" : "busy";
    return `a ${brightness} ${tint} ${texture} image`;
  }
}

export interface TextEncoder {
  readonly dim: number;
  encode(text: string): number[];
}

export class HashedBagEncoder implements TextEncoder {
  readonly dim: number;
  private readonly seed: number;

  constructor(dim = 16, seed = 4096) {
    this.dim = dim;
    this.seed = seed;
  }

  encode(text: string): number[] {
    const tokens = text.toLowerCase().split(/[^a-z0-9]+/).filter(Boolean);
    const out = new Array<number>(this.dim).fill(0);
    if (tokens.length === 0) return out;
    const root = new Rng(this.seed);
    for (const token of tokens) {
      const dir = root.derive(`tok/${token}`).uniform(this.dim);
      for (let i = 0; i < this.dim; i++) out[i] += 2 * dir[i] - 1;
    }
    return out.map((v) => v / tokens.length);
  }
}
