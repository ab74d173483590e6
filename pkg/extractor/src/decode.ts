import { readFileSync } from "node:fs";
import { PNG } from "pngjs";

/** Decoded raster, always 8-bit RGBA row-major (pngjs normalizes depth). */
export interface DecodedImage {
  width: number;
  height: number;
  rgba: Uint8Array;
}

export function decodePng(buf: Buffer): DecodedImage {
  const png = PNG.sync.read(buf);
  return { width: png.width, height: png.height, rgba: new Uint8Array(png.data) };
}

export function loadImage(path: string): DecodedImage {
  return decodePng(readFileSync(path));
}
