/**
 * Dataset walk and extraction.  Expects <root>/<domain>/<real|fake>/*.png;
 * the label comes from the folder name, the domain from its parent.  Files
 * are visited in sorted order so output is independent of filesystem
 * enumeration order.  Undecodable images are skipped and logged, never
 * silently dropped; inconsistent feature dims across records abort.
 */

import { readdirSync, statSync } from "node:fs";
import { join } from "node:path";

import { Captioner, HashedBagEncoder, LocalCaptioner, TextEncoder } from "./caption.js";
import { loadImage } from "./decode.js";
import { ImageEncoder, LocalImageEncoder } from "./features.js";
import { FeatureRecord } from "./records.js";

export const DEFAULT_LABEL_DIRS: Record<string, 0 | 1> = { real: 0, fake: 1 };

export interface DiscoveredImage {
  domain: string;
  label: 0 | 1;
  path: string;
  id: string;
}

export function discoverImages(
  root: string,
  labelDirs: Record<string, 0 | 1> = DEFAULT_LABEL_DIRS
): DiscoveredImage[] {
  if (!statSync(root, { throwIfNoEntry: false })?.isDirectory()) {
    throw new Error(`dataset root is not a directory: ${root}`);
  }
  const found: DiscoveredImage[] = [];
  const domains = readdirSync(root, { withFileTypes: true })
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort();
  for (const domain of domains) {
    const subdirs = readdirSync(join(root, domain), { withFileTypes: true })
      .filter((e) => e.isDirectory())
      .map((e) => e.name)
      .sort();
    for (const labelDir of subdirs) {
      const label = labelDirs[labelDir];
      if (label === undefined) {
        throw new Error(
          `unknown label folder '${domain}/${labelDir}': expected one of ${Object.keys(labelDirs).join(", ")}`
        );
      }
      const files = readdirSync(join(root, domain, labelDir))
        .filter((name) => name.toLowerCase().endsWith(".png"))
        .sort();
      for (const name of files) {
        found.push({
          domain,
          label,
          path: join(root, domain, labelDir, name),
          id: `${domain}/${name.replace(/\.png$/i, "")}`,
        });
      }
    }
  }
  if (found.length === 0) {
    throw new Error(`no .png files under ${root}`);
  }
  return found;
}

export interface ExtractOptions {
  imageEncoder?: ImageEncoder;
  captioner?: Captioner;
  textEncoder?: TextEncoder;
  /** subfolder-name to label map; default real -> 0, fake -> 1 */
  labelDirs?: Record<string, 0 | 1>;
  /** stamp every record with this domain instead of the folder name */
  domain?: string;
}

export interface SkipEntry {
  path: string;
  reason: string;
}

export interface ExtractResult {
  records: FeatureRecord[];
  skipped: SkipEntry[];
}

export function extractDataset(root: string, opts: ExtractOptions = {}): ExtractResult {
  const imageEncoder = opts.imageEncoder ?? new LocalImageEncoder();
  const captioner = opts.captioner ?? new LocalCaptioner();
  const textEncoder = opts.textEncoder ?? new HashedBagEncoder();
  const records: FeatureRecord[] = [];
  const skipped: SkipEntry[] = [];
  for (const img of discoverImages(root, opts.labelDirs)) {
    let decoded;
    try {
      decoded = loadImage(img.path);
    } catch (err) {
      skipped.push({ path: img.path, reason: String(err instanceof Error ? err.message : err) });
      continue;
    }
    const rec: FeatureRecord = {
      id: img.id,
      label: img.label,
      domain: opts.domain ?? img.domain,
      x: imageEncoder.encode(decoded),
      t_sem: textEncoder.encode(captioner.caption(decoded)),
    };
    if (records.length > 0) {
      const first = records[0];
      if (rec.x.length !== first.x.length || rec.t_sem.length !== first.t_sem.length) {
        throw new Error(
          `feature dim mismatch at ${img.path}: got x[${rec.x.length}]/t_sem[${rec.t_sem.length}], ` +
            `expected x[${first.x.length}]/t_sem[${first.t_sem.length}]`
        );
      }
    }
    records.push(rec);
  }
  return { records, skipped };
}
