import { mkdirSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { decodePng, loadImage } from "../src/decode.js";
import { discoverImages, extractDataset } from "../src/extract.js";

const FIXTURES = join(fileURLToPath(new URL(".", import.meta.url)), "fixtures", "dataset");

describe("decodePng", () => {
  it("reads the checkerboard fixture", () => {
    const img = loadImage(join(FIXTURES, "synthA", "real", "grid.png"));
    expect(img.width).toBe(8);
    expect(img.height).toBe(8);
    expect([...img.rgba.slice(0, 4)]).toEqual([255, 255, 255, 255]); // top-left white
    expect([...img.rgba.slice(8, 12)]).toEqual([0, 0, 0, 255]); // third pixel black
  });

  it("reads the seeded-noise fixture byte for byte", () => {
    const img = decodePng(readFileSync(join(FIXTURES, "synthB", "fake", "noise.png")));
    expect([...img.rgba.slice(0, 3)]).toEqual([129, 35, 185]);
  });
});

describe("discoverImages", () => {
  it("walks domains and label folders in sorted order", () => {
    const found = discoverImages(FIXTURES);
    expect(found.map((f) => f.id)).toEqual([
      "synthA/blob",
      "synthA/grid",
      "synthB/noise",
      "synthB/bands",
    ]);
    expect(found.map((f) => f.label)).toEqual([1, 0, 1, 0]); // fake sorts before real
    expect(found.map((f) => f.domain)).toEqual(["synthA", "synthA", "synthB", "synthB"]);
  });

  it("rejects unknown label folders unless remapped", () => {
    const root = mkdtempSync(join(tmpdir(), "extract-"));
    writeFileSync(join(root, "placeholder"), ""); // a bare root has nothing to walk
    expect(() => discoverImages(root)).toThrow(/no \.png files/);
    mkdirSync(join(root, "domainX", "maybe"), { recursive: true });
    expect(() => discoverImages(root)).toThrow(/unknown label folder 'domainX\/maybe'/);
    writeFileSync(
      join(root, "domainX", "maybe", "img.png"),
      readFileSync(join(FIXTURES, "synthA", "real", "grid.png"))
    );
    const found = discoverImages(root, { maybe: 1 });
    expect(found).toHaveLength(1);
    expect(found[0].label).toBe(1);
  });

  it("rejects a missing root", () => {
    expect(() => discoverImages("/no/such/dir")).toThrow(/not a directory/);
  });
});

describe("extractDataset", () => {
  it("produces one record per image with the default encoders", () => {
    const { records, skipped } = extractDataset(FIXTURES);
    expect(records).toHaveLength(4);
    expect(skipped).toHaveLength(0);
    for (const rec of records) {
      // image and caption embeddings share one space so the trainer can
      // ingest the file directly
      expect(rec.x).toHaveLength(16);
      expect(rec.t_sem).toHaveLength(16);
      expect([0, 1]).toContain(rec.label);
      expect(rec.x.every(Number.isFinite)).toBe(true);
      expect(rec.t_sem.every(Number.isFinite)).toBe(true);
    }
    expect(new Set(records.map((r) => r.id)).size).toBe(4);
  });

  it("skips and logs undecodable files instead of aborting", () => {
    const root = mkdtempSync(join(tmpdir(), "extract-"));
    mkdirSync(join(root, "d", "real"), { recursive: true });
    writeFileSync(
      join(root, "d", "real", "good.png"),
      readFileSync(join(FIXTURES, "synthA", "real", "grid.png"))
    );
    writeFileSync(join(root, "d", "real", "corrupt.png"), "not a png at all");
    const { records, skipped } = extractDataset(root);
    expect(records.map((r) => r.id)).toEqual(["d/good"]);
    expect(skipped).toHaveLength(1);
    expect(skipped[0].path).toContain("corrupt.png");
    expect(skipped[0].reason).toBeTruthy();
  });

  it("aborts when a plugged encoder emits inconsistent dims", () => {
    let calls = 0;
    expect(() =>
      extractDataset(FIXTURES, {
        imageEncoder: { dim: 2, encode: () => (calls++ === 0 ? [1, 2] : [1, 2, 3]) },
      })
    ).toThrow(/feature dim mismatch/);
  });

  it("accepts plugged-in encoders and a domain override", () => {
    const { records } = extractDataset(FIXTURES, {
      imageEncoder: { dim: 3, encode: () => [1, 2, 3] },
      captioner: { caption: () => "stub caption" },
      textEncoder: { dim: 2, encode: (text) => [text.length, 0] },
      domain: "webcam",
    });
    for (const rec of records) {
      expect(rec.x).toEqual([1, 2, 3]);
      expect(rec.t_sem).toEqual(["stub caption".length, 0]);
      expect(rec.domain).toBe("webcam");
    }
  });
});
