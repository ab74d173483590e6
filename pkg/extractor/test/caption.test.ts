import { describe, expect, it } from "vitest";

import { HashedBagEncoder, LocalCaptioner } from "../src/caption.js";
import { DecodedImage } from "../src/decode.js";

function solid(r: number, g: number, b: number, w = 4, h = 4): DecodedImage {
  const rgba = new Uint8Array(w * h * 4);
  for (let i = 0; i < w * h; i++) {
    rgba.set([r, g, b, 255], 4 * i);
  }
  return { width: w, height: h, rgba };
}

describe("LocalCaptioner", () => {
  const cap = new LocalCaptioner();

  it("describes brightness, tint and texture", () => {
    expect(cap.caption(solid(10, 10, 10))).toBe("a dark neutral flat image");
    expect(cap.caption(solid(30, 200, 30))).toBe("a bright greenish flat image");
    expect(cap.caption(solid(40, 120, 40))).toBe("a dim greenish flat image");
    expect(cap.caption(solid(250, 250, 250))).toBe("a glaring neutral flat image");
  });

  it("calls a checkerboard busy", () => {
    const img = solid(0, 0, 0, 8, 8);
    for (let i = 0; i < 64; i++) {
      const y = Math.floor(i / 8);
      if ((y + (i % 8)) % 2 === 0) img.rgba.set([255, 255, 255, 255], 4 * i);
    }
    expect(cap.caption(img)).toContain("busy");
  });
});

describe("HashedBagEncoder", () => {
  const enc = new HashedBagEncoder();

  it("is deterministic and sized", () => {
    const v = enc.encode("a dark neutral flat image");
    expect(v).toHaveLength(16);
    expect(enc.encode("a dark neutral flat image")).toEqual(v);
  });

  it("ignores token order and case", () => {
    expect(enc.encode("flat dark image")).toEqual(enc.encode("image DARK flat"));
  });

  it("separates different captions", () => {
    expect(enc.encode("a dark image")).not.toEqual(enc.encode("a bright image"));
  });

  it("returns zeros for empty text", () => {
    expect(enc.encode("  ")).toEqual(new Array(16).fill(0));
  });
});
