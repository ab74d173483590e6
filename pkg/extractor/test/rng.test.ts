import { describe, expect, it } from "vitest";

import { Rng } from "../src/rng.js";

// values pinned from the trainer's generator; both sides must produce these bits
const U42 = [0.7415648787718233, 0.1599103928769201, 0.27860113025513866, 0.34419071652363753];
const U42_NEXT = [0.03803016854024621, 0.8682280765465323];
const DERIVED_SEED = 9054730657319585093n;
const U_DERIVED = [0.10343820656187652, 0.23310290271555867, 0.6237727200051277];
const DERIVED_CHILD_SEED = 5650996789291712857n;
const U_BIG_SEED = [0.30375929285570313, 0.7010952420797779];

describe("Rng", () => {
  it("matches the trainer's stream exactly", () => {
    const r = new Rng(42);
    expect(r.uniform(4)).toEqual(U42);
    expect(r.uniform(2)).toEqual(U42_NEXT); // counter continues across calls
  });

  it("is invariant to how draws are batched", () => {
    const a = new Rng(7);
    const b = new Rng(7);
    const whole = a.uniform(30);
    const pieces = [...b.uniform(7), ...b.uniform(11), ...b.uniform(12)];
    expect(pieces).toEqual(whole);
  });

  it("derives the same child seeds as the trainer", () => {
    const child = new Rng(42).derive("proj");
    expect(child.seed).toBe(DERIVED_SEED);
    expect(child.uniform(3)).toEqual(U_DERIVED);
    expect(child.derive(7).seed).toBe(DERIVED_CHILD_SEED);
  });

  it("handles seeds above 2^53 without precision loss", () => {
    const r = new Rng(0xdeadbeef12345678n);
    expect(r.uniform(2)).toEqual(U_BIG_SEED);
  });

  it("keeps derived streams independent of parent draws", () => {
    const a = new Rng(5);
    a.uniform(10);
    const b = new Rng(5);
    expect(a.derive("k").uniform(4)).toEqual(b.derive("k").uniform(4));
  });

  it("stays in [0, 1)", () => {
    const draws = new Rng(123).uniform(5000);
    for (const u of draws) {
      expect(u).toBeGreaterThanOrEqual(0);
      expect(u).toBeLessThan(1);
    }
    const mean = draws.reduce((s, u) => s + u, 0) / draws.length;
    expect(Math.abs(mean - 0.5)).toBeLessThan(0.02);
  });
});
