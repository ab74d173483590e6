/**
 * Counter-based random stream, bit-compatible with the trainer's generator:
 * SplitMix64 finalizer over (seed + counter * golden) mod 2^64, doubles from
 * the high 53 bits, child streams via sha256(`${seed}/${label}`).  BigInt
 * keeps the 64-bit arithmetic exact; test/rng.test.ts pins values produced
 * by the Python side so the two implementations cannot drift apart.
 */

import { createHash } from "node:crypto";

const MASK64 = (1n << 64n) - 1n;
const GOLDEN = 0x9e3779b97f4a7c15n;
const INV_2_53 = 2 ** -53;

function mix64(x: bigint): bigint {
  x &= MASK64;
  x ^= x >> 30n;
  x = (x * 0xbf58476d1ce4e5b9n) & MASK64;
  x ^= x >> 27n;
  x = (x * 0x94d049bb133111ebn) & MASK64;
  x ^= x >> 31n;
  return x;
}

export class Rng {
  readonly seed: bigint;
  private counter: bigint;

  constructor(seed: bigint | number) {
    this.seed = BigInt(seed) & MASK64;
    this.counter = 0n;
  }

  private raw(n: number): bigint[] {
    const out: bigint[] = [];
    for (let i = 1; i <= n; i++) {
      out.push(mix64((this.seed + (this.counter + BigInt(i)) * GOLDEN) & MASK64));
    }
    this.counter += BigInt(n);
    return out;
  }

  /** n doubles in [0, 1) from the high 53 bits of the raw stream. */
  uniform(n: number): number[] {
    return this.raw(n).map((w) => Number(w >> 11n) * INV_2_53);
  }

  /** Independent child stream; the label convention matches the trainer. */
  derive(label: string | number): Rng {
    const digest = createHash("sha256").update(`${this.seed}/${label}`).digest();
    return new Rng(digest.readBigUInt64LE(0));
  }
}
