/** Deterministic seeded randomness (splitmix64 over BigInt). */

const MASK64 = (1n << 64n) - 1n;

export class SplitMix64 {
  private state: bigint;

  constructor(seed: bigint | number) {
    this.state = BigInt(seed) & MASK64;
  }

  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    return (z ^ (z >> 31n)) & MASK64;
  }

  /** Uniform double in [0, 1). */
  nextFloat(): number {
    return Number(this.nextU64() >> 11n) / 9007199254740992;
  }
}

export function fnv1a64(text: string): bigint {
  const bytes = new TextEncoder().encode(text);
  let h = 0xcbf29ce484222325n;
  for (const b of bytes) {
    h ^= BigInt(b);
    h = (h * 0x100000001b3n) & MASK64;
  }
  return h;
}

/**
 * Random question subset: each index enters independently with probability
 * k / n (expected size k); at least one survives (the seed picks a fallback).
 */
export function questionSubset(seed: number, n: number, k: number): number[] {
  if (k < 1 || k > n) {
    throw new Error(`subset size ${k} out of range for ${n} questions`);
  }
  const rng = new SplitMix64(BigInt(seed) ^ 0x51a7e5d3n);
  const out: number[] = [];
  for (let i = 0; i < n; i++) {
    if (rng.nextFloat() < k / n) {
      out.push(i);
    }
  }
  if (out.length === 0) {
    out.push(Number(rng.nextU64() % BigInt(n)));
  }
  return out;
}
