import { describe, expect, it } from "vitest";

import {
  DIM,
  GrayImage,
  denseFeatures,
  describe as describeImage,
  patchPool,
  upsample,
} from "../src/descriptor.js";

/** Deterministic structured test image: ramps, a disc, and a bar. */
function synthImage(width: number, height: number, phase = 0): GrayImage {
  const data = new Float32Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      let v = 0.25 + 0.5 * (x / width) + 0.1 * Math.sin((y + phase) * 0.3);
      const dx = x - width * 0.6;
      const dy = y - height * 0.4;
      if (dx * dx + dy * dy < (width * 0.15) ** 2) v += 0.3;
      if (Math.abs(y - height * 0.7) < 2) v -= 0.2;
      data[y * width + x] = Math.min(Math.max(v, 0), 1);
    }
  }
  return { width, height, data };
}

function cosine(a: Float32Array, b: Float32Array, i: number, j: number): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let d = 0; d < DIM; d++) {
    dot += a[i * DIM + d] * b[j * DIM + d];
    na += a[i * DIM + d] ** 2;
    nb += b[j * DIM + d] ** 2;
  }
  return dot / Math.max(Math.sqrt(na * nb), 1e-12);
}

describe("dense features", () => {
  it("produces H*W*DIM channel-last floats", () => {
    const img = synthImage(20, 14);
    expect(denseFeatures(img).length).toBe(20 * 14 * DIM);
  });

  it("is deterministic byte for byte", () => {
    const img = synthImage(32, 32);
    const a = describeImage(img, 4);
    const b = describeImage(synthImage(32, 32), 4);
    expect(Buffer.from(a.buffer).equals(Buffer.from(b.buffer))).toBe(true);
  });

  it("constant image gives constant intensity and zero gradients", () => {
    const img: GrayImage = {
      width: 16,
      height: 16,
      data: new Float32Array(256).fill(0.5),
    };
    const f = denseFeatures(img);
    for (let i = 0; i < 256; i++) {
      expect(f[i * DIM]).toBeCloseTo(0.5, 6); // scale-1 blurred intensity
      expect(f[i * DIM + 1]).toBe(0); // gradient x
      expect(f[i * DIM + 2]).toBe(0); // gradient y
      expect(f[i * DIM + 3]).toBeCloseTo(0, 6); // contrast
    }
  });
});

describe("pooling and upsampling", () => {
  it("pool grid is ceil(side / stride)", () => {
    const img = synthImage(130, 60);
    const f = denseFeatures(img);
    const p = patchPool(f, 60, 130, 14);
    expect(p.height).toBe(Math.ceil(60 / 14));
    expect(p.width).toBe(Math.ceil(130 / 14));
  });

  it("upsample restores the input resolution and preserves constants", () => {
    const img: GrayImage = {
      width: 24,
      height: 18,
      data: new Float32Array(24 * 18).fill(0.25),
    };
    const out = describeImage(img, 8);
    expect(out.length).toBe(24 * 18 * DIM);
    for (let i = 0; i < 24 * 18; i++) {
      expect(out[i * DIM]).toBeCloseTo(0.25, 5);
    }
  });

  it("stride 1 equals the dense map", () => {
    const img = synthImage(20, 20);
    const a = describeImage(img, 1);
    const b = denseFeatures(img);
    expect(Buffer.from(a.buffer).equals(Buffer.from(b.buffer))).toBe(true);
  });
});

describe("matching behavior", () => {
  it("corresponding pixels beat random pairs on cosine similarity", () => {
    // two noisy observations of the same scene: same pixel should agree
    // more than random pixel pairs do, on average over 100 draws
    const a = describeImage(synthImage(64, 64), 4);
    const noisy = synthImage(64, 64);
    let s = 12345;
    const rand = () => {
      // LCG keeps the fixture deterministic
      s = (s * 1103515245 + 12345) & 0x7fffffff;
      return s / 0x7fffffff;
    };
    for (let i = 0; i < noisy.data.length; i++) {
      noisy.data[i] = Math.min(Math.max(noisy.data[i] + (rand() - 0.5) * 0.04, 0), 1);
    }
    const b = describeImage(noisy, 4);
    let same = 0;
    let other = 0;
    for (let k = 0; k < 100; k++) {
      const i = Math.floor(rand() * 64 * 64);
      const j = Math.floor(rand() * 64 * 64);
      same += cosine(a, b, i, i);
      other += cosine(a, b, i, j);
    }
    expect(same / 100).toBeGreaterThan(other / 100);
  });
});
