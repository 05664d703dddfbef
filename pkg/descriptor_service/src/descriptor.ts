/**
 * Handcrafted dense descriptor: multi-scale intensity, gradient, and local
 * contrast channels. Deterministic by construction (pure arithmetic, fixed
 * evaluation order), so identical inputs always produce identical maps.
 */

export interface GrayImage {
  width: number;
  height: number;
  /** luma in [0, 1], row-major */
  data: Float32Array;
}

export const SCALES = [1, 2, 4, 8];
export const DIM = SCALES.length * 4;
export const MODEL_NAME = "msbox16-v1";
export const STRIDES = [1, 2, 4, 8, 14];
export const MAX_SIDE = 1024;

/** Separable box blur with reflected borders, radius r. */
function boxBlur(
  src: Float32Array,
  height: number,
  width: number,
  r: number,
): Float32Array {
  const tmp = new Float32Array(src.length);
  const out = new Float32Array(src.length);
  const inv = 1.0 / (2 * r + 1);
  const reflect = (i: number, n: number) => {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  for (let y = 0; y < height; y++) {
    const row = y * width;
    for (let x = 0; x < width; x++) {
      let acc = 0;
      for (let k = -r; k <= r; k++) acc += src[row + reflect(x + k, width)];
      tmp[row + x] = acc * inv;
    }
  }
  for (let x = 0; x < width; x++) {
    for (let y = 0; y < height; y++) {
      let acc = 0;
      for (let k = -r; k <= r; k++) acc += tmp[reflect(y + k, height) * width + x];
      out[y * width + x] = acc * inv;
    }
  }
  return out;
}

function centralGradients(
  src: Float32Array,
  height: number,
  width: number,
): [Float32Array, Float32Array] {
  const gx = new Float32Array(src.length);
  const gy = new Float32Array(src.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const xm = Math.max(x - 1, 0);
      const xp = Math.min(x + 1, width - 1);
      const ym = Math.max(y - 1, 0);
      const yp = Math.min(y + 1, height - 1);
      gx[y * width + x] = 0.5 * (src[y * width + xp] - src[y * width + xm]);
      gy[y * width + x] = 0.5 * (src[yp * width + x] - src[ym * width + x]);
    }
  }
  return [gx, gy];
}

/**
 * Dense (height * width * DIM) feature map, channel-last. Per scale s:
 * box-blurred intensity, blurred gradient x/y, and local contrast
 * |I - blur| re-blurred at the same radius.
 */
export function denseFeatures(img: GrayImage): Float32Array {
  const { width, height, data } = img;
  const out = new Float32Array(height * width * DIM);
  SCALES.forEach((s, si) => {
    const blurred = boxBlur(data, height, width, s);
    const [gx, gy] = centralGradients(blurred, height, width);
    const resid = new Float32Array(data.length);
    for (let i = 0; i < data.length; i++) resid[i] = Math.abs(data[i] - blurred[i]);
    const contrast = boxBlur(resid, height, width, s);
    const base = si * 4;
    for (let i = 0; i < data.length; i++) {
      const o = i * DIM + base;
      out[o] = blurred[i];
      out[o + 1] = gx[i];
      out[o + 2] = gy[i];
      out[o + 3] = contrast[i];
    }
  });
  return out;
}

/** Average-pool channel-last features over stride x stride patches. */
export function patchPool(
  feats: Float32Array,
  height: number,
  width: number,
  stride: number,
): { height: number; width: number; data: Float32Array } {
  const ph = Math.ceil(height / stride);
  const pw = Math.ceil(width / stride);
  const out = new Float32Array(ph * pw * DIM);
  for (let py = 0; py < ph; py++) {
    for (let px = 0; px < pw; px++) {
      const y1 = Math.min((py + 1) * stride, height);
      const x1 = Math.min((px + 1) * stride, width);
      const count = (y1 - py * stride) * (x1 - px * stride);
      for (let d = 0; d < DIM; d++) {
        let acc = 0;
        for (let y = py * stride; y < y1; y++) {
          for (let x = px * stride; x < x1; x++) {
            acc += feats[(y * width + x) * DIM + d];
          }
        }
        out[(py * pw + px) * DIM + d] = acc / count;
      }
    }
  }
  return { height: ph, width: pw, data: out };
}

/** Bilinear upsample of a channel-last coarse grid to (height, width).
 * Coarse cell centers sit at (i + 0.5) * stride - 0.5 in fine coordinates. */
export function upsample(
  coarse: { height: number; width: number; data: Float32Array },
  height: number,
  width: number,
  stride: number,
): Float32Array {
  const { height: ch, width: cw, data } = coarse;
  const out = new Float32Array(height * width * DIM);
  for (let y = 0; y < height; y++) {
    const fy = Math.min(Math.max((y + 0.5) / stride - 0.5, 0), ch - 1);
    const y0 = Math.floor(fy);
    const y1 = Math.min(y0 + 1, ch - 1);
    const wy = fy - y0;
    for (let x = 0; x < width; x++) {
      const fx = Math.min(Math.max((x + 0.5) / stride - 0.5, 0), cw - 1);
      const x0 = Math.floor(fx);
      const x1 = Math.min(x0 + 1, cw - 1);
      const wx = fx - x0;
      const o = (y * width + x) * DIM;
      const a = (y0 * cw + x0) * DIM;
      const b = (y0 * cw + x1) * DIM;
      const c = (y1 * cw + x0) * DIM;
      const e = (y1 * cw + x1) * DIM;
      for (let d = 0; d < DIM; d++) {
        const top = data[a + d] * (1 - wx) + data[b + d] * wx;
        const bot = data[c + d] * (1 - wx) + data[e + d] * wx;
        out[o + d] = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

/** Full pipeline: dense features, patch-grid pooling, upsample back to the
 * input resolution. stride 1 keeps the dense map as-is. */
export function describe(img: GrayImage, stride: number): Float32Array {
  const dense = denseFeatures(img);
  if (stride === 1) return dense;
  const coarse = patchPool(dense, img.height, img.width, stride);
  return upsample(coarse, img.height, img.width, stride);
}
