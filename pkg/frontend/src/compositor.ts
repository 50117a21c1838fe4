/**
 * Client-side recompositing of the explanation image from its two served
 * ingredients, so the mask strength slider works without re-querying the
 * model. With gamma = 1 this reproduces the served explanation exactly
 * (up to 8-bit quantization of the inputs):
 *
 *   p(i,j,k) = (1 - m(i,j)^gamma) + m(i,j)^gamma * y(i,j,k)
 *
 * gamma < 1 exaggerates weakly salient regions, gamma > 1 suppresses them;
 * the masked-out limit is always pure white.
 */

export interface GrayImage {
  width: number;
  height: number;
  /** one 0-255 value per pixel, row-major */
  data: Uint8ClampedArray;
}

export interface RgbImage {
  width: number;
  height: number;
  /** 3 interleaved 0-255 values per pixel, row-major */
  data: Uint8ClampedArray;
}

export function recomposite(
  mask: GrayImage,
  reconstruction: RgbImage,
  gamma = 1,
): RgbImage {
  if (mask.width !== reconstruction.width || mask.height !== reconstruction.height) {
    throw new Error(
      `mask ${mask.width}x${mask.height} does not align with ` +
        `reconstruction ${reconstruction.width}x${reconstruction.height}`,
    );
  }
  if (!(gamma > 0) || !Number.isFinite(gamma)) {
    throw new Error(`gamma must be a positive finite number, got ${gamma}`);
  }
  const n = mask.width * mask.height;
  const out = new Uint8ClampedArray(n * 3);
  for (let p = 0; p < n; p++) {
    const m = Math.pow((mask.data[p] ?? 0) / 255, gamma);
    for (let k = 0; k < 3; k++) {
      const y = (reconstruction.data[p * 3 + k] ?? 0) / 255;
      // Uint8ClampedArray rounds half-to-even; round explicitly instead so
      // quantization matches the server's round-half-up
      out[p * 3 + k] = Math.round(255 * (1 - m + m * y));
    }
  }
  return { width: mask.width, height: mask.height, data: out };
}

/** Extract the red channel of an RGBA canvas ImageData as a grayscale image
 * (saliency assets are grayscale PNGs, so R = G = B). */
export function grayFromImageData(img: {
  width: number;
  height: number;
  data: Uint8ClampedArray;
}): GrayImage {
  const n = img.width * img.height;
  const data = new Uint8ClampedArray(n);
  for (let p = 0; p < n; p++) data[p] = img.data[p * 4] ?? 0;
  return { width: img.width, height: img.height, data };
}

/** Drop the alpha channel of an RGBA canvas ImageData. */
export function rgbFromImageData(img: {
  width: number;
  height: number;
  data: Uint8ClampedArray;
}): RgbImage {
  const n = img.width * img.height;
  const data = new Uint8ClampedArray(n * 3);
  for (let p = 0; p < n; p++) {
    data[p * 3] = img.data[p * 4] ?? 0;
    data[p * 3 + 1] = img.data[p * 4 + 1] ?? 0;
    data[p * 3 + 2] = img.data[p * 4 + 2] ?? 0;
  }
  return { width: img.width, height: img.height, data };
}

/** Re-attach an opaque alpha channel for putImageData. */
export function rgbaBytes(img: RgbImage): Uint8ClampedArray {
  const n = img.width * img.height;
  const out = new Uint8ClampedArray(n * 4);
  for (let p = 0; p < n; p++) {
    out[p * 4] = img.data[p * 3] ?? 0;
    out[p * 4 + 1] = img.data[p * 3 + 1] ?? 0;
    out[p * 4 + 2] = img.data[p * 3 + 2] ?? 0;
    out[p * 4 + 3] = 255;
  }
  return out;
}
