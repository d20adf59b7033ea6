import { ContractError, FormatError } from "./errors.js";

export const HSC_MAGIC = new Uint8Array([0x48, 0x53, 0x43, 0x31]); // "HSC1"
export const HSC_VERSION = 1;
export const HEADER_BYTES = 21;
const FLAG_LABELS = 0x01;

const HOST_IS_LITTLE = new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;

/**
 * One scene. Radiance is row-major with all bands of a pixel contiguous;
 * labels are row-major with 0 meaning unlabeled and classes 1..nY.
 */
export interface HscScene {
  height: number;
  width: number;
  bands: number;
  nY: number;
  radiance: Float32Array;
  labels: Uint16Array | null;
}

export interface DecodedHsc {
  height: number;
  width: number;
  bands: number;
  nY: number;
  radiance: Float32Array;
  /** All zeros when the container carries no label section. */
  labels: Uint16Array;
  labelsPresent: boolean;
}

function checkExtent(value: number, what: string, max: number): void {
  if (!Number.isInteger(value) || value < 1 || value > max) {
    throw new ContractError(`${what} must be an integer in 1..${max}, got ${value}`);
  }
}

/**
 * Serializes a scene to the HSC byte layout: a 21-byte little-endian
 * header (magic "HSC1", u16 version, u32 height/width/bands, u16 n_y,
 * u8 flags), f32 radiance, then u16 labels when flag bit 0 is set.
 */
export function encodeHsc(scene: HscScene): Uint8Array {
  const { height, width, bands, nY, radiance, labels } = scene;
  checkExtent(height, "height", 0xffffffff);
  checkExtent(width, "width", 0xffffffff);
  checkExtent(bands, "bands", 0xffffffff);
  checkExtent(nY, "n_y", 0xffff);
  const pixels = height * width;
  if (radiance.length !== pixels * bands) {
    throw new ContractError(`radiance holds ${radiance.length} values, expected ${pixels * bands}`);
  }
  for (let i = 0; i < radiance.length; i++) {
    if (!Number.isFinite(radiance[i])) {
      const pixel = Math.floor(i / bands);
      const r = Math.floor(pixel / width);
      const c = pixel % width;
      throw new ContractError(`non-finite radiance at pixel (${r}, ${c}) band ${i % bands}`);
    }
  }
  if (labels !== null) {
    if (labels.length !== pixels) {
      throw new ContractError(`labels hold ${labels.length} values, expected ${pixels}`);
    }
    for (let i = 0; i < labels.length; i++) {
      if (labels[i] > nY) {
        throw new ContractError(`label ${labels[i]} at pixel (${Math.floor(i / width)}, ${i % width}) exceeds n_y=${nY}`);
      }
    }
  }

  const size = HEADER_BYTES + radiance.length * 4 + (labels ? labels.length * 2 : 0);
  const out = new Uint8Array(size);
  const view = new DataView(out.buffer);
  out.set(HSC_MAGIC, 0);
  view.setUint16(4, HSC_VERSION, true);
  view.setUint32(6, height, true);
  view.setUint32(10, width, true);
  view.setUint32(14, bands, true);
  view.setUint16(18, nY, true);
  out[20] = labels ? FLAG_LABELS : 0;

  if (HOST_IS_LITTLE) {
    out.set(new Uint8Array(radiance.buffer, radiance.byteOffset, radiance.byteLength), HEADER_BYTES);
  } else {
    for (let i = 0; i < radiance.length; i++) {
      view.setFloat32(HEADER_BYTES + i * 4, radiance[i], true);
    }
  }
  if (labels) {
    const base = HEADER_BYTES + radiance.length * 4;
    if (HOST_IS_LITTLE) {
      out.set(new Uint8Array(labels.buffer, labels.byteOffset, labels.byteLength), base);
    } else {
      for (let i = 0; i < labels.length; i++) {
        view.setUint16(base + i * 2, labels[i], true);
      }
    }
  }
  return out;
}

/** Parses HSC bytes, rejecting truncation, trailing bytes, and labels > n_y. */
export function decodeHsc(bytes: Uint8Array): DecodedHsc {
  if (bytes.length < HEADER_BYTES) {
    throw new FormatError(`truncated header: ${bytes.length} bytes, need ${HEADER_BYTES}`);
  }
  for (let i = 0; i < 4; i++) {
    if (bytes[i] !== HSC_MAGIC[i]) {
      throw new FormatError("bad magic: not an HSC container");
    }
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const version = view.getUint16(4, true);
  if (version !== HSC_VERSION) {
    throw new FormatError(`unsupported HSC version ${version}`);
  }
  const height = view.getUint32(6, true);
  const width = view.getUint32(10, true);
  const bands = view.getUint32(14, true);
  const nY = view.getUint16(18, true);
  const flags = bytes[20];
  if (height < 1 || width < 1 || bands < 1 || nY < 1) {
    throw new FormatError(`bad header extents ${height}x${width}x${bands}, n_y=${nY}`);
  }
  const labelsPresent = (flags & FLAG_LABELS) !== 0;
  const pixels = height * width;
  const expected = HEADER_BYTES + pixels * bands * 4 + (labelsPresent ? pixels * 2 : 0);
  if (bytes.length < expected) {
    throw new FormatError(`container ends at byte ${bytes.length}, layout needs ${expected}`);
  }
  if (bytes.length > expected) {
    throw new FormatError(`${bytes.length - expected} trailing bytes after the declared sections`);
  }

  // Copy the payloads to fresh zero-offset buffers: byte 21 is not
  // 4-aligned, and Buffer.slice aliases instead of copying, so views over
  // the incoming bytes are wrong twice over.
  const radBytes = new Uint8Array(pixels * bands * 4);
  radBytes.set(bytes.subarray(HEADER_BYTES, HEADER_BYTES + radBytes.length));
  let radiance: Float32Array;
  if (HOST_IS_LITTLE) {
    radiance = new Float32Array(radBytes.buffer, 0, pixels * bands);
  } else {
    radiance = new Float32Array(pixels * bands);
    const rv = new DataView(radBytes.buffer);
    for (let i = 0; i < radiance.length; i++) radiance[i] = rv.getFloat32(i * 4, true);
  }

  const labels = new Uint16Array(pixels);
  if (labelsPresent) {
    const labBytes = new Uint8Array(pixels * 2);
    labBytes.set(bytes.subarray(expected - pixels * 2, expected));
    const lv = new DataView(labBytes.buffer);
    for (let i = 0; i < pixels; i++) {
      const v = lv.getUint16(i * 2, true);
      if (v > nY) {
        throw new FormatError(`label ${v} at pixel (${Math.floor(i / width)}, ${i % width}) exceeds n_y=${nY}`);
      }
      labels[i] = v;
    }
  }
  return { height, width, bands, nY, radiance, labels, labelsPresent };
}
