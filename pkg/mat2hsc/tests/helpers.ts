import { deflateSync } from "node:zlib";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

export const MI_INT8 = 1;
export const MI_UINT8 = 2;
export const MI_INT16 = 3;
export const MI_UINT16 = 4;
export const MI_INT32 = 5;
export const MI_UINT32 = 6;
export const MI_SINGLE = 7;
export const MI_DOUBLE = 9;
export const MI_INT64 = 12;
export const MI_MATRIX = 14;
export const MI_COMPRESSED = 15;

export const MX_CHAR = 4;
export const MX_DOUBLE = 6;
export const MX_SINGLE = 7;
export const MX_UINT8 = 9;
export const MX_UINT32 = 13;
export const MX_INT64 = 14;

export function fixturePath(name: string): string {
  return join(dirname(fileURLToPath(import.meta.url)), "fixtures", name);
}

// The committed fixtures encode this scene; see fixtures/generate.py.
export const SCENE_H = 5;
export const SCENE_W = 4;
export const SCENE_B = 3;

export function imageAt(r: number, c: number, b: number): number {
  if (r === 0 && c === 0 && b === 0) return -273.15;
  if (r === 4 && c === 3 && b === 2) return 65535.25;
  return r * 100 + c * 10 + b + 0.1;
}

export function labelAt(r: number, c: number): number {
  return (r + c) % 5;
}

export function concatBytes(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((a, p) => a + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

/** 128-byte level 5 header with the requested byte order. */
export function mat5Header(little = true): Uint8Array {
  const h = new Uint8Array(128).fill(0x20);
  h.set(new TextEncoder().encode("MATLAB 5.0 MAT-file, hand-built test fixture"), 0);
  const view = new DataView(h.buffer);
  view.setUint16(124, 0x0100, little);
  h[126] = little ? 0x49 : 0x4d;
  h[127] = little ? 0x4d : 0x49;
  return h;
}

/** One data element: 8-byte tag plus data padded to the next 8-byte line. */
export function element(type: number, data: Uint8Array, little = true, small = false): Uint8Array {
  if (small) {
    if (data.length > 4) throw new Error("small elements hold at most 4 bytes");
    const out = new Uint8Array(8);
    new DataView(out.buffer).setUint32(0, (data.length << 16) | type, little);
    out.set(data, 4);
    return out;
  }
  const padded = type === MI_COMPRESSED ? data.length : Math.ceil(data.length / 8) * 8;
  const out = new Uint8Array(8 + padded);
  const view = new DataView(out.buffer);
  view.setUint32(0, type, little);
  view.setUint32(4, data.length, little);
  out.set(data, 8);
  return out;
}

export function numericBytes(type: number, values: (number | bigint)[], little = true): Uint8Array {
  const widths: Record<number, number> = {
    [MI_INT8]: 1,
    [MI_UINT8]: 1,
    [MI_INT16]: 2,
    [MI_UINT16]: 2,
    [MI_INT32]: 4,
    [MI_UINT32]: 4,
    [MI_SINGLE]: 4,
    [MI_DOUBLE]: 8,
    [MI_INT64]: 8,
  };
  const width = widths[type];
  const out = new Uint8Array(values.length * width);
  const view = new DataView(out.buffer);
  values.forEach((value, i) => {
    const off = i * width;
    switch (type) {
      case MI_INT8:
        view.setInt8(off, Number(value));
        break;
      case MI_UINT8:
        view.setUint8(off, Number(value));
        break;
      case MI_INT16:
        view.setInt16(off, Number(value), little);
        break;
      case MI_UINT16:
        view.setUint16(off, Number(value), little);
        break;
      case MI_INT32:
        view.setInt32(off, Number(value), little);
        break;
      case MI_UINT32:
        view.setUint32(off, Number(value), little);
        break;
      case MI_SINGLE:
        view.setFloat32(off, Number(value), little);
        break;
      case MI_DOUBLE:
        view.setFloat64(off, Number(value), little);
        break;
      case MI_INT64:
        view.setBigInt64(off, BigInt(value), little);
        break;
      default:
        throw new Error(`no writer for storage type ${type}`);
    }
  });
  return out;
}

export interface BuildVar {
  name: string;
  dims: number[];
  classCode: number;
  storageType: number;
  /** Column-major values, bigints allowed for the 64-bit storage types. */
  values: (number | bigint)[];
  smallName?: boolean;
  complex?: boolean;
}

/** A full miMATRIX element (flags, dims, name, real part, imag when complex). */
export function matrixElement(v: BuildVar, little = true): Uint8Array {
  const flagsData = new Uint8Array(8);
  new DataView(flagsData.buffer).setUint32(0, ((v.complex ? 0x08 : 0) << 8) | v.classCode, little);
  const parts = [
    element(MI_UINT32, flagsData, little),
    element(MI_INT32, numericBytes(MI_INT32, v.dims, little), little),
    element(MI_INT8, new TextEncoder().encode(v.name), little, v.smallName ?? false),
    element(v.storageType, numericBytes(v.storageType, v.values, little), little),
  ];
  if (v.complex) {
    parts.push(element(v.storageType, numericBytes(v.storageType, v.values, little), little));
  }
  return element(MI_MATRIX, concatBytes(parts), little);
}

export function compressedElement(inner: Uint8Array, little = true): Uint8Array {
  return element(MI_COMPRESSED, deflateSync(inner), little);
}

export function mat5File(elements: Uint8Array[], little = true): Uint8Array {
  return concatBytes([mat5Header(little), ...elements]);
}
