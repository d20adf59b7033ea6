import { inflateSync } from "node:zlib";

import { FormatError } from "./errors.js";
import type { MatVariable } from "./mat.js";

// Storage types used by data element tags.
const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_INT16 = 3;
const MI_UINT16 = 4;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_INT64 = 12;
const MI_UINT64 = 13;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;

const STORAGE_BYTES: Record<number, number> = {
  [MI_INT8]: 1,
  [MI_UINT8]: 1,
  [MI_INT16]: 2,
  [MI_UINT16]: 2,
  [MI_INT32]: 4,
  [MI_UINT32]: 4,
  [MI_SINGLE]: 4,
  [MI_DOUBLE]: 8,
  [MI_INT64]: 8,
  [MI_UINT64]: 8,
};

// Array classes from the matrix flags subelement.
const CLASS_NAMES: Record<number, string> = {
  1: "cell",
  2: "struct",
  3: "object",
  4: "char",
  5: "sparse",
  6: "double",
  7: "single",
  8: "int8",
  9: "uint8",
  10: "int16",
  11: "uint16",
  12: "int32",
  13: "uint32",
  14: "int64",
  15: "uint64",
};
const FIRST_NUMERIC_CLASS = 6;
const LAST_NUMERIC_CLASS = 15;

interface Element {
  type: number;
  data: Uint8Array;
  next: number;
}

/**
 * Reads one data element tag at `pos`. Small data elements pack type,
 * length (1..4 bytes), and data into the 8-byte tag itself; regular
 * elements pad their data to the next 8-byte boundary. miCOMPRESSED is the
 * one type the format exempts from padding.
 */
function readElement(bytes: Uint8Array, view: DataView, pos: number, little: boolean, where: string): Element {
  if (pos + 8 > bytes.length) {
    throw new FormatError(`truncated element tag at byte ${pos} (${where})`);
  }
  const first = view.getUint32(pos, little);
  // Small elements pack the byte count into the high-order half of the tag
  // word (value arithmetic, so the same split serves both byte orders).
  const smallSize = first >>> 16;
  if (smallSize !== 0) {
    const type = first & 0xffff;
    if (smallSize > 4) {
      throw new FormatError(`small element at byte ${pos} claims ${smallSize} bytes (${where})`);
    }
    return { type, data: bytes.subarray(pos + 4, pos + 4 + smallSize), next: pos + 8 };
  }
  const size = view.getUint32(pos + 4, little);
  if (pos + 8 + size > bytes.length) {
    throw new FormatError(`element at byte ${pos} claims ${size} data bytes past end of input (${where})`);
  }
  const advance = first === MI_COMPRESSED ? size : Math.ceil(size / 8) * 8;
  return { type: first, data: bytes.subarray(pos + 8, pos + 8 + size), next: pos + 8 + advance };
}

function bigToNumber(v: bigint, where: string): number {
  const n = Number(v);
  if (!Number.isSafeInteger(n)) {
    throw new FormatError(`64-bit value ${v} cannot be represented exactly (${where})`);
  }
  return n;
}

/** Decodes a numeric storage buffer to f64, honoring the file's byte order. */
function decodeNumeric(type: number, data: Uint8Array, little: boolean, where: string): Float64Array {
  const width = STORAGE_BYTES[type];
  if (width === undefined) {
    throw new FormatError(`unsupported numeric storage type ${type} (${where})`);
  }
  if (data.byteLength % width !== 0) {
    throw new FormatError(`numeric data length ${data.byteLength} is not a multiple of ${width} (${where})`);
  }
  const n = data.byteLength / width;
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const off = i * width;
    switch (type) {
      case MI_INT8:
        out[i] = view.getInt8(off);
        break;
      case MI_UINT8:
        out[i] = view.getUint8(off);
        break;
      case MI_INT16:
        out[i] = view.getInt16(off, little);
        break;
      case MI_UINT16:
        out[i] = view.getUint16(off, little);
        break;
      case MI_INT32:
        out[i] = view.getInt32(off, little);
        break;
      case MI_UINT32:
        out[i] = view.getUint32(off, little);
        break;
      case MI_SINGLE:
        out[i] = view.getFloat32(off, little);
        break;
      case MI_DOUBLE:
        out[i] = view.getFloat64(off, little);
        break;
      case MI_INT64:
        out[i] = bigToNumber(view.getBigInt64(off, little), where);
        break;
      case MI_UINT64:
        out[i] = bigToNumber(view.getBigUint64(off, little), where);
        break;
    }
  }
  return out;
}

/**
 * Parses one miMATRIX payload. Every class opens with the same three
 * subelements (flags, dimensions, name); numeric classes follow with the
 * real part, whose storage type may be narrower than the class (writers
 * shrink doubles to the smallest integer type that holds the values).
 */
function parseMatrix(data: Uint8Array, little: boolean): MatVariable | null {
  if (data.byteLength === 0) return null; // empty array ([]) written as a bare tag
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);

  const flagsE = readElement(data, view, 0, little, "array flags");
  if (flagsE.data.byteLength < 4) {
    throw new FormatError(`array flags subelement holds ${flagsE.data.byteLength} bytes, need 4`);
  }
  const flagsView = new DataView(flagsE.data.buffer, flagsE.data.byteOffset, flagsE.data.byteLength);
  const flagsWord = flagsView.getUint32(0, little);
  const classCode = flagsWord & 0xff;
  const complex = ((flagsWord >>> 8) & 0x08) !== 0;
  const klass = CLASS_NAMES[classCode] ?? `class_${classCode}`;

  const dimsE = readElement(data, view, flagsE.next, little, "dimensions");
  const dimsF = decodeNumeric(dimsE.type, dimsE.data, little, "dimensions");
  const dims: number[] = [];
  for (const d of dimsF) {
    if (!Number.isInteger(d) || d < 0) {
      throw new FormatError(`bad dimension ${d}`);
    }
    dims.push(d);
  }

  const nameE = readElement(data, view, dimsE.next, little, "array name");
  const name = new TextDecoder().decode(nameE.data);

  const numeric = classCode >= FIRST_NUMERIC_CLASS && classCode <= LAST_NUMERIC_CLASS;
  if (!numeric || complex) {
    return { name, dims, klass: complex ? `complex ${klass}` : klass, data: null };
  }

  const realE = readElement(data, view, nameE.next, little, `real part of "${name}"`);
  const values = decodeNumeric(realE.type, realE.data, little, `real part of "${name}"`);
  const count = dims.reduce((a, b) => a * b, 1);
  if (values.length !== count) {
    throw new FormatError(`variable "${name}" is ${dims.join("x")} (${count} values) but carries ${values.length}`);
  }
  return { name, dims, klass, data: values };
}

/**
 * Walks the top-level element sequence of a level 5 MAT file. Matrices are
 * collected; miCOMPRESSED wraps exactly one zlib-deflated element; other
 * top-level types are legal metadata and skipped.
 */
export function parseMat5(bytes: Uint8Array, little: boolean): MatVariable[] {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out: MatVariable[] = [];
  let pos = 128;
  while (pos < bytes.length) {
    const e = readElement(bytes, view, pos, little, "top level");
    if (e.type === MI_MATRIX) {
      const v = parseMatrix(e.data, little);
      if (v) out.push(v);
    } else if (e.type === MI_COMPRESSED) {
      let inflated: Buffer;
      try {
        inflated = inflateSync(e.data);
      } catch (err) {
        throw new FormatError(`corrupt compressed element at byte ${pos}: ${(err as Error).message}`);
      }
      const sub = new Uint8Array(inflated.buffer, inflated.byteOffset, inflated.byteLength);
      const subView = new DataView(sub.buffer, sub.byteOffset, sub.byteLength);
      const inner = readElement(sub, subView, 0, little, "compressed payload");
      if (inner.type === MI_MATRIX) {
        const v = parseMatrix(inner.data, little);
        if (v) out.push(v);
      }
    }
    pos = e.next;
  }
  return out;
}
