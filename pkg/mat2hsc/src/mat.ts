import { FormatError } from "./errors.js";
import { parseMat5 } from "./mat5.js";
import { parseMat73 } from "./mat73.js";

/**
 * One top-level MATLAB variable. `data` holds the values flattened in
 * column-major order (MATLAB's storage order) promoted to f64; it is null
 * for classes that cannot feed a conversion (char, cell, struct, sparse,
 * complex), which still appear here so error messages can list them.
 */
export interface MatVariable {
  name: string;
  /** MATLAB dims d1..dk (d1 = rows). */
  dims: number[];
  /** MATLAB class name: "double", "uint8", "char", ... */
  klass: string;
  data: Float64Array | null;
}

export interface MatContainer {
  format: "v5" | "v7.3";
  variables: MatVariable[];
}

/**
 * Parses a MAT container, dispatching on the version stamped in the
 * 128-byte text header. v5 elements follow directly; v7.3 is an HDF5 file
 * behind a 512-byte userblock that carries the same style of header.
 */
export function parseMat(bytes: Uint8Array): MatContainer {
  if (bytes.length < 128) {
    throw new FormatError(`too short for a MAT container (${bytes.length} bytes, header needs 128)`);
  }
  // Level 4 files (and raw garbage) start with zero bytes; level 5 headers
  // open with descriptive text.
  if (bytes[0] === 0 || bytes[1] === 0 || bytes[2] === 0 || bytes[3] === 0) {
    throw new FormatError("header starts with zero bytes; only level 5 (v5/v7.3) MAT files are supported");
  }
  const e0 = bytes[126];
  const e1 = bytes[127];
  let little: boolean;
  if (e0 === 0x49 && e1 === 0x4d) {
    little = true; // "IM": written on a little-endian machine
  } else if (e0 === 0x4d && e1 === 0x49) {
    little = false; // "MI": byte-swapped relative to this reader
  } else {
    throw new FormatError(`bad endian indicator 0x${e0.toString(16)}${e1.toString(16)} (expected "IM" or "MI")`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const version = view.getUint16(124, little);
  if (version === 0x0100) {
    return { format: "v5", variables: parseMat5(bytes, little) };
  }
  if (version === 0x0200) {
    return { format: "v7.3", variables: parseMat73(bytes) };
  }
  throw new FormatError(`unsupported MAT version 0x${version.toString(16).padStart(4, "0")}`);
}

export function dimsText(dims: number[]): string {
  return dims.join("x");
}

export function describeVariables(vars: MatVariable[]): string {
  if (vars.length === 0) return "the container holds no variables";
  const items = vars.map((v) => `${v.name} (${dimsText(v.dims)} ${v.klass})`);
  return `available variables: ${items.join(", ")}`;
}
