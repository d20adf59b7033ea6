import * as hdf5 from "jsfive";

import { FormatError } from "./errors.js";
import type { MatVariable } from "./mat.js";

const HDF5_SIGNATURE = [0x89, 0x48, 0x44, 0x46, 0x0d, 0x0a, 0x1a, 0x0a];

// Normalized dtype suffix -> MATLAB class.
const DTYPE_CLASS: Record<string, string> = {
  f8: "double",
  f4: "single",
  i1: "int8",
  u1: "uint8",
  i2: "int16",
  u2: "uint16",
  i4: "int32",
  u4: "uint32",
  i8: "int64",
  u8: "uint64",
};

const NUMERIC_MATLAB_CLASSES = new Set([
  "double",
  "single",
  "int8",
  "uint8",
  "int16",
  "uint16",
  "int32",
  "uint32",
  "int64",
  "uint64",
  "logical",
]);

function signatureAt(bytes: Uint8Array, off: number): boolean {
  if (off + HDF5_SIGNATURE.length > bytes.length) return false;
  return HDF5_SIGNATURE.every((b, i) => bytes[off + i] === b);
}

/**
 * HDF5 superblocks sit at offset 0 or at the end of a userblock, whose size
 * is a power of two >= 512. MATLAB always writes a 512-byte userblock;
 * scanning the legal offsets costs nothing and tolerates repacked files.
 */
function findSuperblock(bytes: Uint8Array): number {
  if (signatureAt(bytes, 0)) return 0;
  for (let off = 512; off < bytes.length; off *= 2) {
    if (signatureAt(bytes, off)) return off;
  }
  throw new FormatError("version says v7.3 but no HDF5 superblock was found");
}

function bigToNumber(v: bigint, where: string): number {
  const n = Number(v);
  if (!Number.isSafeInteger(n)) {
    throw new FormatError(`64-bit value ${v} cannot be represented exactly (${where})`);
  }
  return n;
}

/**
 * Reads the root-level variables of a v7.3 (HDF5) MAT file. MATLAB stores
 * an array of dims d1..dk as a dataset of shape dk..d1: the C-order bytes
 * of that dataset are exactly the column-major bytes of the original, so
 * reversing the shape recovers the MATLAB dims and the flat values line up
 * with the v5 reader's output with no reshuffle.
 */
export function parseMat73(bytes: Uint8Array): MatVariable[] {
  const off = findSuperblock(bytes);
  // Copy into a fresh ArrayBuffer: HDF5 addresses are relative to the end
  // of the userblock, so the payload stands alone once sliced there.
  const buffer = new ArrayBuffer(bytes.byteLength - off);
  new Uint8Array(buffer).set(bytes.subarray(off));
  let file: InstanceType<typeof hdf5.File>;
  try {
    file = new hdf5.File(buffer, "mat73");
  } catch (err) {
    throw new FormatError(`invalid HDF5 payload: ${(err as Error).message ?? String(err)}`);
  }

  const out: MatVariable[] = [];
  for (const key of file.keys) {
    if (key.startsWith("#")) continue; // #refs#/#subsystem#: MATLAB internals
    const node = file.get(key);
    if (!(node instanceof hdf5.Dataset)) {
      // Groups carry cells/structs/objects; list them, never convert them.
      const attrs = (node as { attrs?: Record<string, unknown> }).attrs ?? {};
      const klass = typeof attrs.MATLAB_class === "string" ? attrs.MATLAB_class : "struct";
      out.push({ name: key, dims: [], klass, data: null });
      continue;
    }

    const dims = [...node.shape].reverse();
    const attrs = node.attrs ?? {};
    const matlabClass = typeof attrs.MATLAB_class === "string" ? attrs.MATLAB_class : null;
    const dtype = String(node.dtype);
    const dtypeClass = DTYPE_CLASS[dtype.replace(/^[<>|=]/, "")] ?? null;
    const klass = matlabClass ?? dtypeClass ?? dtype;
    const numeric = dtypeClass !== null && (matlabClass === null || NUMERIC_MATLAB_CLASSES.has(matlabClass));
    if (!numeric) {
      out.push({ name: key, dims, klass, data: null });
      continue;
    }

    const raw = node.value as ArrayLike<number | bigint>;
    const count = dims.reduce((a, b) => a * b, 1);
    if (raw.length !== count) {
      throw new FormatError(`variable "${key}" is ${dims.join("x")} (${count} values) but carries ${raw.length}`);
    }
    const data = new Float64Array(raw.length);
    for (let i = 0; i < raw.length; i++) {
      const v = raw[i];
      data[i] = typeof v === "bigint" ? bigToNumber(v, `variable "${key}"`) : v;
    }
    out.push({ name: key, dims, klass, data });
  }
  return out;
}
