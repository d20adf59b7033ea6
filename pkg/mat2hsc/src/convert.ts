import * as fs from "node:fs";

import { writeFileAtomic, type FsLike } from "./atomic.js";
import { ContractError, FormatError } from "./errors.js";
import { encodeHsc } from "./hsc.js";
import { describeVariables, dimsText, parseMat, type MatVariable } from "./mat.js";

export interface ConvertSpec {
  input: string;
  output: string;
  /** Defaults to the sole 3-D numeric variable in the container. */
  imageVar?: string;
  /** Defaults to the sole 2-D numeric variable in the container. */
  labelsVar?: string;
  /** Class count override; must cover max(labels). Defaults to max(labels). */
  nY?: number;
}

export interface ConvertSummary {
  height: number;
  width: number;
  bands: number;
  nY: number;
  /** Pixels per class 1..nY. */
  classCounts: number[];
  unlabeled: number;
  imageVar: string;
  labelsVar: string;
}

function resolveVariable(vars: MatVariable[], requested: string | undefined, ndims: number, role: string): MatVariable {
  if (requested !== undefined) {
    const v = vars.find((x) => x.name === requested);
    if (!v) {
      throw new ContractError(`no variable named "${requested}" in the container; ${describeVariables(vars)}`);
    }
    if (!v.data) {
      throw new ContractError(`variable "${requested}" is ${v.klass}, not a convertible numeric array`);
    }
    if (v.dims.length !== ndims) {
      throw new ContractError(`${role} variable "${requested}" is ${dimsText(v.dims)}, expected a ${ndims}-D array`);
    }
    return v;
  }
  const candidates = vars.filter((x) => x.data !== null && x.dims.length === ndims);
  if (candidates.length === 1) return candidates[0];
  if (candidates.length === 0) {
    throw new ContractError(`no ${ndims}-D numeric variable to use as the ${role}; ${describeVariables(vars)}`);
  }
  const names = candidates.map((x) => `"${x.name}"`).join(", ");
  throw new ContractError(`ambiguous ${role}: ${names} are all ${ndims}-D; pass --${role}-var`);
}

/**
 * Converts one MAT container (v5 or v7.3) to an HSC scene. Radiance casts
 * to f32; labels must be integer-valued in 0..65535 and are stored as u16.
 * MAT arrays arrive column-major, HSC wants row-major with the bands of a
 * pixel contiguous, so the copy permutes.
 */
export function convert(spec: ConvertSpec, io?: FsLike): ConvertSummary {
  const bytes = fs.readFileSync(spec.input);
  let container;
  try {
    container = parseMat(bytes);
  } catch (err) {
    if (err instanceof FormatError) {
      throw new FormatError(`${spec.input}: ${err.message}`);
    }
    throw err;
  }

  const image = resolveVariable(container.variables, spec.imageVar, 3, "image");
  const labelsVar = resolveVariable(container.variables, spec.labelsVar, 2, "labels");
  const [h, w, b] = image.dims;
  if (h < 1 || w < 1 || b < 1) {
    throw new ContractError(`image "${image.name}" has empty extent ${dimsText(image.dims)}`);
  }
  if (labelsVar.dims[0] !== h || labelsVar.dims[1] !== w) {
    throw new ContractError(
      `labels "${labelsVar.name}" is ${dimsText(labelsVar.dims)} but the image is ${h}x${w}x${b}`,
    );
  }

  const src = image.data as Float64Array;
  const radiance = new Float32Array(h * w * b);
  for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      for (let k = 0; k < b; k++) {
        const v = src[r + c * h + k * h * w];
        if (!Number.isFinite(v)) {
          throw new FormatError(`non-finite radiance ${v} at (${r}, ${c}) band ${k} of "${image.name}"`);
        }
        radiance[(r * w + c) * b + k] = v; // the assignment is the f32 cast
      }
    }
  }

  const lsrc = labelsVar.data as Float64Array;
  const labels = new Uint16Array(h * w);
  let maxLabel = 0;
  for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      const v = lsrc[r + c * h];
      if (!Number.isInteger(v) || v < 0) {
        throw new FormatError(`label ${v} at (${r}, ${c}) of "${labelsVar.name}" is not a nonnegative integer`);
      }
      if (v > 0xffff) {
        throw new FormatError(`label ${v} at (${r}, ${c}) of "${labelsVar.name}" exceeds the 16-bit limit`);
      }
      labels[r * w + c] = v;
      if (v > maxLabel) maxLabel = v;
    }
  }

  const nY = spec.nY ?? Math.max(maxLabel, 1);
  if (!Number.isInteger(nY) || nY < 1 || nY > 0xffff) {
    throw new ContractError(`n_y must be an integer in 1..65535, got ${nY}`);
  }
  if (nY < maxLabel) {
    throw new ContractError(`n_y=${nY} is below the largest label ${maxLabel}`);
  }

  const encoded = encodeHsc({ height: h, width: w, bands: b, nY, radiance, labels });
  if (io === undefined) {
    writeFileAtomic(spec.output, encoded);
  } else {
    writeFileAtomic(spec.output, encoded, io);
  }

  const classCounts = new Array<number>(nY).fill(0);
  let unlabeled = 0;
  for (const v of labels) {
    if (v === 0) unlabeled++;
    else classCounts[v - 1]++;
  }
  return {
    height: h,
    width: w,
    bands: b,
    nY,
    classCounts,
    unlabeled,
    imageVar: image.name,
    labelsVar: labelsVar.name,
  };
}
