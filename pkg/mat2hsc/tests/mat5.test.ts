import { readFileSync } from "node:fs";

import { describe, expect, test } from "vitest";

import { FormatError } from "../src/errors.js";
import { parseMat } from "../src/mat.js";
import {
  compressedElement,
  concatBytes,
  element,
  fixturePath,
  imageAt,
  labelAt,
  mat5File,
  mat5Header,
  matrixElement,
  MI_COMPRESSED,
  MI_DOUBLE,
  MI_INT64,
  MI_SINGLE,
  MI_UINT16,
  MI_UINT8,
  MX_CHAR,
  MX_DOUBLE,
  MX_INT64,
  MX_SINGLE,
  SCENE_B,
  SCENE_H,
  SCENE_W,
} from "./helpers.js";

function loadFixture(name: string) {
  return parseMat(readFileSync(fixturePath(name)));
}

describe("scipy-written fixtures", () => {
  test("plain v5 carries both variables with MATLAB dims", () => {
    const { format, variables } = loadFixture("scene_v5.mat");
    expect(format).toBe("v5");
    expect(variables.map((v) => [v.name, v.dims, v.klass])).toEqual([
      ["image", [SCENE_H, SCENE_W, SCENE_B], "double"],
      ["labels", [SCENE_H, SCENE_W], "double"],
    ]);
  });

  test("values arrive column-major and untouched", () => {
    const image = loadFixture("scene_v5.mat").variables[0];
    const data = image.data!;
    // Fortran order: index 1 is (r=1, c=0, b=0).
    expect(data[0]).toBe(-273.15);
    expect(data[1]).toBe(100.1);
    for (let r = 0; r < SCENE_H; r++) {
      for (let c = 0; c < SCENE_W; c++) {
        for (let b = 0; b < SCENE_B; b++) {
          expect(data[r + c * SCENE_H + b * SCENE_H * SCENE_W]).toBe(imageAt(r, c, b));
        }
      }
    }
  });

  test("labels stored as doubles parse to their integer values", () => {
    const labels = loadFixture("scene_v5.mat").variables[1];
    const data = labels.data!;
    for (let r = 0; r < SCENE_H; r++) {
      for (let c = 0; c < SCENE_W; c++) {
        expect(data[r + c * SCENE_H]).toBe(labelAt(r, c));
      }
    }
  });

  test("the compressed fixture decodes to the same content", () => {
    const plain = loadFixture("scene_v5.mat");
    const packed = loadFixture("scene_v5z.mat");
    expect(packed.variables.length).toBe(plain.variables.length);
    for (let i = 0; i < plain.variables.length; i++) {
      expect(packed.variables[i].name).toBe(plain.variables[i].name);
      expect(packed.variables[i].dims).toEqual(plain.variables[i].dims);
      expect(Array.from(packed.variables[i].data!)).toEqual(Array.from(plain.variables[i].data!));
    }
  });
});

describe("hand-built containers", () => {
  test("numeric storage narrower than the class promotes losslessly", () => {
    // A double array whose writer shrank the payload to uint8.
    const file = mat5File([
      matrixElement({ name: "im", dims: [2, 2], classCode: MX_DOUBLE, storageType: MI_UINT8, values: [0, 1, 2, 255] }),
    ]);
    const v = parseMat(file).variables[0];
    expect(v.klass).toBe("double");
    expect(Array.from(v.data!)).toEqual([0, 1, 2, 255]);
  });

  test("single-class payloads read through f32", () => {
    const file = mat5File([
      matrixElement({ name: "s", dims: [1, 2], classCode: MX_SINGLE, storageType: MI_SINGLE, values: [1.5, -2.25] }),
    ]);
    expect(Array.from(parseMat(file).variables[0].data!)).toEqual([1.5, -2.25]);
  });

  test("a big-endian container parses to the same values", () => {
    const build = (little: boolean) =>
      mat5File(
        [
          matrixElement(
            { name: "im", dims: [2, 3], classCode: MX_DOUBLE, storageType: MI_DOUBLE, values: [1.25, -2, 3e7, 0.1, -0.5, 6] },
            little,
          ),
        ],
        little,
      );
    const le = parseMat(build(true)).variables[0];
    const be = parseMat(build(false)).variables[0];
    expect(be.dims).toEqual(le.dims);
    expect(Array.from(be.data!)).toEqual(Array.from(le.data!));
  });

  test("small-element names parse", () => {
    const file = mat5File([
      matrixElement({ name: "ab", dims: [1, 1], classCode: MX_DOUBLE, storageType: MI_DOUBLE, values: [7], smallName: true }),
    ]);
    expect(parseMat(file).variables[0].name).toBe("ab");
  });

  test("char arrays are listed but carry no data", () => {
    const file = mat5File([
      matrixElement({ name: "txt", dims: [1, 3], classCode: MX_CHAR, storageType: MI_UINT16, values: [104, 105, 33] }),
    ]);
    const v = parseMat(file).variables[0];
    expect(v.klass).toBe("char");
    expect(v.dims).toEqual([1, 3]);
    expect(v.data).toBeNull();
  });

  test("complex arrays are listed but carry no data", () => {
    const file = mat5File([
      matrixElement({ name: "z", dims: [1, 2], classCode: MX_DOUBLE, storageType: MI_DOUBLE, values: [1, 2], complex: true }),
    ]);
    const v = parseMat(file).variables[0];
    expect(v.klass).toBe("complex double");
    expect(v.data).toBeNull();
  });

  test("64-bit integers survive within the safe range and fail beyond it", () => {
    const ok = mat5File([
      matrixElement({ name: "a", dims: [1, 1], classCode: MX_INT64, storageType: MI_INT64, values: [2n ** 53n - 1n] }),
    ]);
    expect(Array.from(parseMat(ok).variables[0].data!)).toEqual([2 ** 53 - 1]);

    const bad = mat5File([
      matrixElement({ name: "a", dims: [1, 1], classCode: MX_INT64, storageType: MI_INT64, values: [2n ** 60n] }),
    ]);
    expect(() => parseMat(bad)).toThrow(/cannot be represented exactly/);
  });

  test("a compressed element round-trips through the inflater", () => {
    const inner = matrixElement({ name: "im", dims: [1, 2], classCode: MX_DOUBLE, storageType: MI_DOUBLE, values: [4, 5] });
    const file = mat5File([compressedElement(inner)]);
    expect(Array.from(parseMat(file).variables[0].data!)).toEqual([4, 5]);
  });

  test("corrupt compressed bytes raise a FormatError naming the offset", () => {
    const file = mat5File([element(MI_COMPRESSED, new Uint8Array([1, 2, 3, 4, 5]))]);
    expect(() => parseMat(file)).toThrow(/corrupt compressed element at byte 128/);
  });

  test("an element claiming bytes past the end is rejected", () => {
    const good = mat5File([
      matrixElement({ name: "im", dims: [2, 2], classCode: MX_DOUBLE, storageType: MI_DOUBLE, values: [1, 2, 3, 4] }),
    ]);
    expect(() => parseMat(good.subarray(0, good.length - 5))).toThrow(/past end of input/);
  });

  test("stray trailing bytes read as a truncated tag", () => {
    const good = mat5File([
      matrixElement({ name: "im", dims: [1, 1], classCode: MX_DOUBLE, storageType: MI_DOUBLE, values: [1] }),
    ]);
    expect(() => parseMat(concatBytes([good, new Uint8Array([1, 2, 3])]))).toThrow(/truncated element tag/);
  });
});

describe("header validation", () => {
  test("rejects level 4 (zero-leading) files", () => {
    const bytes = new Uint8Array(200);
    expect(() => parseMat(bytes)).toThrow(/level 5/);
  });

  test("rejects short inputs", () => {
    expect(() => parseMat(new Uint8Array(64).fill(0x20))).toThrow(/too short/);
  });

  test("rejects a bad endian indicator", () => {
    const h = mat5Header();
    h[126] = 0x58;
    h[127] = 0x59;
    expect(() => parseMat(h)).toThrow(/endian indicator/);
  });

  test("rejects unknown versions", () => {
    const h = mat5Header();
    new DataView(h.buffer).setUint16(124, 0x0300, true);
    expect(() => parseMat(h)).toThrow(/version 0x0300/);
  });

  test("all parse failures are FormatError", () => {
    expect(() => parseMat(new Uint8Array(0))).toThrow(FormatError);
  });
});
