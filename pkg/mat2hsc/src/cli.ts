#!/usr/bin/env node
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";

import { convert } from "./convert.js";
import { ContractError, FormatError, UsageError } from "./errors.js";

const USAGE = `usage: mat2hsc convert --in <path.mat> --out <path.hsc>
                       [--image-var <name>] [--labels-var <name>] [--n-y N]

Converts a MAT-format (v5 or v7.3) hyperspectral scene to an HSC container.
The image variable must be a 3-D numeric array (height x width x bands),
the labels variable a 2-D integer-valued array (0 = unlabeled). When a
variable flag is omitted, the sole array of matching rank is used; the
community scene files (indian_pines_corrected / indian_pines_gt,
paviaU / paviaU_gt, ...) hold exactly one of each. --n-y widens the class
count beyond max(labels).`;

function isErrnoError(err: unknown): err is NodeJS.ErrnoException {
  return (
    err instanceof Error &&
    typeof (err as NodeJS.ErrnoException).code === "string" &&
    typeof (err as NodeJS.ErrnoException).syscall === "string"
  );
}

function run(argv: string[]): number {
  if (argv.length === 0) {
    console.error(USAGE);
    return 2;
  }
  const command = argv[0];
  if (command === "--help" || command === "-h" || command === "help") {
    console.log(USAGE);
    return 0;
  }
  if (command !== "convert") {
    throw new UsageError(`unknown command "${command}"`);
  }

  let values: {
    in?: string;
    out?: string;
    "image-var"?: string;
    "labels-var"?: string;
    "n-y"?: string;
    help?: boolean;
  };
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        in: { type: "string" },
        out: { type: "string" },
        "image-var": { type: "string" },
        "labels-var": { type: "string" },
        "n-y": { type: "string" },
        help: { type: "boolean" },
      },
      allowPositionals: false,
    }));
  } catch (err) {
    throw new UsageError((err as Error).message);
  }
  if (values.help) {
    console.log(USAGE);
    return 0;
  }
  if (!values.in || !values.out) {
    throw new UsageError("convert requires --in and --out");
  }
  let nY: number | undefined;
  if (values["n-y"] !== undefined) {
    if (!/^\d+$/.test(values["n-y"]) || Number(values["n-y"]) < 1) {
      throw new UsageError(`--n-y expects a positive integer, got "${values["n-y"]}"`);
    }
    nY = Number(values["n-y"]);
  }

  const summary = convert({
    input: values.in,
    output: values.out,
    imageVar: values["image-var"],
    labelsVar: values["labels-var"],
    nY,
  });
  console.log(
    `wrote ${values.out}: ${summary.height}x${summary.width}x${summary.bands}, ` +
      `${summary.nY} classes, pixels per class [${summary.classCounts.join(", ")}], ` +
      `unlabeled ${summary.unlabeled}`,
  );
  return 0;
}

export function main(argv: string[]): number {
  try {
    return run(argv);
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}`);
      console.error(USAGE);
      return 2;
    }
    if (err instanceof FormatError || err instanceof ContractError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    if (isErrnoError(err)) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

const entry = process.argv[1] ? pathToFileURL(process.argv[1]).href : "";
if (import.meta.url === entry) {
  process.exit(main(process.argv.slice(2)));
}
