export { ContractError, FormatError, UsageError } from "./errors.js";
export { parseMat, describeVariables, dimsText } from "./mat.js";
export type { MatContainer, MatVariable } from "./mat.js";
export { encodeHsc, decodeHsc, HSC_MAGIC, HSC_VERSION, HEADER_BYTES } from "./hsc.js";
export type { HscScene, DecodedHsc } from "./hsc.js";
export { writeFileAtomic } from "./atomic.js";
export type { FsLike } from "./atomic.js";
export { convert } from "./convert.js";
export type { ConvertSpec, ConvertSummary } from "./convert.js";
export { main } from "./cli.js";
