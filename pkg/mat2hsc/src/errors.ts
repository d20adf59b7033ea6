/** Malformed or unsupported container bytes. */
export class FormatError extends Error {
  override name = "FormatError";
}

/** Well-formed input that violates a conversion precondition. */
export class ContractError extends Error {
  override name = "ContractError";
}

/** Bad command line. */
export class UsageError extends Error {
  override name = "UsageError";
}
