import * as fs from "node:fs";
import { randomBytes } from "node:crypto";

/** The syscalls the atomic writer performs, injectable so tests can fault
 *  each one; production callers never pass this. */
export interface FsLike {
  openSync(path: string, flags: string): number;
  writeSync(fd: number, buffer: NodeJS.ArrayBufferView, offset: number, length: number): number;
  fsyncSync(fd: number): void;
  closeSync(fd: number): void;
  renameSync(oldPath: string, newPath: string): void;
  unlinkSync(path: string): void;
}

const WRITE_CHUNK = 1 << 16;

/**
 * Writes bytes to a sibling temp file, fsyncs, then renames over `path`.
 * The destination therefore only ever holds either its previous content or
 * the complete new content; any failure removes the temp file and leaves
 * the destination untouched.
 */
export function writeFileAtomic(path: string, bytes: Uint8Array, io: FsLike = fs): void {
  const temp = `${path}.${process.pid.toString(36)}${randomBytes(4).toString("hex")}.tmp`;
  let fd = -1;
  let opened = false;
  try {
    fd = io.openSync(temp, "wx");
    opened = true;
    let done = 0;
    while (done < bytes.length) {
      const wrote = io.writeSync(fd, bytes, done, Math.min(WRITE_CHUNK, bytes.length - done));
      if (wrote <= 0) {
        throw new Error(`short write to ${temp}`);
      }
      done += wrote;
    }
    io.fsyncSync(fd);
    io.closeSync(fd);
    opened = false;
    io.renameSync(temp, path);
  } catch (err) {
    if (opened) {
      try {
        io.closeSync(fd);
      } catch {
        // the descriptor is already beyond saving
      }
    }
    try {
      io.unlinkSync(temp);
    } catch {
      // nothing was created, or cleanup is impossible; the rethrow matters more
    }
    throw err;
  }
}
