declare module "jsfive" {
  export class Dataset {
    shape: number[];
    dtype: string;
    value: unknown;
    attrs: Record<string, unknown>;
  }
  export class Group {
    keys: string[];
    attrs: Record<string, unknown>;
    get(name: string): Dataset | Group;
  }
  export class File extends Group {
    constructor(buffer: ArrayBuffer, filename?: string);
  }
}
