/**
 * Client bindings for the air-engine pipeline service.
 *
 * Matrices cross the boundary as BoundArray values: an explicit shape plus a
 * contiguous row-major Float32Array. A buffer whose length disagrees with its
 * shape is rejected up front (never silently copied or reshaped), and engine
 * failures surface as BindingError with the engine's error code. Calls are
 * async and hold no shared state, so concurrent use from one process is safe
 * and the host event loop keeps running during long solves.
 */

export const ENGINE_VERSION = "0.1.0";

/** Config keys accepted by the engine, mirroring its JSON config schema. */
export const CONFIG_KEYS = [
  "top_q",
  "tau",
  "epsilon",
  "sinkhorn_max_iter",
  "sinkhorn_tol",
  "layer_gate",
  "injection_mode",
  "injection_activation",
  "patch_count",
  "uncertainty_threshold",
  "cost_space",
  "threads",
  "seed",
] as const;

export type ConfigKey = (typeof CONFIG_KEYS)[number];
export type EngineConfig = Partial<Record<ConfigKey, unknown>>;

export type ErrorCode =
  | "non_contiguous"
  | "non_finite"
  | "usage"
  | "format"
  | "shape"
  | "internal"
  | "transport";

export class BindingError extends Error {
  readonly code: ErrorCode;

  constructor(code: ErrorCode, message: string) {
    super(message);
    this.name = "BindingError";
    this.code = code;
  }
}

export interface BoundArray {
  rows: number;
  cols: number;
  /** Row-major contiguous float32 buffer of exactly rows*cols entries. */
  data: Float32Array;
}

export interface PatchScore {
  m: number;
  d_ot: number;
  d_cos: number;
  converged: boolean;
}

export interface ReduceResult {
  indices: number[];
  hPrime: BoundArray;
  distances: number[];
}

export interface PipelineResult {
  scores: PatchScore[];
  selected: number[];
  fusedRows: number;
  injected: BoundArray;
}

export function boundArray(rows: number, cols: number, data: Float32Array): BoundArray {
  const arr = { rows, cols, data };
  validateBoundArray(arr, "array");
  return arr;
}

export function validateBoundArray(arr: BoundArray, name: string): void {
  if (!Number.isInteger(arr.rows) || !Number.isInteger(arr.cols) || arr.rows < 0 || arr.cols < 0) {
    throw new BindingError("shape", `${name}: rows/cols must be non-negative integers`);
  }
  if (arr.data.length !== arr.rows * arr.cols) {
    throw new BindingError(
      "non_contiguous",
      `${name}: buffer holds ${arr.data.length} values but shape ` +
        `${arr.rows}x${arr.cols} needs ${arr.rows * arr.cols}; pass a contiguous ` +
        `row-major buffer (no strided views)`,
    );
  }
  for (let i = 0; i < arr.data.length; i++) {
    if (!Number.isFinite(arr.data[i])) {
      throw new BindingError("non_finite", `${name}: entry ${i} is not finite`);
    }
  }
}

export function validateConfig(cfg: EngineConfig): void {
  const valid = new Set<string>(CONFIG_KEYS);
  const unknown = Object.keys(cfg).filter((k) => !valid.has(k));
  if (unknown.length > 0) {
    throw new BindingError(
      "usage",
      `unknown config key(s) ${unknown.join(", ")}; valid keys: ${CONFIG_KEYS.join(", ")}`,
    );
  }
}

interface WireArray {
  rows: number;
  cols: number;
  data: number[];
}

function toWire(arr: BoundArray, name: string): WireArray {
  validateBoundArray(arr, name);
  return { rows: arr.rows, cols: arr.cols, data: Array.from(arr.data) };
}

function fromWire(wire: WireArray): BoundArray {
  return { rows: wire.rows, cols: wire.cols, data: Float32Array.from(wire.data) };
}

export class EngineClient {
  constructor(readonly baseUrl: string) {}

  private async post(path: string, body: unknown): Promise<any> {
    let response: Response;
    try {
      response = await fetch(`${this.baseUrl}${path}`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new BindingError("transport", `cannot reach engine at ${this.baseUrl}: ${err}`);
    }
    const payload = await response.json();
    if (!response.ok) {
      const detail = payload?.error ?? { code: "internal", message: JSON.stringify(payload) };
      throw new BindingError(detail.code as ErrorCode, detail.message);
    }
    return payload;
  }

  async version(): Promise<string> {
    const response = await fetch(`${this.baseUrl}/version`);
    const body = await response.json();
    return body.version as string;
  }

  /** Retain the topQ rows farthest from the mean row. */
  async reduce(tokens: BoundArray, topQ: number): Promise<ReduceResult> {
    const body = await this.post("/reduce", { tokens: toWire(tokens, "tokens"), top_q: topQ });
    return {
      indices: body.indices as number[],
      hPrime: fromWire(body.h_prime),
      distances: body.distances as number[],
    };
  }

  /** Score patches, apply the threshold, and run the injected FFN forward. */
  async scoreSelectInject(
    hPrime: BoundArray,
    patches: BoundArray[],
    config: EngineConfig = {},
  ): Promise<PipelineResult> {
    validateConfig(config);
    const body = await this.post("/pipeline", {
      h_prime: toWire(hPrime, "h_prime"),
      patches: patches.map((p, i) => toWire(p, `patch ${i}`)),
      config,
    });
    return {
      scores: body.scores as PatchScore[],
      selected: body.selected as number[],
      fusedRows: body.fused_rows as number,
      injected: fromWire(body.injected),
    };
  }
}
