/* tslint:disable */
/* eslint-disable */

/**
 * A sampled curve with optional run diagnostics.
 */
export class Series {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly blowupTime: number;
    readonly rate: number;
    readonly status: string;
    readonly xs: Float64Array;
    readonly ys: Float64Array;
}

export function explicitProfile(sigma: number, p: number, samples: number): Series;

export function fujitaBoundary(dim: number, samples: number): Series;

export function homogeneousMarch(sigma: number, p: number, scale: number, t_max: number): Series;

export function regime(p: number, sigma: number, dim: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_series_free: (a: number, b: number) => void;
    readonly explicitProfile: (a: number, b: number, c: number) => [number, number, number];
    readonly fujitaBoundary: (a: number, b: number) => [number, number, number];
    readonly homogeneousMarch: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly regime: (a: number, b: number, c: number) => [number, number, number, number];
    readonly series_blowupTime: (a: number) => number;
    readonly series_rate: (a: number) => number;
    readonly series_status: (a: number) => [number, number];
    readonly series_xs: (a: number) => [number, number];
    readonly series_ys: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
