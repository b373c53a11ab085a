/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_series_free: (a: number, b: number) => void;
export const explicitProfile: (a: number, b: number, c: number) => [number, number, number];
export const fujitaBoundary: (a: number, b: number) => [number, number, number];
export const homogeneousMarch: (a: number, b: number, c: number, d: number) => [number, number, number];
export const regime: (a: number, b: number, c: number) => [number, number, number, number];
export const series_blowupTime: (a: number) => number;
export const series_rate: (a: number) => number;
export const series_status: (a: number) => [number, number];
export const series_xs: (a: number) => [number, number];
export const series_ys: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
