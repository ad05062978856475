/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_flight_free: (a: number, b: number) => void;
export const drag: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const flight_actual: (a: number) => [number, number];
export const flight_maxError: (a: number) => number;
export const flight_reference: (a: number) => [number, number];
export const flight_rmse: (a: number) => number;
export const fly: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const referencePath: (a: number, b: number, c: number) => [number, number, number, number];
export const trajectoryNames: () => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
