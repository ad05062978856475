/* tslint:disable */
/* eslint-disable */

/**
 * Result of one tracking run, positions as flat `x, y` pairs.
 */
export class Flight {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly actual: Float64Array;
    readonly maxError: number;
    readonly reference: Float64Array;
    readonly rmse: number;
}

export function drag(vx: number, vy: number, vz: number, wind_x: number, wind_y: number): Float64Array;

export function fly(name: string, wind_x: number, wind_y: number, duration: number, compensation: string): Flight;

/**
 * Flat `x, y` pairs of the reference path.
 */
export function referencePath(name: string, duration: number): Float64Array;

/**
 * Trajectory slugs, in display order.
 */
export function trajectoryNames(): string[];

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_flight_free: (a: number, b: number) => void;
    readonly drag: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly flight_actual: (a: number) => [number, number];
    readonly flight_maxError: (a: number) => number;
    readonly flight_reference: (a: number) => [number, number];
    readonly flight_rmse: (a: number) => number;
    readonly fly: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly referencePath: (a: number, b: number, c: number) => [number, number, number, number];
    readonly trajectoryNames: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
