/* tslint:disable */
/* eslint-disable */

/**
 * Two fleets with their own size and new setpoint, combined four ways. Returns JSON.
 */
export function aggregate_fleets(units_a: number, t_new_a: number, units_b: number, t_new_b: number): string;

/**
 * Aggregate power after moving `fraction` of every bin to the new setpoint at t = 0. Returns JSON.
 */
export function partial_response(fraction: number, t_set_new: number, hours: number, units: number): string;

/**
 * Inner reach-and-hold frontiers of one fleet, one per new setpoint. Returns JSON.
 */
export function setpoint_frontiers(setpoints: Float64Array, units: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly aggregate_fleets: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly partial_response: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly setpoint_frontiers: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
