/* tslint:disable */
/* eslint-disable */

/**
 * Bernstein weights of a curve with `bends` interior control points, sampled
 * at `samples` evenly spaced positions.
 *
 * Layout: row-major `samples × (bends + 2)`.
 */
export function curve_weights(bends: number, samples: number): Float64Array;

/**
 * Cumulative storage in kilobytes after each of `tasks` tasks with
 * `num_labels` classes each.
 *
 * Layout: `[finetune_1, mask_1, finetune_2, mask_2, ..]`.
 */
export function memory_curve(arch: string, plan: string, tasks: number, num_labels: number): Float64Array;

/**
 * Draws initial scores for a `rows × cols` layer and binarizes them.
 *
 * Layout: `[realized_sparsity, min, max, count_0, .., count_{bins-1}]`, the
 * histogram spanning `[min, max]` of the drawn scores.
 */
export function score_histogram(rows: number, cols: number, init_sparsity: number, halfwidth: number, tau: number, seed: bigint, bins: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly curve_weights: (a: number, b: number) => [number, number];
    readonly memory_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly score_histogram: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
