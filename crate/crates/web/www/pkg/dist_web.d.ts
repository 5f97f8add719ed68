/* tslint:disable */
/* eslint-disable */

export class ClipPreview {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly height: number;
    readonly rgba: Uint8Array;
    readonly width: number;
}

export class Selection {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly median: number | undefined;
    /**
     * Indices of the selected scores in input order.
     */
    readonly selected: Uint32Array;
}

export function preview_clip(_class: number, num_classes: number, difficulty: number, seed: bigint, target_frames: number): ClipPreview;

export function reliability_score(first: Float64Array, second: Float64Array, last: Float64Array): Float64Array;

export function reliability_surface(steps: number): Float64Array;

export function select_top_half(scores: Float64Array): Selection;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_clippreview_free: (a: number, b: number) => void;
    readonly __wbg_selection_free: (a: number, b: number) => void;
    readonly clippreview_height: (a: number) => number;
    readonly clippreview_rgba: (a: number) => [number, number];
    readonly clippreview_width: (a: number) => number;
    readonly preview_clip: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number];
    readonly reliability_score: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly reliability_surface: (a: number) => [number, number, number, number];
    readonly select_top_half: (a: number, b: number) => [number, number, number];
    readonly selection_median: (a: number) => [number, number];
    readonly selection_selected: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
