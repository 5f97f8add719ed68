/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_clippreview_free: (a: number, b: number) => void;
export const __wbg_selection_free: (a: number, b: number) => void;
export const clippreview_height: (a: number) => number;
export const clippreview_rgba: (a: number) => [number, number];
export const clippreview_width: (a: number) => number;
export const preview_clip: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number];
export const reliability_score: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const reliability_surface: (a: number) => [number, number, number, number];
export const select_top_half: (a: number, b: number) => [number, number, number];
export const selection_median: (a: number) => [number, number];
export const selection_selected: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
