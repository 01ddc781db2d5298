/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_democomparison_free: (a: number, b: number) => void;
export const demo_basis: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_block_at: (a: number, b: number, c: number) => number;
export const demo_coarse_size: (a: number) => number;
export const demo_compare: (a: number, b: number, c: number) => [number, number, number];
export const demo_continua: (a: number, b: number) => number;
export const demo_hole_edges: (a: number) => [number, number];
export const demo_new: (a: number, b: number, c: number) => [number, number, number];
export const demo_nodes: (a: number) => [number, number];
export const demo_triangles: (a: number) => [number, number];
export const democomparison_coarse: (a: number) => [number, number];
export const democomparison_dof_c: (a: number) => number;
export const democomparison_dof_f: (a: number) => number;
export const democomparison_error_percent: (a: number) => number;
export const democomparison_fine: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
