/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    basis(block: number, continuum: number, layers: number): Float64Array;
    /**
     * Block under a point, or -1.
     */
    block_at(x: number, y: number): number;
    coarse_size(): number;
    /**
     * Runs both solves; the result holds nodal fields and the error.
     */
    compare(layers: number, type2: boolean): DemoComparison;
    /**
     * Number of hole continua of a block.
     */
    continua(block: number): number;
    /**
     * Endpoint pairs of all hole edges.
     */
    hole_edges(): Uint32Array;
    constructor(holes_per_side: number, seed: number, coarse: number);
    /**
     * Node coordinates, `x0, y0, x1, y1, …`.
     */
    nodes(): Float64Array;
    triangles(): Uint32Array;
}

export class DemoComparison {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    coarse(): Float64Array;
    fine(): Float64Array;
    readonly dof_c: number;
    readonly dof_f: number;
    readonly error_percent: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_democomparison_free: (a: number, b: number) => void;
    readonly demo_basis: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_block_at: (a: number, b: number, c: number) => number;
    readonly demo_coarse_size: (a: number) => number;
    readonly demo_compare: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_continua: (a: number, b: number) => number;
    readonly demo_hole_edges: (a: number) => [number, number];
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_nodes: (a: number) => [number, number];
    readonly demo_triangles: (a: number) => [number, number];
    readonly democomparison_coarse: (a: number) => [number, number];
    readonly democomparison_dof_c: (a: number) => number;
    readonly democomparison_dof_f: (a: number) => number;
    readonly democomparison_error_percent: (a: number) => number;
    readonly democomparison_fine: (a: number) => [number, number];
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
