/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Row-major cell codes: 0 free, 1 start/landing, 2 no-fly zone, 3 building.
     */
    cells(): Uint8Array;
    /**
     * One map layer (`building`, `nfz` or `start`) as the centred agent
     * sees it from `(x, y)`: side `2m - 1`, row-major.
     */
    centered(layer: string, x: number, y: number): Float32Array;
    /**
     * `name` is `manhattan`, `open_city` or `toy`; anything else is parsed
     * as map text.
     */
    constructor(name: string);
    /**
     * Rate of the device at `(x, y)` with the UAV hovering over each cell,
     * without shadow fading.
     */
    rate_map(x: number, y: number): Float64Array;
    set_altitude(altitude: number): void;
    /**
     * Row-major line-of-sight flags (1 = LoS) between a device at `(x, y)`
     * and the UAV over each cell.
     */
    shadow(x: number, y: number): Uint8Array;
    size(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_cells: (a: number) => [number, number];
    readonly demo_centered: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_rate_map: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_set_altitude: (a: number, b: number) => void;
    readonly demo_shadow: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_size: (a: number) => number;
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
