/**
 * Explorer navigation state: the current spec, a stack of prior specs for
 * back/roll-up, and the drill breadcrumb. Pure data + pure transitions; the
 * stack stores each spec verbatim and back replays it unchanged.
 */

import type { CellSet, QuerySpec } from "./types.js";

export interface ExplorerState {
  actor: string;
  spec: QuerySpec;
  stack: QuerySpec[];
  breadcrumb: string[];
  result: CellSet | null;
}

export function initialState(spec: QuerySpec, actor = "anonymous"): ExplorerState {
  return { actor, spec, stack: [], breadcrumb: [], result: null };
}

export function withResult(state: ExplorerState, result: CellSet): ExplorerState {
  return { ...state, result };
}

/** Push the prior spec and move to the drilled one. */
export function pushDrill(state: ExplorerState, drilled: QuerySpec, label: string): ExplorerState {
  return {
    ...state,
    spec: drilled,
    stack: [...state.stack, state.spec],
    breadcrumb: [...state.breadcrumb, label],
    result: null,
  };
}

/** Pop one level; the restored spec is the stored object, replayed verbatim. */
export function popBack(state: ExplorerState): ExplorerState {
  if (state.stack.length === 0) return state;
  const stack = state.stack.slice(0, -1);
  const spec = state.stack[state.stack.length - 1];
  return {
    ...state,
    spec,
    stack,
    breadcrumb: state.breadcrumb.slice(0, -1),
    result: null,
  };
}

export function canGoBack(state: ExplorerState): boolean {
  return state.stack.length > 0;
}

/** Replace the current spec wholesale (new cube / axes / measures / slicers). */
export function resetTo(state: ExplorerState, spec: QuerySpec): ExplorerState {
  return { ...state, spec, stack: [], breadcrumb: [], result: null };
}
