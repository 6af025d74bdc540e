import { describe, expect, it } from "vitest";

import { canGoBack, initialState, popBack, pushDrill, resetTo } from "../src/state.js";
import type { QuerySpec } from "../src/types.js";

function yearSpec(): QuerySpec {
  return {
    cube_id: "treatment",
    rows: [{ dimension: "date", level: "year" }],
    columns: [],
    measures: ["event_count"],
    filters: [],
    order_by: null,
    limit: null,
  };
}

function quarterSpec(): QuerySpec {
  return {
    ...yearSpec(),
    rows: [{ dimension: "date", level: "quarter" }],
    filters: [{ dimension: "date", attribute: "year", op: "eq", value: 2012 }],
  };
}

describe("explorer state", () => {
  it("drill pushes the prior spec and back replays it verbatim", () => {
    const original = yearSpec();
    let state = initialState(original, "dr_a");
    state = pushDrill(state, quarterSpec(), "2012");
    expect(state.spec.rows[0].level).toBe("quarter");
    expect(state.breadcrumb).toEqual(["2012"]);
    expect(canGoBack(state)).toBe(true);

    state = popBack(state);
    expect(state.spec).toBe(original); // the stored object itself, not a rebuild
    expect(state.breadcrumb).toEqual([]);
    expect(canGoBack(state)).toBe(false);
  });

  it("pop on an empty stack is a no-op", () => {
    const state = initialState(yearSpec());
    expect(popBack(state)).toBe(state);
  });

  it("stacked drills unwind in order", () => {
    const first = yearSpec();
    const second = quarterSpec();
    const third: QuerySpec = { ...quarterSpec(), rows: [{ dimension: "date", level: "month" }] };
    let state = initialState(first);
    state = pushDrill(state, second, "2012");
    state = pushDrill(state, third, "Q2");
    expect(state.breadcrumb).toEqual(["2012", "Q2"]);
    state = popBack(state);
    expect(state.spec).toBe(second);
    state = popBack(state);
    expect(state.spec).toBe(first);
  });

  it("reset clears the navigation stack", () => {
    let state = initialState(yearSpec());
    state = pushDrill(state, quarterSpec(), "2012");
    state = resetTo(state, yearSpec());
    expect(state.stack).toEqual([]);
    expect(state.breadcrumb).toEqual([]);
  });

  it("transitions never mutate the previous state", () => {
    const state = initialState(yearSpec());
    const drilled = pushDrill(state, quarterSpec(), "2012");
    expect(state.stack).toEqual([]);
    expect(drilled).not.toBe(state);
    expect(state.spec.rows[0].level).toBe("year");
  });
});
