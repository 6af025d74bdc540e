/**
 * DOM wiring for the pivot explorer and the three report pages.
 *
 * All aggregation happens server-side; this file only shapes requests from
 * form state and paints payloads. Clicking a drillable header issues
 * /api/drill then re-queries; back replays the stored spec verbatim.
 */

import { ApiClient, ApiError } from "./api.js";
import { lineChartSvg } from "./chart.js";
import { ABSENT, formatMeasure } from "./format.js";
import { buildGrid, GridModel } from "./grid.js";
import {
  ExplorerState,
  canGoBack,
  initialState,
  popBack,
  pushDrill,
  resetTo,
  withResult,
} from "./state.js";
import type { Catalog, CatalogCube, QuerySpec, SpecFilter } from "./types.js";

const api = new ApiClient("");
let catalog: Catalog | null = null;
let state: ExplorerState | null = null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(target: HTMLElement, error: unknown): void {
  const box = el("div", { class: "error" });
  if (error instanceof ApiError) {
    box.textContent = `${error.code}: ${error.message}`;
  } else if (error instanceof Error && error.name === "AbortError") {
    return; // superseded by a newer request
  } else {
    box.textContent = String(error);
  }
  target.replaceChildren(box);
}

function currentCube(): CatalogCube {
  const cubeId = byId<HTMLSelectElement>("cube").value;
  const cube = catalog!.cubes.find((c) => c.cube_id === cubeId);
  if (!cube) throw new Error(`unknown cube ${cubeId}`);
  return cube;
}

// -- pivot form --------------------------------------------------------------

function fillSelect(select: HTMLSelectElement, values: string[], keep = false): void {
  const previous = select.value;
  select.replaceChildren(...values.map((v) => el("option", { value: v }, v)));
  if (keep && values.includes(previous)) select.value = previous;
}

function rebuildPivotForm(): void {
  const cube = currentCube();
  const dims = Object.keys(cube.dimensions);
  fillSelect(byId<HTMLSelectElement>("row-dim"), dims, true);
  fillSelect(byId<HTMLSelectElement>("col-dim"), ["(none)", ...dims], true);
  rebuildLevelSelect("row");
  rebuildLevelSelect("col");
  const measures = byId<HTMLDivElement>("measures");
  measures.replaceChildren();
  const all = [...cube.measures.additive, ...cube.measures.derived];
  all.forEach((measure, i) => {
    const label = el("label", { class: "measure" });
    const box = el("input", { type: "checkbox", value: measure });
    (box as HTMLInputElement).checked = i === 0;
    label.append(box, document.createTextNode(measure));
    measures.append(label);
  });
}

function rebuildLevelSelect(which: "row" | "col"): void {
  const cube = currentCube();
  const dim = byId<HTMLSelectElement>(`${which}-dim`).value;
  const levels = dim === "(none)" ? [] : cube.dimensions[dim] ?? [];
  fillSelect(byId<HTMLSelectElement>(`${which}-level`), levels, true);
}

function specFromForm(): QuerySpec {
  const cube = currentCube();
  const rows = [{
    dimension: byId<HTMLSelectElement>("row-dim").value,
    level: byId<HTMLSelectElement>("row-level").value,
  }];
  const colDim = byId<HTMLSelectElement>("col-dim").value;
  const columns = colDim === "(none)" ? [] : [{
    dimension: colDim,
    level: byId<HTMLSelectElement>("col-level").value,
  }];
  const measures = Array.from(
    byId<HTMLDivElement>("measures").querySelectorAll("input:checked"),
  ).map((input) => (input as HTMLInputElement).value);

  const filters: SpecFilter[] = [];
  const gender = byId<HTMLSelectElement>("slicer-gender").value;
  if (gender) filters.push({ dimension: "patient", attribute: "gender", op: "eq", value: gender });
  const blood = byId<HTMLSelectElement>("slicer-blood").value;
  if (blood) filters.push({ dimension: "patient", attribute: "blood_group", op: "eq", value: blood });
  const from = byId<HTMLInputElement>("slicer-from").value;
  const to = byId<HTMLInputElement>("slicer-to").value;
  if (from && to) {
    filters.push({ dimension: "date", attribute: "year", op: "between",
                   value: [Number(from), Number(to)] });
  }
  return { cube_id: cube.cube_id, rows, columns, measures, filters,
           order_by: null, limit: null };
}

// -- pivot rendering ---------------------------------------------------------

function renderBreadcrumb(): void {
  const crumb = byId<HTMLDivElement>("breadcrumb");
  crumb.replaceChildren();
  if (!state) return;
  const back = byId<HTMLButtonElement>("back");
  back.disabled = !canGoBack(state);
  if (state.breadcrumb.length) {
    crumb.textContent = "drilled into: " + state.breadcrumb.join(" → ");
  }
}

function renderGrid(model: GridModel): void {
  const target = byId<HTMLDivElement>("grid");
  if (model.empty && model.rowHeaders.length === 0) {
    target.replaceChildren(el("div", { class: "empty" },
      "no facts match this query"));
    return;
  }
  const table = el("table", { class: "pivot" });
  const head = el("thead");
  const headRow = el("tr");
  headRow.append(el("th", {}, ""));
  model.columnHeaders.forEach((column) => {
    const th = el("th", { class: column.drillable ? "drillable" : "" }, column.label);
    if (column.drillable) {
      th.title = "drill down";
      th.addEventListener("click", () => drill("columns", column.memberPath, column.label));
    }
    headRow.append(th);
  });
  headRow.append(el("th", { class: "total" }, "total"));
  head.append(headRow);
  table.append(head);

  const body = el("tbody");
  model.cells.forEach((rowCells, i) => {
    const tr = el("tr");
    const rowHeader = model.rowHeaders[i];
    const th = el("th", { class: rowHeader.drillable ? "drillable" : "" }, rowHeader.label);
    if (rowHeader.drillable) {
      th.title = "drill down";
      th.addEventListener("click", () => drill("rows", rowHeader.memberPath, rowHeader.label));
    }
    tr.append(th);
    rowCells.forEach((cell) => tr.append(cellNode(model.measures, cell)));
    tr.append(cellNode(model.measures, model.rowTotals[i], "total"));
    body.append(tr);
  });
  const totals = el("tr", { class: "total" });
  totals.append(el("th", {}, "total"));
  model.columnTotals.forEach((cell) => totals.append(cellNode(model.measures, cell, "total")));
  totals.append(cellNode(model.measures, model.grandTotal, "total grand"));
  body.append(totals);
  table.append(body);
  target.replaceChildren(table);
}

function cellNode(measures: string[], cell: Record<string, number | null> | null,
                  cls = ""): HTMLTableCellElement {
  const td = el("td", { class: cls });
  if (cell === null || cell === undefined) {
    td.textContent = ABSENT;
    return td;
  }
  measures.forEach((measure) => {
    const line = el("div", { class: "value" });
    line.textContent = measures.length > 1
      ? `${measure}: ${formatMeasure(measure, cell[measure])}`
      : formatMeasure(measure, cell[measure]);
    td.append(line);
  });
  return td;
}

async function runQuery(): Promise<void> {
  if (!state) return;
  const status = byId<HTMLDivElement>("pivot-status");
  status.textContent = "querying…";
  try {
    const result = await api.query(state.spec);
    state = withResult(state, result);
    renderGrid(buildGrid(result, catalog!.hierarchies));
    status.textContent = `${result.row_axis.length} rows × ` +
      `${result.column_axis.length} columns`;
  } catch (error) {
    showError(byId("grid"), error);
    status.textContent = "";
  }
  renderBreadcrumb();
}

async function drill(axis: "rows" | "columns", memberPath: (string | number)[],
                      label: string): Promise<void> {
  if (!state) return;
  try {
    const drilled = await api.drill(state.spec, axis, memberPath);
    state = pushDrill(state, drilled, label);
    await runQuery();
  } catch (error) {
    showError(byId("grid"), error);
  }
}

// -- report pages ------------------------------------------------------------

interface ReportPage {
  id: string;
  paramIds: Record<string, string>;
  columns: string[];
}

const REPORT_PAGES: ReportPage[] = [
  {
    id: "treatment-cost",
    paramIds: { from: "tc-from", to: "tc-to", group_by: "tc-group" },
    columns: ["site", "type", "stage", "event_count", "sum_cost_display", "avg_cost_display"],
  },
  {
    id: "death-rate",
    paramIds: { cancer_type: "dr-type", from: "dr-from", to: "dr-to" },
    columns: ["breakdown", "label", "event_count", "death_rate_display"],
  },
  {
    id: "drug-impact",
    paramIds: { drug_code: "di-drug", cancer_type: "di-type", from: "di-from", to: "di-to" },
    columns: ["cohort", "drugs", "event_count", "remission_rate_display", "death_rate_display"],
  },
];

async function runReport(page: ReportPage): Promise<void> {
  const target = byId<HTMLDivElement>(`${page.id}-result`);
  const params: Record<string, string> = {};
  for (const [name, id] of Object.entries(page.paramIds)) {
    params[name] = byId<HTMLInputElement>(id).value.trim();
  }
  try {
    const result = await api.report(page.id, params);
    const table = el("table", { class: "report" });
    const head = el("tr");
    page.columns.forEach((c) => head.append(el("th", {}, c)));
    table.append(el("thead", {}), head);
    result.table.forEach((row) => {
      const tr = el("tr");
      page.columns.forEach((column) => {
        const value = row[column];
        tr.append(el("td", {}, value === null || value === undefined ? ABSENT : String(value)));
      });
      table.append(tr);
    });
    const chart = el("div", { class: "chart-box" });
    chart.innerHTML = lineChartSvg(result.series);
    const meta = el("div", { class: "meta" },
      `manifest v${result.manifest_version}, generated ${result.generated_at}`);
    target.replaceChildren(table, chart, meta);
    if (result.table.length === 0) {
      target.prepend(el("div", { class: "empty" }, "no data in period"));
    }
  } catch (error) {
    showError(target, error);
  }
}

// -- boot --------------------------------------------------------------------

function switchTab(name: string): void {
  document.querySelectorAll<HTMLElement>(".page").forEach((page) => {
    page.hidden = page.id !== `page-${name}`;
  });
  document.querySelectorAll<HTMLElement>("nav button").forEach((button) => {
    button.classList.toggle("active", button.dataset.page === name);
  });
}

export async function boot(): Promise<void> {
  document.querySelectorAll<HTMLElement>("nav button").forEach((button) => {
    button.addEventListener("click", () => switchTab(button.dataset.page!));
  });
  byId<HTMLInputElement>("actor").addEventListener("change", (event) => {
    api.actor = (event.target as HTMLInputElement).value.trim() || "anonymous";
  });

  try {
    catalog = await api.catalog();
  } catch (error) {
    showError(byId("grid"), error);
    return;
  }
  fillSelect(byId<HTMLSelectElement>("cube"), catalog.cubes.map((c) => c.cube_id));
  rebuildPivotForm();
  byId<HTMLSelectElement>("cube").addEventListener("change", rebuildPivotForm);
  byId<HTMLSelectElement>("row-dim").addEventListener("change", () => rebuildLevelSelect("row"));
  byId<HTMLSelectElement>("col-dim").addEventListener("change", () => rebuildLevelSelect("col"));

  state = initialState(specFromForm(), api.actor);
  byId<HTMLButtonElement>("run").addEventListener("click", async () => {
    state = resetTo(state!, specFromForm());
    await runQuery();
  });
  byId<HTMLButtonElement>("back").addEventListener("click", async () => {
    state = popBack(state!);
    await runQuery();
  });
  REPORT_PAGES.forEach((page) => {
    byId<HTMLButtonElement>(`${page.id}-run`).addEventListener("click", () => runReport(page));
  });
  switchTab("pivot");
  await runQuery();
}
