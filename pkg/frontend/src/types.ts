/** JSON contracts of the warehouse service. Field names mirror the API exactly. */

export interface AxisEntry {
  dimension: string;
  level: string;
}

export interface SpecFilter {
  dimension: string;
  attribute: string;
  op: "eq" | "in" | "between";
  value: unknown;
}

export interface QuerySpec {
  cube_id: string;
  rows: AxisEntry[];
  columns: AxisEntry[];
  measures: string[];
  filters: SpecFilter[];
  order_by: { measure: string; direction: "asc" | "desc" } | null;
  limit: number | null;
}

export interface AxisMember {
  dimension: string;
  level: string;
  path: Record<string, string | number>;
}

/** One cell: measure name -> value; null means no facts (absent, not zero). */
export type Cell = Record<string, number | null> | null;

export interface CellSet {
  cube_id: string;
  measures: string[];
  row_axis: AxisMember[][];
  column_axis: AxisMember[][];
  cells: Cell[][];
  row_totals: Cell[];
  column_totals: Cell[];
  grand_total: Cell;
}

export interface CatalogCube {
  cube_id: string;
  fact_table: string;
  dimensions: Record<string, string[]>;
  slicers: string[];
  measures: { additive: string[]; derived: string[] };
}

export interface Catalog {
  cubes: CatalogCube[];
  hierarchies: Record<string, string[]>;
  manifest_version: number;
}

export interface ReportPoint {
  period: string;
  value: number | null;
}

export interface ReportResult {
  report_id: string;
  parameters: Record<string, unknown>;
  table: Record<string, unknown>[];
  series: ReportPoint[];
  generated_at: string;
  manifest_version: number;
  metadata: Record<string, unknown>;
}

export interface AccessLogEntry {
  timestamp: string;
  actor: string;
  operation: string;
  request_digest: string;
  duration_ms: number;
  outcome: string;
}
