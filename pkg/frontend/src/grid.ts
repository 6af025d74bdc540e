/**
 * CellSet -> renderable grid model.
 *
 * The model keeps the payload's cell values untouched (formatting happens at
 * paint time), so a grid is checkable byte-for-byte against the API response.
 */

import type { AxisMember, Cell, CellSet } from "./types.js";
import { memberLabel } from "./format.js";

export interface GridHeader {
  label: string;
  /** member path of the innermost dimension, for drill requests */
  memberPath: (string | number)[];
  drillable: boolean;
}

export interface GridModel {
  measures: string[];
  rowHeaders: GridHeader[];
  columnHeaders: GridHeader[];
  cells: Cell[][];
  rowTotals: Cell[];
  columnTotals: Cell[];
  grandTotal: Cell;
  empty: boolean;
}

export function tupleLabel(tuple: AxisMember[]): string {
  if (tuple.length === 0) return "(all)";
  return tuple
    .map((member) => memberLabel(member.level, member.path[member.level]))
    .join(" / ");
}

function header(tuple: AxisMember[], hierarchies: Record<string, string[]>): GridHeader {
  const innermost = tuple[tuple.length - 1];
  let memberPath: (string | number)[] = [];
  let drillable = false;
  if (innermost) {
    const levels = hierarchies[innermost.dimension] ?? [];
    memberPath = levels
      .slice(0, levels.indexOf(innermost.level) + 1)
      .map((level) => innermost.path[level]);
    drillable = levels.indexOf(innermost.level) < levels.length - 1;
  }
  return { label: tupleLabel(tuple), memberPath, drillable };
}

export function buildGrid(cellset: CellSet, hierarchies: Record<string, string[]>): GridModel {
  const rowHeaders = cellset.row_axis.map((tuple) => header(tuple, hierarchies));
  const columnHeaders = cellset.column_axis.map((tuple) => header(tuple, hierarchies));
  const hasValue = cellset.cells.some((row) => row.some((cell) => cell !== null));
  return {
    measures: cellset.measures,
    rowHeaders,
    columnHeaders,
    cells: cellset.cells,
    rowTotals: cellset.row_totals,
    columnTotals: cellset.column_totals,
    grandTotal: cellset.grand_total,
    empty: !hasValue,
  };
}
