"""Multidimensional queries over the star schema.

A QuerySpec places dimensions at chosen hierarchy levels on two axes, slices
with filters, and names measures; the engine folds matching facts into a
CellSet (present combinations only; absent cells stay absent). Queries route
through a registered aggregate table when one covers the query's grain and
filters, except for the distinct-patient rates, which are non-additive and
always compute from base facts.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from ..dimensions import (
    DIM_FOR,
    attr_level,
    date_parts,
    level_attr,
    level_index,
    level_names,
    path_levels,
    resolve_attr,
)
from ..errors import (
    AtCoarsestLevel,
    AtFinestLevel,
    InvalidSpec,
    UnknownAttribute,
    UnknownMember,
)
from ..warehouse import Warehouse
from ..warehouse.store import build_predicate
from .cubes import CubeDefinition, catalog, define_cube

_OPS = ("eq", "in", "between")


@dataclass(frozen=True)
class Filter:
    dimension: str
    attribute: str  # attribute or level name
    op: str
    value: object

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "attribute": self.attribute,
                "op": self.op, "value": self.value}


@dataclass
class QuerySpec:
    cube_id: str
    rows: list[tuple[str, str]] = field(default_factory=list)
    columns: list[tuple[str, str]] = field(default_factory=list)
    measures: list[str] = field(default_factory=list)
    filters: list[Filter] = field(default_factory=list)
    order_by: dict | None = None  # {"measure": ..., "direction": "asc"|"desc"}
    limit: int | None = None

    def to_dict(self) -> dict:
        return {
            "cube_id": self.cube_id,
            "rows": [{"dimension": d, "level": l} for d, l in self.rows],
            "columns": [{"dimension": d, "level": l} for d, l in self.columns],
            "measures": list(self.measures),
            "filters": [f.to_dict() for f in self.filters],
            "order_by": self.order_by,
            "limit": self.limit,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuerySpec":
        if not isinstance(data, dict):
            raise InvalidSpec("query spec must be a JSON object")

        def axis(name: str) -> list[tuple[str, str]]:
            entries = data.get(name, [])
            if not isinstance(entries, list):
                raise InvalidSpec(f"{name} must be a list")
            out = []
            for e in entries:
                if not isinstance(e, dict) or "dimension" not in e or "level" not in e:
                    raise InvalidSpec(f"{name} entries need dimension and level")
                out.append((e["dimension"], e["level"]))
            return out

        filters = []
        for f in data.get("filters", []):
            if not isinstance(f, dict):
                raise InvalidSpec("filters must be objects")
            missing = {"dimension", "attribute", "op", "value"} - set(f)
            if missing:
                raise InvalidSpec(f"filter missing fields: {sorted(missing)}")
            filters.append(Filter(f["dimension"], f["attribute"], f["op"], f["value"]))
        return cls(
            cube_id=data.get("cube_id", ""),
            rows=axis("rows"),
            columns=axis("columns"),
            measures=list(data.get("measures", [])),
            filters=filters,
            order_by=data.get("order_by"),
            limit=data.get("limit"),
        )


@dataclass
class CellSet:
    cube_id: str
    measures: list[str]
    row_axis: list[list[dict]]
    column_axis: list[list[dict]]
    cells: list[list[dict | None]]
    row_totals: list[dict | None]
    column_totals: list[dict | None]
    grand_total: dict | None

    def to_dict(self) -> dict:
        return {
            "cube_id": self.cube_id,
            "measures": self.measures,
            "row_axis": self.row_axis,
            "column_axis": self.column_axis,
            "cells": self.cells,
            "row_totals": self.row_totals,
            "column_totals": self.column_totals,
            "grand_total": self.grand_total,
        }


@dataclass
class QueryPlan:
    access_path: str  # "base_scan" | "aggregate"
    aggregate_id: str | None
    reason: str

    def to_dict(self) -> dict:
        return {"access_path": self.access_path, "aggregate_id": self.aggregate_id,
                "reason": self.reason}


class CubeEngine:
    """Read-only query engine over one opened warehouse snapshot."""

    def __init__(self, warehouse: Warehouse):
        self.warehouse = warehouse
        self._member_cache: dict[tuple[str, str], set[tuple]] = {}

    # -- catalog -----------------------------------------------------------

    def catalog(self) -> dict:
        return catalog()

    # -- validation --------------------------------------------------------

    def validate(self, spec: QuerySpec) -> CubeDefinition:
        cube = define_cube(spec.cube_id)
        seen_dims: set[str] = set()
        for axis_name, entries in (("rows", spec.rows), ("columns", spec.columns)):
            for dim, level in entries:
                if dim == "patient":
                    raise InvalidSpec("patient attributes are slicers, not axes")
                if dim not in cube.dimensions:
                    raise InvalidSpec(f"cube {cube.cube_id!r} has no dimension {dim!r}")
                if level not in cube.dimensions[dim]:
                    raise InvalidSpec(f"dimension {dim!r} has no level {level!r}")
                if dim in seen_dims:
                    raise InvalidSpec(f"dimension {dim!r} appears on more than one axis entry")
                seen_dims.add(dim)
        if not spec.measures:
            raise InvalidSpec("measures must be non-empty")
        for measure in spec.measures:
            if measure not in cube.measures:
                raise InvalidSpec(f"unknown measure {measure!r} for cube {cube.cube_id!r}")
        for f in spec.filters:
            if f.op not in _OPS:
                raise InvalidSpec(f"filter op {f.op!r} not in {list(_OPS)}")
            if f.dimension != "patient" and f.dimension not in cube.dimensions:
                raise InvalidSpec(f"cube {cube.cube_id!r} has no dimension {f.dimension!r}")
            try:
                self.warehouse.check_attribute(cube.fact_table, f.dimension, f.attribute)
            except UnknownAttribute as exc:
                raise InvalidSpec(str(exc))
            if f.op == "between" and not (isinstance(f.value, (list, tuple)) and len(f.value) == 2):
                raise InvalidSpec("between filter needs a [low, high] pair")
            if f.op == "in" and not isinstance(f.value, (list, tuple)):
                raise InvalidSpec("in filter needs a list of values")
        if spec.order_by is not None:
            measure = spec.order_by.get("measure") if isinstance(spec.order_by, dict) else None
            if measure not in spec.measures:
                raise InvalidSpec("order_by.measure must be one of the requested measures")
            if spec.order_by.get("direction", "asc") not in ("asc", "desc"):
                raise InvalidSpec("order_by.direction must be asc or desc")
        if spec.limit is not None and (not isinstance(spec.limit, int) or spec.limit < 0):
            raise InvalidSpec("limit must be a non-negative integer")
        return cube

    # -- planning ----------------------------------------------------------

    def plan(self, spec: QuerySpec) -> QueryPlan:
        cube = self.validate(spec)
        for measure in spec.measures:
            derived = cube.derived.get(measure)
            if derived is not None and derived.is_distinct_rate:
                return QueryPlan("base_scan", None,
                                 f"{measure} needs distinct patients (non-additive)")
        needs: dict[str, int] = {}
        for dim, level in list(spec.rows) + list(spec.columns):
            needs[dim] = max(needs.get(dim, -1), level_index(dim, level))
        for f in spec.filters:
            if f.dimension == "patient":
                return QueryPlan("base_scan", None,
                                 f"filter on patient.{f.attribute} is not in any aggregate grain")
            level = attr_level(f.dimension, f.attribute)
            if level is None:
                return QueryPlan("base_scan", None,
                                 f"filter on {f.dimension}.{f.attribute} is not a hierarchy level")
            needs[f.dimension] = max(needs.get(f.dimension, -1),
                                     level_index(f.dimension, level))

        candidates = []
        for agg in self.warehouse.fresh_aggregates(cube.fact_table):
            covered = all(
                agg.grain.get(dim) is not None
                and level_index(dim, agg.grain[dim]) >= needed
                for dim, needed in needs.items()
            )
            if covered:
                candidates.append(agg)
        if not candidates:
            return QueryPlan("base_scan", None, "no fresh aggregate covers the query grain")
        best = min(candidates, key=lambda a: (a.n_rows, a.agg_id))
        return QueryPlan("aggregate", best.agg_id,
                         f"covers grain with {best.n_rows} rows")

    # -- querying ----------------------------------------------------------

    def query(self, spec: QuerySpec | dict, force_base_scan: bool = False) -> CellSet:
        if isinstance(spec, dict):
            spec = QuerySpec.from_dict(spec)
        cube = self.validate(spec)
        plan = QueryPlan("base_scan", None, "forced") if force_base_scan else self.plan(spec)
        if plan.access_path == "aggregate":
            rows = self._aggregate_rows(plan.aggregate_id, spec)
            source = "aggregate"
        else:
            rows = self.warehouse.scan(
                cube.fact_table,
                [(f.dimension, f.attribute, f.op, f.value) for f in spec.filters],
            )
            source = "base"
        return self._fold(spec, cube, rows, source)

    def _aggregate_rows(self, agg_id: str, spec: QuerySpec) -> list[dict]:
        agg = self.warehouse.aggregates[agg_id]
        rows = []
        for i in range(agg.n_rows):
            rows.append({col: values[i] for col, values in agg.columns.items()})
        normalized = [(f.dimension, resolve_attr(f.dimension, f.attribute), f.op, f.value)
                      for f in spec.filters]
        predicate = build_predicate(normalized)
        return [r for r in rows if predicate(r)]

    def _fold(self, spec: QuerySpec, cube: CubeDefinition,
              source_rows: list[dict], source: str) -> CellSet:
        additive_all = {**cube.additive, **cube.internal_additive}
        needed: list[str] = []
        want_patients = False
        for measure in spec.measures:
            if measure in cube.additive:
                needed.append(measure)
            else:
                derived = cube.derived[measure]
                if derived.is_distinct_rate:
                    want_patients = True
                else:
                    needed.extend([derived.numerator, derived.denominator])
        needed = list(dict.fromkeys(needed))
        col_of = {m: additive_all[m][0 if source == "base" else 1] for m in needed}

        row_keys_of = [_path_keys(dim, level) for dim, level in spec.rows]
        col_keys_of = [_path_keys(dim, level) for dim, level in spec.columns]

        groups: dict[tuple, dict] = {}
        for row in source_rows:
            rk = tuple(tuple(row[k] for k in keys) for keys in row_keys_of)
            ck = tuple(tuple(row[k] for k in keys) for keys in col_keys_of)
            acc = groups.get((rk, ck))
            if acc is None:
                acc = {"sums": {m: 0 for m in needed}}
                if want_patients:
                    acc["patients"] = set()
                    acc["dead"] = set()
                    acc["remitted"] = set()
                groups[(rk, ck)] = acc
            sums = acc["sums"]
            for m in needed:
                sums[m] += row[col_of[m]]
            if want_patients:
                pid = row["patient.national_id"]
                acc["patients"].add(pid)
                if row["death_flag"]:
                    acc["dead"].add(pid)
                if row["remission_flag"]:
                    acc["remitted"].add(pid)

        row_axis_keys = sorted({rk for rk, _ck in groups})
        col_axis_keys = sorted({ck for _rk, ck in groups})

        if spec.order_by is not None and row_axis_keys:
            measure = spec.order_by["measure"]
            reverse = spec.order_by.get("direction", "asc") == "desc"
            values = {}
            for rk in row_axis_keys:
                merged = _merge_accs([groups[(rk, ck)] for ck in col_axis_keys
                                      if (rk, ck) in groups], needed, want_patients)
                value = self._measure_value(cube, measure, merged)
                values[rk] = 0 if value is None else value
            row_axis_keys.sort(key=lambda rk: values[rk], reverse=reverse)  # stable
        if spec.limit is not None:
            row_axis_keys = row_axis_keys[: spec.limit]

        cells: list[list[dict | None]] = []
        row_totals: list[dict | None] = []
        col_accs: list[list[dict]] = [[] for _ in col_axis_keys]
        all_accs: list[dict] = []
        for rk in row_axis_keys:
            row_cells: list[dict | None] = []
            present: list[dict] = []
            for j, ck in enumerate(col_axis_keys):
                acc = groups.get((rk, ck))
                if acc is None:
                    row_cells.append(None)
                    continue
                row_cells.append(self._cell_values(cube, spec.measures, acc))
                present.append(acc)
                col_accs[j].append(acc)
                all_accs.append(acc)
            cells.append(row_cells)
            row_totals.append(self._total_values(cube, spec.measures, present,
                                                 needed, want_patients))
        column_totals = [self._total_values(cube, spec.measures, accs, needed, want_patients)
                         for accs in col_accs]
        grand_total = self._total_values(cube, spec.measures, all_accs, needed, want_patients)

        return CellSet(
            cube_id=spec.cube_id,
            measures=list(spec.measures),
            row_axis=[_axis_tuples(spec.rows, rk) for rk in row_axis_keys],
            column_axis=[_axis_tuples(spec.columns, ck) for ck in col_axis_keys],
            cells=cells,
            row_totals=row_totals,
            column_totals=column_totals,
            grand_total=grand_total,
        )

    def _cell_values(self, cube: CubeDefinition, measures: list[str], acc: dict) -> dict:
        out = {}
        for measure in measures:
            out[measure] = self._measure_value(cube, measure, acc)
        return out

    def _total_values(self, cube: CubeDefinition, measures: list[str],
                      accs: list[dict], needed: list[str], want_patients: bool) -> dict | None:
        if not accs:
            return None
        return self._cell_values(cube, measures, _merge_accs(accs, needed, want_patients))

    def _measure_value(self, cube: CubeDefinition, measure: str, acc: dict):
        if measure in cube.additive:
            return acc["sums"][measure]
        derived = cube.derived[measure]
        if derived.is_distinct_rate:
            patients = acc["patients"]
            if not patients:
                return None
            flagged = acc["dead"] if derived.distinct_flag == "death" else acc["remitted"]
            return len(flagged) / len(patients)
        denominator = acc["sums"][derived.denominator]
        if denominator == 0:
            return None
        return acc["sums"][derived.numerator] * derived.scale / denominator

    # -- navigation --------------------------------------------------------

    def drill_down(self, spec: QuerySpec | dict, axis: str, member_path: list,
                   dimension: str | None = None) -> QuerySpec:
        """One level finer on an axis dimension, pinned to the member's subtree."""
        if isinstance(spec, dict):
            spec = QuerySpec.from_dict(spec)
        self.validate(spec)
        entries, index, dim, level = self._axis_entry(spec, axis, dimension)
        names = level_names(dim)
        if level == names[-1]:
            raise AtFinestLevel(f"{dim!r} is already at its finest level {level!r}")
        child = names[names.index(level) + 1]
        path = list(member_path)
        plevels = path_levels(dim, level)
        if len(path) != len(plevels):
            raise UnknownMember(
                f"member path for {dim}@{level} needs {len(plevels)} values, got {len(path)}")
        if tuple(path) not in self._members(dim, level):
            raise UnknownMember(f"no member {path} at {dim}@{level}")

        new_spec = copy.deepcopy(spec)
        new_entries = new_spec.rows if axis == "rows" else new_spec.columns
        new_entries[index] = (dim, child)
        for lvl, value in zip(plevels, path):
            f = Filter(dim, lvl, "eq", value)
            if f not in new_spec.filters:
                new_spec.filters.append(f)
        self.validate(new_spec)
        return new_spec

    def roll_up(self, spec: QuerySpec | dict, axis: str,
                dimension: str | None = None) -> QuerySpec:
        """One level coarser on an axis dimension; drops that dimension's filters."""
        if isinstance(spec, dict):
            spec = QuerySpec.from_dict(spec)
        self.validate(spec)
        entries, index, dim, level = self._axis_entry(spec, axis, dimension)
        names = level_names(dim)
        if level == names[0]:
            raise AtCoarsestLevel(f"{dim!r} is already at its coarsest level {level!r}")
        parent = names[names.index(level) - 1]
        new_spec = copy.deepcopy(spec)
        new_entries = new_spec.rows if axis == "rows" else new_spec.columns
        new_entries[index] = (dim, parent)
        new_spec.filters = [f for f in new_spec.filters if f.dimension != dim]
        self.validate(new_spec)
        return new_spec

    def _axis_entry(self, spec: QuerySpec, axis: str, dimension: str | None):
        if axis not in ("rows", "columns"):
            raise InvalidSpec(f"axis must be rows or columns, not {axis!r}")
        entries = spec.rows if axis == "rows" else spec.columns
        if not entries:
            raise InvalidSpec(f"the {axis} axis has no dimensions")
        if dimension is None:
            index = len(entries) - 1
        else:
            matches = [i for i, (d, _l) in enumerate(entries) if d == dimension]
            if not matches:
                raise InvalidSpec(f"dimension {dimension!r} is not on the {axis} axis")
            index = matches[0]
        dim, level = entries[index]
        return entries, index, dim, level

    def _members(self, dim: str, level: str) -> set[tuple]:
        cached = self._member_cache.get((dim, level))
        if cached is not None:
            return cached
        attrs = [level_attr(dim, lvl) for lvl in path_levels(dim, level)]
        members: set[tuple] = set()
        if dim == "date":
            for date_key in self.warehouse.tables["dim_date"].columns["date_key"]:
                parts = date_parts(date_key)
                members.add(tuple(parts[a] for a in attrs))
        else:
            table = self.warehouse.tables[DIM_FOR[dim]]
            for i in range(table.n_rows):
                members.add(tuple(table.columns[a][i] for a in attrs))
        self._member_cache[(dim, level)] = members
        return members


def _path_keys(dim: str, level: str) -> list[str]:
    return [f"{dim}.{level_attr(dim, lvl)}" for lvl in path_levels(dim, level)]


def _axis_tuples(entries: list[tuple[str, str]], key: tuple) -> list[dict]:
    out = []
    for (dim, level), values in zip(entries, key):
        out.append({
            "dimension": dim,
            "level": level,
            "path": {lvl: value for lvl, value in zip(path_levels(dim, level), values)},
        })
    return out


def _merge_accs(accs: list[dict], needed: list[str], want_patients: bool) -> dict:
    merged: dict = {"sums": {m: 0 for m in needed}}
    if want_patients:
        merged["patients"] = set()
        merged["dead"] = set()
        merged["remitted"] = set()
    for acc in accs:
        for m in needed:
            merged["sums"][m] += acc["sums"][m]
        if want_patients:
            merged["patients"] |= acc["patients"]
            merged["dead"] |= acc["dead"]
            merged["remitted"] |= acc["remitted"]
    return merged
