"""Canned clinical reports built on cube queries.

Every number in a report is the value of a documented QuerySpec (echoed in
result metadata), so report output can be re-derived query by query. Results
are pure functions of (warehouse manifest version, parameters): generated_at
is the manifest's commit timestamp, not the wall clock.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidPeriod, InvalidSpec, UnknownCancerType, UnknownDrug
from .olap import CubeEngine, QuerySpec
from .olap.engine import Filter
from .schema import format_rfc3339
from .transform import millis_to_decimal_string

REPORT_IDS = ("treatment-cost", "death-rate", "drug-impact")

# Fixed CSV column order per report (table section export).
CSV_COLUMNS = {
    "treatment-cost": ["site", "type", "stage", "event_count", "sum_cost_millis",
                       "sum_cost_display", "avg_cost_millis", "avg_cost_display"],
    "death-rate": ["breakdown", "label", "event_count", "death_rate",
                   "death_rate_display"],
    "drug-impact": ["cohort", "drugs", "event_count", "remission_rate",
                    "remission_rate_display", "death_rate", "death_rate_display"],
}


@dataclass
class ReportResult:
    report_id: str
    parameters: dict
    table: list[dict]
    series: list[dict]  # [{"period": "2012-03", "value": ...|None}, ...]
    generated_at: str
    manifest_version: int
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "report_id": self.report_id,
            "parameters": self.parameters,
            "table": self.table,
            "series": self.series,
            "generated_at": self.generated_at,
            "manifest_version": self.manifest_version,
            "metadata": self.metadata,
        }

    def table_csv(self) -> str:
        columns = CSV_COLUMNS[self.report_id]
        lines = [",".join(columns)]
        for row in self.table:
            cells = []
            for col in columns:
                value = row.get(col)
                cells.append("" if value is None else str(value))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def treatment_cost_report(engine: CubeEngine, start_year: int, end_year: int,
                          group_by: str = "type") -> ReportResult:
    """Cost of treatment per cancer group, with a monthly cost series."""
    _check_period(start_year, end_year)
    if group_by not in ("site", "type", "stage"):
        raise InvalidSpec(f"group_by must be a cancer level, not {group_by!r}")
    period_filter = Filter("date", "year", "between", [start_year, end_year])
    table_spec = QuerySpec(
        cube_id="treatment",
        rows=[("cancer", group_by)],
        measures=["sum_cost", "event_count", "avg_cost"],
        filters=[period_filter],
    )
    series_spec = QuerySpec(
        cube_id="treatment",
        rows=[("date", "month")],
        measures=["sum_cost"],
        filters=[period_filter],
    )
    cells = engine.query(table_spec)
    table = []
    for tuple_, cell in zip(cells.row_axis, cells.cells):
        path = tuple_[0]["path"]
        values = cell[0] or {}
        sum_cost = values.get("sum_cost")
        avg_cost = values.get("avg_cost")
        table.append({
            "site": path.get("site"),
            "type": path.get("type"),
            "stage": path.get("stage"),
            "event_count": values.get("event_count"),
            "sum_cost_millis": sum_cost,
            "sum_cost_display": millis_to_decimal_string(sum_cost) if sum_cost is not None else None,
            "avg_cost_millis": avg_cost,
            "avg_cost_display": f"{avg_cost / 1000:.6f}" if avg_cost is not None else None,
        })
    series = _monthly_series(engine, series_spec, "sum_cost", start_year, end_year)
    return _result(engine, "treatment-cost",
                   {"from": start_year, "to": end_year, "group_by": group_by},
                   table, series,
                   {"query_specs": {"table": table_spec.to_dict(),
                                    "series": series_spec.to_dict()},
                    "series_measure": "sum_cost",
                    "units": "sum_cost values are integer millis (1/1000 currency unit)"})


def death_rate_report(engine: CubeEngine, cancer_type: str,
                      start_year: int, end_year: int) -> ReportResult:
    """Death rate for one cancer type: overall, by stage, by age band, yearly."""
    _check_period(start_year, end_year)
    if cancer_type not in set(engine.warehouse.tables["dim_cancer"].columns["type"]):
        raise UnknownCancerType(f"cancer type {cancer_type!r} is not in dim_cancer")
    base_filters = [Filter("cancer", "type", "eq", cancer_type),
                    Filter("date", "year", "between", [start_year, end_year])]
    measures = ["death_rate", "event_count"]
    overall_spec = QuerySpec("treatment", measures=measures, filters=list(base_filters))
    stage_spec = QuerySpec("treatment", rows=[("cancer", "stage")],
                           measures=measures, filters=list(base_filters))
    band_spec = QuerySpec("treatment", rows=[("age_band", "band")],
                          measures=measures, filters=list(base_filters))
    series_spec = QuerySpec("treatment", rows=[("date", "year")],
                            measures=["death_rate"], filters=list(base_filters))

    table = [_rate_row("overall", "", engine.query(overall_spec))]
    stage_cells = engine.query(stage_spec)
    for tuple_, cell in zip(stage_cells.row_axis, stage_cells.cells):
        table.append(_rate_cell_row("stage", tuple_[0]["path"]["stage"], cell[0]))
    band_cells = engine.query(band_spec)
    for tuple_, cell in zip(band_cells.row_axis, band_cells.cells):
        table.append(_rate_cell_row("age_band", tuple_[0]["path"]["band"], cell[0]))

    year_cells = engine.query(series_spec)
    by_year = {t[0]["path"]["year"]: (c[0] or {}).get("death_rate")
               for t, c in zip(year_cells.row_axis, year_cells.cells)}
    series = [{"period": str(year), "value": by_year.get(year)}
              for year in range(start_year, end_year + 1)]
    return _result(engine, "death-rate",
                   {"cancer_type": cancer_type, "from": start_year, "to": end_year},
                   table, series,
                   {"query_specs": {"overall": overall_spec.to_dict(),
                                    "by_stage": stage_spec.to_dict(),
                                    "by_age_band": band_spec.to_dict(),
                                    "series": series_spec.to_dict()},
                    "series_measure": "death_rate",
                    "rate_denominator": "distinct patients in scope"})


def drug_impact_report(engine: CubeEngine, drug_code: str, cancer_type: str,
                       start_year: int, end_year: int) -> ReportResult:
    """Remission/death rates for a drug vs the other drugs of its category."""
    _check_period(start_year, end_year)
    dim = engine.warehouse.tables["dim_treatment"]
    codes = dim.columns["drug_code"]
    if drug_code not in codes:
        raise UnknownDrug(f"drug code {drug_code!r} is not in dim_treatment")
    if cancer_type not in set(engine.warehouse.tables["dim_cancer"].columns["type"]):
        raise UnknownCancerType(f"cancer type {cancer_type!r} is not in dim_cancer")
    category = dim.columns["category"][codes.index(drug_code)]
    comparator_codes = sorted(code for i, code in enumerate(codes)
                              if dim.columns["category"][i] == category and code != drug_code)

    scope = [Filter("cancer", "type", "eq", cancer_type),
             Filter("date", "year", "between", [start_year, end_year])]
    measures = ["remission_rate", "death_rate", "event_count"]
    drug_spec = QuerySpec("treatment", measures=measures,
                          filters=[Filter("treatment", "drug", "eq", drug_code)] + scope)
    comparator_spec = QuerySpec("treatment", measures=measures,
                                filters=[Filter("treatment", "drug", "in", comparator_codes)] + scope)
    series_spec = QuerySpec("treatment", rows=[("date", "month")],
                            measures=["remission_rate"],
                            filters=[Filter("treatment", "drug", "eq", drug_code)] + scope)

    table = [
        _cohort_row("drug", drug_code, engine.query(drug_spec)),
        _cohort_row("comparator", ",".join(comparator_codes), engine.query(comparator_spec)),
    ]
    series = _monthly_series(engine, series_spec, "remission_rate", start_year, end_year)
    return _result(engine, "drug-impact",
                   {"drug_code": drug_code, "cancer_type": cancer_type,
                    "from": start_year, "to": end_year},
                   table, series,
                   {"query_specs": {"drug": drug_spec.to_dict(),
                                    "comparator": comparator_spec.to_dict(),
                                    "series": series_spec.to_dict()},
                    "series_measure": "remission_rate",
                    "comparator": f"other {category} drugs: {comparator_codes}",
                    "cohorts": "exposure cohorts; a patient treated with both the "
                               "drug and a comparator drug is counted in both"})


def _check_period(start_year: int, end_year: int) -> None:
    if start_year > end_year:
        raise InvalidPeriod(f"period start {start_year} is after end {end_year}")


def _monthly_series(engine: CubeEngine, spec: QuerySpec, measure: str,
                    start_year: int, end_year: int) -> list[dict]:
    cells = engine.query(spec)
    by_month = {}
    for tuple_, cell in zip(cells.row_axis, cells.cells):
        path = tuple_[0]["path"]
        by_month[(path["year"], path["month"])] = (cell[0] or {}).get(measure)
    series = []
    for year in range(start_year, end_year + 1):
        for month in range(1, 13):
            series.append({"period": f"{year}-{month:02d}",
                           "value": by_month.get((year, month))})
    return series


def _rate_row(breakdown: str, label: str, cells) -> dict:
    cell = cells.cells[0][0] if cells.cells and cells.cells[0] else None
    return _rate_cell_row(breakdown, label, cell)


def _rate_cell_row(breakdown: str, label, cell: dict | None) -> dict:
    values = cell or {}
    rate = values.get("death_rate")
    return {
        "breakdown": breakdown,
        "label": label,
        "event_count": values.get("event_count"),
        "death_rate": rate,
        "death_rate_display": f"{rate:.6f}" if rate is not None else None,
    }


def _cohort_row(cohort: str, drugs: str, cells) -> dict:
    cell = cells.cells[0][0] if cells.cells and cells.cells[0] else None
    values = cell or {}
    remission = values.get("remission_rate")
    death = values.get("death_rate")
    return {
        "cohort": cohort,
        "drugs": drugs,
        "event_count": values.get("event_count"),
        "remission_rate": remission,
        "remission_rate_display": f"{remission:.6f}" if remission is not None else None,
        "death_rate": death,
        "death_rate_display": f"{death:.6f}" if death is not None else None,
    }


def _result(engine: CubeEngine, report_id: str, parameters: dict, table: list[dict],
            series: list[dict], metadata: dict) -> ReportResult:
    return ReportResult(
        report_id=report_id,
        parameters=parameters,
        table=table,
        series=series,
        generated_at=format_rfc3339(engine.warehouse.committed_at),
        manifest_version=engine.warehouse.version,
        metadata=metadata,
    )


def run_report(engine: CubeEngine, report_id: str, params: dict) -> ReportResult:
    """Dispatch by report id with string params (the HTTP/CLI surface)."""
    start = _int_param(params, "from")
    end = _int_param(params, "to")
    if report_id == "treatment-cost":
        return treatment_cost_report(engine, start, end,
                                     params.get("group_by", "type"))
    if report_id == "death-rate":
        return death_rate_report(engine, _str_param(params, "cancer_type"), start, end)
    if report_id == "drug-impact":
        return drug_impact_report(engine, _str_param(params, "drug_code"),
                                  _str_param(params, "cancer_type"), start, end)
    raise InvalidSpec(f"unknown report {report_id!r}; expected one of {list(REPORT_IDS)}")


def _int_param(params: dict, name: str) -> int:
    value = params.get(name)
    if value is None:
        raise InvalidPeriod(f"missing parameter {name!r}")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise InvalidPeriod(f"parameter {name!r} must be a year, got {value!r}")


def _str_param(params: dict, name: str) -> str:
    value = params.get(name)
    if not value:
        raise InvalidSpec(f"missing parameter {name!r}")
    return str(value)
