"""Built-in cube definitions over the two fact tables.

Definitions are fixed, not user-authored: hierarchies per dimension (coarse to
fine), additive measures summed from fact columns, and derived measures
recomputed at every cell and total. The distinct-patient rates are non-additive
and therefore never served from aggregate tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..dimensions import HIERARCHIES, PATIENT_SLICERS, level_names
from ..errors import UnknownCube

CUBE_IDS = ("treatment", "lab")


@dataclass(frozen=True)
class DerivedMeasure:
    name: str
    # ratio measures divide two additive sums; distinct-rate measures count
    # distinct patients carrying a flag over distinct patients in the cell.
    numerator: str = ""
    denominator: str = ""
    scale: float = 1.0
    distinct_flag: str | None = None  # "death" | "remission"

    @property
    def is_distinct_rate(self) -> bool:
        return self.distinct_flag is not None


@dataclass(frozen=True)
class CubeDefinition:
    cube_id: str
    fact_table: str
    dimensions: dict[str, list[str]]  # dimension -> ordered level names
    slicers: tuple[str, ...]
    # additive measure -> (base fact column, aggregate-table column)
    additive: dict[str, tuple[str, str]]
    derived: dict[str, DerivedMeasure]
    # additive sums kept for derived measures but not queryable directly
    internal_additive: dict[str, tuple[str, str]] = field(default_factory=dict)

    @property
    def measures(self) -> list[str]:
        return list(self.additive) + list(self.derived)

    def to_catalog_dict(self) -> dict:
        return {
            "cube_id": self.cube_id,
            "fact_table": self.fact_table,
            "dimensions": self.dimensions,
            "slicers": list(self.slicers),
            "measures": {
                "additive": list(self.additive),
                "derived": list(self.derived),
            },
        }


_TREATMENT = CubeDefinition(
    cube_id="treatment",
    fact_table="fact_treatment_event",
    dimensions={d: level_names(d) for d in ("date", "cancer", "treatment", "location", "age_band")},
    slicers=PATIENT_SLICERS,
    additive={
        "sum_cost": ("cost_millis", "cost_millis"),
        "event_count": ("event_count", "event_count"),
        "deaths": ("death_flag", "deaths"),
        "remissions": ("remission_flag", "remissions"),
    },
    derived={
        "avg_cost": DerivedMeasure("avg_cost", "sum_cost", "event_count"),
        "death_rate": DerivedMeasure("death_rate", distinct_flag="death"),
        "remission_rate": DerivedMeasure("remission_rate", distinct_flag="remission"),
    },
)

_LAB = CubeDefinition(
    cube_id="lab",
    fact_table="fact_lab_result",
    dimensions={d: level_names(d) for d in ("date", "test", "location", "age_band")},
    slicers=PATIENT_SLICERS,
    additive={
        "event_count": ("event_count", "event_count"),
        "abnormal_count": ("abnormal_flag", "abnormal_count"),
    },
    derived={
        "abnormal_rate": DerivedMeasure("abnormal_rate", "abnormal_count", "event_count"),
        "avg_value": DerivedMeasure("avg_value", "sum_value_milli", "event_count", scale=0.001),
    },
    internal_additive={"sum_value_milli": ("value_milli", "sum_value_milli")},
)

_CUBES = {"treatment": _TREATMENT, "lab": _LAB}


def define_cube(cube_id: str) -> CubeDefinition:
    try:
        return _CUBES[cube_id]
    except KeyError:
        raise UnknownCube(f"no cube named {cube_id!r}; expected one of {list(_CUBES)}")


def catalog() -> dict:
    return {"cubes": [define_cube(c).to_catalog_dict() for c in CUBE_IDS],
            "hierarchies": {d: level_names(d) for d in HIERARCHIES}}
