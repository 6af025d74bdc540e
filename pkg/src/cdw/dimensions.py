"""The star schema's dimension model: tables, hierarchies, attributes.

Shared by the warehouse (storage, aggregate grains, scans) and the cube layer
(query validation, drill paths). Hierarchies run coarse to fine; a level's
member is identified by the full path of level attributes from the root.
"""

from __future__ import annotations

DIM_TABLES = {
    "dim_patient": {
        "columns": ["sk", "national_id", "full_name", "gender", "marital_status",
                    "blood_group", "race", "occupation"],
        "dtypes": {"sk": "i"},
        "natural_key": ["national_id"],
    },
    "dim_date": {
        "columns": ["date_key", "day", "month", "quarter", "year"],
        "dtypes": {"date_key": "i", "day": "i", "month": "i", "quarter": "i", "year": "i"},
        "natural_key": ["date_key"],
    },
    "dim_cancer": {
        "columns": ["sk", "site", "type", "stage"],
        "dtypes": {"sk": "i"},
        "natural_key": ["site", "type", "stage"],
    },
    "dim_treatment": {
        "columns": ["sk", "category", "drug_code", "drug_name"],
        "dtypes": {"sk": "i"},
        "natural_key": ["drug_code"],
    },
    "dim_location": {
        "columns": ["sk", "governorate", "city"],
        "dtypes": {"sk": "i"},
        "natural_key": ["governorate", "city"],
    },
    "dim_age_band": {
        "columns": ["sk", "band_label"],
        "dtypes": {"sk": "i"},
        "natural_key": ["band_label"],
    },
    "dim_test": {
        "columns": ["sk", "test_type"],
        "dtypes": {"sk": "i"},
        "natural_key": ["test_type"],
    },
}

FACT_TABLES = {
    "fact_treatment_event": {
        "columns": ["patient_sk", "date_key", "cancer_sk", "treatment_sk",
                    "location_sk", "age_band_sk", "cost_millis", "event_count",
                    "death_flag", "remission_flag"],
        "dims": {"patient": "patient_sk", "date": "date_key", "cancer": "cancer_sk",
                 "treatment": "treatment_sk", "location": "location_sk",
                 "age_band": "age_band_sk"},
        # natural event key: (national_id, treatment_date, drug_code) via surrogates
        "natural_key": ["patient_sk", "date_key", "treatment_sk"],
        "source_kind": "treatments",
    },
    "fact_lab_result": {
        "columns": ["patient_sk", "date_key", "test_sk", "location_sk",
                    "age_band_sk", "value_milli", "abnormal_flag", "event_count"],
        "dims": {"patient": "patient_sk", "date": "date_key", "test": "test_sk",
                 "location": "location_sk", "age_band": "age_band_sk"},
        "natural_key": ["patient_sk", "date_key", "test_sk"],
        "source_kind": "lab_results",
    },
}

# Hierarchies, coarse to fine. Each level maps to the attribute that carries it.
HIERARCHIES = {
    "date": [("year", "year"), ("quarter", "quarter"), ("month", "month"), ("day", "day")],
    "cancer": [("site", "site"), ("type", "type"), ("stage", "stage")],
    "treatment": [("category", "category"), ("drug", "drug_code")],
    "location": [("governorate", "governorate"), ("city", "city")],
    "age_band": [("band", "band_label")],
    "test": [("test_type", "test_type")],
}

# Dimension attributes addressable in filters/scans beyond the level attributes.
EXTRA_ATTRS = {
    "treatment": ["drug_name"],
    "date": ["date_key"],
}

# Patient demographics are slicers only: filterable, never an axis.
PATIENT_SLICERS = ("gender", "blood_group", "race", "marital_status")

DIM_FOR = {"date": "dim_date", "cancer": "dim_cancer", "treatment": "dim_treatment",
           "location": "dim_location", "age_band": "dim_age_band", "test": "dim_test"}

# Additive aggregate-table measures, as (measure name -> fact column to sum).
AGG_MEASURES = {
    "fact_treatment_event": {
        "cost_millis": "cost_millis",
        "event_count": "event_count",
        "deaths": "death_flag",
        "remissions": "remission_flag",
    },
    "fact_lab_result": {
        "event_count": "event_count",
        "abnormal_count": "abnormal_flag",
        "sum_value_milli": "value_milli",
    },
}

INT_ATTRS = {("date", "year"), ("date", "quarter"), ("date", "month"),
             ("date", "day"), ("date", "date_key")}


def level_names(dimension: str) -> list[str]:
    return [name for name, _attr in HIERARCHIES[dimension]]


def level_attr(dimension: str, level: str) -> str:
    for name, attr in HIERARCHIES[dimension]:
        if name == level:
            return attr
    raise KeyError(f"{dimension} has no level {level!r}")


def level_index(dimension: str, level: str) -> int:
    names = level_names(dimension)
    return names.index(level)


def path_levels(dimension: str, level: str) -> list[str]:
    """Levels from the hierarchy root down to ``level`` inclusive."""
    names = level_names(dimension)
    return names[: names.index(level) + 1]


def attr_level(dimension: str, attribute: str) -> str | None:
    """The level an attribute identifies, if any (drug_code -> drug)."""
    for name, attr in HIERARCHIES[dimension]:
        if attr == attribute or name == attribute:
            return name
    return None


def dimension_attrs(dimension: str) -> list[str]:
    attrs = [attr for _name, attr in HIERARCHIES[dimension]]
    attrs.extend(EXTRA_ATTRS.get(dimension, []))
    return attrs


def resolve_attr(dimension: str, name: str) -> str:
    """Map an attribute-or-level name onto the carrying attribute."""
    for lvl, attr in HIERARCHIES[dimension]:
        if name in (lvl, attr):
            return attr
    if name in EXTRA_ATTRS.get(dimension, []):
        return name
    raise KeyError(f"{dimension} has no attribute or level {name!r}")


def date_parts(date_key: int) -> dict[str, int]:
    year, rest = divmod(date_key, 10000)
    month, day = divmod(rest, 100)
    return {"date_key": date_key, "year": year, "quarter": (month - 1) // 3 + 1,
            "month": month, "day": day}
