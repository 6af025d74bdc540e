"""Cleaning, patient deduplication and conforming staged records.

Record-level failures never raise: each bad record becomes exactly one
RejectEntry with a stable reason code, and counts are conserved at every step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from decimal import Decimal, InvalidOperation
from typing import Iterable

from .ingest import RawRecord, StagingBatch
from .schema import (
    BLOOD_GROUPS,
    CANCER_STAGES,
    GENDERS,
    MARITAL_STATUSES,
    OUTCOMES,
    TEST_TYPES,
    TREATMENT_CATEGORIES,
    DEFAULT_NATIONAL_ID_PATTERN,
    age_at_event_years,
    age_band_label,
    canonical_enum,
    parse_iso_date,
    parse_rfc3339,
)

REASON_BAD_ID = "BAD_ID"
REASON_BAD_DATE = "BAD_DATE"
REASON_BAD_ENUM = "BAD_ENUM"
REASON_NEGATIVE_COST = "NEGATIVE_COST"
REASON_ORPHAN_REF = "ORPHAN_REF"
REASON_DOB_AFTER_EVENT = "DOB_AFTER_EVENT"


@dataclass(frozen=True)
class SourceRef:
    source_id: str
    line_no: int


@dataclass(frozen=True)
class RejectEntry:
    ref: SourceRef
    reason_code: str
    detail: str


@dataclass
class TransformConfig:
    national_id_pattern: str = DEFAULT_NATIONAL_ID_PATTERN
    today: date | None = None  # pin for tests; defaults to the wall-clock date

    def effective_today(self) -> date:
        return self.today or date.today()


# The merge rule runs over every non-key field; empty values are backfilled
# from the next-most-recent duplicate that has them.
_MERGE_FIELDS = ("full_name", "gender", "date_of_birth", "marital_status", "city",
                 "governorate", "occupation", "blood_group", "race", "updated_at")


@dataclass
class PatientMasterRecord:
    national_id: str
    full_name: str
    gender: str
    date_of_birth: date
    marital_status: str
    city: str
    governorate: str
    occupation: str
    blood_group: str
    race: str
    updated_at: datetime
    ref: SourceRef

    def field_values(self) -> dict[str, object]:
        return {name: getattr(self, name) for name in _MERGE_FIELDS}


@dataclass
class MergeLogEntry:
    national_id: str
    surviving_fields_from: dict[str, SourceRef]
    merged_record_refs: list[SourceRef]
    merged_at: datetime


@dataclass
class CleanEvent:
    """A validated diagnosis/treatment/lab record, typed and canonicalized."""
    kind: str  # diagnoses | treatments | lab_results
    national_id: str
    event_date: date
    values: dict[str, object]
    source_ts: datetime  # updated_at when the source has one, else batch as_of
    ref: SourceRef


@dataclass
class ConformedRow:
    fact_kind: str  # treatment_event | lab_result
    national_id: str
    event_date: date
    age_at_event_years: int
    age_band: str
    governorate: str
    city: str
    source_ts: datetime
    ref: SourceRef
    # treatment facts
    cancer_site: str | None = None
    cancer_type: str | None = None
    cancer_stage: str | None = None
    category: str | None = None
    drug_code: str | None = None
    drug_name: str | None = None
    cost_millis: int | None = None
    death_flag: int | None = None
    remission_flag: int | None = None
    # lab facts
    test_type: str | None = None
    value_milli: int | None = None
    abnormal_flag: int | None = None


@dataclass
class DimensionRegistry:
    """New dimension members discovered while conforming a batch set."""
    patients: list[PatientMasterRecord] = field(default_factory=list)
    cancers: set[tuple[str, str, str]] = field(default_factory=set)  # (site, type, stage)
    treatments: dict[str, tuple[str, str]] = field(default_factory=dict)  # drug_code -> (category, drug_name)
    locations: set[tuple[str, str]] = field(default_factory=set)  # (governorate, city)
    tests: set[str] = field(default_factory=set)
    age_bands: set[str] = field(default_factory=set)


@dataclass
class ConformResult:
    rows: list[ConformedRow]
    rejects: list[RejectEntry]
    registry: DimensionRegistry
    counts: dict[str, dict[str, int]]  # per kind: {"in": n, "out": n, "rejected": n}


def scaled_int(text: str, scale: int = 3) -> int:
    """Exact integer in 1/10^scale units; ValueError on junk or finer precision."""
    try:
        quantum = Decimal(text) * (10 ** scale)
    except InvalidOperation:
        raise ValueError(f"not a decimal number: {text!r}")
    if quantum != quantum.to_integral_value():
        raise ValueError(f"more than {scale} decimal places: {text!r}")
    return int(quantum)


def millis_to_decimal_string(millis: int) -> str:
    """Exact rendering of an integer milli amount, e.g. 400000 -> '400.000'."""
    sign = "-" if millis < 0 else ""
    magnitude = abs(millis)
    return f"{sign}{magnitude // 1000}.{magnitude % 1000:03d}"


# ---------------------------------------------------------------------------
# validate & clean
# ---------------------------------------------------------------------------

def validate_and_clean(
    batch: StagingBatch,
    config: TransformConfig | None = None,
) -> tuple[list[PatientMasterRecord] | list[CleanEvent], list[RejectEntry]]:
    """Trim, canonicalize and type a staged batch.

    Patients come back as PatientMasterRecord; the event kinds come back as
    CleanEvent. Every input record lands in exactly one of the two outputs.
    """
    config = config or TransformConfig()
    cleaner = {
        "patients": _clean_patient,
        "diagnoses": _clean_diagnosis,
        "treatments": _clean_treatment,
        "lab_results": _clean_lab,
    }[batch.source.kind]

    clean: list = []
    rejects: list[RejectEntry] = []
    for record in batch.records:
        ref = SourceRef(record.source_id, record.line_no)
        try:
            clean.append(cleaner(record, ref, batch, config))
        except _Reject as exc:
            rejects.append(RejectEntry(ref, exc.reason_code, exc.detail))
    return clean, rejects


class _Reject(Exception):
    def __init__(self, reason_code: str, detail: str):
        super().__init__(detail)
        self.reason_code = reason_code
        self.detail = detail


def _require_id(value: str, config: TransformConfig) -> str:
    value = value.strip()
    if not re.match(config.national_id_pattern, value):
        raise _Reject(REASON_BAD_ID, f"national_id {value!r} does not match pattern")
    return value


def _require_date(value: str, field_name: str) -> date:
    try:
        return parse_iso_date(value.strip())
    except ValueError:
        raise _Reject(REASON_BAD_DATE, f"{field_name}: {value!r} is not YYYY-MM-DD")


def _require_timestamp(value: str, field_name: str) -> datetime:
    try:
        return parse_rfc3339(value)
    except ValueError:
        raise _Reject(REASON_BAD_DATE, f"{field_name}: {value!r} is not RFC 3339")


def _require_enum(value: str, vocabulary: tuple[str, ...], field_name: str,
                  optional: bool = False) -> str:
    trimmed = value.strip()
    if not trimmed and optional:
        return ""
    canonical = canonical_enum(trimmed, vocabulary)
    if canonical is None:
        raise _Reject(REASON_BAD_ENUM, f"{field_name}: {value!r} not in {list(vocabulary)}")
    return canonical


def _clean_patient(record: RawRecord, ref: SourceRef, batch: StagingBatch,
                   config: TransformConfig) -> PatientMasterRecord:
    f = record.fields
    national_id = _require_id(f["national_id"], config)
    gender = _require_enum(f["gender"], GENDERS, "gender")
    dob = _require_date(f["date_of_birth"], "date_of_birth")
    if dob > config.effective_today():
        raise _Reject(REASON_BAD_DATE, f"date_of_birth {dob.isoformat()} is in the future")
    return PatientMasterRecord(
        national_id=national_id,
        full_name=f["full_name"].strip().title(),
        gender=gender,
        date_of_birth=dob,
        marital_status=_require_enum(f["marital_status"], MARITAL_STATUSES,
                                     "marital_status", optional=True),
        city=f["city"].strip().title(),
        governorate=f["governorate"].strip().title(),
        occupation=f["occupation"].strip(),
        blood_group=_require_enum(f["blood_group"], BLOOD_GROUPS, "blood_group", optional=True),
        race=f["race"].strip(),
        updated_at=_require_timestamp(f["updated_at"], "updated_at"),
        ref=ref,
    )


def _clean_diagnosis(record: RawRecord, ref: SourceRef, batch: StagingBatch,
                     config: TransformConfig) -> CleanEvent:
    f = record.fields
    national_id = _require_id(f["national_id"], config)
    event_date = _require_date(f["diagnosis_date"], "diagnosis_date")
    site = f["cancer_site"].strip().lower()
    ctype = f["cancer_type"].strip().lower()
    if not site or not ctype:
        raise _Reject(REASON_BAD_ENUM, "cancer_site/cancer_type must be non-empty")
    return CleanEvent(
        kind="diagnoses",
        national_id=national_id,
        event_date=event_date,
        values={
            "cancer_site": site,
            "cancer_type": ctype,
            "stage": _require_enum(f["stage"], CANCER_STAGES, "stage"),
        },
        source_ts=batch.source.as_of,
        ref=ref,
    )


def _clean_treatment(record: RawRecord, ref: SourceRef, batch: StagingBatch,
                     config: TransformConfig) -> CleanEvent:
    f = record.fields
    national_id = _require_id(f["national_id"], config)
    event_date = _require_date(f["treatment_date"], "treatment_date")
    category = _require_enum(f["treatment_category"], TREATMENT_CATEGORIES, "treatment_category")
    outcome = _require_enum(f["outcome"], OUTCOMES, "outcome")
    try:
        cost_millis = scaled_int(f["cost"].strip())
    except ValueError as exc:
        raise _Reject(REASON_BAD_ENUM, f"cost: {exc}")
    if cost_millis < 0:
        raise _Reject(REASON_NEGATIVE_COST, f"cost {f['cost']!r} is negative")
    drug_code = f["drug_code"].strip().upper()
    if not drug_code:
        raise _Reject(REASON_BAD_ENUM, "drug_code must be non-empty")
    return CleanEvent(
        kind="treatments",
        national_id=national_id,
        event_date=event_date,
        values={
            "category": category,
            "drug_code": drug_code,
            "drug_name": f["drug_name"].strip().lower(),
            "cost_millis": cost_millis,
            "outcome": outcome,
        },
        source_ts=_require_timestamp(f["updated_at"], "updated_at"),
        ref=ref,
    )


def _clean_lab(record: RawRecord, ref: SourceRef, batch: StagingBatch,
               config: TransformConfig) -> CleanEvent:
    f = record.fields
    national_id = _require_id(f["national_id"], config)
    event_date = _require_date(f["test_date"], "test_date")
    test_type = _require_enum(f["test_type"], TEST_TYPES, "test_type")
    try:
        value_milli = scaled_int(f["value"].strip())
    except ValueError as exc:
        raise _Reject(REASON_BAD_ENUM, f"value: {exc}")
    abnormal = f["abnormal"].strip()
    if abnormal not in ("0", "1"):
        raise _Reject(REASON_BAD_ENUM, f"abnormal: {abnormal!r} not in ['0', '1']")
    return CleanEvent(
        kind="lab_results",
        national_id=national_id,
        event_date=event_date,
        values={
            "test_type": test_type,
            "value_milli": value_milli,
            "unit": f["unit"].strip().lower(),
            "abnormal_flag": int(abnormal),
        },
        source_ts=batch.source.as_of,
        ref=ref,
    )


# ---------------------------------------------------------------------------
# dedup & merge
# ---------------------------------------------------------------------------

def dedup_merge_patients(
    records: Iterable[PatientMasterRecord],
) -> tuple[list[PatientMasterRecord], list[MergeLogEntry]]:
    """One master record per national ID.

    Per-field rule: the most recent updated_at wins; an empty field is filled
    from the next-most-recent record that has it. Recency ties break on larger
    line_no, then source_id, making the order total. Applying the merge to its
    own output is the identity.
    """
    by_id: dict[str, list[PatientMasterRecord]] = {}
    order: list[str] = []
    for rec in records:
        if rec.national_id not in by_id:
            order.append(rec.national_id)
        by_id.setdefault(rec.national_id, []).append(rec)

    masters: list[PatientMasterRecord] = []
    merge_log: list[MergeLogEntry] = []
    merged_at = datetime.now(timezone.utc)
    for national_id in order:
        group = by_id[national_id]
        if len(group) == 1:
            masters.append(group[0])
            continue
        merged, surviving = merge_patient_group(group)
        masters.append(merged)
        merge_log.append(MergeLogEntry(
            national_id=national_id,
            surviving_fields_from=surviving,
            merged_record_refs=[r.ref for r in _recency_sorted(group)],
            merged_at=merged_at,
        ))
    return masters, merge_log


def _recency_sorted(group: list[PatientMasterRecord]) -> list[PatientMasterRecord]:
    return sorted(group, key=lambda r: (r.updated_at, r.ref.line_no, r.ref.source_id),
                  reverse=True)


def merge_patient_group(
    group: list[PatientMasterRecord],
) -> tuple[PatientMasterRecord, dict[str, SourceRef]]:
    """Apply the per-field recency rule to one duplicate set.

    Also used by tests to replay the rule against raw duplicates and compare
    byte-for-byte with what dedup_merge_patients produced.
    """
    ranked = _recency_sorted(group)
    values: dict[str, object] = {}
    surviving: dict[str, SourceRef] = {}
    for field_name in _MERGE_FIELDS:
        chosen = ranked[0]
        for candidate in ranked:
            value = getattr(candidate, field_name)
            if value is not None and value != "":
                chosen = candidate
                break
        values[field_name] = getattr(chosen, field_name)
        surviving[field_name] = chosen.ref
    merged = PatientMasterRecord(
        national_id=group[0].national_id, ref=ranked[0].ref, **values,
    )
    return merged, surviving


# ---------------------------------------------------------------------------
# conform
# ---------------------------------------------------------------------------

def conform(
    events: Iterable[CleanEvent],
    masters: Iterable[PatientMasterRecord],
) -> ConformResult:
    """Join clean events to patient masters and emit fact-ready rows.

    Diagnoses carry the cancer context: each treatment is attributed to the
    patient's latest diagnosis dated on or before the treatment, falling back
    to the earliest diagnosis. Treatments for patients with no diagnosis are
    rejected as ORPHAN_REF, as are events whose national_id is unknown.
    """
    master_by_id = {m.national_id: m for m in masters}
    registry = DimensionRegistry(patients=list(master_by_id.values()))
    rows: list[ConformedRow] = []
    rejects: list[RejectEntry] = []
    counts = {kind: {"in": 0, "out": 0, "rejected": 0}
              for kind in ("diagnoses", "treatments", "lab_results")}

    event_list = list(events)

    # Diagnoses first: they feed the cancer assignment for treatments.
    diagnoses_by_patient: dict[str, list[tuple[date, tuple[str, str, str]]]] = {}
    for ev in event_list:
        if ev.kind != "diagnoses":
            continue
        counts["diagnoses"]["in"] += 1
        reject = _check_patient_link(ev, master_by_id)
        if reject is not None:
            rejects.append(reject)
            counts["diagnoses"]["rejected"] += 1
            continue
        member = (ev.values["cancer_site"], ev.values["cancer_type"], ev.values["stage"])
        registry.cancers.add(member)
        diagnoses_by_patient.setdefault(ev.national_id, []).append((ev.event_date, member))
        counts["diagnoses"]["out"] += 1
    for entries in diagnoses_by_patient.values():
        entries.sort(key=lambda e: e[0])

    for ev in event_list:
        if ev.kind == "diagnoses":
            continue
        kind = ev.kind
        counts[kind]["in"] += 1
        reject = _check_patient_link(ev, master_by_id)
        if reject is not None:
            rejects.append(reject)
            counts[kind]["rejected"] += 1
            continue
        master = master_by_id[ev.national_id]
        age = age_at_event_years(master.date_of_birth, ev.event_date)
        band = age_band_label(age)
        base = dict(
            national_id=ev.national_id,
            event_date=ev.event_date,
            age_at_event_years=age,
            age_band=band,
            governorate=master.governorate,
            city=master.city,
            source_ts=ev.source_ts,
            ref=ev.ref,
        )
        if kind == "treatments":
            assignment = _assign_cancer(diagnoses_by_patient.get(ev.national_id), ev.event_date)
            if assignment is None:
                rejects.append(RejectEntry(
                    ev.ref, REASON_ORPHAN_REF,
                    f"no diagnosis on record for patient {ev.national_id}",
                ))
                counts[kind]["rejected"] += 1
                continue
            site, ctype, stage = assignment
            outcome = ev.values["outcome"]
            rows.append(ConformedRow(
                fact_kind="treatment_event",
                cancer_site=site, cancer_type=ctype, cancer_stage=stage,
                category=ev.values["category"],
                drug_code=ev.values["drug_code"],
                drug_name=ev.values["drug_name"],
                cost_millis=ev.values["cost_millis"],
                death_flag=1 if outcome == "death" else 0,
                remission_flag=1 if outcome == "remission" else 0,
                **base,
            ))
            registry.treatments.setdefault(
                ev.values["drug_code"], (ev.values["category"], ev.values["drug_name"]))
        else:
            rows.append(ConformedRow(
                fact_kind="lab_result",
                test_type=ev.values["test_type"],
                value_milli=ev.values["value_milli"],
                abnormal_flag=ev.values["abnormal_flag"],
                **base,
            ))
            registry.tests.add(ev.values["test_type"])
        registry.locations.add((master.governorate, master.city))
        registry.age_bands.add(band)
        counts[kind]["out"] += 1

    return ConformResult(rows=rows, rejects=rejects, registry=registry, counts=counts)


def _check_patient_link(ev: CleanEvent, master_by_id: dict[str, PatientMasterRecord]) -> RejectEntry | None:
    master = master_by_id.get(ev.national_id)
    if master is None:
        return RejectEntry(ev.ref, REASON_ORPHAN_REF,
                           f"unknown national_id {ev.national_id}")
    if ev.event_date < master.date_of_birth:
        return RejectEntry(
            ev.ref, REASON_DOB_AFTER_EVENT,
            f"event {ev.event_date.isoformat()} predates birth "
            f"{master.date_of_birth.isoformat()}",
        )
    return None


def _assign_cancer(
    diagnoses: list[tuple[date, tuple[str, str, str]]] | None,
    event_date: date,
) -> tuple[str, str, str] | None:
    if not diagnoses:
        return None
    chosen = None
    for diag_date, member in diagnoses:
        if diag_date <= event_date:
            chosen = member
        else:
            break
    return chosen if chosen is not None else diagnoses[0][1]
