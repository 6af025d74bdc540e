from __future__ import annotations

from datetime import date, datetime, timezone

from hypothesis import given, settings
from hypothesis import strategies as st

from cdw.schema import age_at_event_years
from cdw.transform import (
    PatientMasterRecord,
    SourceRef,
    dedup_merge_patients,
    merge_patient_group,
)

from helpers import (
    P1,
    P2,
    P3,
    diagnosis_row,
    lab_record,
    patient_row,
    run_pipeline,
    treatment_row,
)


# -- validate & clean --------------------------------------------------------

def test_cleaning_normalizes_casing_and_text(tmp_path):
    pipeline = run_pipeline(
        tmp_path,
        patients=[patient_row(P1, full_name="  aLi  hassan ", gender="m",
                              blood_group="o+", marital_status="Married")],
        diagnoses=[diagnosis_row(P1, cancer_site="Lymphoid", stage="ii")],
        treatments=[treatment_row(P1, treatment_category="Chemotherapy",
                                  outcome="Remission")],
        load=False,
    )
    master = pipeline.masters[0]
    assert master.full_name == "Ali  Hassan".title()
    assert master.gender == "M"
    assert master.blood_group == "O+"
    assert master.marital_status == "married"
    row = pipeline.result.rows[0]
    assert row.category == "chemotherapy"
    assert row.remission_flag == 1 and row.death_flag == 0
    assert row.cancer_site == "lymphoid"
    assert row.cancer_stage == "II"


def test_reject_reasons(tmp_path):
    pipeline = run_pipeline(
        tmp_path,
        patients=[
            patient_row(P1),
            patient_row("12AB", full_name="bad id"),
            patient_row(P2, date_of_birth="2999-99-99"),
            patient_row(P3, gender="X"),
        ],
        treatments=[
            treatment_row(P1, cost="-50.00"),
            treatment_row(P1, cost="12.3456", treatment_date="2012-05-05"),
        ],
        load=False,
    )
    reasons = sorted(r.reason_code for r in pipeline.validate_rejects["patients"])
    assert reasons == ["BAD_DATE", "BAD_ENUM", "BAD_ID"]
    t_reasons = sorted(r.reason_code for r in pipeline.validate_rejects["treatments"])
    assert t_reasons == ["BAD_ENUM", "NEGATIVE_COST"]  # sub-milli precision rejected
    assert len(pipeline.masters) == 1


def test_costs_become_exact_millis(tmp_path):
    pipeline = run_pipeline(
        tmp_path,
        patients=[patient_row(P1)],
        diagnoses=[diagnosis_row(P1)],
        treatments=[treatment_row(P1, cost="250.50")],
        load=False,
    )
    assert pipeline.result.rows[0].cost_millis == 250500


def test_every_record_lands_exactly_once(tmp_path):
    pipeline = run_pipeline(
        tmp_path,
        patients=[patient_row(P1), patient_row("bogus")],
        diagnoses=[diagnosis_row(P1)],
        treatments=[treatment_row(P1), treatment_row(P2, treatment_date="2012-06-06")],
        labs=[lab_record(P1)],
        load=False,
    )
    staged = pipeline.batches["treatments"].counts["staged"]
    counts = pipeline.result.counts["treatments"]
    assert counts["in"] == staged - len(pipeline.validate_rejects["treatments"])
    assert counts["in"] == counts["out"] + counts["rejected"]
    assert counts["rejected"] == 1  # P2 has no master record -> ORPHAN_REF


# -- dedup & merge ------------------------------------------------------------

def test_merge_prefers_recent_but_backfills_empty(tmp_path):
    older = patient_row(P1, occupation="farmer", city="Belbeis",
                        updated_at="2013-01-01T00:00:00Z")
    newer = patient_row(P1, occupation="", marital_status="married",
                        updated_at="2014-06-01T00:00:00Z")
    pipeline = run_pipeline(tmp_path, patients=[older, newer], load=False)
    assert len(pipeline.masters) == 1
    merged = pipeline.masters[0]
    assert merged.marital_status == "married"          # newest wins
    assert merged.occupation == "farmer"               # backfilled from older
    assert merged.city == "Zagazig"                    # newest non-empty value
    assert merged.updated_at == datetime(2014, 6, 1, tzinfo=timezone.utc)
    log = pipeline.merge_log
    assert len(log) == 1
    assert log[0].surviving_fields_from["occupation"].line_no == 2  # older row
    assert log[0].surviving_fields_from["marital_status"].line_no == 3


def test_identity_when_all_distinct(tmp_path):
    pipeline = run_pipeline(
        tmp_path, patients=[patient_row(P1), patient_row(P2), patient_row(P3)],
        load=False)
    assert len(pipeline.masters) == 3
    assert pipeline.merge_log == []


def test_three_duplicates_one_entry(tmp_path):
    rows = [patient_row(P1, updated_at=f"201{i}-01-01T00:00:00Z") for i in (2, 3, 4)]
    pipeline = run_pipeline(tmp_path, patients=rows, load=False)
    assert len(pipeline.masters) == 1
    assert len(pipeline.merge_log) == 1
    assert len(pipeline.merge_log[0].merged_record_refs) == 3


def _random_patient(draw_ref, national_id, updated_at, occupation, city):
    return PatientMasterRecord(
        national_id=national_id,
        full_name="Ali Hassan",
        gender="M",
        date_of_birth=date(1960, 5, 1),
        marital_status="single",
        city=city,
        governorate="Sharkia",
        occupation=occupation,
        blood_group="O+",
        race="arab",
        updated_at=updated_at,
        ref=draw_ref,
    )


@st.composite
def duplicate_groups(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    records = []
    for i in range(n):
        ts = datetime(2013, 1, 1, tzinfo=timezone.utc).replace(
            day=draw(st.integers(1, 28)), hour=draw(st.integers(0, 23)))
        records.append(_random_patient(
            SourceRef("patients-1", i + 2), P1, ts,
            draw(st.sampled_from(["", "farmer", "clerk"])),
            draw(st.sampled_from(["", "Zagazig", "Belbeis"])),
        ))
    return records


@given(duplicate_groups())
@settings(max_examples=60, deadline=None)
def test_merge_is_idempotent_and_replayable(group):
    masters, log = dedup_merge_patients(group)
    assert len(masters) == 1  # cardinality: one master per distinct national id
    again, log_again = dedup_merge_patients(masters)
    assert again == masters
    assert log_again == []
    # replaying the documented per-field rule reproduces the record exactly
    replayed, surviving = merge_patient_group(group)
    assert replayed == masters[0]
    if len(group) > 1:
        assert surviving == log[0].surviving_fields_from
        for field_name, ref in surviving.items():
            source = next(r for r in group if r.ref == ref)
            assert getattr(masters[0], field_name) == getattr(source, field_name)


# -- conform -------------------------------------------------------------------

def test_age_at_event_spec_examples():
    dob = date(1960, 5, 1)
    assert age_at_event_years(dob, date(2010, 4, 30)) == 49
    assert age_at_event_years(dob, date(2010, 5, 1)) == 50


@given(st.dates(min_value=date(1920, 1, 1), max_value=date(2000, 12, 31)),
       st.dates(min_value=date(2001, 1, 1), max_value=date(2020, 12, 31)))
@settings(max_examples=120, deadline=None)
def test_age_matches_birthday_enumeration(dob, event):
    # independent enumeration: count birthdays that have passed, comparing
    # (year, month, day) lexicographically so leap days need no date objects
    passed = sum(
        1 for year in range(dob.year + 1, event.year + 1)
        if (year, dob.month, dob.day) <= (event.year, event.month, event.day)
    )
    assert age_at_event_years(dob, event) == passed


def test_orphan_and_dob_after_event(tmp_path):
    pipeline = run_pipeline(
        tmp_path,
        patients=[patient_row(P1, date_of_birth="1990-06-15")],
        diagnoses=[diagnosis_row(P1, diagnosis_date="2010-02-01")],
        treatments=[
            treatment_row(P2, treatment_date="2012-01-01"),   # unknown patient
            treatment_row(P1, treatment_date="1989-01-01"),   # before birth
            treatment_row(P1, treatment_date="2012-01-01"),
        ],
        load=False,
    )
    codes = sorted(r.reason_code for r in pipeline.result.rejects)
    assert codes == ["DOB_AFTER_EVENT", "ORPHAN_REF"]
    assert len(pipeline.result.rows) == 1
    row = pipeline.result.rows[0]
    assert row.age_at_event_years == 21
    assert row.age_band == "18-39"


def test_treatment_without_diagnosis_is_orphan(tmp_path):
    pipeline = run_pipeline(
        tmp_path,
        patients=[patient_row(P1)],
        treatments=[treatment_row(P1)],
        load=False,
    )
    assert pipeline.result.rows == []
    assert pipeline.result.rejects[0].reason_code == "ORPHAN_REF"
    assert "diagnosis" in pipeline.result.rejects[0].detail


def test_treatment_takes_latest_diagnosis_on_or_before(tmp_path):
    pipeline = run_pipeline(
        tmp_path,
        patients=[patient_row(P1)],
        diagnoses=[
            diagnosis_row(P1, diagnosis_date="2010-01-01", stage="I"),
            diagnosis_row(P1, diagnosis_date="2012-01-01", stage="III"),
        ],
        treatments=[
            treatment_row(P1, treatment_date="2011-06-01"),
            treatment_row(P1, treatment_date="2013-06-01"),
        ],
        load=False,
    )
    stages = sorted((r.event_date.year, r.cancer_stage) for r in pipeline.result.rows)
    assert stages == [(2011, "I"), (2013, "III")]


def test_outcome_flags(tmp_path):
    pipeline = run_pipeline(
        tmp_path,
        patients=[patient_row(P1)],
        diagnoses=[diagnosis_row(P1)],
        treatments=[
            treatment_row(P1, outcome="remission", treatment_date="2012-01-01"),
            treatment_row(P1, outcome="death", treatment_date="2012-02-01"),
            treatment_row(P1, outcome="ongoing", treatment_date="2012-03-01"),
        ],
        load=False,
    )
    flags = {r.event_date.month: (r.death_flag, r.remission_flag)
             for r in pipeline.result.rows}
    assert flags == {1: (0, 1), 2: (1, 0), 3: (0, 0)}


def test_seeded_counts_match_generator(seeded):
    expected = seeded.summary["expected"]
    assert seeded.staged == expected["staged"]
    assert seeded.parse_failures["lab_results"] == expected["parse_failures"]["lab_results"]
    assert len(seeded.validate_rejects["patients"]) == expected["validate_rejects"]["patients"]
    assert len(seeded.validate_rejects["treatments"]) == expected["validate_rejects"]["treatments"]
    assert len(seeded.masters) == expected["master_records"]
    assert len(seeded.merge_log) == expected["merge_log_entries"]
    assert seeded.conform_counts["treatments"]["rejected"] == expected["conform_rejects"]["treatments"]
    assert seeded.conform_counts["lab_results"]["rejected"] == expected["conform_rejects"]["lab_results"]
