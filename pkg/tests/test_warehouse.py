from __future__ import annotations

import shutil

import pytest

from cdw.errors import CorruptTable, UnknownAttribute, WarehouseLocked
from cdw.transform import DimensionRegistry
from cdw.warehouse import Warehouse
from cdw.warehouse.columnio import decode_column, encode_column

from helpers import (
    P1,
    P2,
    diagnosis_row,
    lab_record,
    patient_row,
    run_pipeline,
    treatment_row,
)


def totals(wh, fact="fact_treatment_event"):
    table = wh.tables[fact]
    return {col: sum(values) for col, values in table.columns.items()
            if col in ("cost_millis", "event_count", "death_flag", "remission_flag",
                       "value_milli", "abnormal_flag")}


def small_pipeline(tmp_path, **overrides):
    kwargs = dict(
        patients=[patient_row(P1), patient_row(P2, date_of_birth="1975-02-10")],
        diagnoses=[diagnosis_row(P1), diagnosis_row(P2, cancer_site="lung",
                                                    cancer_type="small cell")],
        treatments=[
            treatment_row(P1, treatment_date="2012-03-10", cost="100.00"),
            treatment_row(P1, treatment_date="2012-05-20", drug_code="CIS",
                          drug_name="cisplatin", cost="250.50", outcome="remission"),
            treatment_row(P2, treatment_date="2013-07-01", cost="49.50",
                          outcome="death"),
        ],
        labs=[lab_record(P1), lab_record(P2, test_type="urine", value="300.0",
                                         abnormal="1", test_date="2013-08-01")],
    )
    kwargs.update(overrides)
    return run_pipeline(tmp_path, **kwargs)


def test_column_file_roundtrip():
    for dtype, values in (("i", [0, -5, 2**40, 7]),
                          ("s", ["", "plain", "commas, and \"quotes\"", "نص"])):
        data = encode_column(dtype, values)
        assert decode_column(data) == (dtype, values)


def test_load_then_reload_is_idempotent(tmp_path):
    pipeline = small_pipeline(tmp_path)
    with pipeline.open_warehouse(for_write=True) as wh:
        before_counts = wh.tables["fact_treatment_event"].n_rows
        before_totals = totals(wh)
        manifest = wh.load_batch(pipeline.result.rows, pipeline.result.registry)
        assert manifest.table_counts["fact_treatment_event"]["skipped"] == 3
        assert manifest.table_counts["fact_treatment_event"].get("inserted", 0) == 0
        assert wh.tables["fact_treatment_event"].n_rows == before_counts
        assert totals(wh) == before_totals


def test_upsert_same_natural_key_later_timestamp_wins(tmp_path):
    first = treatment_row(P1, treatment_date="2012-03-10", cost="100.00",
                          updated_at="2014-01-01T00:00:00Z")
    second = treatment_row(P1, treatment_date="2012-03-10", cost="175.25",
                           outcome="remission", updated_at="2014-02-01T00:00:00Z")
    pipeline = run_pipeline(
        tmp_path,
        patients=[patient_row(P1)],
        diagnoses=[diagnosis_row(P1)],
        treatments=[first, second],
    )
    with pipeline.open_warehouse() as wh:
        table = wh.tables["fact_treatment_event"]
        assert table.n_rows == 1
        assert table.columns["cost_millis"] == [175250]
        assert table.columns["remission_flag"] == [1]


def test_watermark_skips_ties_and_admits_newer(tmp_path):
    pipeline = small_pipeline(tmp_path)
    newer = treatment_row(P1, treatment_date="2014-04-04", cost="10.00",
                          updated_at="2015-06-01T00:00:00Z")
    tied = treatment_row(P2, treatment_date="2014-05-05", cost="20.00",
                         updated_at="2014-01-01T00:00:00Z")  # == stored watermark
    addition = run_pipeline(tmp_path / "again",
                            patients=[patient_row(P1), patient_row(P2)],
                            diagnoses=[diagnosis_row(P1), diagnosis_row(P2)],
                            treatments=[newer, tied], load=False)
    with pipeline.open_warehouse(for_write=True) as wh:
        manifest = wh.load_batch(addition.result.rows, addition.result.registry)
        counts = manifest.table_counts["fact_treatment_event"]
        assert counts["inserted"] == 1
        assert counts["skipped"] == 1
        assert wh.watermarks["treatments"].year == 2015


def test_empty_load_changes_nothing(tmp_path):
    pipeline = small_pipeline(tmp_path)
    with pipeline.open_warehouse(for_write=True) as wh:
        watermarks = dict(wh.watermarks)
        manifest = wh.load_batch([], DimensionRegistry())
        assert manifest.totals() == {"inserted": 0, "updated": 0, "skipped": 0}
        assert wh.watermarks == watermarks


def test_single_writer_lock(tmp_path):
    pipeline = small_pipeline(tmp_path)
    with pipeline.open_warehouse(for_write=True):
        with pytest.raises(WarehouseLocked):
            Warehouse.open(pipeline.warehouse_path, for_write=True)
    # lock released on close
    Warehouse.open(pipeline.warehouse_path, for_write=True).close()


def test_interrupted_load_leaves_prior_answers_unchanged(tmp_path, monkeypatch):
    pipeline = small_pipeline(tmp_path)
    with pipeline.open_warehouse() as wh:
        before_totals = totals(wh)
        before_version = wh.version

    extra = run_pipeline(tmp_path / "more",
                         patients=[patient_row(P1)],
                         diagnoses=[diagnosis_row(P1)],
                         treatments=[treatment_row(P1, treatment_date="2014-09-09",
                                                   cost="999.99",
                                                   updated_at="2015-05-05T00:00:00Z")],
                         load=False)
    writer = Warehouse.open(pipeline.warehouse_path, for_write=True)
    monkeypatch.setattr(
        writer, "_publish_manifest",
        lambda files: (_ for _ in ()).throw(RuntimeError("killed before commit")))
    with pytest.raises(RuntimeError):
        writer.load_batch(extra.result.rows, extra.result.registry)
    writer.close()

    with pipeline.open_warehouse() as wh:
        assert wh.version == before_version
        assert totals(wh) == before_totals


def test_flipped_byte_detected_on_open(tmp_path):
    pipeline = small_pipeline(tmp_path)
    copy = tmp_path / "tampered"
    shutil.copytree(pipeline.warehouse_path, copy)
    victim = next(copy.glob("fact_treatment_event/cost_millis.*.col"))
    data = bytearray(victim.read_bytes())
    data[-1] ^= 0xFF
    victim.write_bytes(bytes(data))
    with pytest.raises(CorruptTable):
        Warehouse.open(copy)


def test_type1_dimension_overwrite_keeps_surrogate(tmp_path):
    pipeline = small_pipeline(tmp_path)
    renamed = run_pipeline(
        tmp_path / "rename",
        patients=[patient_row(P1, full_name="ali RENAMED",
                              updated_at="2015-03-03T00:00:00Z")],
        load=False)
    with pipeline.open_warehouse(for_write=True) as wh:
        table = wh.tables["dim_patient"]
        idx = table.columns["national_id"].index(P1)
        sk_before = table.columns["sk"][idx]
        manifest = wh.load_batch([], renamed.result.registry)
        assert manifest.table_counts["dim_patient"]["updated"] == 1
        assert table.columns["full_name"][idx] == "Ali Renamed"
        assert table.columns["sk"][idx] == sk_before


def test_audit_clean_and_referential_integrity(seeded):
    with Warehouse.open(seeded.warehouse_dir) as wh:
        assert wh.audit() == []
        # surrogate keys are dense positive integers
        for name in ("dim_patient", "dim_cancer", "dim_treatment",
                     "dim_location", "dim_age_band", "dim_test"):
            sks = wh.tables[name].columns["sk"]
            assert sks == list(range(1, len(sks) + 1))


def test_scan_filters_and_unknown_attribute(tmp_path):
    pipeline = small_pipeline(tmp_path)
    with pipeline.open_warehouse() as wh:
        all_rows = wh.scan("fact_treatment_event")
        assert len(all_rows) == 3
        p2_rows = wh.scan("fact_treatment_event",
                          [("patient", "gender", "eq", "M"),
                           ("date", "year", "between", [2013, 2014])])
        assert len(p2_rows) == 1
        assert p2_rows[0]["death_flag"] == 1
        assert wh.scan("fact_treatment_event",
                       [("cancer", "site", "eq", "marsian")]) == []
        with pytest.raises(UnknownAttribute):
            wh.scan("fact_treatment_event", [("cancer", "color", "eq", "x")])
        with pytest.raises(UnknownAttribute):
            wh.scan("fact_lab_result", [("cancer", "site", "eq", "lung")])


def test_dim_date_derivable_from_date_key(tmp_path):
    pipeline = small_pipeline(tmp_path)
    with pipeline.open_warehouse() as wh:
        table = wh.tables["dim_date"]
        for i in range(table.n_rows):
            date_key = table.columns["date_key"][i]
            year, rest = divmod(date_key, 10000)
            month, day = divmod(rest, 100)
            assert table.columns["year"][i] == year
            assert table.columns["month"][i] == month
            assert table.columns["day"][i] == day
            assert table.columns["quarter"][i] == (month - 1) // 3 + 1
