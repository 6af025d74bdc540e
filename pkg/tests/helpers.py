"""Fixture builders: hand-written source rows through the full pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from cdw.ingest import SourceDescriptor, StagingArea, StagingBatch
from cdw.schema import CSV_COLUMNS
from cdw.transform import (
    ConformResult,
    MergeLogEntry,
    PatientMasterRecord,
    RejectEntry,
    TransformConfig,
    conform,
    dedup_merge_patients,
    validate_and_clean,
)
from cdw.warehouse import Warehouse

AS_OF = datetime(2015, 1, 2, tzinfo=timezone.utc)

# Validation is pinned to a fixed "today" so fixtures never age out.
CONFIG = TransformConfig(today=datetime(2015, 6, 1).date())

P1 = "29001011234567"
P2 = "29001011234568"
P3 = "29001011234569"


def patient_row(national_id: str, **overrides) -> dict:
    row = {
        "national_id": national_id,
        "full_name": "ali hassan",
        "gender": "M",
        "date_of_birth": "1960-05-01",
        "marital_status": "single",
        "city": "Zagazig",
        "governorate": "Sharkia",
        "occupation": "clerk",
        "blood_group": "O+",
        "race": "arab",
        "updated_at": "2014-01-01T00:00:00Z",
    }
    row.update(overrides)
    return row


def diagnosis_row(national_id: str, **overrides) -> dict:
    row = {
        "national_id": national_id,
        "diagnosis_date": "2010-01-15",
        "cancer_site": "lymphoid",
        "cancer_type": "non-hodgkin lymphoma",
        "stage": "II",
        "doctor_id": "D001",
    }
    row.update(overrides)
    return row


def treatment_row(national_id: str, **overrides) -> dict:
    row = {
        "national_id": national_id,
        "treatment_date": "2012-03-10",
        "treatment_category": "chemotherapy",
        "drug_code": "DOX",
        "drug_name": "doxorubicin",
        "cost": "100.00",
        "outcome": "ongoing",
        "doctor_id": "D001",
        "updated_at": "2014-01-01T00:00:00Z",
    }
    row.update(overrides)
    return row


def lab_record(national_id: str, **overrides) -> dict:
    record = {
        "national_id": national_id,
        "test_type": "blood",
        "test_date": "2012-04-01",
        "value": "12.5",
        "unit": "g/dl",
        "abnormal": "0",
    }
    record.update(overrides)
    return record


def write_csv(path: Path, kind: str, rows: list[dict]) -> Path:
    columns = CSV_COLUMNS[kind]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_medical_files(dir_path: Path, records: list[dict]) -> Path:
    dir_path.mkdir(parents=True, exist_ok=True)
    for i, record in enumerate(records, start=1):
        lines = [f"{k}: {record[k]}" for k in
                 ("national_id", "test_type", "test_date", "value", "unit", "abnormal")]
        (dir_path / f"test_{i:04d}.txt").write_text("\n".join(lines) + "\n")
    return dir_path


@dataclass
class Pipeline:
    staging: StagingArea
    batches: dict[str, StagingBatch]
    masters: list[PatientMasterRecord]
    merge_log: list[MergeLogEntry]
    validate_rejects: dict[str, list[RejectEntry]]
    result: ConformResult
    warehouse_path: Path | None = None

    def open_warehouse(self, for_write: bool = False) -> Warehouse:
        return Warehouse.open(self.warehouse_path, for_write=for_write)


def run_pipeline(tmp: Path, patients=(), diagnoses=(), treatments=(), labs=(),
                 load: bool = True, as_of: datetime = AS_OF) -> Pipeline:
    """Write fixture rows as real source files, then extract/transform/load."""
    src = tmp / "src"
    src.mkdir(parents=True, exist_ok=True)
    staging = StagingArea(tmp / "staging")
    batches: dict[str, StagingBatch] = {}
    if patients:
        write_csv(src / "patients.csv", "patients", list(patients))
        batches["patients"] = staging.extract_csv(
            SourceDescriptor("patients-1", "patients", str(src / "patients.csv"), as_of))
    if diagnoses:
        write_csv(src / "diagnoses.csv", "diagnoses", list(diagnoses))
        batches["diagnoses"] = staging.extract_csv(
            SourceDescriptor("diagnoses-1", "diagnoses", str(src / "diagnoses.csv"), as_of))
    if treatments:
        write_csv(src / "treatments.csv", "treatments", list(treatments))
        batches["treatments"] = staging.extract_csv(
            SourceDescriptor("treatments-1", "treatments", str(src / "treatments.csv"), as_of))
    if labs:
        write_medical_files(src / "medical_files", list(labs))
        batches["lab_results"] = staging.extract_medical_files(
            src / "medical_files", as_of)

    validate_rejects: dict[str, list[RejectEntry]] = {}
    clean_patients: list[PatientMasterRecord] = []
    clean_events = []
    for kind, batch in batches.items():
        clean, rejects = validate_and_clean(batch, CONFIG)
        validate_rejects[kind] = rejects
        if kind == "patients":
            clean_patients.extend(clean)
        else:
            clean_events.extend(clean)
    masters, merge_log = dedup_merge_patients(clean_patients)
    result = conform(clean_events, masters)

    pipeline = Pipeline(staging=staging, batches=batches, masters=masters,
                        merge_log=merge_log, validate_rejects=validate_rejects,
                        result=result)
    if load:
        warehouse_path = tmp / "warehouse"
        with Warehouse.create(warehouse_path) as wh:
            wh.load_batch(result.rows, result.registry,
                          [b.batch_id for b in batches.values()],
                          {"diagnoses": as_of})
        pipeline.warehouse_path = warehouse_path
    return pipeline
