"""The ETL driver: validate -> dedup/merge -> conform -> load, over all staged batches.

Reprocessing is safe: the warehouse's per-kind watermarks skip fact rows whose
source timestamps were already loaded, and dimension updates are Type-1
overwrites. Reject files land beside their staging batch; the merge log lives
at the staging root.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from .ingest import StagingArea
from .schema import format_rfc3339
from .transform import (
    RejectEntry,
    TransformConfig,
    conform,
    dedup_merge_patients,
    validate_and_clean,
)
from .warehouse import Warehouse, latest_manifest_version

logger = logging.getLogger(__name__)


def open_or_create_warehouse(path: Path | str, for_write: bool = False) -> Warehouse:
    if latest_manifest_version(path) is None:
        if not for_write:
            raise FileNotFoundError(f"no warehouse at {path}")
        return Warehouse.create(path)
    return Warehouse.open(path, for_write=for_write)


def run_etl(staging: StagingArea, warehouse_path: Path | str,
            config: TransformConfig | None = None) -> dict:
    """Transform every staged batch and load the result in one commit."""
    config = config or TransformConfig()
    summaries = staging.list_staged()
    if not summaries:
        return {"batches": 0, "staged": {}, "parse_failures": {},
                "validate_rejects": {}, "conform_rejects": {},
                "master_records": 0, "merge_log_entries": 0, "facts": {},
                "load": None}

    staged_counts: dict[str, int] = {}
    parse_failures: dict[str, int] = {}
    rejects_by_batch: dict[int, list[RejectEntry]] = {}
    batch_by_source: dict[str, int] = {}
    validate_reject_counts: dict[str, int] = {}
    clean_patients = []
    clean_events = []
    diagnoses_as_of = None

    for summary in summaries:
        batch = staging.load_batch(summary.batch_id)
        kind = batch.source.kind
        staged_counts[kind] = staged_counts.get(kind, 0) + len(batch.records)
        parse_failures[kind] = parse_failures.get(kind, 0) + len(batch.failures)
        batch_by_source[batch.source.source_id] = batch.batch_id
        clean, rejects = validate_and_clean(batch, config)
        rejects_by_batch[batch.batch_id] = list(rejects)
        validate_reject_counts[kind] = validate_reject_counts.get(kind, 0) + len(rejects)
        if kind == "patients":
            clean_patients.extend(clean)
        else:
            clean_events.extend(clean)
        if kind == "diagnoses":
            as_of = batch.source.as_of
            if diagnoses_as_of is None or as_of > diagnoses_as_of:
                diagnoses_as_of = as_of

    masters, merge_log = dedup_merge_patients(clean_patients)
    _write_merge_log(staging.root / "merge_log.ndjson", merge_log)

    result = conform(clean_events, masters)
    conform_reject_counts: dict[str, int] = {}
    for reject in result.rejects:
        batch_id = batch_by_source.get(reject.ref.source_id)
        if batch_id is not None:
            rejects_by_batch.setdefault(batch_id, []).append(reject)
        else:
            logger.warning("reject for unknown source %s", reject.ref.source_id)
    for kind, counts in result.counts.items():
        if counts["rejected"]:
            conform_reject_counts[kind] = counts["rejected"]

    for batch_id, rejects in rejects_by_batch.items():
        _write_rejects(staging.root / str(batch_id) / "rejects.csv", rejects)

    extra = {"diagnoses": diagnoses_as_of} if diagnoses_as_of else None
    with open_or_create_warehouse(warehouse_path, for_write=True) as wh:
        manifest = wh.load_batch(result.rows, result.registry,
                                 [s.batch_id for s in summaries], extra)
        facts = {name: wh.tables[name].n_rows
                 for name in ("fact_treatment_event", "fact_lab_result")}

    return {
        "batches": len(summaries),
        "staged": staged_counts,
        "parse_failures": parse_failures,
        "validate_rejects": validate_reject_counts,
        "conform_rejects": conform_reject_counts,
        "master_records": len(masters),
        "merge_log_entries": len(merge_log),
        "facts": facts,
        "load": manifest.to_json_dict(),
    }


def _write_rejects(path: Path, rejects: list[RejectEntry]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_id", "line_no", "reason_code", "detail"])
        for reject in rejects:
            writer.writerow([reject.ref.source_id, reject.ref.line_no,
                             reject.reason_code, reject.detail])


def _write_merge_log(path: Path, merge_log) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in merge_log:
            fh.write(json.dumps({
                "national_id": entry.national_id,
                "surviving_fields_from": {
                    field: {"source_id": ref.source_id, "line_no": ref.line_no}
                    for field, ref in entry.surviving_fields_from.items()
                },
                "merged_record_refs": [
                    {"source_id": ref.source_id, "line_no": ref.line_no}
                    for ref in entry.merged_record_refs
                ],
                "merged_at": format_rfc3339(entry.merged_at),
            }) + "\n")
