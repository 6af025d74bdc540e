"""Extraction into the staging area.

Sources are CSV exports (patients/diagnoses/treatments) and a directory of
line-oriented medical-file records (lab results). Every extraction persists a
numbered batch under ``staging/<batch_id>/`` as newline-delimited records, with
structurally broken inputs staged into a parse-failure sidecar instead of being
dropped. Conservation holds per batch: rows read = rows staged + parse failures.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import HeaderMismatch, IoFailure, MissingFile
from .schema import (
    CSV_COLUMNS,
    MEDICAL_FILE_KEYS,
    SOURCE_KINDS,
    TEST_TYPES,
    format_rfc3339,
    parse_rfc3339,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SourceDescriptor:
    source_id: str
    kind: str  # one of SOURCE_KINDS
    path: str
    as_of: datetime

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")


@dataclass
class RawRecord:
    source_id: str
    line_no: int  # 1-based position in the source (file ordinal for medical files)
    fields: dict[str, str]
    extracted_at: datetime
    origin: str | None = None  # filename for medical-file records


@dataclass
class ParseFailure:
    source_id: str
    line_no: int
    reason: str  # RaggedRow | UnknownTestType | DuplicateFile | MalformedRecord
    detail: str


@dataclass
class StagingBatch:
    batch_id: int
    source: SourceDescriptor
    records: list[RawRecord] = field(default_factory=list)
    failures: list[ParseFailure] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        staged = len(self.records)
        return {"read": staged + len(self.failures), "staged": staged}


@dataclass(frozen=True)
class BatchSummary:
    batch_id: int
    source_id: str
    kind: str
    as_of: datetime
    read: int
    staged: int


class StagingArea:
    """Persisted staging directory; single writer, batches are immutable."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- extraction ----------------------------------------------------------

    def extract_csv(self, source: SourceDescriptor) -> StagingBatch:
        if source.kind not in CSV_COLUMNS:
            raise ValueError(f"{source.kind!r} is not a CSV source kind")
        path = Path(source.path)
        if not path.is_file():
            raise MissingFile(f"source file not found: {path}")
        expected = CSV_COLUMNS[source.kind]

        batch = StagingBatch(batch_id=self._next_batch_id(), source=source)
        extracted_at = datetime.now(timezone.utc)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise HeaderMismatch(f"{path}: empty file, expected header {expected}")
            if header != expected:
                missing = [c for c in expected if c not in header]
                extra = [c for c in header if c not in expected]
                raise HeaderMismatch(
                    f"{path}: header mismatch for kind {source.kind!r}; "
                    f"missing={missing} extra={extra}"
                )
            for row in reader:
                if not row:
                    continue  # blank line, not a data row
                line_no = reader.line_num
                if len(row) != len(expected):
                    batch.failures.append(ParseFailure(
                        source.source_id, line_no, "RaggedRow",
                        f"expected {len(expected)} fields, got {len(row)}",
                    ))
                    continue
                batch.records.append(RawRecord(
                    source_id=source.source_id,
                    line_no=line_no,
                    fields=dict(zip(expected, row)),
                    extracted_at=extracted_at,
                ))
        self._persist(batch)
        return batch

    def extract_medical_files(
        self,
        dir_path: Path | str,
        as_of: datetime,
        source_id: str = "medical_files",
    ) -> StagingBatch:
        dir_path = Path(dir_path)
        if not dir_path.is_dir():
            raise MissingFile(f"medical-file directory not found: {dir_path}")
        source = SourceDescriptor(source_id, "lab_results", str(dir_path), as_of)
        batch = StagingBatch(batch_id=self._next_batch_id(), source=source)
        extracted_at = datetime.now(timezone.utc)

        seen: set[str] = set()
        files = sorted(p for p in dir_path.iterdir() if p.is_file() and not p.name.startswith("."))
        for ordinal, file_path in enumerate(files, start=1):
            canonical = file_path.name.casefold()
            if canonical in seen:
                logger.warning("duplicate medical file skipped: %s", file_path.name)
                batch.failures.append(ParseFailure(
                    source_id, ordinal, "DuplicateFile",
                    f"{file_path.name}: canonical name seen before",
                ))
                continue
            seen.add(canonical)
            try:
                fields = _parse_medical_file(file_path)
            except _MedicalFileError as exc:
                batch.failures.append(ParseFailure(source_id, ordinal, exc.reason, str(exc)))
                continue
            batch.records.append(RawRecord(
                source_id=source_id,
                line_no=ordinal,
                fields=fields,
                extracted_at=extracted_at,
                origin=file_path.name,
            ))
        self._persist(batch)
        return batch

    # -- catalogue -----------------------------------------------------------

    def list_staged(self, kind: str | None = None) -> list[BatchSummary]:
        summaries = []
        for batch_dir in sorted(self._batch_dirs()):
            meta = json.loads((self.root / str(batch_dir) / "batch.json").read_text())
            if kind is not None and meta["source"]["kind"] != kind:
                continue
            summaries.append(BatchSummary(
                batch_id=meta["batch_id"],
                source_id=meta["source"]["source_id"],
                kind=meta["source"]["kind"],
                as_of=parse_rfc3339(meta["source"]["as_of"]),
                read=meta["counts"]["read"],
                staged=meta["counts"]["staged"],
            ))
        return summaries

    def load_batch(self, batch_id: int) -> StagingBatch:
        """Read a persisted batch back for transformation."""
        batch_dir = self.root / str(batch_id)
        if not batch_dir.is_dir():
            raise MissingFile(f"no staged batch {batch_id} under {self.root}")
        meta = json.loads((batch_dir / "batch.json").read_text())
        source = SourceDescriptor(
            source_id=meta["source"]["source_id"],
            kind=meta["source"]["kind"],
            path=meta["source"]["path"],
            as_of=parse_rfc3339(meta["source"]["as_of"]),
        )
        batch = StagingBatch(batch_id=batch_id, source=source)
        extracted_at = parse_rfc3339(meta["extracted_at"])
        with open(batch_dir / "records.ndjson", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                batch.records.append(RawRecord(
                    source_id=source.source_id,
                    line_no=rec["line_no"],
                    fields=rec["fields"],
                    extracted_at=extracted_at,
                    origin=rec.get("origin"),
                ))
        failure_path = batch_dir / "failures.ndjson"
        if failure_path.exists():
            with open(failure_path, encoding="utf-8") as fh:
                for line in fh:
                    rec = json.loads(line)
                    batch.failures.append(ParseFailure(
                        source.source_id, rec["line_no"], rec["reason"], rec["detail"],
                    ))
        return batch

    def next_batch_id(self) -> int:
        return self._next_batch_id()

    # -- internals -----------------------------------------------------------

    def _batch_dirs(self) -> list[int]:
        return [int(p.name) for p in self.root.iterdir() if p.is_dir() and p.name.isdigit()]

    def _next_batch_id(self) -> int:
        existing = self._batch_dirs()
        return max(existing, default=0) + 1

    def _persist(self, batch: StagingBatch) -> None:
        batch_dir = self.root / str(batch.batch_id)
        try:
            batch_dir.mkdir(parents=True, exist_ok=False)
        except FileExistsError:
            raise IoFailure(f"staging batch directory already exists: {batch_dir}")
        meta = {
            "batch_id": batch.batch_id,
            "source": {
                "source_id": batch.source.source_id,
                "kind": batch.source.kind,
                "path": batch.source.path,
                "as_of": format_rfc3339(batch.source.as_of),
            },
            "counts": batch.counts,
            "extracted_at": format_rfc3339(
                batch.records[0].extracted_at if batch.records else datetime.now(timezone.utc)
            ),
        }
        (batch_dir / "batch.json").write_text(json.dumps(meta, indent=2) + "\n")
        with open(batch_dir / "records.ndjson", "w", encoding="utf-8") as fh:
            for rec in batch.records:
                entry = {"line_no": rec.line_no, "fields": rec.fields}
                if rec.origin:
                    entry["origin"] = rec.origin
                fh.write(json.dumps(entry) + "\n")
        if batch.failures:
            with open(batch_dir / "failures.ndjson", "w", encoding="utf-8") as fh:
                for failure in batch.failures:
                    fh.write(json.dumps({
                        "line_no": failure.line_no,
                        "reason": failure.reason,
                        "detail": failure.detail,
                    }) + "\n")


class _MedicalFileError(Exception):
    def __init__(self, reason: str, detail: str):
        super().__init__(detail)
        self.reason = reason


def _parse_medical_file(path: Path) -> dict[str, str]:
    fields: dict[str, str] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise _MedicalFileError("MalformedRecord", f"{path.name}: unreadable ({exc})")
    for line in text.splitlines():
        if not line.strip():
            continue
        if ":" not in line:
            raise _MedicalFileError("MalformedRecord", f"{path.name}: line without 'key: value': {line!r}")
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    missing = [k for k in MEDICAL_FILE_KEYS if k not in fields]
    extra = [k for k in fields if k not in MEDICAL_FILE_KEYS]
    if missing or extra:
        raise _MedicalFileError(
            "MalformedRecord", f"{path.name}: missing keys {missing}, unexpected keys {extra}"
        )
    if fields["test_type"].strip().casefold() not in TEST_TYPES:
        raise _MedicalFileError(
            "UnknownTestType", f"{path.name}: test_type {fields['test_type']!r}"
        )
    return {k: fields[k] for k in MEDICAL_FILE_KEYS}
