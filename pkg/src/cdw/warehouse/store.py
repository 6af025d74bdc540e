"""Star-schema storage: columnar tables, versioned manifests, incremental loads.

One writer, many readers. A reader opens the highest-numbered manifest, eagerly
loads and checksum-verifies every referenced column file, and never observes a
later load. A writer mutates in memory and publishes by writing new column
files (version-suffixed, never in place) followed by the next manifest; a crash
anywhere before the manifest rename leaves the previous version fully intact.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from ..dimensions import (
    AGG_MEASURES,
    DIM_FOR,
    DIM_TABLES,
    FACT_TABLES,
    HIERARCHIES,
    PATIENT_SLICERS,
    date_parts,
    dimension_attrs,
    level_attr,
    path_levels,
    resolve_attr,
)
from ..errors import (
    CdwError,
    CorruptWarehouse,
    InvalidSpec,
    UnknownAttribute,
    UnknownLevel,
    WarehouseLocked,
)
from ..schema import format_rfc3339, parse_rfc3339
from ..transform import ConformedRow, DimensionRegistry
from .columnio import read_column, write_column

WATERMARK_KINDS = ("patients", "diagnoses", "treatments", "lab_results")

_MANIFEST_MAGIC = "cdw-manifest 1"


@dataclass
class LoadManifest:
    load_id: int
    batch_ids: list[int]
    watermarks: dict[str, datetime | None]
    table_counts: dict[str, dict[str, int]]  # per table: inserted/updated/skipped
    committed_at: datetime

    def totals(self) -> dict[str, int]:
        out = {"inserted": 0, "updated": 0, "skipped": 0}
        for counts in self.table_counts.values():
            for key in out:
                out[key] += counts.get(key, 0)
        return out

    def to_json_dict(self) -> dict:
        return {
            "load_id": self.load_id,
            "batch_ids": self.batch_ids,
            "watermarks": {k: (format_rfc3339(v) if v else None)
                           for k, v in self.watermarks.items()},
            "table_counts": self.table_counts,
            "committed_at": format_rfc3339(self.committed_at),
        }


@dataclass
class AggregateTable:
    agg_id: str
    fact_table: str
    grain: dict[str, str | None]  # dimension -> level, None = collapsed (ALL)
    key_attrs: list[tuple[str, str]]  # ordered (dimension, attribute) group keys
    columns: dict[str, list]  # "<dim>.<attr>" keys plus additive measure sums
    built_from: int
    dir_name: str

    @property
    def n_rows(self) -> int:
        if not self.columns:
            return 0
        return len(next(iter(self.columns.values())))


def grain_string(fact_table: str, grain: dict[str, str | None]) -> str:
    dims = [d for d in FACT_TABLES[fact_table]["dims"] if d != "patient"]
    return ",".join(f"{d}@{grain.get(d) or 'ALL'}" for d in dims)


def parse_grain(fact_table: str, text: str) -> dict[str, str | None]:
    """Parse 'date@year,cancer@type'; dimensions left out collapse to ALL."""
    dims = [d for d in FACT_TABLES[fact_table]["dims"] if d != "patient"]
    grain: dict[str, str | None] = {d: None for d in dims}
    if not text.strip():
        return grain
    for part in text.split(","):
        part = part.strip()
        if "@" not in part:
            raise UnknownLevel(f"grain component {part!r} is not dim@level")
        dim, _, level = part.partition("@")
        if dim not in grain:
            raise UnknownLevel(f"dimension {dim!r} not on {fact_table}")
        if level.upper() == "ALL":
            grain[dim] = None
            continue
        if level not in [name for name, _ in HIERARCHIES[dim]]:
            raise UnknownLevel(f"{dim!r} has no level {level!r}")
        grain[dim] = level
    return grain


@dataclass
class _Table:
    name: str
    columns: dict[str, list] = field(default_factory=dict)
    dtypes: dict[str, str] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        if not self.columns:
            return 0
        return len(next(iter(self.columns.values())))

    def append(self, values: dict) -> int:
        for col in self.columns:
            self.columns[col].append(values[col])
        return self.n_rows - 1

    def row(self, idx: int) -> dict:
        return {col: vals[idx] for col, vals in self.columns.items()}


def _new_table(name: str) -> _Table:
    if name in DIM_TABLES:
        spec = DIM_TABLES[name]
        dtypes = {c: spec["dtypes"].get(c, "s") for c in spec["columns"]}
        return _Table(name, {c: [] for c in spec["columns"]}, dtypes)
    spec = FACT_TABLES[name]
    return _Table(name, {c: [] for c in spec["columns"]},
                  {c: "i" for c in spec["columns"]})


class Warehouse:
    """A single opened snapshot; writers hold the directory lock for their lifetime."""

    def __init__(self, path: Path, writable: bool):
        self.path = Path(path)
        self._writable = writable
        self._lock_path = self.path / ".lock"
        self._holds_lock = False
        self.version = 0
        self.latest_load_id = 0
        self.committed_at = datetime.now(timezone.utc)
        self.watermarks: dict[str, datetime | None] = {k: None for k in WATERMARK_KINDS}
        self.tables: dict[str, _Table] = {}
        self.aggregates: dict[str, AggregateTable] = {}
        self.load_history: list[dict] = []
        self._dim_index: dict[str, dict[tuple, int]] = {}
        self._fact_index: dict[str, dict[tuple, int]] = {}
        self._sk_counter: dict[str, int] = {}
        self._joined_cache: dict[str, list[dict]] = {}

    # -- lifecycle -------------------------------------------------------

    @classmethod
    def create(cls, path: Path | str) -> "Warehouse":
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        if any(path.glob("manifest.*")):
            raise CdwError(f"warehouse already initialized at {path}")
        wh = cls(path, writable=True)
        wh._acquire_lock()
        wh.version = 0
        wh._init_empty_tables()
        wh._commit()  # publishes manifest.1
        return wh

    @classmethod
    def open(cls, path: Path | str, for_write: bool = False) -> "Warehouse":
        path = Path(path)
        manifests = _list_manifests(path)
        if not manifests:
            raise CorruptWarehouse(f"{path} is not a warehouse (no manifest found)")
        wh = cls(path, writable=for_write)
        if for_write:
            wh._acquire_lock()
        try:
            wh._load_manifest(manifests[-1])
        except Exception:
            wh.close()
            raise
        return wh

    def close(self) -> None:
        if self._holds_lock:
            try:
                self._lock_path.unlink()
            except FileNotFoundError:
                pass
            self._holds_lock = False

    def __enter__(self) -> "Warehouse":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _acquire_lock(self) -> None:
        self.path.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self._lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WarehouseLocked(f"{self.path} already has a writer (lock file present)")
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        self._holds_lock = True

    def _init_empty_tables(self) -> None:
        for name in list(DIM_TABLES) + list(FACT_TABLES):
            self.tables[name] = _new_table(name)
        self._rebuild_indexes()

    # -- loading ---------------------------------------------------------

    def load_batch(
        self,
        rows: list[ConformedRow],
        registry: DimensionRegistry,
        batch_ids: list[int] | None = None,
        extra_watermarks: dict[str, datetime] | None = None,
    ) -> LoadManifest:
        """Upsert dimensions (Type-1) and facts (by natural event key).

        Fact rows at or below the stored watermark for their source kind are
        skipped; the commit is all-or-nothing.
        """
        self._require_writable()
        counts = {name: {"inserted": 0, "updated": 0, "skipped": 0}
                  for name in list(DIM_TABLES) + list(FACT_TABLES)}
        candidates: dict[str, datetime | None] = {k: None for k in WATERMARK_KINDS}

        def observe(kind: str, ts: datetime | None) -> None:
            if ts is not None and (candidates[kind] is None or ts > candidates[kind]):
                candidates[kind] = ts

        # Dimensions first so every fact FK resolves.
        for master in registry.patients:
            self._upsert_dim("dim_patient", (master.national_id,), {
                "national_id": master.national_id,
                "full_name": master.full_name,
                "gender": master.gender,
                "marital_status": master.marital_status,
                "blood_group": master.blood_group,
                "race": master.race,
                "occupation": master.occupation,
            }, counts)
            observe("patients", master.updated_at)
        for site, ctype, stage in sorted(registry.cancers):
            self._upsert_dim("dim_cancer", (site, ctype, stage),
                             {"site": site, "type": ctype, "stage": stage}, counts)
        for drug_code in sorted(registry.treatments):
            category, drug_name = registry.treatments[drug_code]
            self._upsert_dim("dim_treatment", (drug_code,),
                             {"category": category, "drug_code": drug_code,
                              "drug_name": drug_name}, counts)
        for gov, city in sorted(registry.locations):
            self._upsert_dim("dim_location", (gov, city),
                             {"governorate": gov, "city": city}, counts)
        for band in sorted(registry.age_bands):
            self._upsert_dim("dim_age_band", (band,), {"band_label": band}, counts)
        for test_type in sorted(registry.tests):
            self._upsert_dim("dim_test", (test_type,), {"test_type": test_type}, counts)

        # Facts in deterministic source-time order: the newest version of a
        # natural key is applied last and wins.
        for row in sorted(rows, key=lambda r: (r.source_ts, r.ref.source_id, r.ref.line_no)):
            kind = "treatments" if row.fact_kind == "treatment_event" else "lab_results"
            fact = "fact_treatment_event" if row.fact_kind == "treatment_event" else "fact_lab_result"
            observe(kind, row.source_ts)
            stored = self.watermarks[kind]
            if stored is not None and row.source_ts <= stored:
                counts[fact]["skipped"] += 1
                continue
            values = self._resolve_fact(fact, row, counts)
            nk = tuple(values[c] for c in FACT_TABLES[fact]["natural_key"])
            table = self.tables[fact]
            existing = self._fact_index[fact].get(nk)
            if existing is None:
                idx = table.append(values)
                self._fact_index[fact][nk] = idx
                counts[fact]["inserted"] += 1
            else:
                for col, value in values.items():
                    table.columns[col][existing] = value
                counts[fact]["updated"] += 1

        for kind, ts in (extra_watermarks or {}).items():
            if kind not in candidates:
                raise CdwError(f"unknown watermark kind {kind!r}")
            observe(kind, ts)
        for kind in WATERMARK_KINDS:
            current = self.watermarks[kind]
            candidate = candidates[kind]
            if candidate is not None and (current is None or candidate > current):
                self.watermarks[kind] = candidate

        self._joined_cache.clear()
        load_id = self.version + 1
        self.latest_load_id = load_id
        manifest = LoadManifest(
            load_id=load_id,
            batch_ids=list(batch_ids or []),
            watermarks=dict(self.watermarks),
            table_counts={t: c for t, c in counts.items() if any(c.values())},
            committed_at=datetime.now(timezone.utc),
        )
        self.load_history.append({
            "load_id": load_id,
            "batch_ids": manifest.batch_ids,
            "committed_at": manifest.committed_at,
        })
        self._commit()
        loads_dir = self.path / "loads"
        loads_dir.mkdir(exist_ok=True)
        (loads_dir / f"{load_id}.json").write_text(
            json.dumps(manifest.to_json_dict(), indent=2) + "\n")
        return manifest

    def _resolve_fact(self, fact: str, row: ConformedRow, counts) -> dict:
        date_key = row.event_date.year * 10000 + row.event_date.month * 100 + row.event_date.day
        self._ensure_date(date_key, counts)
        patient_idx = self._dim_index["dim_patient"].get((row.national_id,))
        if patient_idx is None:
            raise CdwError(f"conformed row references unknown patient {row.national_id}")
        patient_sk = self.tables["dim_patient"].columns["sk"][patient_idx]
        location_sk = self._resolve_dim(
            "dim_location", (row.governorate, row.city),
            {"governorate": row.governorate, "city": row.city}, counts)
        age_band_sk = self._resolve_dim(
            "dim_age_band", (row.age_band,), {"band_label": row.age_band}, counts)
        if fact == "fact_treatment_event":
            cancer_sk = self._resolve_dim(
                "dim_cancer", (row.cancer_site, row.cancer_type, row.cancer_stage),
                {"site": row.cancer_site, "type": row.cancer_type,
                 "stage": row.cancer_stage}, counts)
            treatment_sk = self._resolve_dim(
                "dim_treatment", (row.drug_code,),
                {"category": row.category, "drug_code": row.drug_code,
                 "drug_name": row.drug_name}, counts)
            return {
                "patient_sk": patient_sk, "date_key": date_key,
                "cancer_sk": cancer_sk, "treatment_sk": treatment_sk,
                "location_sk": location_sk, "age_band_sk": age_band_sk,
                "cost_millis": row.cost_millis, "event_count": 1,
                "death_flag": row.death_flag, "remission_flag": row.remission_flag,
            }
        test_sk = self._resolve_dim("dim_test", (row.test_type,),
                                    {"test_type": row.test_type}, counts)
        return {
            "patient_sk": patient_sk, "date_key": date_key, "test_sk": test_sk,
            "location_sk": location_sk, "age_band_sk": age_band_sk,
            "value_milli": row.value_milli, "abnormal_flag": row.abnormal_flag,
            "event_count": 1,
        }

    def _ensure_date(self, date_key: int, counts) -> None:
        if (date_key,) in self._dim_index["dim_date"]:
            return
        table = self.tables["dim_date"]
        idx = table.append(date_parts(date_key))
        self._dim_index["dim_date"][(date_key,)] = idx
        counts["dim_date"]["inserted"] += 1

    def _upsert_dim(self, name: str, nk: tuple, attrs: dict, counts) -> int:
        """Insert or Type-1 overwrite; returns the member's surrogate key."""
        table = self.tables[name]
        idx = self._dim_index[name].get(nk)
        if idx is None:
            sk = self._sk_counter[name] + 1
            self._sk_counter[name] = sk
            table.append({"sk": sk, **attrs})
            self._dim_index[name][nk] = table.n_rows - 1
            counts[name]["inserted"] += 1
            return sk
        changed = False
        for col, value in attrs.items():
            if table.columns[col][idx] != value:
                table.columns[col][idx] = value
                changed = True
        counts[name]["updated" if changed else "skipped"] += 1
        return table.columns["sk"][idx]

    def _resolve_dim(self, name: str, nk: tuple, attrs: dict, counts) -> int:
        """Plain lookup for fact FK resolution; inserts (and counts) only on a miss."""
        idx = self._dim_index[name].get(nk)
        if idx is not None:
            return self.tables[name].columns["sk"][idx]
        return self._upsert_dim(name, nk, attrs, counts)

    # -- aggregates --------------------------------------------------------

    def build_aggregate(self, fact_table: str, grain: dict[str, str | None] | str) -> AggregateTable:
        """Materialize a group-by of the base fact at the given grain."""
        self._require_writable()
        if fact_table not in FACT_TABLES:
            raise CdwError(f"unknown fact table {fact_table!r}")
        if self.latest_load_id < 1:
            raise CdwError("cannot build an aggregate before the first committed load")
        if isinstance(grain, str):
            grain = parse_grain(fact_table, grain)
        fact_dims = [d for d in FACT_TABLES[fact_table]["dims"] if d != "patient"]
        normalized: dict[str, str | None] = {}
        for dim in fact_dims:
            level = grain.get(dim)
            if level is not None and level not in [n for n, _ in HIERARCHIES[dim]]:
                raise UnknownLevel(f"{dim!r} has no level {level!r}")
            normalized[dim] = level
        for dim in grain:
            if dim not in fact_dims:
                raise UnknownLevel(f"dimension {dim!r} not on {fact_table}")

        key_attrs: list[tuple[str, str]] = []
        for dim in fact_dims:
            if normalized[dim] is None:
                continue
            for lvl in path_levels(dim, normalized[dim]):
                key_attrs.append((dim, level_attr(dim, lvl)))
        measures = AGG_MEASURES[fact_table]

        groups: dict[tuple, dict[str, int]] = {}
        for joined in self._joined_rows(fact_table):
            key = tuple(joined[f"{dim}.{attr}"] for dim, attr in key_attrs)
            acc = groups.get(key)
            if acc is None:
                acc = {m: 0 for m in measures}
                groups[key] = acc
            for measure, col in measures.items():
                acc[measure] += joined[col]

        gstr = grain_string(fact_table, normalized)
        agg_id = f"{fact_table}|{gstr}"
        dir_name = "aggregates/" + hashlib.sha256(agg_id.encode()).hexdigest()[:12]
        columns: dict[str, list] = {f"{d}.{a}": [] for d, a in key_attrs}
        for m in measures:
            columns[m] = []
        for key in sorted(groups):
            for (dim, attr), value in zip(key_attrs, key):
                columns[f"{dim}.{attr}"].append(value)
            for m in measures:
                columns[m].append(groups[key][m])

        agg = AggregateTable(
            agg_id=agg_id, fact_table=fact_table, grain=normalized,
            key_attrs=key_attrs, columns=columns,
            built_from=self.latest_load_id, dir_name=dir_name,
        )
        self.aggregates[agg_id] = agg
        self._commit()
        return agg

    def fresh_aggregates(self, fact_table: str) -> list[AggregateTable]:
        return [a for a in self.aggregates.values()
                if a.fact_table == fact_table and a.built_from == self.latest_load_id]

    # -- scanning ----------------------------------------------------------

    def scan(self, fact_table: str, filters: list[tuple] = ()) -> list[dict]:
        """Fact rows joined to their dimension attributes, filtered.

        Filters are (dimension, attribute, op, value) with op in eq/in/between.
        """
        if fact_table not in FACT_TABLES:
            raise CdwError(f"unknown fact table {fact_table!r}")
        normalized = [(dim, self.check_attribute(fact_table, dim, attr), op, value)
                      for dim, attr, op, value in filters]
        predicate = build_predicate(normalized)
        return [row for row in self._joined_rows(fact_table) if predicate(row)]

    def check_attribute(self, fact_table: str, dim: str, attr: str) -> str:
        """Validate an attribute-or-level name; returns the carrying attribute."""
        if dim == "patient":
            if attr not in PATIENT_SLICERS:
                raise UnknownAttribute(f"patient attribute {attr!r} is not sliceable")
            return attr
        if dim not in FACT_TABLES[fact_table]["dims"]:
            raise UnknownAttribute(f"dimension {dim!r} not on {fact_table}")
        try:
            return resolve_attr(dim, attr)
        except KeyError:
            raise UnknownAttribute(f"{dim!r} has no attribute or level {attr!r}")

    def _joined_rows(self, fact_table: str) -> list[dict]:
        cached = self._joined_cache.get(fact_table)
        if cached is not None:
            return cached
        spec = FACT_TABLES[fact_table]
        table = self.tables[fact_table]
        dim_rows: dict[str, dict[int, dict]] = {}
        for dim, fk in spec["dims"].items():
            if dim == "date":
                continue
            dim_table = self.tables[DIM_FOR[dim]] if dim != "patient" else self.tables["dim_patient"]
            dim_rows[dim] = {dim_table.columns["sk"][i]: dim_table.row(i)
                             for i in range(dim_table.n_rows)}
        joined: list[dict] = []
        for i in range(table.n_rows):
            row = table.row(i)
            out = dict(row)
            for dim, fk in spec["dims"].items():
                if dim == "date":
                    for attr, value in date_parts(row["date_key"]).items():
                        out[f"date.{attr}"] = value
                    continue
                member = dim_rows[dim].get(row[fk])
                if member is None:
                    raise CorruptWarehouse(
                        f"{fact_table} row {i}: {fk}={row[fk]} resolves to no member")
                if dim == "patient":
                    out["patient.national_id"] = member["national_id"]
                    for attr in PATIENT_SLICERS:
                        out[f"patient.{attr}"] = member[attr]
                else:
                    for attr in dimension_attrs(dim):
                        out[f"{dim}.{attr}"] = member[attr]
            joined.append(out)
        self._joined_cache[fact_table] = joined
        return joined

    # -- audit -------------------------------------------------------------

    def audit(self) -> list[str]:
        """Referential-integrity and aggregate-fidelity check; empty means clean."""
        problems: list[str] = []
        for fact, spec in FACT_TABLES.items():
            table = self.tables[fact]
            for dim, fk in spec["dims"].items():
                if dim == "date":
                    valid = set(self.tables["dim_date"].columns["date_key"])
                else:
                    dim_table = "dim_patient" if dim == "patient" else DIM_FOR[dim]
                    valid = set(self.tables[dim_table].columns["sk"])
                for i, value in enumerate(table.columns[fk]):
                    if value not in valid:
                        problems.append(f"{fact}[{i}].{fk}={value} has no {dim} member")
        for agg in self.aggregates.values():
            if agg.built_from != self.latest_load_id:
                continue  # stale: ignored by the planner, not an integrity problem
            recomputed: dict[tuple, dict[str, int]] = {}
            measures = AGG_MEASURES[agg.fact_table]
            for joined in self._joined_rows(agg.fact_table):
                key = tuple(joined[f"{d}.{a}"] for d, a in agg.key_attrs)
                acc = recomputed.setdefault(key, {m: 0 for m in measures})
                for m, col in measures.items():
                    acc[m] += joined[col]
            stored: dict[tuple, dict[str, int]] = {}
            for i in range(agg.n_rows):
                key = tuple(agg.columns[f"{d}.{a}"][i] for d, a in agg.key_attrs)
                stored[key] = {m: agg.columns[m][i] for m in measures}
            if stored != recomputed:
                problems.append(f"aggregate {agg.agg_id} disagrees with base facts")
        return problems

    # -- persistence -------------------------------------------------------

    def _require_writable(self) -> None:
        if not self._writable or not self._holds_lock:
            raise CdwError("warehouse was opened read-only")

    def _commit(self) -> None:
        """Write every table's column files for the new version, then publish."""
        self.version += 1
        self.committed_at = datetime.now(timezone.utc)
        files: list[dict] = []
        for name, table in sorted(self.tables.items()):
            for col in table.columns:
                rel = f"{name}/{col}.v{self.version}.col"
                sha = write_column(self.path / rel, table.dtypes[col], table.columns[col])
                files.append({"owner": name, "column": col, "path": rel,
                              "dtype": table.dtypes[col], "rows": table.n_rows,
                              "sha256": sha})
        for _agg_id, agg in sorted(self.aggregates.items()):
            for col, values in agg.columns.items():
                dtype = _agg_dtype(col)
                rel = f"{agg.dir_name}/{col.replace('.', '__')}.v{self.version}.col"
                sha = write_column(self.path / rel, dtype, values)
                files.append({"owner": agg.dir_name, "column": col, "path": rel,
                              "dtype": dtype, "rows": agg.n_rows, "sha256": sha})
        self._publish_manifest(files)

    def _publish_manifest(self, files: list[dict]) -> None:
        lines = [_MANIFEST_MAGIC,
                 f"version={self.version}",
                 f"committed_at={format_rfc3339(self.committed_at)}",
                 f"latest_load_id={self.latest_load_id}"]
        for kind in WATERMARK_KINDS:
            ts = self.watermarks[kind]
            lines.append(f"watermark kind={kind} ts={format_rfc3339(ts) if ts else '-'}")
        for name, table in sorted(self.tables.items()):
            lines.append(f"table name={name} rows={table.n_rows}")
        for agg_id, agg in sorted(self.aggregates.items()):
            lines.append(
                f"aggregate id={agg_id} fact={agg.fact_table} "
                f"grain={grain_string(agg.fact_table, agg.grain)} dir={agg.dir_name} "
                f"built_from={agg.built_from} rows={agg.n_rows}")
        for entry in files:
            lines.append(
                f"file owner={entry['owner']} column={entry['column']} "
                f"path={entry['path']} dtype={entry['dtype']} rows={entry['rows']} "
                f"sha256={entry['sha256']}")
        for load in self.load_history:
            batches = ",".join(str(b) for b in load["batch_ids"]) or "-"
            lines.append(f"load id={load['load_id']} batches={batches} "
                         f"committed_at={format_rfc3339(load['committed_at'])}")
        text = "\n".join(lines) + "\n"
        tmp = self.path / f"manifest.{self.version}.tmp"
        tmp.write_text(text)
        os.replace(tmp, self.path / f"manifest.{self.version}")

    def _load_manifest(self, version: int) -> None:
        text = (self.path / f"manifest.{version}").read_text()
        lines = text.splitlines()
        if not lines or lines[0] != _MANIFEST_MAGIC:
            raise CorruptWarehouse(f"manifest.{version}: bad header")
        self._init_empty_tables()
        file_entries: list[dict] = []
        agg_meta: dict[str, dict] = {}
        for line in lines[1:]:
            if not line.strip():
                continue
            head, _, rest = line.partition(" ")
            fields = _parse_kv(rest) if rest else {}
            if "=" in head:
                key, _, value = head.partition("=")
                if key == "version":
                    if int(value) != version:
                        raise CorruptWarehouse(
                            f"manifest.{version} claims version {value}")
                    self.version = int(value)
                elif key == "committed_at":
                    self.committed_at = parse_rfc3339(value)
                elif key == "latest_load_id":
                    self.latest_load_id = int(value)
            elif head == "watermark":
                ts = fields["ts"]
                self.watermarks[fields["kind"]] = None if ts == "-" else parse_rfc3339(ts)
            elif head == "table":
                pass  # row counts revalidated from the column files
            elif head == "aggregate":
                agg_meta[fields["id"]] = fields
            elif head == "file":
                file_entries.append(fields)
            elif head == "load":
                batches = ([] if fields["batches"] == "-"
                           else [int(b) for b in fields["batches"].split(",")])
                self.load_history.append({
                    "load_id": int(fields["id"]),
                    "batch_ids": batches,
                    "committed_at": parse_rfc3339(fields["committed_at"]),
                })
            else:
                raise CorruptWarehouse(f"manifest.{version}: unknown record {head!r}")

        for agg_id, fields in agg_meta.items():
            fact = fields["fact"]
            grain = parse_grain(fact, fields["grain"])
            key_attrs = []
            for dim, level in grain.items():
                if level is None:
                    continue
                for lvl in path_levels(dim, level):
                    key_attrs.append((dim, level_attr(dim, lvl)))
            self.aggregates[agg_id] = AggregateTable(
                agg_id=agg_id, fact_table=fact, grain=grain, key_attrs=key_attrs,
                columns={}, built_from=int(fields["built_from"]),
                dir_name=fields["dir"],
            )

        for entry in file_entries:
            dtype, values = read_column(self.path / entry["path"], entry["sha256"])
            if dtype != entry["dtype"] or len(values) != int(entry["rows"]):
                raise CorruptWarehouse(
                    f"{entry['path']}: dtype/row count disagrees with manifest")
            owner = entry["owner"]
            if owner in self.tables:
                self.tables[owner].columns[entry["column"]] = values
            else:
                for agg in self.aggregates.values():
                    if agg.dir_name == owner:
                        agg.columns[entry["column"]] = values
                        break
                else:
                    raise CorruptWarehouse(f"{entry['path']}: unknown owner {owner!r}")
        self._rebuild_indexes()

    def _rebuild_indexes(self) -> None:
        self._dim_index = {}
        self._sk_counter = {}
        for name in DIM_TABLES:
            table = self.tables[name]
            nk_cols = DIM_TABLES[name]["natural_key"]
            index = {}
            for i in range(table.n_rows):
                index[tuple(table.columns[c][i] for c in nk_cols)] = i
            self._dim_index[name] = index
            sk_col = "sk" if "sk" in table.columns else None
            self._sk_counter[name] = max(table.columns[sk_col], default=0) if sk_col else 0
        self._fact_index = {}
        for name in FACT_TABLES:
            table = self.tables[name]
            nk_cols = FACT_TABLES[name]["natural_key"]
            self._fact_index[name] = {
                tuple(table.columns[c][i] for c in nk_cols): i
                for i in range(table.n_rows)
            }
        self._joined_cache = {}


def build_predicate(filters: list[tuple]):
    compiled = []
    for dim, attr, op, value in filters:
        key = f"{dim}.{attr}"
        if op == "eq":
            compiled.append((key, lambda v, ref=value: v == ref))
        elif op == "in":
            members = set(value)
            compiled.append((key, lambda v, ref=members: v in ref))
        elif op == "between":
            lo, hi = value
            compiled.append((key, lambda v, lo=lo, hi=hi: lo <= v <= hi))
        else:
            raise InvalidSpec(f"unknown filter op {op!r}")

    def predicate(row: dict) -> bool:
        return all(check(row[key]) for key, check in compiled)

    return predicate


def _agg_dtype(column: str) -> str:
    if "." not in column:
        return "i"  # additive measure sums
    dim, attr = column.split(".", 1)
    return "i" if (dim, attr) in {("date", a) for a in
                                  ("year", "quarter", "month", "day", "date_key")} else "s"


def latest_manifest_version(path: Path | str) -> int | None:
    """Highest committed manifest version, or None when not a warehouse."""
    manifests = _list_manifests(Path(path))
    return manifests[-1] if manifests else None


def _list_manifests(path: Path) -> list[int]:
    if not path.is_dir():
        return []
    versions = []
    for p in path.glob("manifest.*"):
        suffix = p.name.split(".", 1)[1]
        if suffix.isdigit():
            versions.append(int(suffix))
    return sorted(versions)


def _parse_kv(text: str) -> dict[str, str]:
    fields = {}
    for token in text.split(" "):
        if not token:
            continue
        key, _, value = token.partition("=")
        fields[key] = value
    return fields
