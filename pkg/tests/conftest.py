from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import pytest

from cdw.ingest import SourceDescriptor, StagingArea
from cdw.olap import CubeEngine
from cdw.synthgen import SynthConfig, generate
from cdw.transform import (
    TransformConfig,
    conform,
    dedup_merge_patients,
    validate_and_clean,
)
from cdw.warehouse import Warehouse

SEED_AS_OF = datetime(2015, 1, 2, tzinfo=timezone.utc)
SEED_CONFIG = SynthConfig(seed=42, n_patients=500, duplicate_rate=0.1,
                          malformed_rate=0.02, orphan_rate=0.02)


@dataclass
class Seeded:
    """The seed-42 synthetic warehouse plus every intermediate the oracle needs."""
    src_dir: Path
    staging_dir: Path
    warehouse_dir: Path
    summary: dict
    staged: dict
    parse_failures: dict
    validate_rejects: dict
    masters: list
    merge_log: list
    conformed: list
    conform_counts: dict


def build_seeded(root: Path, config: SynthConfig = SEED_CONFIG) -> Seeded:
    src = root / "src"
    summary = generate(config, src)
    staging = StagingArea(root / "staging")
    batches = [
        staging.extract_csv(SourceDescriptor("patients-1", "patients",
                                             str(src / "patients.csv"), SEED_AS_OF)),
        staging.extract_csv(SourceDescriptor("diagnoses-1", "diagnoses",
                                             str(src / "diagnoses.csv"), SEED_AS_OF)),
        staging.extract_csv(SourceDescriptor("treatments-1", "treatments",
                                             str(src / "treatments.csv"), SEED_AS_OF)),
        staging.extract_medical_files(src / "medical_files", SEED_AS_OF),
    ]
    tconfig = TransformConfig(today=datetime(2015, 6, 1).date())
    staged, failures, rejects = {}, {}, {}
    clean_patients, clean_events = [], []
    for batch in batches:
        kind = batch.source.kind
        staged[kind] = len(batch.records)
        failures[kind] = len(batch.failures)
        clean, batch_rejects = validate_and_clean(batch, tconfig)
        rejects[kind] = batch_rejects
        if kind == "patients":
            clean_patients.extend(clean)
        else:
            clean_events.extend(clean)
    masters, merge_log = dedup_merge_patients(clean_patients)
    result = conform(clean_events, masters)
    warehouse_dir = root / "warehouse"
    with Warehouse.create(warehouse_dir) as wh:
        wh.load_batch(result.rows, result.registry,
                      [b.batch_id for b in batches], {"diagnoses": SEED_AS_OF})
    return Seeded(
        src_dir=src,
        staging_dir=root / "staging",
        warehouse_dir=warehouse_dir,
        summary=summary,
        staged=staged,
        parse_failures=failures,
        validate_rejects=rejects,
        masters=masters,
        merge_log=merge_log,
        conformed=result.rows,
        conform_counts=result.counts,
    )


@pytest.fixture(scope="session")
def seeded(tmp_path_factory) -> Seeded:
    return build_seeded(tmp_path_factory.mktemp("seeded"))


@pytest.fixture(scope="session")
def seeded_engine(seeded):
    wh = Warehouse.open(seeded.warehouse_dir)
    yield CubeEngine(wh)
    wh.close()
