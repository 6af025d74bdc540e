"""Acceptance criteria, one test per criterion, each printing a PASS line.

Scale: the seed-42 synthetic warehouse (500 patients, ~5,000 facts). Exact
integer equality for additive measures; relative error <= 1e-12 for derived
rates and averages.
"""

from __future__ import annotations

import json
import random
import shutil

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from cdw.access_log import AccessLog, request_digest
from cdw.cli import main
from cdw.errors import CorruptTable
from cdw.olap import CubeEngine, QuerySpec
from cdw.reports import death_rate_report, drug_impact_report, treatment_cost_report
from cdw.service import create_app
from cdw.synthgen import SynthConfig
from cdw.transform import merge_patient_group
from cdw.warehouse import Warehouse
from cdw.warehouse.store import FACT_TABLES

import oracle
from conftest import build_seeded

RATE_MEASURES = {"death_rate", "remission_rate"}


def _announce(name: str) -> None:
    print(f"[ACCEPTANCE] PASS {name}")


# 1 ---------------------------------------------------------------------------

def test_oracle_equivalence_100_random_queries(seeded, seeded_engine):
    generator = oracle.SpecGenerator(seeded.conformed, seeded.masters, seed=0)
    checked = 0
    for _ in range(100):
        spec = generator.generate()
        got = seeded_engine.query(spec).to_dict()
        want = oracle.evaluate(spec, seeded.conformed, seeded.masters)
        problems = oracle.compare_cellsets(got, want, rel_tol=1e-12)
        assert not problems, f"spec {json.dumps(spec)}: {problems[:5]}"
        checked += 1
    assert checked == 100
    _announce(f"oracle equivalence ({checked} random query specs)")


# 2 ---------------------------------------------------------------------------

def test_aggregate_path_equivalence_20_random_grains(seeded):
    rng = random.Random(1)
    levels = oracle.LEVELS
    checked = 0
    with Warehouse.open(seeded.warehouse_dir, for_write=True) as wh:
        for i in range(20):
            cube_id = "treatment" if i % 2 == 0 else "lab"
            fact = "fact_treatment_event" if cube_id == "treatment" else "fact_lab_result"
            dims = [d for d in FACT_TABLES[fact]["dims"] if d != "patient"]
            grain = {}
            for dim in dims:
                grain[dim] = rng.choice([None] + levels[dim])
            if all(level is None for level in grain.values()):
                grain["date"] = "year"
            wh.build_aggregate(fact, grain)

            engine = CubeEngine(wh)
            grained = [(d, l) for d, l in grain.items() if l is not None]
            rng.shuffle(grained)
            rows, columns = grained[:1], grained[1:2]
            additive = [m for m in oracle.ADDITIVE[cube_id]]
            measures = rng.sample(additive, rng.randint(1, len(additive)))
            if cube_id == "treatment" and rng.random() < 0.5:
                measures.append("avg_cost")
            spec = QuerySpec(cube_id=cube_id, rows=rows, columns=columns,
                             measures=measures)
            plan = engine.plan(spec)
            assert plan.access_path == "aggregate", \
                f"grain {grain} should be served by its own aggregate"
            via_plan = engine.query(spec).to_dict()
            via_base = engine.query(spec, force_base_scan=True).to_dict()
            assert via_plan == via_base

            if cube_id == "treatment":
                with_rate = QuerySpec(cube_id=cube_id, rows=rows, columns=columns,
                                      measures=measures + ["death_rate"])
                rate_plan = engine.plan(with_rate)
                assert rate_plan.access_path == "base_scan"
            checked += 1
    assert checked == 20
    _announce(f"aggregate-path equivalence ({checked} random grains)")


# 3 ---------------------------------------------------------------------------

def test_etl_conservation_and_idempotence(tmp_path):
    runner = CliRunner()
    env = {"CDW_WAREHOUSE": str(tmp_path / "warehouse"),
           "CDW_STAGING": str(tmp_path / "staging")}
    src = tmp_path / "src"
    result = runner.invoke(main, [
        "synth", "--seed", "42", "--patients", "500", "--out", str(src),
        "--dup", "0.1", "--malformed", "0.02", "--orphan", "0.02"],
        env=env, catch_exceptions=False)
    assert result.exit_code == 0
    expected = json.loads(result.stdout)["expected"]

    assert runner.invoke(main, ["ingest", "--dir", str(src), "--as-of",
                                "2015-01-02T00:00:00Z"],
                         env=env, catch_exceptions=False).exit_code == 0
    run1 = runner.invoke(main, ["etl", "run"], env=env, catch_exceptions=False)
    assert run1.exit_code == 0
    summary = json.loads(run1.stdout)

    assert summary["staged"] == expected["staged"]
    assert summary["parse_failures"]["lab_results"] == expected["parse_failures"]["lab_results"]
    assert summary["validate_rejects"].get("patients", 0) == expected["validate_rejects"]["patients"]
    assert summary["validate_rejects"].get("treatments", 0) == expected["validate_rejects"]["treatments"]
    assert summary["conform_rejects"] == expected["conform_rejects"]
    assert summary["master_records"] == expected["master_records"]
    assert summary["merge_log_entries"] == expected["merge_log_entries"]
    assert summary["facts"] == expected["facts"]

    def snapshot():
        with Warehouse.open(tmp_path / "warehouse") as wh:
            state = {}
            for fact in FACT_TABLES:
                table = wh.tables[fact]
                state[fact] = {"rows": table.n_rows,
                               "totals": {c: sum(v) for c, v in table.columns.items()}}
            return state

    before = snapshot()
    run2 = runner.invoke(main, ["etl", "run"], env=env, catch_exceptions=False)
    assert run2.exit_code == 0
    assert snapshot() == before
    _announce("ETL conservation and idempotence (seed 42, 500 patients)")


# 4 ---------------------------------------------------------------------------

@pytest.mark.parametrize("dup_rate", [0.0, 0.1, 0.3])
def test_dedup_correctness(tmp_path, dup_rate):
    config = SynthConfig(seed=42, n_patients=60, duplicate_rate=dup_rate)
    seeded = build_seeded(tmp_path, config)
    assert len(seeded.masters) == 60
    assert len(seeded.merge_log) == int(60 * dup_rate)

    masters_by_id = {m.national_id: m for m in seeded.masters}
    # replay the merge log: the documented per-field rule over the raw clean
    # duplicates must reproduce each merged master byte-for-byte
    clean_by_id = {}
    for record in _clean_patient_records(seeded):
        clean_by_id.setdefault(record.national_id, []).append(record)
    for entry in seeded.merge_log:
        group = clean_by_id[entry.national_id]
        assert len(group) == len(entry.merged_record_refs)
        replayed, surviving = merge_patient_group(group)
        assert replayed == masters_by_id[entry.national_id]
        assert surviving == entry.surviving_fields_from
    _announce(f"dedup correctness (duplicate_rate={dup_rate})")


def _clean_patient_records(seeded):
    # masters for never-duplicated ids are the clean records themselves;
    # rebuild the full clean list from staging for the duplicated ones
    from cdw.ingest import StagingArea
    from cdw.transform import TransformConfig, validate_and_clean
    from datetime import datetime

    staging = StagingArea(seeded.staging_dir)
    config = TransformConfig(today=datetime(2015, 6, 1).date())
    records = []
    for summary in staging.list_staged(kind="patients"):
        clean, _rejects = validate_and_clean(staging.load_batch(summary.batch_id), config)
        records.extend(clean)
    return records


# 5 ---------------------------------------------------------------------------

def test_drill_down_additivity_50_random_drills(seeded, seeded_engine):
    rng = random.Random(5)
    drills = 0
    while drills < 50:
        cube_id = rng.choice(["treatment", "lab"])
        dims = [d for d in oracle.CUBE_DIMS[cube_id]
                if len(oracle.LEVELS[d]) > 1]
        dim = rng.choice(dims)
        level_index = rng.randrange(len(oracle.LEVELS[dim]) - 1)
        level = oracle.LEVELS[dim][level_index]
        axis = rng.choice(["rows", "columns"])
        other_axis_dim = rng.choice([d for d in oracle.CUBE_DIMS[cube_id] if d != dim])
        spec = {"cube_id": cube_id,
                "rows": [], "columns": [],
                "measures": list(oracle.ADDITIVE[cube_id]),
                "filters": []}
        spec[axis] = [{"dimension": dim, "level": level}]
        if rng.random() < 0.4:
            other = "columns" if axis == "rows" else "rows"
            spec[other] = [{"dimension": other_axis_dim,
                            "level": oracle.LEVELS[other_axis_dim][0]}]

        parent = seeded_engine.query(spec)
        axis_tuples = parent.row_axis if axis == "rows" else parent.column_axis
        if not axis_tuples:
            continue
        pick = rng.randrange(len(axis_tuples))
        member = axis_tuples[pick][0]
        member_path = list(member["path"].values())

        drilled_spec = seeded_engine.drill_down(spec, axis, member_path)
        child = seeded_engine.query(drilled_spec)

        # parent cell values for the chosen member = sums over the child cells
        for measure in spec["measures"]:
            if axis == "rows":
                parent_total = parent.row_totals[pick][measure]
            else:
                parent_total = parent.column_totals[pick][measure]
            child_sum = sum(cell[measure] for row in child.cells
                            for cell in row if cell is not None)
            assert child_sum == parent_total, (measure, member_path)

        rolled = seeded_engine.roll_up(drilled_spec, axis)
        assert rolled.to_dict() == QuerySpec.from_dict(spec).to_dict()
        assert seeded_engine.query(rolled).to_dict() == parent.to_dict()
        drills += 1
    _announce("drill-down additivity and roll-up inversion (50 random drills)")


# 6 ---------------------------------------------------------------------------

def test_report_query_agreement(seeded, seeded_engine):
    def check_against_oracle(spec_dict, expectations):
        want = oracle.evaluate(spec_dict, seeded.conformed, seeded.masters)
        for path, measure, got_value in expectations:
            cell = want["cells"][path[0]][path[1]] if want["cells"] else None
            want_value = None if cell is None else cell[measure]
            if isinstance(got_value, float) and isinstance(want_value, float):
                assert got_value == pytest.approx(want_value, rel=1e-12)
            else:
                assert got_value == want_value

    cost = treatment_cost_report(seeded_engine, 2010, 2014, group_by="type")
    spec = cost.metadata["query_specs"]["table"]
    want = oracle.evaluate(spec, seeded.conformed, seeded.masters)
    assert len(cost.table) == len(want["cells"])
    for i, row in enumerate(cost.table):
        assert row["sum_cost_millis"] == want["cells"][i][0]["sum_cost"]
        assert row["event_count"] == want["cells"][i][0]["event_count"]
        assert row["avg_cost_millis"] == pytest.approx(
            want["cells"][i][0]["avg_cost"], rel=1e-12)

    cancer_type = seeded_engine.warehouse.tables["dim_cancer"].columns["type"][0]
    death = death_rate_report(seeded_engine, cancer_type, 2010, 2014)
    overall_want = oracle.evaluate(death.metadata["query_specs"]["overall"],
                                   seeded.conformed, seeded.masters)
    assert death.table[0]["death_rate"] == pytest.approx(
        overall_want["cells"][0][0]["death_rate"], rel=1e-12)

    drug = drug_impact_report(seeded_engine, "DOX", cancer_type, 2010, 2014)
    for row, key in ((drug.table[0], "drug"), (drug.table[1], "comparator")):
        want = oracle.evaluate(drug.metadata["query_specs"][key],
                               seeded.conformed, seeded.masters)
        cell = want["cells"][0][0] if want["cells"] else None
        for measure in ("remission_rate", "death_rate"):
            want_value = None if cell is None else cell[measure]
            if row[measure] is None:
                assert want_value is None
            else:
                assert row[measure] == pytest.approx(want_value, rel=1e-12)
    _announce("report-query agreement (three reports vs documented specs)")


# 7 ---------------------------------------------------------------------------

def test_atomicity_and_corruption_detection(seeded, tmp_path, monkeypatch):
    workdir = tmp_path / "atomic"
    shutil.copytree(seeded.warehouse_dir, workdir)

    probe_spec = {"cube_id": "treatment",
                  "rows": [{"dimension": "date", "level": "year"}],
                  "measures": ["event_count", "sum_cost", "deaths"]}
    with Warehouse.open(workdir) as wh:
        before = CubeEngine(wh).query(probe_spec).to_dict()
        version_before = wh.version

    extra = build_seeded(tmp_path / "extra-src",
                         SynthConfig(seed=99, n_patients=10))
    writer = Warehouse.open(workdir, for_write=True)
    monkeypatch.setattr(
        writer, "_publish_manifest",
        lambda files: (_ for _ in ()).throw(RuntimeError("interrupted")))
    with pytest.raises(RuntimeError):
        writer.load_batch(extra.conformed, _registry_of(extra))
    writer.close()

    with Warehouse.open(workdir) as wh:
        assert wh.version == version_before
        assert CubeEngine(wh).query(probe_spec).to_dict() == before

    tampered = tmp_path / "tampered"
    shutil.copytree(seeded.warehouse_dir, tampered)
    victim = max(tampered.glob("fact_treatment_event/cost_millis.v*.col"),
                 key=lambda p: int(p.name.split(".v")[1].split(".")[0]))
    blob = bytearray(victim.read_bytes())
    blob[len(blob) // 2] ^= 0x01
    victim.write_bytes(bytes(blob))
    with pytest.raises(CorruptTable):
        Warehouse.open(tampered)
    _announce("atomicity of loads and corruption detection")


def _registry_of(seeded):
    from cdw.transform import conform
    # reuse the conform registry by re-deriving it from the conformed rows
    result = conform([], seeded.masters)
    return result.registry


# 8 ---------------------------------------------------------------------------

def test_service_contract_replay_and_log(seeded, tmp_path):
    year_spec = {"cube_id": "treatment",
                 "rows": [{"dimension": "date", "level": "year"}],
                 "measures": ["event_count", "sum_cost", "death_rate"]}
    cancer_type = "colorectal"
    requests = [
        ("GET", "/api/catalog", None, "catalog"),
        ("POST", "/api/query", year_spec, "query"),
        ("POST", "/api/drill",
         {"spec": year_spec, "axis": "rows", "member_path": [2012]}, "drill"),
        ("GET", f"/api/reports/treatment-cost?from=2010&to=2014&group_by=type",
         None, "report"),
        ("GET", f"/api/reports/death-rate?cancer_type={cancer_type}&from=2010&to=2014",
         None, "report"),
        ("GET", f"/api/reports/drug-impact?drug_code=DOX&cancer_type={cancer_type}"
                f"&from=2010&to=2014", None, "report"),
    ]

    log1 = tmp_path / "log1.ndjson"
    recorded = []
    with TestClient(create_app(seeded.warehouse_dir, access_log_path=log1)) as client:
        for method, url, body, _op in requests:
            response = client.request(method, url, json=body,
                                      headers={"X-Actor": "dr_accept"})
            assert response.status_code == 200
            recorded.append(response.content)

    entries = AccessLog(log1).read()
    assert len(entries) == len(requests)  # exactly one entry per 2xx response
    for (method, url, body, op), entry in zip(requests, entries):
        path, _, query = url.partition("?")
        payload = body
        if query:
            payload = {"report_id": path.rsplit("/", 1)[1],
                       **dict(p.split("=") for p in query.split("&"))}
        assert entry.request_digest == request_digest(method, path, payload)
        assert entry.operation == op
        assert entry.actor == "dr_accept"
        assert entry.outcome == "ok"

    with TestClient(create_app(seeded.warehouse_dir,
                               access_log_path=tmp_path / "log2.ndjson")) as client:
        for (method, url, body, _op), want in zip(requests, recorded):
            again = client.request(method, url, json=body,
                                   headers={"X-Actor": "dr_accept"})
            assert again.content == want
    _announce("service contract replay and access-log accounting")
