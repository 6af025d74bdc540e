"""cdw command line: synth, ingest, etl run, aggregate build, query, report, serve.

Machine-readable JSON goes to stdout; diagnostics to stderr. Exit codes:
0 success, 1 validation error, 2 I/O or corruption.
"""

from __future__ import annotations

import json
import logging
import socket
import sys
from datetime import datetime, timezone
from functools import wraps
from pathlib import Path

import click

from .errors import BindFailure, CdwError, MissingFile
from .etl import open_or_create_warehouse, run_etl
from .ingest import SourceDescriptor, StagingArea
from .olap import CubeEngine, QuerySpec, define_cube
from .reports import run_report
from .schema import parse_rfc3339
from .synthgen import SynthConfig, generate
from .transform import TransformConfig
from .warehouse import grain_string, parse_grain

logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                    format="%(levelname)s %(name)s: %(message)s")


def _emit(obj) -> None:
    click.echo(json.dumps(obj, ensure_ascii=False))


def _note(message: str) -> None:
    click.echo(message, err=True)


def handle_errors(fn):
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CdwError as exc:
            _note(f"error: {exc.code}: {exc.message}")
            sys.exit(exc.exit_code)
        except FileNotFoundError as exc:
            _note(f"error: MissingFile: {exc}")
            sys.exit(2)
        except OSError as exc:
            _note(f"error: IoFailure: {exc}")
            sys.exit(2)
    return wrapper


@click.group()
def main():
    """Miniature clinical data warehouse for cancer-registry analytics."""


warehouse_option = click.option(
    "--warehouse", envvar="CDW_WAREHOUSE", default="warehouse", show_default=True,
    help="Warehouse directory (env CDW_WAREHOUSE).")
staging_option = click.option(
    "--staging", envvar="CDW_STAGING", default="staging", show_default=True,
    help="Staging directory (env CDW_STAGING).")


@main.command()
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--patients", type=int, default=100, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--dup", type=float, default=0.0, show_default=True,
              help="Duplicate patient-row rate.")
@click.option("--malformed", type=float, default=0.0, show_default=True)
@click.option("--orphan", type=float, default=0.0, show_default=True)
@click.option("--years", default="2010-2014", show_default=True,
              help="Event year range, e.g. 2010-2014.")
@click.option("--events", default="3-7", show_default=True,
              help="Treatments and lab tests per patient, e.g. 3-7.")
@handle_errors
def synth(seed, patients, out, dup, malformed, orphan, years, events):
    """Generate deterministic synthetic source files."""
    y0, y1 = _parse_range(years, "--years")
    e0, e1 = _parse_range(events, "--events")
    try:
        config = SynthConfig(seed=seed, n_patients=patients, duplicate_rate=dup,
                             malformed_rate=malformed, orphan_rate=orphan,
                             year_start=y0, year_end=y1,
                             events_min=e0, events_max=e1)
    except ValueError as exc:
        _note(f"error: InvalidSpec: {exc}")
        sys.exit(1)
    summary = generate(config, out)
    _note(f"wrote {sum(summary['files'].values())} records under {out}")
    _emit(summary)


@main.command()
@staging_option
@click.option("--dir", "source_dir", type=click.Path(path_type=Path),
              help="Ingest patients/diagnoses/treatments CSVs and medical_files/ from one directory.")
@click.option("--kind", type=click.Choice(["patients", "diagnoses", "treatments", "lab_results"]))
@click.option("--path", type=click.Path(path_type=Path))
@click.option("--as-of", "as_of", default=None,
              help="Extraction timestamp (RFC 3339); defaults to now.")
@click.option("--source-id", default=None)
@handle_errors
def ingest(staging, source_dir, kind, path, as_of, source_id):
    """Extract source files into the staging area."""
    area = StagingArea(staging)
    timestamp = parse_rfc3339(as_of) if as_of else datetime.now(timezone.utc)
    batches = []
    if source_dir:
        for csv_kind in ("patients", "diagnoses", "treatments"):
            csv_path = source_dir / f"{csv_kind}.csv"
            if csv_path.exists():
                batches.append(_ingest_one(area, csv_kind, csv_path, timestamp, None))
        medical = source_dir / "medical_files"
        if medical.is_dir():
            batch = area.extract_medical_files(medical, timestamp)
            batches.append(batch)
    elif kind and path:
        batches.append(_ingest_one(area, kind, path, timestamp, source_id))
    else:
        _note("error: InvalidSpec: pass --dir, or --kind with --path")
        sys.exit(1)
    for batch in batches:
        _note(f"batch {batch.batch_id}: {batch.source.kind} "
              f"read={batch.counts['read']} staged={batch.counts['staged']}")
    _emit([{"batch_id": b.batch_id, "kind": b.source.kind, **b.counts}
           for b in batches])


def _ingest_one(area: StagingArea, kind: str, path: Path, as_of, source_id):
    source_id = source_id or f"{kind}-{area.next_batch_id()}"
    if kind == "lab_results":
        return area.extract_medical_files(path, as_of, source_id)
    return area.extract_csv(SourceDescriptor(source_id, kind, str(path), as_of))


@main.group()
def etl():
    """Transform and load staged batches."""


@etl.command("run")
@staging_option
@warehouse_option
@click.option("--id-pattern", default=None,
              help="Override the national-ID validation regex.")
@handle_errors
def etl_run(staging, warehouse, id_pattern):
    """Validate, dedup/merge, conform and load every staged batch."""
    config = TransformConfig(national_id_pattern=id_pattern) if id_pattern else None
    summary = run_etl(StagingArea(staging), warehouse, config)
    _note(f"{summary['batches']} batches")
    _emit(summary)


@main.group()
def aggregate():
    """Materialized aggregate tables."""


@aggregate.command("build")
@warehouse_option
@click.option("--grain", required=True,
              help="Comma-separated dim@level list; omitted dimensions collapse to ALL.")
@click.option("--cube", default="treatment", show_default=True,
              type=click.Choice(["treatment", "lab"]))
@handle_errors
def aggregate_build(warehouse, grain, cube):
    """Build and register an aggregate table at a grain."""
    fact = define_cube(cube).fact_table
    parsed = parse_grain(fact, grain)
    with open_or_create_warehouse(warehouse, for_write=True) as wh:
        if wh.latest_load_id < 1:
            _note("error: InvalidSpec: no committed load to aggregate")
            sys.exit(1)
        agg = wh.build_aggregate(fact, parsed)
        _note(f"built {agg.agg_id} ({agg.n_rows} rows)")
        _emit({"aggregate_id": agg.agg_id, "fact_table": fact,
               "grain": grain_string(fact, agg.grain), "rows": agg.n_rows,
               "built_from": agg.built_from})


@main.command()
@warehouse_option
@click.option("--file", "spec_file", required=True, type=click.Path(path_type=Path))
@click.option("--base-scan", is_flag=True, default=False,
              help="Bypass the planner and scan base facts.")
@handle_errors
def query(warehouse, spec_file, base_scan):
    """Run a QuerySpec from a JSON file and print the CellSet."""
    if not Path(spec_file).exists():
        raise MissingFile(f"no such spec file: {spec_file}")
    spec = QuerySpec.from_dict(json.loads(Path(spec_file).read_text()))
    wh = open_or_create_warehouse(warehouse)
    try:
        engine = CubeEngine(wh)
        plan = engine.plan(spec)
        cellset = engine.query(spec, force_base_scan=base_scan)
    finally:
        wh.close()
    _note(f"plan: {plan.access_path}" +
          (f" ({plan.aggregate_id})" if plan.aggregate_id else ""))
    _emit(cellset.to_dict())


@main.group()
def report():
    """The three canned clinical reports."""


def _report_command(engine_params: dict, warehouse: str, report_id: str, csv_out):
    wh = open_or_create_warehouse(warehouse)
    try:
        result = run_report(CubeEngine(wh), report_id, engine_params)
    finally:
        wh.close()
    if csv_out:
        Path(csv_out).write_text(result.table_csv())
        _note(f"table CSV written to {csv_out}")
    _emit(result.to_dict())


@report.command("treatment-cost")
@warehouse_option
@click.option("--from", "start", required=True, type=int)
@click.option("--to", "end", required=True, type=int)
@click.option("--group-by", default="type", show_default=True,
              type=click.Choice(["site", "type", "stage"]))
@click.option("--csv", "csv_out", type=click.Path(path_type=Path))
@handle_errors
def report_treatment_cost(warehouse, start, end, group_by, csv_out):
    _report_command({"from": start, "to": end, "group_by": group_by},
                    warehouse, "treatment-cost", csv_out)


@report.command("death-rate")
@warehouse_option
@click.option("--cancer-type", required=True)
@click.option("--from", "start", required=True, type=int)
@click.option("--to", "end", required=True, type=int)
@click.option("--csv", "csv_out", type=click.Path(path_type=Path))
@handle_errors
def report_death_rate(warehouse, cancer_type, start, end, csv_out):
    _report_command({"cancer_type": cancer_type, "from": start, "to": end},
                    warehouse, "death-rate", csv_out)


@report.command("drug-impact")
@warehouse_option
@click.option("--drug-code", required=True)
@click.option("--cancer-type", required=True)
@click.option("--from", "start", required=True, type=int)
@click.option("--to", "end", required=True, type=int)
@click.option("--csv", "csv_out", type=click.Path(path_type=Path))
@handle_errors
def report_drug_impact(warehouse, drug_code, cancer_type, start, end, csv_out):
    _report_command({"drug_code": drug_code, "cancer_type": cancer_type,
                     "from": start, "to": end}, warehouse, "drug-impact", csv_out)


@main.command()
@warehouse_option
@click.option("--bind", envvar="CDW_BIND", default="127.0.0.1:8000", show_default=True,
              help="host:port (env CDW_BIND).")
@click.option("--port", type=int, default=None, help="Overrides the port in --bind.")
@click.option("--assets", type=click.Path(path_type=Path), default=None,
              help="Static directory for the pivot UI.")
@click.option("--access-log", "access_log_path", type=click.Path(path_type=Path),
              default=None, help="Access-log NDJSON path (default: inside the warehouse).")
@click.option("--cors", default=None, help="Comma-separated allowed origins.")
@handle_errors
def serve(warehouse, bind, port, assets, access_log_path, cors):
    """Serve the JSON API (and optionally the pivot UI)."""
    import uvicorn

    from .service import create_app

    host, _, bind_port = bind.partition(":")
    final_port = port if port is not None else int(bind_port or 8000)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host or "127.0.0.1", final_port))
    except OSError as exc:
        raise BindFailure(f"cannot bind {host}:{final_port}: {exc}")
    finally:
        probe.close()
    app = create_app(warehouse, assets, access_log_path,
                     cors.split(",") if cors else None)
    _note(f"serving warehouse {warehouse} on {host or '127.0.0.1'}:{final_port}")
    uvicorn.run(app, host=host or "127.0.0.1", port=final_port, log_level="warning")


def _parse_range(text: str, flag: str) -> tuple[int, int]:
    try:
        lo, _, hi = text.partition("-")
        return int(lo), int(hi)
    except ValueError:
        _note(f"error: InvalidSpec: {flag} expects LO-HI, got {text!r}")
        sys.exit(1)


if __name__ == "__main__":
    main()
