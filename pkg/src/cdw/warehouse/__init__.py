from .store import (
    AggregateTable,
    LoadManifest,
    Warehouse,
    grain_string,
    latest_manifest_version,
    parse_grain,
)

__all__ = ["AggregateTable", "LoadManifest", "Warehouse", "grain_string",
           "latest_manifest_version", "parse_grain"]
