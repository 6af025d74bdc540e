from .cubes import CubeDefinition, DerivedMeasure, catalog, define_cube
from .engine import CellSet, CubeEngine, Filter, QueryPlan, QuerySpec

__all__ = [
    "CellSet", "CubeDefinition", "CubeEngine", "DerivedMeasure", "Filter",
    "QueryPlan", "QuerySpec", "catalog", "define_cube",
]
