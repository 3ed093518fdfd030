"""Scenario grids for the parameter studies and the force-estimation tables."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .finray import TABLE1_DENSE, TABLE1_SPARSE, FinRayParams, generate
from .model import SolverSettings
from .verify import ErrorReport, horizontal_case, round_trip

LEVELS_MM = (2, 4, 6, 8, 10)
SINGLE_NODES = tuple(range(1, 10))
TWO_ADJACENT = ((2, 3), (4, 5), (6, 7), (8, 9))
TWO_NON_ADJACENT = ((2, 8), (4, 7))
TWO_NON_ADJACENT_LEVELS = ((2, 10), (4, 8), (6, 6), (8, 4), (10, 2))
THREE_ADJACENT = ((1, 2, 3), (4, 5, 6), (7, 8, 9))
THREE_NON_ADJACENT = ((2, 5, 8), (3, 5, 7))
THREE_NON_ADJACENT_LEVELS = ((2, 6, 10), (4, 6, 8), (6, 6, 6), (8, 6, 4), (10, 6, 2))
RADIUS_FACTORS = (0.7, 0.6, 0.5)
FORCE_ESTIMATION = FinRayParams(density="dense", mu=0.7)

STUDY_NAMES = ("mesh-density", "radius-factor", "table2", "table3", "table4")


@dataclass(frozen=True)
class Cell:
    params: FinRayParams
    group: str
    nodes: tuple[int, ...]
    disp_mm: tuple[float, ...]


def _grid(params, group, node_sets, levels):
    return [Cell(params, group, tuple(nodes), tuple(float(v) for v in lvl))
            for nodes in node_sets for lvl in levels]


def cells_for(name: str, mu: float | None = None) -> list[Cell]:
    """Expand a named study into its cells.

    ``mu`` overrides the node-radius factor of the force-estimation
    tables; it is ignored by the two parameter studies, which set it
    themselves.
    """
    est = FORCE_ESTIMATION if mu is None else replace(FORCE_ESTIMATION, mu=mu)
    singles = [(n,) for n in SINGLE_NODES]
    uniform = lambda k: [(v,) * k for v in LEVELS_MM]  # noqa: E731
    if name == "table2":
        return _grid(est, "single", singles, uniform(1))
    if name == "table3":
        return (_grid(est, "two-adjacent", TWO_ADJACENT, uniform(2))
                + _grid(est, "two-non-adjacent", TWO_NON_ADJACENT, TWO_NON_ADJACENT_LEVELS))
    if name == "table4":
        return (_grid(est, "three-adjacent", THREE_ADJACENT, uniform(3))
                + _grid(est, "three-non-adjacent", THREE_NON_ADJACENT, THREE_NON_ADJACENT_LEVELS))
    if name == "mesh-density":
        return (_grid(TABLE1_SPARSE, "sparse", singles, uniform(1))
                + _grid(TABLE1_DENSE, "dense", singles, uniform(1)))
    if name == "radius-factor":
        out = []
        for f in RADIUS_FACTORS:
            out += _grid(replace(TABLE1_DENSE, mu=f), f"mu={f:g}", singles, uniform(1))
        return out
    raise ValueError(f"unknown study {name!r}; choose from {', '.join(STUDY_NAMES)}")


_MODEL_CACHE: dict = {}


def _model(params: FinRayParams):
    if params not in _MODEL_CACHE:
        _MODEL_CACHE[params] = generate(params)
    return _MODEL_CACHE[params]


def run_cell(cell: Cell, settings: SolverSettings) -> ErrorReport:
    model = _model(cell.params)
    case = horizontal_case(model, [(n, d * 1e-3) for n, d in zip(cell.nodes, cell.disp_mm)])
    return round_trip(model, case, settings, group=cell.group)


def _run_cell_args(args):
    return run_cell(*args)


def run_cells(cells: list[Cell], settings: SolverSettings, workers: int = 1,
              name: str = "") -> ErrorReport:
    """Round trip on every cell; results keep the input order."""
    report = ErrorReport(name=name)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_cell_args, [(c, settings) for c in cells]))
    else:
        parts = [run_cell(c, settings) for c in cells]
    for part in parts:
        report.extend(part)
    return report
