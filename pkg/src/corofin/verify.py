"""Independent checks: closed-form beam results, finite-difference tangents
and the displacement -> force -> displacement round trip.

The round trip estimates forces with :func:`displacement_control`, applies
them with :func:`force_control` on the same mesh and reports how far the
recovered displacements land from the imposed ones.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .assembly import SingularTangentError, assemble_tangent
from .element import internal_force
from .model import DOFS_PER_NODE, DofKind, SolverSettings, StructureModel
from .solver import (ControlDofInsensitiveError, DisplacementLoadCase, displacement_control,
                     force_control)

NA = "N.A."


def cantilever_oracle(E: float, I: float, L: float, delta_tip: float) -> float:
    """Tip force of a linear Euler-Bernoulli cantilever, 3*E*I*delta/L**3."""
    if abs(delta_tip) / L > 0.02:
        raise ValueError(f"delta/L = {abs(delta_tip) / L:.3g} outside the linear regime (<= 0.02)")
    return 3.0 * E * I * delta_tip / L ** 3


def _dof_steps(model: StructureModel, h: float) -> np.ndarray:
    """Per-DOF step: h times the shortest member attached to the node."""
    lengths = np.full(model.n_nodes, np.inf)
    p = model.props
    raw = p["L0_eff"] + p["offset"]
    for (i, j), L in zip(model.m_conn, raw):
        lengths[i] = min(lengths[i], L)
        lengths[j] = min(lengths[j], L)
    lengths[~np.isfinite(lengths)] = 1.0
    return h * np.repeat(lengths, DOFS_PER_NODE)


def fd_tangent_check(model: StructureModel, u: np.ndarray | None = None, h: float = 1e-7) -> float:
    """Worst relative column error between the assembled tangent and
    central differences of the internal force.

    ``h`` is relative: each DOF is perturbed by ``h`` times the length of
    the shortest member at its node. Columns are compared in the 2-norm,
    relative to the larger of the analytic column norm and 1e-12 times the
    largest column norm.
    """
    u = np.zeros(model.n_dof) if u is None else np.asarray(u, dtype=float)
    K = assemble_tangent(model, u)
    steps = _dof_steps(model, h)
    col_norm = np.linalg.norm(K, axis=0)
    floor = 1e-12 * max(col_norm.max(), 1e-300)
    worst = 0.0
    for j in range(model.n_dof):
        e = np.zeros(model.n_dof)
        e[j] = steps[j]
        fd = (internal_force(model, u + e) - internal_force(model, u - e)) / (2.0 * steps[j])
        err = np.linalg.norm(fd - K[:, j]) / max(col_norm[j], floor)
        worst = max(worst, err)
    return worst


# --- round-trip error reports ----------------------------------------------

@dataclass
class CellResult:
    """One scenario cell: a set of controlled DOFs driven together."""

    group: str
    dofs: tuple[int, ...]
    imposed: tuple[float, ...]
    forces: tuple[float, ...] = ()
    recovered: tuple[float, ...] = ()
    errors_pct: tuple[float, ...] = ()
    status: str = "ok"
    note: str = ""

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(d // DOFS_PER_NODE for d in self.dofs)

    @property
    def valid(self) -> bool:
        return self.status == "ok"

    @property
    def level(self) -> str:
        """Displacement label in mm, e.g. ``(2,6,10)``."""
        vals = [_fmt_mm(v) for v in self.imposed]
        return vals[0] if len(vals) == 1 else "(" + ",".join(vals) + ")"

    @property
    def label(self) -> str:
        return "+".join(str(n) for n in self.nodes)


def _fmt_mm(v: float) -> str:
    return f"{abs(v) * 1e3:g}"


def _mean(values: Iterable[float]) -> float | None:
    vals = [abs(v) for v in values]
    return float(np.mean(vals)) if vals else None


@dataclass
class ErrorReport:
    cells: list[CellResult] = field(default_factory=list)
    name: str = ""

    def extend(self, other: "ErrorReport") -> None:
        self.cells.extend(other.cells)

    def valid_cells(self) -> list[CellResult]:
        return [c for c in self.cells if c.valid]

    def level_averages(self) -> dict[str, float | None]:
        """Mean |error| per displacement level; N.A. cells excluded."""
        out: dict[str, list[float]] = {}
        for c in self.cells:
            out.setdefault(c.level, [])
            if c.valid:
                out[c.level].extend(c.errors_pct)
        return {k: _mean(v) for k, v in out.items()}

    def node_averages(self) -> dict[str, float | None]:
        """Mean |error| per node group; N.A. cells excluded."""
        out: dict[str, list[float]] = {}
        for c in self.cells:
            key = f"{c.group}:{c.label}" if c.group else c.label
            out.setdefault(key, [])
            if c.valid:
                out[key].extend(c.errors_pct)
        return {k: _mean(v) for k, v in out.items()}

    def overall(self) -> float | None:
        return _mean(e for c in self.valid_cells() for e in c.errors_pct)

    def max_abs_error(self) -> float | None:
        errs = [abs(e) for c in self.valid_cells() for e in c.errors_pct]
        return max(errs) if errs else None

    def summary(self) -> dict:
        return {
            "name": self.name,
            "cells": len(self.cells),
            "invalid_cells": [f"{c.group}:{c.label}@{c.level}" for c in self.cells if not c.valid],
            "per_level": self.level_averages(),
            "per_node": self.node_averages(),
            "overall": self.overall(),
            "max_abs": self.max_abs_error(),
        }

    CSV_FIELDS = ("group", "nodes", "dofs", "imposed_mm", "force_N", "recovered_mm",
                  "error_pct", "status", "note")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for c in self.cells:
            def join(xs, fmt):
                return ";".join(fmt(x) for x in xs) if xs else NA
            w.writerow([
                c.group, c.label, ";".join(str(d) for d in c.dofs),
                join(c.imposed, lambda v: repr(round(v * 1e3, 12))),
                join(c.forces, repr),
                join(c.recovered, lambda v: repr(v * 1e3)),
                join(c.errors_pct, repr),
                c.status, c.note,
            ])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def force_stable(model: StructureModel, u: np.ndarray) -> bool:
    """True when the free-DOF tangent at ``u`` is positive definite.

    Equilibria failing this are unstable under fixed (dead) loads: a
    force-driven solve cannot follow a path through them.
    """
    K = assemble_tangent(model, u)[np.ix_(model.free, model.free)]
    try:
        scipy.linalg.cho_factor(K, check_finite=False)
    except np.linalg.LinAlgError:
        return False
    return True


def round_trip(model: StructureModel, case: DisplacementLoadCase,
               settings: SolverSettings = SolverSettings(), group: str = "",
               check_settings: SolverSettings | None = None,
               load_ratio: str = "coupled") -> ErrorReport:
    """Force estimate followed by a forward check on the same mesh.

    The cell is reported N.A. when either solve fails, or when the
    estimate path visits a state that is unstable under fixed loads: the
    forward check then lands on another equilibrium branch, so its
    discrepancy (still recorded) says nothing about the estimate.
    """
    ctrl = tuple(int(d) for d in case.controlled)
    imposed = tuple(float(case.D_total[d]) for d in ctrl)
    cell = CellResult(group, ctrl, imposed)
    report = ErrorReport([cell])
    if not ctrl:
        return report
    unstable: list[int] = []

    def watch(n, state):
        if not unstable and not force_stable(model, state.u):
            unstable.append(n)

    try:
        est = displacement_control(model, case, settings, load_ratio=load_ratio, monitor=watch)
    except (SingularTangentError, ControlDofInsensitiveError) as exc:
        cell.status, cell.note = NA, f"estimate failed: {exc}"
        return report
    cell.forces = tuple(float(f) for f in est.contact_forces)
    if not est.converged:
        cell.status, cell.note = NA, "estimate not converged"
        return report
    F_ext = np.zeros(model.n_dof)
    F_ext[list(ctrl)] = est.contact_forces
    try:
        chk = force_control(model, F_ext, check_settings or settings)
    except SingularTangentError as exc:
        cell.status, cell.note = NA, f"check failed: {exc}"
        return report
    if not chk.converged:
        cell.status, cell.note = NA, "check not converged"
        return report
    cell.recovered = tuple(float(chk.u_final[d]) for d in ctrl)
    cell.errors_pct = tuple(100.0 * (r - i) / abs(i) for r, i in zip(cell.recovered, imposed))
    if unstable:
        cell.status = NA
        cell.note = f"estimate path unstable under fixed loads from increment {unstable[0]}"
    return report


def horizontal_case(model: StructureModel, node_disp: Sequence[tuple[int, float]],
                    F0: float | None = None) -> DisplacementLoadCase:
    """Load case with x-displacements (metres) at the given nodes."""
    targets = {model.dof(node, DofKind.X): d for node, d in node_disp}
    return DisplacementLoadCase.build(model, targets, F0)
