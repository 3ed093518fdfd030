"""Incremental-iterative nonlinear solvers.

:func:`displacement_control` drives selected DOFs to prescribed
displacements and returns the external forces that hold them there; this
is the force-estimation direction. :func:`force_control` is the ordinary
load-stepped Newton solve used for forward analysis and for checking
estimated forces.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .assembly import Factorization, SingularTangentError, apply_constraints, assemble_tangent
from .element import MemberStates, internal_force, member_states
from .model import SolverSettings, StructureModel

log = logging.getLogger(__name__)

LOAD_RATIO_MODES = ("coupled", "elementwise")


class ControlDofInsensitiveError(RuntimeError):
    pass


@dataclass(frozen=True)
class IncrementRecord:
    increment: int
    iterations: int
    rho: float


@dataclass(frozen=True)
class IncrementState:
    u: np.ndarray
    F: np.ndarray
    lam: np.ndarray
    q_l: MemberStates
    F_int: np.ndarray


@dataclass(frozen=True)
class SolveResult:
    u_final: np.ndarray
    lambda_final: np.ndarray
    controlled: tuple[int, ...]
    contact_forces: np.ndarray
    trace: list[IncrementRecord]
    converged: bool
    state: IncrementState = field(repr=False)

    def forces_by_dof(self) -> dict[int, float]:
        return {d: float(f) for d, f in zip(self.controlled, self.contact_forces)}


@dataclass(frozen=True)
class DisplacementLoadCase:
    D_total: np.ndarray
    F_ref: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.D_total, dtype=float)
        Fr = np.asarray(self.F_ref, dtype=float)
        if D.shape != Fr.shape:
            raise ValueError("D_total and F_ref must have the same shape")
        for i in np.flatnonzero(D):
            if Fr[i] == 0.0 or np.sign(Fr[i]) != np.sign(D[i]):
                raise ValueError(f"F_ref at dof {i} must be nonzero with the sign of D_total")
        object.__setattr__(self, "D_total", D)
        object.__setattr__(self, "F_ref", Fr)

    @property
    def controlled(self) -> np.ndarray:
        return np.flatnonzero(self.D_total)

    def check(self, model: StructureModel) -> None:
        if self.D_total.shape != (model.n_dof,):
            raise ValueError(f"load case size {self.D_total.shape} != ({model.n_dof},)")
        clash = set(self.controlled.tolist()) & model.constraints
        if clash:
            raise ValueError(f"controlled DOFs {sorted(clash)} are constrained")

    @classmethod
    def build(cls, model: StructureModel, targets: Mapping[int, float],
              F0: float | None = None) -> "DisplacementLoadCase":
        """Load case from ``{dof: displacement}``.

        Without ``F0``, the reference force magnitude is scaled so that the
        largest linear response at the controlled DOFs equals the largest
        target displacement.
        """
        D = np.zeros(model.n_dof)
        for dof, val in targets.items():
            D[int(dof)] = float(val)
        ctrl = np.flatnonzero(D)
        sign = np.zeros(model.n_dof)
        sign[ctrl] = np.sign(D[ctrl])
        if ctrl.size == 0:
            return cls(D, sign)
        if F0 is None:
            Ks = apply_constraints(assemble_tangent(model, np.zeros(model.n_dof)), model.constraints)
            resp = Factorization(Ks).solve(sign)
            F0 = np.max(np.abs(D[ctrl])) / np.max(np.abs(resp[ctrl]))
        return cls(D, sign * F0)


def _factor(model: StructureModel, u: np.ndarray, st: MemberStates) -> Factorization:
    return Factorization(apply_constraints(assemble_tangent(model, u, st), model.constraints))


def _load_ratio(U: np.ndarray, target: np.ndarray, mode: str) -> np.ndarray:
    """Load-ratio vector producing ``target`` at the controlled DOFs.

    ``U[i, j]`` is the response of controlled DOF i to the reference force
    of controlled DOF j. ``coupled`` solves the small system exactly;
    ``elementwise`` divides by the total response at each DOF, which is
    only exact for a single controlled DOF.
    """
    if mode == "elementwise":
        u_hat = U.sum(axis=1)
        if np.any(np.abs(u_hat) < 1e-14 * np.max(np.abs(u_hat))) or not np.any(u_hat):
            raise ControlDofInsensitiveError("control DOF insensitive to F_ref")
        return target / u_hat
    diag = np.abs(np.diag(U))
    if np.any(diag < 1e-14 * np.max(np.abs(U))) or not np.any(diag):
        raise ControlDofInsensitiveError("control DOF insensitive to F_ref")
    return np.linalg.solve(U, target)


def displacement_control(model: StructureModel, case: DisplacementLoadCase,
                         settings: SolverSettings = SolverSettings(),
                         load_ratio: str = "coupled",
                         monitor: Callable[[int, IncrementState], None] | None = None) -> SolveResult:
    """Estimate the external forces that hold the controlled DOFs at ``case.D_total``.

    ``monitor``, when given, is called with each converged increment.
    """
    if load_ratio not in LOAD_RATIO_MODES:
        raise ValueError(f"load_ratio must be one of {LOAD_RATIO_MODES}")
    case.check(model)
    ctrl = case.controlled
    m = ctrl.size
    fixed = model.fixed
    u = np.zeros(model.n_dof)
    lam = np.zeros(m)
    st = member_states(model, u)
    F_int = internal_force(model, u, st)
    # one reference-force column per controlled DOF
    Fcols = np.zeros((model.n_dof, m))
    Fcols[ctrl, np.arange(m)] = case.F_ref[ctrl]
    trace: list[IncrementRecord] = []

    def state() -> IncrementState:
        return IncrementState(u, Fcols @ lam, lam, st, F_int)

    def result(converged: bool) -> SolveResult:
        return SolveResult(u, lam, tuple(int(d) for d in ctrl), lam * case.F_ref[ctrl],
                           trace, converged, state())

    if m == 0:
        return result(True)

    step = case.D_total[ctrl] / settings.n_inc
    tol, maxiter = settings.tolerance, settings.maxiter
    for n in range(1, settings.n_inc + 1):
        try:
            fact = _factor(model, u, st)
            U_hat = fact.solve(Fcols)
            dlam = _load_ratio(U_hat[ctrl], step, load_ratio)
            lam_n1 = lam + dlam
            du = fact.solve(Fcols @ dlam)
            u_n1 = u + du
            st_tmp = member_states(model, u_n1)
            F_int_n1 = internal_force(model, u_n1, st_tmp)
            R = Fcols @ lam_n1 - F_int_n1
            R[fixed] = 0.0
            rho = float(np.sqrt(R @ R))

            k = 0
            du_corr = np.zeros(model.n_dof)
            dlam_corr = np.zeros(m)
            while rho > tol and k < maxiter:
                fact = _factor(model, u_n1 + du_corr, st_tmp)
                u_acute = fact.solve(R)
                U_grave = fact.solve(Fcols)
                ratio = _load_ratio(U_grave[ctrl], u_acute[ctrl], load_ratio)
                dlam_corr = dlam_corr - ratio
                du_corr = du_corr + fact.solve(R - Fcols @ ratio)
                st_tmp = member_states(model, u_n1 + du_corr)
                F_int_n1 = internal_force(model, u_n1 + du_corr, st_tmp)
                R = Fcols @ (lam_n1 + dlam_corr) - F_int_n1
                R[fixed] = 0.0
                rho = float(np.sqrt(R @ R))
                k += 1
        except SingularTangentError as exc:
            exc.trace = list(trace)
            raise
        if not np.isfinite(rho) or rho > tol:
            log.warning("increment %d not converged after %d iterations (rho=%.3e)", n, k, rho)
            trace.append(IncrementRecord(n, k, rho))
            return result(False)
        lam = lam_n1 + dlam_corr
        u = u_n1 + du_corr
        st = st_tmp
        F_int = F_int_n1
        trace.append(IncrementRecord(n, k, rho))
        if monitor is not None:
            monitor(n, state())
    return result(True)


def force_control(model: StructureModel, F_ext: np.ndarray,
                  settings: SolverSettings = SolverSettings()) -> SolveResult:
    F_ext = np.asarray(F_ext, dtype=float)
    if F_ext.shape != (model.n_dof,):
        raise ValueError(f"force vector size {F_ext.shape} != ({model.n_dof},)")
    fixed = model.fixed
    if np.any(F_ext[fixed] != 0.0):
        raise ValueError("external force applied at a constrained DOF")
    applied = np.flatnonzero(F_ext)
    u = np.zeros(model.n_dof)
    st = member_states(model, u)
    F_int = internal_force(model, u, st)
    trace: list[IncrementRecord] = []

    def result(converged: bool, lam: float) -> SolveResult:
        lam_vec = np.full(applied.size, lam)
        return SolveResult(u, lam_vec, tuple(int(d) for d in applied), lam * F_ext[applied],
                           trace, converged,
                           IncrementState(u, lam * F_ext, lam_vec, st, F_int))

    if applied.size == 0:
        return result(True, 1.0)

    tol, maxiter = settings.tolerance, settings.maxiter
    lam = 0.0
    for n in range(1, settings.n_inc + 1):
        target = n / settings.n_inc
        F_app = target * F_ext
        u_try, st_try, F_int_try = u, st, F_int
        R = F_app - F_int_try
        R[fixed] = 0.0
        rho = float(np.sqrt(R @ R))
        k = 0
        try:
            while rho > tol and k < maxiter:
                fact = _factor(model, u_try, st_try)
                u_try = u_try + fact.solve(R)
                st_try = member_states(model, u_try)
                F_int_try = internal_force(model, u_try, st_try)
                R = F_app - F_int_try
                R[fixed] = 0.0
                rho = float(np.sqrt(R @ R))
                k += 1
        except SingularTangentError as exc:
            exc.trace = list(trace)
            raise
        trace.append(IncrementRecord(n, k, rho))
        if not np.isfinite(rho) or rho > tol:
            log.warning("force increment %d not converged (rho=%.3e)", n, rho)
            return result(False, lam)
        u, st, F_int, lam = u_try, st_try, F_int_try, target
    return result(True, lam)


def reaction_forces(model: StructureModel, state: IncrementState) -> dict[int, float]:
    """Support reactions: internal force at every constrained DOF."""
    return {int(d): float(state.F_int[d]) for d in model.fixed}
