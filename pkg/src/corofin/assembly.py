"""Tangent stiffness assembly, support constraints and the linear solve."""
from __future__ import annotations

from typing import Iterable

import warnings

import numpy as np
import scipy.linalg

from .element import ElementFrame, LocalForces, MemberStates, b_matrix, member_states
from .model import Member, StructureModel


class SingularTangentError(RuntimeError):
    """Raised when the constrained tangent cannot be factorized."""

    def __init__(self, message="singular tangent: structure under-constrained or at limit point",
                 trace=None):
        super().__init__(message)
        self.trace = trace


def element_tangent(member: Member, frame: ElementFrame, q_l: LocalForces) -> np.ndarray:
    """Consistent 6x6 tangent: material part plus the two geometric terms."""
    L0 = member.L0_eff
    EI = member.E * member.I
    C = np.array([
        [member.E * member.A / L0, 0.0, 0.0],
        [0.0, 4 * EI / L0, 2 * EI / L0],
        [0.0, 2 * EI / L0, 4 * EI / L0],
    ])
    B = b_matrix(frame)
    c, s, L = frame.c, frame.s, frame.L
    r = np.array([-c, -s, 0.0, c, s, 0.0])
    z = np.array([s, -c, 0.0, -s, c, 0.0])
    N, M1, M2 = q_l
    return (B.T @ C @ B + N / L * np.outer(z, z)
            + (M1 + M2) / L ** 2 * (np.outer(r, z) + np.outer(z, r)))


def element_tangents(model: StructureModel, st: MemberStates) -> np.ndarray:
    """Vectorized :func:`element_tangent`, shape (n_mem, 6, 6)."""
    p = model.props
    L0 = p["L0_eff"]
    EI = p["E"] * p["I"]
    n = len(L0)
    c, s, L = st.c, st.s, st.L
    zero, one = np.zeros(n), np.ones(n)
    r = np.stack([-c, -s, zero, c, s, zero], axis=1)
    z = np.stack([s, -c, zero, -s, c, zero], axis=1)
    zl = z / L[:, None]
    B = np.stack([r, -zl + np.stack([zero, zero, one, zero, zero, zero], axis=1),
                  -zl + np.stack([zero, zero, zero, zero, zero, one], axis=1)], axis=1)
    C = np.zeros((n, 3, 3))
    C[:, 0, 0] = p["E"] * p["A"] / L0
    C[:, 1, 1] = C[:, 2, 2] = 4 * EI / L0
    C[:, 1, 2] = C[:, 2, 1] = 2 * EI / L0
    K = np.einsum("nai,nab,nbj->nij", B, C, B)
    K += (st.N / L)[:, None, None] * np.einsum("ni,nj->nij", z, z)
    rz = np.einsum("ni,nj->nij", r, z)
    K += ((st.M1 + st.M2) / L ** 2)[:, None, None] * (rz + rz.transpose(0, 2, 1))
    return K


def assemble_tangent(model: StructureModel, u: np.ndarray,
                     states: MemberStates | None = None) -> np.ndarray:
    """Unconstrained global tangent (dense, order 3*n_nodes).

    ``states`` are the member frames and local forces at ``u``; they are
    recomputed when omitted.
    """
    st = member_states(model, u) if states is None else states
    Ke = element_tangents(model, st)
    dofs = model.member_dofs
    K = np.zeros((model.n_dof, model.n_dof))
    rows = np.repeat(dofs, 6, axis=1)
    cols = np.tile(dofs, (1, 6))
    np.add.at(K, (rows.ravel(), cols.ravel()), Ke.reshape(-1))
    return K


def apply_constraints(K: np.ndarray, constraints: Iterable[int]) -> np.ndarray:
    """Zero the rows and columns of fixed DOFs and put 1 on their diagonal."""
    Ks = np.array(K, dtype=float, copy=True)
    fixed = np.fromiter(constraints, dtype=int)
    if fixed.size:
        Ks[fixed, :] = 0.0
        Ks[:, fixed] = 0.0
        Ks[fixed, fixed] = 1.0
    return Ks


class Factorization:
    """LU factors of a constrained tangent, reusable for several right-hand sides."""

    def __init__(self, Ks: np.ndarray, pivot_tol: float = 1e-14):
        scale = np.max(np.abs(np.diag(Ks))) if Ks.size else 1.0
        with warnings.catch_warnings():
            # exact zero pivots are reported below as SingularTangentError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(Ks, check_finite=False)
        if not np.all(np.isfinite(lu)) or np.min(np.abs(np.diag(lu))) < pivot_tol * scale:
            raise SingularTangentError()
        self._lu = (lu, piv)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(self._lu, rhs, check_finite=False)


def solve_linear(Ks: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return Factorization(Ks).solve(np.asarray(rhs, dtype=float))
