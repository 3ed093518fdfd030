"""Co-rotational kinematics and internal forces of 2D Euler-Bernoulli members.

Each member's motion is split into a rigid motion of its chord plus small
local deformations (axial stretch and two end rotations) measured in the
rotated chord frame. Local forces are linear in the local deformations;
all the geometric nonlinearity lives in the frame update.

The scalar functions operate on one member and mirror the textbook
formulation. :func:`member_states` and :func:`internal_force` are the
vectorized versions used by the solvers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import DOFS_PER_NODE, Member, StructureModel


class ElementFrame(NamedTuple):
    L: float
    c: float
    s: float
    beta: float


class LocalDeformation(NamedTuple):
    u_bar: float
    theta1l: float
    theta2l: float


class LocalForces(NamedTuple):
    N: float
    M1: float
    M2: float


class GeometryError(ValueError):
    pass


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(a, dtype=float), 2.0 * math.pi)


def effective_length(raw_length: float, R_node: float, mu: float) -> float:
    """Chord length minus the rigid node radius ``mu*R_node`` at both ends."""
    L = raw_length - 2.0 * mu * R_node
    if not L > 0:
        raise GeometryError(
            f"member fully absorbed by node radius: length {raw_length:g} <= 2*{mu:g}*{R_node:g}")
    return L


def current_frame(member: Member, coords: np.ndarray, u: np.ndarray) -> ElementFrame:
    i, j = member.node_i, member.node_j
    dx = coords[j, 0] + u[3 * j] - coords[i, 0] - u[3 * i]
    dy = coords[j, 1] + u[3 * j + 1] - coords[i, 1] - u[3 * i + 1]
    L = math.hypot(dx, dy)
    if L == 0.0:
        raise GeometryError(f"zero-length element {member.id}")
    return ElementFrame(L, dx / L, dy / L, math.atan2(dy, dx))


def local_deformation(member: Member, frame: ElementFrame,
                      theta_i: float, theta_j: float) -> LocalDeformation:
    u_bar = (frame.L - member.offset) - member.L0_eff
    c0, s0 = math.cos(member.beta0), math.sin(member.beta0)
    # rigid chord rotation, already in (-pi, pi]
    alpha = math.atan2(c0 * frame.s - s0 * frame.c, c0 * frame.c + s0 * frame.s)
    return LocalDeformation(u_bar,
                            float(wrap_angle(theta_i - alpha)),
                            float(wrap_angle(theta_j - alpha)))


def local_forces(member: Member, d: LocalDeformation) -> LocalForces:
    L0 = member.L0_eff
    k_bend = 2.0 * member.E * member.I / L0
    return LocalForces(member.E * member.A / L0 * d.u_bar,
                       k_bend * (2.0 * d.theta1l + d.theta2l),
                       k_bend * (d.theta1l + 2.0 * d.theta2l))


def b_matrix(frame: ElementFrame) -> np.ndarray:
    """3x6 map from global end displacements to local deformation rates."""
    L, c, s = frame.L, frame.c, frame.s
    return np.array([
        [-c, -s, 0.0, c, s, 0.0],
        [-s / L, c / L, 1.0, s / L, -c / L, 0.0],
        [-s / L, c / L, 0.0, s / L, -c / L, 1.0],
    ])


def global_internal_force(member: Member, frame: ElementFrame, q_l: LocalForces) -> np.ndarray:
    return b_matrix(frame).T @ np.asarray(q_l, dtype=float)


def strain_energy(member: Member, d: LocalDeformation) -> float:
    L0 = member.L0_eff
    t1, t2 = d.theta1l, d.theta2l
    return (0.5 * member.E * member.A / L0 * d.u_bar ** 2
            + member.E * member.I / L0 * (2 * t1 * t1 + 2 * t1 * t2 + 2 * t2 * t2))


def evaluate(member: Member, coords: np.ndarray, u: np.ndarray):
    """Frame, local forces and 6-vector of end forces for one member."""
    frame = current_frame(member, coords, u)
    d = local_deformation(member, frame, u[3 * member.node_i + 2], u[3 * member.node_j + 2])
    q = local_forces(member, d)
    return frame, q, global_internal_force(member, frame, q)


# --- vectorized over all members -------------------------------------------

@dataclass(frozen=True)
class MemberStates:
    """Per-member frame and local forces at one displacement state."""

    L: np.ndarray
    c: np.ndarray
    s: np.ndarray
    beta: np.ndarray
    u_bar: np.ndarray
    theta1l: np.ndarray
    theta2l: np.ndarray
    N: np.ndarray
    M1: np.ndarray
    M2: np.ndarray

    def frame(self, k: int) -> ElementFrame:
        return ElementFrame(self.L[k], self.c[k], self.s[k], self.beta[k])

    def q_l(self, k: int) -> LocalForces:
        return LocalForces(self.N[k], self.M1[k], self.M2[k])


def member_states(model: StructureModel, u: np.ndarray) -> MemberStates:
    p = model.props
    conn = model.m_conn
    xy = model.coords + np.asarray(u, dtype=float).reshape(-1, DOFS_PER_NODE)[:, :2]
    d = xy[conn[:, 1]] - xy[conn[:, 0]]
    L = np.hypot(d[:, 0], d[:, 1])
    if np.any(L == 0.0):
        bad = int(np.flatnonzero(L == 0.0)[0])
        raise GeometryError(f"zero-length element {model.members[bad].id}")
    c, s = d[:, 0] / L, d[:, 1] / L
    c0, s0 = np.cos(p["beta0"]), np.sin(p["beta0"])
    alpha = np.arctan2(c0 * s - s0 * c, c0 * c + s0 * s)
    theta = np.asarray(u, dtype=float)[DOFS_PER_NODE * conn + 2]
    t1 = wrap_angle(theta[:, 0] - alpha)
    t2 = wrap_angle(theta[:, 1] - alpha)
    L0 = p["L0_eff"]
    u_bar = (L - p["offset"]) - L0
    k_bend = 2.0 * p["E"] * p["I"] / L0
    return MemberStates(
        L=L, c=c, s=s, beta=np.arctan2(s, c), u_bar=u_bar, theta1l=t1, theta2l=t2,
        N=p["E"] * p["A"] / L0 * u_bar,
        M1=k_bend * (2.0 * t1 + t2),
        M2=k_bend * (t1 + 2.0 * t2),
    )


def element_force_vectors(st: MemberStates) -> np.ndarray:
    """B^T q for every member, shape (n_mem, 6)."""
    c, s, L = st.c, st.s, st.L
    m_sum = (st.M1 + st.M2) / L
    f = np.empty((len(L), 6))
    f[:, 0] = -c * st.N - s * m_sum
    f[:, 1] = -s * st.N + c * m_sum
    f[:, 2] = st.M1
    f[:, 3] = -f[:, 0]
    f[:, 4] = -f[:, 1]
    f[:, 5] = st.M2
    return f


def internal_force(model: StructureModel, u: np.ndarray,
                   states: MemberStates | None = None) -> np.ndarray:
    """Assembled global internal force vector F_int."""
    st = member_states(model, u) if states is None else states
    F = np.zeros(model.n_dof)
    np.add.at(F, model.member_dofs, element_force_vectors(st))
    return F
