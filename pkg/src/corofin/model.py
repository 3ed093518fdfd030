"""Structural model types, DOF numbering and model validation.

Every node carries three DOFs ordered node-major: ``(ux, uy, theta)``.
All global vectors (displacements, forces, residuals) use this ordering.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

DOFS_PER_NODE = 3


class DofKind(IntEnum):
    X = 0
    Y = 1
    ROT = 2

    @classmethod
    def parse(cls, value: "DofKind | int | str") -> "DofKind":
        if isinstance(value, DofKind):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            aliases = {"x": cls.X, "ux": cls.X, "y": cls.Y, "uy": cls.Y,
                       "rot": cls.ROT, "rz": cls.ROT, "theta": cls.ROT}
            if key not in aliases:
                raise ValueError(f"unknown dof kind {value!r}")
            return aliases[key]
        return cls(int(value))


def dof_index(node_id: int, kind: "DofKind | int | str", n_nodes: int | None = None) -> int:
    """Global DOF index of ``kind`` at ``node_id``.

    Raises IndexError when ``node_id`` is negative or, if ``n_nodes`` is
    given, not below it.
    """
    if node_id < 0 or (n_nodes is not None and node_id >= n_nodes):
        raise IndexError(f"node id {node_id} out of range (n_nodes={n_nodes})")
    return DOFS_PER_NODE * node_id + int(DofKind.parse(kind))


def node_of_dof(dof: int) -> tuple[int, DofKind]:
    return dof // DOFS_PER_NODE, DofKind(dof % DOFS_PER_NODE)


@dataclass(frozen=True)
class Node:
    id: int
    x0: float
    y0: float


@dataclass(frozen=True)
class Member:
    """Two-node beam member.

    ``offset`` is the total rigid length 2*R_m removed from the chord at
    both ends; it is subtracted from the current chord as well, so the
    axial stretch is measured on the flexible part only.
    """

    id: int
    node_i: int
    node_j: int
    E: float
    A: float
    I: float
    L0_eff: float
    beta0: float
    offset: float = 0.0


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-3
    maxiter: int = 100
    n_inc: int = 100

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")
        if self.n_inc < 1:
            raise ValueError("n_inc must be >= 1")


@dataclass(frozen=True)
class StructureModel:
    nodes: tuple[Node, ...]
    members: tuple[Member, ...]
    constraints: frozenset[int] = frozenset()
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "constraints", frozenset(int(d) for d in self.constraints))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_mem(self) -> int:
        return len(self.members)

    @property
    def n_dof(self) -> int:
        return DOFS_PER_NODE * self.n_nodes

    @cached_property
    def coords(self) -> np.ndarray:
        """Initial coordinates, shape (n_nodes, 2)."""
        return np.array([[n.x0, n.y0] for n in self.nodes], dtype=float).reshape(-1, 2)

    @cached_property
    def m_conn(self) -> np.ndarray:
        """Member connectivity table, shape (n_mem, 2)."""
        return np.array([[m.node_i, m.node_j] for m in self.members], dtype=int).reshape(-1, 2)

    @cached_property
    def member_dofs(self) -> np.ndarray:
        """Global DOF indices per member, shape (n_mem, 6)."""
        base = DOFS_PER_NODE * self.m_conn
        return np.hstack([base[:, :1] + np.arange(3), base[:, 1:] + np.arange(3)])

    @cached_property
    def props(self) -> dict[str, np.ndarray]:
        """Member properties as arrays, for vectorized element evaluation."""
        ms = self.members
        return {
            "E": np.array([m.E for m in ms], dtype=float),
            "A": np.array([m.A for m in ms], dtype=float),
            "I": np.array([m.I for m in ms], dtype=float),
            "L0_eff": np.array([m.L0_eff for m in ms], dtype=float),
            "beta0": np.array([m.beta0 for m in ms], dtype=float),
            "offset": np.array([m.offset for m in ms], dtype=float),
        }

    @cached_property
    def fixed(self) -> np.ndarray:
        return np.array(sorted(self.constraints), dtype=int)

    @cached_property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dof, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    def dof(self, node_id: int, kind: "DofKind | int | str") -> int:
        return dof_index(node_id, kind, self.n_nodes)


def chord(coords: np.ndarray, node_i: int, node_j: int) -> tuple[float, float]:
    """Length and inclination of the straight line between two nodes."""
    dx, dy = coords[node_j] - coords[node_i]
    return math.hypot(dx, dy), math.atan2(dy, dx)


def make_member(member_id: int, node_i: int, node_j: int, coords: np.ndarray,
                E: float, A: float, I: float, r_m: float = 0.0) -> Member:
    """Member whose effective length is the chord minus ``2*r_m``."""
    from .element import effective_length

    raw, beta0 = chord(coords, node_i, node_j)
    L0_eff = effective_length(raw, r_m, 1.0)
    return Member(member_id, node_i, node_j, float(E), float(A), float(I),
                  L0_eff, beta0, 2.0 * r_m)


def validate(model: StructureModel) -> list[str]:
    """Return every violated model invariant; an empty list means ok."""
    defects = []
    n = model.n_nodes
    for k, node in enumerate(model.nodes):
        if node.id != k:
            defects.append(f"node ids not contiguous: position {k} has id {node.id}")
        if not (math.isfinite(node.x0) and math.isfinite(node.y0)):
            defects.append(f"node {node.id}: non-finite coordinates")
    for m in model.members:
        tag = f"member {m.id}"
        if not (0 <= m.node_i < n and 0 <= m.node_j < n):
            defects.append(f"{tag}: references missing node")
            continue
        if m.node_i == m.node_j:
            defects.append(f"{tag}: degenerate member (node_i == node_j)")
            continue
        for name in ("E", "A", "I", "L0_eff"):
            if not getattr(m, name) > 0:
                defects.append(f"{tag}: {name} must be positive")
        raw, _ = chord(model.coords, m.node_i, m.node_j)
        if m.L0_eff > raw * (1 + 1e-12):
            defects.append(f"{tag}: L0_eff exceeds chord length")
    for d in sorted(model.constraints):
        if not 0 <= d < model.n_dof:
            defects.append(f"constraint dof {d} out of range")
    if not model.constraints:
        defects.append("unconstrained structure (no fixed DOFs)")
    elif not defects:
        defects.extend(_connectivity_defects(model))
    return defects


def _connectivity_defects(model: StructureModel) -> list[str]:
    n = model.n_nodes
    conn = model.m_conn
    graph = coo_matrix((np.ones(len(conn)), (conn[:, 0], conn[:, 1])), shape=(n, n))
    n_comp, labels = connected_components(graph, directed=False)
    anchored = {labels[d // DOFS_PER_NODE] for d in model.constraints}
    out = []
    for comp in range(n_comp):
        if comp in anchored:
            continue
        members_in = [k for k in range(n) if labels[k] == comp]
        out.append(f"nodes {members_in} are not connected to any constrained node")
    return out


# --- structure files -------------------------------------------------------

FORMAT_TAG = "corofin-structure/1"


def model_to_dict(model: StructureModel) -> dict[str, Any]:
    return {
        "format": FORMAT_TAG,
        "nodes": [[n.id, n.x0, n.y0] for n in model.nodes],
        "members": [
            {"id": m.id, "i": m.node_i, "j": m.node_j, "E": m.E, "A": m.A, "I": m.I,
             "L0_eff": m.L0_eff, "beta0": m.beta0, "offset": m.offset}
            for m in model.members
        ],
        "constraints": [[d // DOFS_PER_NODE, DofKind(d % DOFS_PER_NODE).name.lower()]
                        for d in sorted(model.constraints)],
        "meta": model.meta,
    }


def model_from_dict(data: dict[str, Any]) -> StructureModel:
    if data.get("format", FORMAT_TAG) != FORMAT_TAG:
        raise ValueError(f"unsupported structure format {data.get('format')!r}")
    nodes = [Node(int(i), float(x), float(y)) for i, x, y in data["nodes"]]
    coords = np.array([[n.x0, n.y0] for n in nodes], dtype=float).reshape(-1, 2)
    members = []
    for rec in data["members"]:
        i, j = int(rec["i"]), int(rec["j"])
        if "L0_eff" in rec:
            members.append(Member(int(rec["id"]), i, j, float(rec["E"]), float(rec["A"]),
                                  float(rec["I"]), float(rec["L0_eff"]), float(rec["beta0"]),
                                  float(rec.get("offset", 0.0))))
        else:
            members.append(make_member(int(rec["id"]), i, j, coords, rec["E"], rec["A"],
                                       rec["I"], float(rec.get("r_m", 0.0))))
    constraints = {dof_index(int(node), kind) for node, kind in data.get("constraints", [])}
    return StructureModel(tuple(nodes), tuple(members), frozenset(constraints),
                          dict(data.get("meta", {})))


def save_model(model: StructureModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path: str | Path) -> StructureModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def clamp(nodes: Iterable[int]) -> frozenset[int]:
    """All three DOFs of each node."""
    return frozenset(DOFS_PER_NODE * k + d for k in nodes for d in range(DOFS_PER_NODE))
