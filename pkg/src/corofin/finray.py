"""Parametric fin-ray finger meshes.

Layout (node ids for the default 10 crossbeams)::

    front (contact) beam   ids 0..9    x = 0, y = k*n/9, tip at id 9
    rear beam              ids 10..19  on the line (m, 0) -> (0, n), t = k/10
    crossbeam midnodes     ids 20..29  midpoint of front k / rear k
    dense refinement       ids 30..    midpoints of every flexible member

The front tip (id 9) and the rear top node (id 19) are joined by the top
crossbeam, which closes the triangle. The base row (ids 0, 10, 20) is
clamped.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .element import GeometryError
from .model import Member, Node, StructureModel, clamp, make_member

GENERATOR_TAG = "finray"


@dataclass(frozen=True)
class FinRayParams:
    width_m: float = 40e-3
    height_n: float = 80e-3
    density: str = "dense"
    R_node: float = 0.75e-3
    mu: float = 0.7
    section_b: float = 20e-3
    section_h: float = 1e-3
    E: float = 2e7
    crossbeam_count: int = 10

    def __post_init__(self):
        if self.density not in ("sparse", "dense"):
            raise ValueError(f"density must be 'sparse' or 'dense', got {self.density!r}")
        for name in ("width_m", "height_n", "section_b", "section_h", "E"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.R_node < 0 or self.mu < 0:
            raise ValueError("R_node and mu must be non-negative")
        if self.crossbeam_count < 2:
            raise ValueError("crossbeam_count must be at least 2")

    @property
    def A(self) -> float:
        return self.section_b * self.section_h

    @property
    def I(self) -> float:
        return self.section_b * self.section_h ** 3 / 12.0

    @property
    def r_m(self) -> float:
        return self.mu * self.R_node


# Standard sparse and dense finger meshes
TABLE1_SPARSE = FinRayParams(density="sparse", mu=1.0)
TABLE1_DENSE = FinRayParams(density="dense", mu=0.5)


def generate(params: FinRayParams) -> StructureModel:
    c = params.crossbeam_count
    m, n = params.width_m, params.height_n
    xy = []
    for k in range(c):
        xy.append((0.0, k * n / (c - 1)))
    for k in range(c):
        t = k / c
        xy.append((m * (1.0 - t), n * t))
    for k in range(c):
        (xf, yf), (xr, yr) = xy[k], xy[c + k]
        xy.append((0.5 * (xf + xr), 0.5 * (yf + yr)))

    pairs = [(k, k + 1) for k in range(c - 1)]
    pairs += [(c + k, c + k + 1) for k in range(c - 1)]
    base_cross = set()
    for k in range(c):
        pairs.append((k, 2 * c + k))
        pairs.append((2 * c + k, c + k))
        if k == 0:
            base_cross.update({len(pairs) - 2, len(pairs) - 1})

    if params.density == "dense":
        refined = []
        for idx, (i, j) in enumerate(pairs):
            if idx in base_cross:
                refined.append((i, j))
                continue
            mid = len(xy)
            xy.append((0.5 * (xy[i][0] + xy[j][0]), 0.5 * (xy[i][1] + xy[j][1])))
            refined += [(i, mid), (mid, j)]
        pairs = refined

    coords = np.array(xy, dtype=float)
    nodes = tuple(Node(k, float(x), float(y)) for k, (x, y) in enumerate(xy))
    members: list[Member] = []
    for idx, (i, j) in enumerate(pairs):
        try:
            members.append(make_member(idx, i, j, coords, params.E, params.A, params.I, params.r_m))
        except GeometryError as exc:
            raise GeometryError(f"fin-ray generation failed at member {idx} ({i}-{j}): {exc}") from None

    meta = {
        "generator": GENERATOR_TAG,
        "params": asdict(params),
        "front_nodes": list(range(c)),
        "rear_nodes": list(range(c, 2 * c)),
        "contact_nodes": list(range(1, c)),
    }
    return StructureModel(nodes, tuple(members), clamp([0, c, 2 * c]), meta)


def contact_node_ids(model: StructureModel) -> list[int]:
    """Front-beam nodes that can be loaded, ordered base to tip."""
    if model.meta.get("generator") != GENERATOR_TAG or "contact_nodes" not in model.meta:
        raise ValueError("model was not generated by the fin-ray generator")
    return [int(k) for k in model.meta["contact_nodes"]]
