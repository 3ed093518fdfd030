import dataclasses

import numpy as np
import pytest

from corofin import finray
from corofin.element import GeometryError
from corofin.model import validate

from conftest import straight_member


@pytest.mark.parametrize("params, n_nodes, n_members", [
    (finray.TABLE1_SPARSE, 30, 38),
    (finray.TABLE1_DENSE, 66, 74),
    (finray.FinRayParams(), 66, 74),
])
def test_counts(params, n_nodes, n_members):
    model = finray.generate(params)
    assert (model.n_nodes, model.n_mem) == (n_nodes, n_members)
    assert validate(model) == []


def test_contact_nodes_on_front_beam(dense):
    ids = finray.contact_node_ids(dense)
    assert ids == list(range(1, 10))
    for k in ids:
        node = dense.nodes[k]
        assert node.x0 == 0.0
        assert node.y0 == pytest.approx(k * 80e-3 / 9, abs=1e-15)


def test_base_clamped(dense):
    assert dense.constraints == frozenset(range(3)) | frozenset(range(30, 33)) | frozenset(range(60, 63))
    for k in (0, 10, 20):
        assert dense.nodes[k].y0 == 0.0


def test_rear_beam_on_hypotenuse(dense):
    for k in range(10, 20):
        x, y = dense.coords[k]
        assert x / 40e-3 + y / 80e-3 == pytest.approx(1.0)


def test_dense_and_sparse_share_nodes(sparse, dense):
    np.testing.assert_array_equal(sparse.coords, dense.coords[:30])


def test_effective_lengths(dense):
    p = dense.props
    i, j = dense.m_conn.T
    chords = np.linalg.norm(dense.coords[j] - dense.coords[i], axis=1)
    np.testing.assert_allclose(p["L0_eff"] + p["offset"], chords, rtol=1e-12)
    np.testing.assert_allclose(p["offset"], 2 * 0.7 * 0.75e-3)


def test_narrow_finger_rejected():
    with pytest.raises(GeometryError, match="fin-ray generation failed"):
        finray.generate(dataclasses.replace(finray.TABLE1_DENSE, width_m=1e-3, mu=1.0))


def test_param_validation():
    with pytest.raises(ValueError):
        finray.FinRayParams(density="medium")
    with pytest.raises(ValueError):
        finray.FinRayParams(width_m=-1.0)


def test_foreign_model():
    with pytest.raises(ValueError, match="fin-ray"):
        finray.contact_node_ids(straight_member(0, 0, 1, 0))
