import csv
import io
import json

import numpy as np
import pytest

from corofin.cli import cantilever
from corofin.model import SolverSettings
from corofin.solver import DisplacementLoadCase, displacement_control
from corofin.verify import (NA, CellResult, ErrorReport, cantilever_oracle, fd_tangent_check,
                            force_stable, horizontal_case, round_trip)

from conftest import A_TAB, E_TAB, I_TAB


class TestCantileverOracle:
    def test_table_section(self):
        assert cantilever_oracle(2e7, 1.6667e-12, 0.08, 0.01 * 0.08) == pytest.approx(1.5625e-4, rel=1e-4)

    def test_zero(self):
        assert cantilever_oracle(2e7, 1.6667e-12, 0.08, 0.0) == 0.0

    def test_outside_linear_regime(self):
        with pytest.raises(ValueError, match="linear regime"):
            cantilever_oracle(2e7, 1.6667e-12, 0.08, 0.05 * 0.08)


class TestFdTangent:
    def test_cantilever(self):
        assert fd_tangent_check(cantilever(E_TAB, A_TAB, I_TAB, 0.08, n_el=4)) <= 1e-6

    def test_deformed_finray(self, sparse):
        res = displacement_control(sparse, horizontal_case(sparse, [(5, 6e-3)]))
        assert fd_tangent_check(sparse, res.u_final) <= 1e-3

    def test_second_order_in_step(self, sparse):
        u = displacement_control(sparse, horizontal_case(sparse, [(5, 6e-3)])).u_final
        ratio = fd_tangent_check(sparse, u, h=1e-3) / fd_tangent_check(sparse, u, h=1e-4)
        assert 50 < ratio < 200

    def test_detects_wrong_tangent(self, sparse, monkeypatch):
        import corofin.verify as verify

        real = verify.assemble_tangent
        monkeypatch.setattr(verify, "assemble_tangent", lambda m, u: 1.01 * real(m, u))
        assert fd_tangent_check(sparse) == pytest.approx(0.01 / 1.01, rel=1e-3)


class TestRoundTrip:
    def test_no_controlled_dofs(self, dense):
        rep = round_trip(dense, DisplacementLoadCase.build(dense, {}))
        assert rep.cells[0].valid and rep.cells[0].errors_pct == ()

    def test_single_node(self, dense):
        rep = round_trip(dense, horizontal_case(dense, [(5, 6e-3)]))
        cell = rep.cells[0]
        assert cell.valid
        assert cell.nodes == (5,) and cell.level == "6"
        assert abs(cell.errors_pct[0]) <= 0.5

    def test_two_node_row(self, dense):
        rep = round_trip(dense, horizontal_case(dense, [(4, 8e-3), (7, 4e-3)]), group="g")
        cell = rep.cells[0]
        assert cell.valid and cell.label == "4+7" and cell.level == "(8,4)"
        assert rep.max_abs_error() <= 0.5

    def test_buckled_path_is_na(self, dense):
        rep = round_trip(dense, horizontal_case(dense, [(9, 10e-3)]))
        cell = rep.cells[0]
        assert cell.status == NA
        assert "unstable" in cell.note
        # the discrepancy is still recorded
        assert len(cell.errors_pct) == 1

    def test_estimate_failure_is_na(self, dense):
        rep = round_trip(dense, horizontal_case(dense, [(9, 10e-3)]),
                         SolverSettings(tolerance=1e-12, maxiter=1, n_inc=1))
        assert rep.cells[0].status == NA
        assert rep.cells[0].note == "estimate not converged"


def test_force_stable(dense):
    assert force_stable(dense, np.zeros(dense.n_dof))


def _report():
    return ErrorReport([
        CellResult("a", (3,), (2e-3,), (0.1,), (2.002e-3,), (0.1,)),
        CellResult("a", (3,), (4e-3,), (0.2,), (3.988e-3,), (-0.3,)),
        CellResult("a", (6, 9), (2e-3, 4e-3), (0.1, 0.2), (2e-3, 4e-3), (0.2, -0.4)),
        CellResult("b", (27,), (4e-3,), (1.0,), (1e-3,), (-75.0,), status=NA, note="unstable"),
    ], name="demo")


class TestErrorReport:
    def test_averages_use_absolute_values(self):
        rep = _report()
        assert rep.overall() == pytest.approx((0.1 + 0.3 + 0.2 + 0.4) / 4)
        assert rep.max_abs_error() == pytest.approx(0.4)

    def test_na_cells_excluded(self):
        lv = _report().level_averages()
        assert lv["2"] == pytest.approx(0.1)
        assert lv["4"] == pytest.approx(0.3)
        assert lv["(2,4)"] == pytest.approx(0.3)
        nodes = _report().node_averages()
        assert nodes["a:1"] == pytest.approx(0.2)
        assert nodes["b:9"] is None

    def test_empty(self):
        assert ErrorReport().overall() is None
        assert ErrorReport().max_abs_error() is None

    def test_csv(self):
        rows = list(csv.DictReader(io.StringIO(_report().to_csv())))
        assert len(rows) == 4
        assert rows[2]["nodes"] == "2+3"
        assert rows[2]["imposed_mm"] == "2.0;4.0"
        assert rows[3]["status"] == NA and rows[3]["error_pct"] == "-75.0"

    def test_json(self):
        doc = json.loads(_report().to_json())
        assert doc["cells"] == 4
        assert doc["invalid_cells"] == ["b:9@4"]
        assert doc["overall"] == pytest.approx(0.25)
