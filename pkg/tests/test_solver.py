import numpy as np
import pytest

from corofin.cli import cantilever
from corofin.element import internal_force
from corofin.model import DofKind, SolverSettings
from corofin.solver import (DisplacementLoadCase, IncrementState, displacement_control,
                            force_control, reaction_forces)
from corofin.verify import horizontal_case

from conftest import A_TAB, E_TAB, I_TAB

TIGHT = SolverSettings(tolerance=1e-10, n_inc=20)


def residual(model, res):
    R = res.state.F - internal_force(model, res.u_final)
    R[model.fixed] = 0.0
    return float(np.linalg.norm(R))


class TestDisplacementControl:
    def test_zero_target(self):
        model = cantilever(E_TAB, A_TAB, I_TAB, 0.08)
        res = displacement_control(model, DisplacementLoadCase.build(model, {}))
        assert res.converged
        assert res.controlled == ()
        assert np.all(res.u_final == 0)

    def test_cantilever_small_deflection(self):
        L = 0.08
        model = cantilever(E_TAB, A_TAB, I_TAB, L)
        case = DisplacementLoadCase.build(model, {model.dof(1, DofKind.Y): 0.01 * L})
        res = displacement_control(model, case, TIGHT)
        assert res.converged
        # 3 E I delta / L^3 with delta = 0.8 mm
        assert res.contact_forces[0] == pytest.approx(1.5625e-4, rel=0.01)
        assert res.u_final[4] == pytest.approx(0.01 * L, rel=1e-9)

    def test_axial_bar_exact(self):
        model = cantilever(E_TAB, A_TAB, I_TAB, 0.01)
        case = DisplacementLoadCase.build(model, {model.dof(1, DofKind.X): 1e-4})
        res = displacement_control(model, case, TIGHT)
        assert res.contact_forces[0] == pytest.approx(4.0, rel=1e-9)

    def test_residual_contract(self, dense):
        case = horizontal_case(dense, [(5, 6e-3)])
        res = displacement_control(dense, case)
        assert res.converged
        assert all(r.rho <= 1e-3 for r in res.trace)
        assert len(res.trace) == 100
        assert residual(dense, res) <= 1e-3
        assert res.u_final[dense.dof(5, DofKind.X)] == pytest.approx(6e-3, rel=1e-6)
        # node 5 at 6 mm on the dense mu=0.7 finger
        assert res.contact_forces[0] == pytest.approx(0.6663, rel=1e-3)

    def test_multi_node_targets_reached(self, dense):
        case = horizontal_case(dense, [(2, 2e-3), (5, 6e-3), (8, 10e-3)])
        res = displacement_control(dense, case)
        assert res.converged
        got = [res.u_final[dense.dof(n, DofKind.X)] for n in (2, 5, 8)]
        assert got == pytest.approx([2e-3, 6e-3, 10e-3], rel=1e-6)

    def test_deterministic(self, dense):
        case = horizontal_case(dense, [(4, 5e-3)])
        a = displacement_control(dense, case)
        b = displacement_control(dense, case)
        assert np.array_equal(a.u_final, b.u_final)
        assert np.array_equal(a.contact_forces, b.contact_forces)

    def test_coupled_equals_elementwise_for_one_dof(self, dense):
        case = horizontal_case(dense, [(6, 4e-3)])
        a = displacement_control(dense, case, load_ratio="coupled")
        b = displacement_control(dense, case, load_ratio="elementwise")
        np.testing.assert_allclose(a.contact_forces, b.contact_forces, rtol=1e-10)

    def test_independent_of_reference_force(self, dense):
        targets = {dense.dof(3, DofKind.X): 3e-3, dense.dof(7, DofKind.X): 5e-3}
        a = displacement_control(dense, DisplacementLoadCase.build(dense, targets))
        b = displacement_control(dense, DisplacementLoadCase.build(dense, targets, F0=7.0))
        np.testing.assert_allclose(a.contact_forces, b.contact_forces, rtol=1e-6)

    def test_monitor_sees_every_increment(self, sparse):
        seen = []

        def watch(n, state):
            assert isinstance(state, IncrementState)
            seen.append(n)

        displacement_control(sparse, horizontal_case(sparse, [(5, 2e-3)]),
                             SolverSettings(n_inc=7), monitor=watch)
        assert seen == list(range(1, 8))

    def test_non_convergence_flagged(self, dense):
        case = horizontal_case(dense, [(9, 10e-3)])
        res = displacement_control(dense, case, SolverSettings(tolerance=1e-12, maxiter=1, n_inc=1))
        assert not res.converged
        assert res.trace[-1].rho > 1e-12
        assert np.all(res.u_final == 0)

    def test_bad_load_ratio(self, dense):
        with pytest.raises(ValueError, match="load_ratio"):
            displacement_control(dense, horizontal_case(dense, [(5, 1e-3)]), load_ratio="other")


class TestLoadCase:
    def test_sign_rule(self):
        with pytest.raises(ValueError, match="sign"):
            DisplacementLoadCase(np.array([0.0, 1e-3]), np.array([0.0, -1.0]))
        with pytest.raises(ValueError, match="sign"):
            DisplacementLoadCase(np.array([0.0, 1e-3]), np.array([0.0, 0.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="same shape"):
            DisplacementLoadCase(np.zeros(3), np.zeros(4))

    def test_constrained_target(self, dense):
        case = DisplacementLoadCase(np.eye(dense.n_dof)[0] * 1e-3, np.eye(dense.n_dof)[0])
        with pytest.raises(ValueError, match="constrained"):
            displacement_control(dense, case)

    def test_wrong_size(self, dense):
        case = DisplacementLoadCase(np.ones(3), np.ones(3))
        with pytest.raises(ValueError, match="size"):
            displacement_control(dense, case)


class TestForceControl:
    def test_zero_load(self):
        model = cantilever(E_TAB, A_TAB, I_TAB, 0.08)
        res = force_control(model, np.zeros(6))
        assert res.converged and np.all(res.u_final == 0)

    def test_axial_bar_exact(self):
        model = cantilever(E_TAB, A_TAB, I_TAB, 0.01)
        F = np.zeros(6)
        F[3] = 4.0
        res = force_control(model, F, TIGHT)
        assert res.u_final[3] == pytest.approx(1e-4, rel=1e-9)

    def test_cantilever_small_load(self):
        L = 0.08
        model = cantilever(E_TAB, A_TAB, I_TAB, L)
        F = np.zeros(6)
        F[4] = 1.5625e-4
        res = force_control(model, F, TIGHT)
        assert res.u_final[4] == pytest.approx(0.01 * L, rel=0.01)

    def test_large_deflection_round_trip(self):
        # tip pushed to about 0.3 L on a finely divided cantilever
        L = 0.08
        model = cantilever(E_TAB, A_TAB, I_TAB, L, n_el=8)
        tip_y = model.dof(8, DofKind.Y)
        case = DisplacementLoadCase.build(model, {tip_y: 0.3 * L})
        est = displacement_control(model, case, TIGHT)
        F = np.zeros(model.n_dof)
        F[tip_y] = est.contact_forces[0]
        chk = force_control(model, F, TIGHT)
        assert chk.converged
        assert chk.u_final[tip_y] == pytest.approx(0.3 * L, rel=1e-6)
        # stiffer than the linear estimate at this deflection
        assert est.contact_forces[0] > 3 * E_TAB * I_TAB * 0.3 * L / L ** 3

    def test_force_at_support_rejected(self):
        model = cantilever(E_TAB, A_TAB, I_TAB, 0.08)
        with pytest.raises(ValueError, match="constrained"):
            force_control(model, np.array([1.0, 0, 0, 0, 0, 0]))

    def test_wrong_size(self):
        model = cantilever(E_TAB, A_TAB, I_TAB, 0.08)
        with pytest.raises(ValueError, match="size"):
            force_control(model, np.zeros(5))


class TestReactions:
    def test_unloaded(self, sparse):
        res = displacement_control(sparse, DisplacementLoadCase.build(sparse, {}))
        assert all(v == 0 for v in reaction_forces(sparse, res.state).values())
        assert set(reaction_forces(sparse, res.state)) == sparse.constraints

    def test_cantilever_base_shear(self):
        model = cantilever(E_TAB, A_TAB, I_TAB, 0.08)
        F = np.zeros(6)
        F[4] = 1e-4
        res = force_control(model, F, TIGHT)
        reac = reaction_forces(model, res.state)
        assert reac[1] == pytest.approx(-1e-4, rel=1e-6)
        assert reac[0] == pytest.approx(0.0, abs=1e-8)

    def test_finray_global_balance(self, dense):
        res = displacement_control(dense, horizontal_case(dense, [(4, 4e-3), (7, 8e-3)]))
        reac = reaction_forces(dense, res.state)
        for axis in (DofKind.X, DofKind.Y):
            total = sum(v for d, v in reac.items() if d % 3 == axis)
            total += sum(f for d, f in res.forces_by_dof().items() if d % 3 == axis)
            assert abs(total) <= 1e-2
