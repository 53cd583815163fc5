import numpy as np
import pytest

from _support import random_stable_system
from stochbt import balancing, gramians, hinf, linalg, system
from stochbt.errors import DimensionMismatchError, NotStableError


class TestRiccatiFeasible:
    def test_above_norm_feasible(self):
        s = system.example1_system(2.0)
        probe = hinf.riccati_feasible(s, 0.5)
        assert probe.feasible
        w, _ = linalg.sym_eig(probe.X)
        assert w[0] >= -1e-10

    def test_below_norm_infeasible(self):
        s = system.example1_system(2.0)
        assert not hinf.riccati_feasible(s, 0.3).feasible

    def test_zero_output_trivially_feasible(self):
        s = system.StochasticSystem(
            -np.eye(2), (np.zeros((2, 2)),), np.eye(2), np.zeros((1, 2))
        )
        probe = hinf.riccati_feasible(s, 1e-3)
        assert probe.feasible
        assert np.abs(probe.X).max() == 0.0

    def test_monotone_in_gamma(self):
        s = system.example1_system(2.0)
        verdicts = [
            hinf.riccati_feasible(s, g).feasible
            for g in (0.2, 0.3, 0.34, 0.36, 0.4, 0.6, 1.0, 5.0)
        ]
        # once feasible, stays feasible
        first = verdicts.index(True)
        assert all(verdicts[first:])
        assert not any(verdicts[:first])

    def test_newton_iterates_monotone(self):
        s = system.example1_system(2.0)
        probe = hinf.riccati_feasible(s, 0.6, keep_iterates=True)
        assert probe.feasible
        for X_prev, X_next in zip(probe.iterates, probe.iterates[1:]):
            w, _ = linalg.sym_eig(X_next - X_prev)
            assert w[0] >= -1e-10 * max(1.0, abs(w).max())

    def test_unstable_rejected(self):
        s = system.StochasticSystem(
            np.array([[1.0]]), (np.zeros((1, 1)),), np.ones((1, 1)), np.ones((1, 1))
        )
        with pytest.raises(NotStableError):
            hinf.riccati_feasible(s, 1.0)


class TestHinfNorm:
    @pytest.mark.parametrize("a", [2.0, 5.0])
    def test_example1_closed_form(self, a):
        s = system.example1_system(a)
        res = hinf.hinf_norm(s, tol_rel=1e-5)
        expected = 1.0 / (np.sqrt(2.0) * a)
        assert res.gamma_lo <= expected * (1 + 1e-4)
        assert res.gamma_hi >= expected * (1 - 1e-4)
        assert res.estimate == pytest.approx(expected, rel=1e-4)
        assert res.status == hinf.CONVERGED

    def test_certificate_attached(self):
        s = system.example1_system(2.0)
        res = hinf.hinf_norm(s)
        R = hinf.riccati_residual(s, res.X_cert, res.gamma_hi)
        w, _ = linalg.sym_eig(R)
        assert w[-1] <= 1e-8 * max(1.0, abs(w).max())

    def test_scaling_law(self):
        rng = np.random.default_rng(40)
        s = random_stable_system(rng, 3)
        base = hinf.hinf_norm(s, tol_rel=1e-5).estimate
        for c in (0.5, 3.0):
            scaled = system.StochasticSystem(s.A, s.N_list, s.B, c * s.C)
            val = hinf.hinf_norm(scaled, tol_rel=1e-5).estimate
            assert val == pytest.approx(c * base, rel=1e-3)

    def test_deterministic_scalar(self):
        s = system.StochasticSystem(
            np.array([[-1.0]]), (np.zeros((1, 1)),), np.ones((1, 1)), np.ones((1, 1))
        )
        res = hinf.hinf_norm(s, tol_rel=1e-5)
        assert res.estimate == pytest.approx(1.0, rel=1e-4)

    def test_zero_output_floor(self):
        s = system.StochasticSystem(
            -np.eye(2), (np.zeros((2, 2)),), np.eye(2), np.zeros((1, 2))
        )
        res = hinf.hinf_norm(s)
        assert res.status == hinf.FLOOR_REACHED
        assert res.gamma_hi <= hinf.GAMMA_FLOOR


class TestErrorSystem:
    def test_block_layout(self):
        full = system.sec4a_system()
        reduced = balancing.reduce_pipeline(full, gramians.TYPE_I, r_state=1).reduced
        err = hinf.build_error_system(full, reduced)
        assert err.n == 3
        assert np.allclose(err.A[:2, :2], full.A)
        assert np.allclose(err.A[2:, 2:], reduced.A)
        assert np.abs(err.A[:2, 2:]).max() == 0.0
        assert np.allclose(err.B, np.vstack([full.B, reduced.B]))
        assert np.allclose(err.C, np.hstack([full.C, -reduced.C]))

    def test_identical_systems_reach_floor(self):
        s = system.example1_system(2.0)
        err = hinf.build_error_system(s, s)
        res = hinf.hinf_norm(err)
        assert res.status == hinf.FLOOR_REACHED
        assert res.gamma_hi <= 2.0 * hinf.GAMMA_FLOOR

    def test_dimension_mismatch(self):
        s = system.example1_system(2.0)
        other = system.StochasticSystem(
            -np.eye(2), (np.zeros((2, 2)),), np.eye(2), np.eye(2)
        )
        with pytest.raises(DimensionMismatchError):
            hinf.build_error_system(s, other)


class TestTruncationError:
    def test_example1_error_equals_full_norm(self):
        # order-1 reduction has zero output, so the error operator is the
        # system itself
        s = system.example1_system(2.0)
        red = balancing.reduce_pipeline(s, gramians.TYPE_I, r_state=1)
        err = hinf.truncation_error_norm(s, red, tol_rel=1e-5)
        assert err.hinf.estimate == pytest.approx(1.0 / (2.0 * np.sqrt(2.0)), rel=1e-4)

    def test_crossover_table_type1(self):
        s = system.sec4a_system()
        red = balancing.reduce_pipeline(s, gramians.TYPE_I, r_state=1)
        err = hinf.truncation_error_norm(s, red, tol_rel=1e-5)
        assert err.hinf.estimate == pytest.approx(3.9647, abs=1e-3)
        # no valid bound for the classic pair: the error exceeds twice the tail
        assert err.hinf.estimate > 2.0 * red.truncated_sigma.sum()

    def test_crossover_table_type2(self):
        s = system.sec4a_system()
        Pref, _ = system.sec4a_type2_reference()
        red = balancing.reduce_pipeline(s, gramians.TYPE_II, r_state=1, P=Pref)
        err = hinf.truncation_error_norm(s, red, tol_rel=1e-5)
        assert err.hinf.estimate == pytest.approx(3.5614, abs=1e-3)
        assert err.bound == pytest.approx(6.9282, abs=1e-3)
        assert err.bound_satisfied

    def test_analytic_family_bound_vs_error(self):
        # the induced bound dominates the (constant) truncation error for
        # every family parameter, with near-equality as p -> 0
        a = 2.0
        s = system.example2_system(a)
        error = 1.0 / (np.sqrt(2.0) * a)
        for p in (0.1, 0.5, 1.0):
            pair = gramians.type2_pair(s, P=system.example2_gramian(p, a))
            red = balancing.reduce_from_pair(s, pair, r_groups=1)
            assert red.bound >= error - 1e-9
            if p == 0.1:
                assert (red.bound - error) / error <= 0.02


class TestProofCertificate:
    def test_one_group_truncation_certificate(self):
        # the explicit block-diagonal matrix certifies the two-sigma bound
        # for the transformed error system of any one-group truncation
        rng = np.random.default_rng(41)
        for trial in range(20):
            n = int(rng.integers(3, 7))
            s = random_stable_system(rng, n, m=1, p=1)
            pair = gramians.type2_pair(s, method="baseline")
            form = balancing.balance(pair.P, pair.Q)
            if form.n_groups < 2 or form.S is None:
                continue
            r_state = form.groups[form.n_groups - 2][1]
            bal = balancing.apply_state_transformation(s, form.S, form.S_inv)
            part = system.partition(bal, r_state)
            sig1 = np.diag(form.sigma[:r_state])
            sig_last = float(form.group_values()[-1])
            n2 = n - r_state

            A11, A12, A21, A22 = part.A11, part.A12, part.A21, part.A22
            N11, N12, N21, N22 = (
                part.N11[0],
                part.N12[0],
                part.N21[0],
                part.N22[0],
            )
            A_e = np.block(
                [
                    [A11, A12, np.zeros((r_state, r_state))],
                    [0.5 * A21, A22, 0.5 * A21],
                    [np.zeros((r_state, r_state)), A12, A11],
                ]
            )
            N_e = np.block(
                [
                    [N11, N12, np.zeros((r_state, r_state))],
                    [0.5 * N21, N22, 0.5 * N21],
                    [np.zeros((r_state, r_state)), N12, N11],
                ]
            )
            B_e = np.vstack([np.zeros_like(part.B1), part.B2, 2.0 * part.B1])
            C_e = np.hstack([part.C1, part.C2, np.zeros_like(part.C1)])

            X = np.zeros((n + r_state, n + r_state))
            X[:r_state, :r_state] = sig1
            X[r_state : r_state + n2, r_state : r_state + n2] = (
                2.0 * sig_last * np.eye(n2)
            )
            X[r_state + n2 :, r_state + n2 :] = sig_last**2 * np.linalg.inv(sig1)

            gamma = 2.0 * sig_last
            R = (
                A_e.T @ X
                + X @ A_e
                + N_e.T @ X @ N_e
                + C_e.T @ C_e
                + (X @ B_e) @ (X @ B_e).T / gamma**2
            )
            w, _ = linalg.sym_eig(R)
            scale = max(1.0, float(np.abs(w).max()))
            assert w[-1] <= 1e-8 * scale, f"trial {trial}: max eig {w[-1]:.3e}"
