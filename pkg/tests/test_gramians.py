import numpy as np
import pytest

from _support import random_spd, random_stable_system
from stochbt import gramians, linalg, lyapunov, system
from stochbt.errors import NotStableError
from stochbt.gramians import TRACE_P, TRACE_PQ, TYPE_I, TYPE_II


class TestTypeOne:
    def test_example1_closed_forms(self):
        s = system.example1_system(2.0)
        pair = gramians.type1_gramians(s)
        assert np.allclose(pair.P, np.diag([0.5, 1.0 / 16.0]), atol=1e-10)
        assert np.allclose(pair.Q, np.diag([1.0 / 16.0, 1.0 / 8.0]), atol=1e-10)
        assert pair.kind == TYPE_I
        assert np.abs(pair.slack_Q).max() <= 1e-12
        assert np.abs(pair.slack_P).max() <= 1e-12

    def test_crossover_benchmark(self):
        pair = gramians.type1_gramians(system.sec4a_system())
        assert np.allclose(pair.Q, [[6.0, 3.0], [3.0, 3.0]], atol=1e-10)
        assert np.allclose(pair.P, [[3.0, 3.0], [3.0, 6.0]], atol=1e-10)

    def test_noise_free_identity_case(self):
        s = system.StochasticSystem(
            -np.eye(2), (np.zeros((2, 2)),), np.eye(2), np.eye(2)
        )
        pair = gramians.type1_gramians(s)
        assert np.allclose(pair.P, 0.5 * np.eye(2), atol=1e-12)
        assert np.allclose(pair.Q, 0.5 * np.eye(2), atol=1e-12)

    def test_unstable_rejected(self):
        s = system.StochasticSystem(
            np.array([[1.0]]), (np.zeros((1, 1)),), np.ones((1, 1)), np.ones((1, 1))
        )
        with pytest.raises(NotStableError):
            gramians.type1_gramians(s)


class TestTypeTwoQ:
    def test_shares_type1_q(self):
        s = system.example1_system(2.0)
        assert np.allclose(gramians.type2_q(s), np.diag([1.0 / 16.0, 1.0 / 8.0]))
        s4 = system.sec4a_system()
        assert np.allclose(gramians.type2_q(s4), [[6.0, 3.0], [3.0, 3.0]])

    def test_zero_output(self):
        s = system.StochasticSystem(
            -np.eye(2), (np.zeros((2, 2)),), np.eye(2), np.zeros((1, 2))
        )
        assert np.abs(gramians.type2_q(s)).max() <= 1e-12


class TestTypeTwoBaseline:
    def test_always_strictly_feasible(self):
        rng = np.random.default_rng(20)
        for _ in range(20):
            s = random_stable_system(rng, int(rng.integers(2, 6)))
            P = gramians.type2_p_baseline(s)
            slack = -gramians.lmi_constraint(s, P)
            w, _ = linalg.sym_eig(slack)
            assert w[0] > -1e-12 * max(1.0, abs(w).max())

    def test_zero_input_keeps_unit_scaling(self):
        s = system.StochasticSystem(
            -np.eye(2),
            (0.3 * np.eye(2),),
            np.zeros((2, 1)),
            np.eye(2),
        )
        op = lyapunov.GenLyapOperator(s.A, s.N_list, lyapunov.PRIMAL)
        Z = op.solve(-np.eye(2))
        P = gramians.type2_p_baseline(s)
        assert np.allclose(P, np.linalg.inv(Z), atol=1e-10)

    def test_analytic_family_accepted(self):
        s = system.example2_system(2.0)
        for p in (0.1, 0.5, 1.0):
            pair = gramians.type2_pair(s, P=system.example2_gramian(p))
            rep = gramians.check_pair(s, pair)
            assert rep.passed, (p, rep.messages)


class TestTypeTwoOptimize:
    def test_crossover_beats_reference_point(self):
        s = system.sec4a_system()
        Pref, Qref = system.sec4a_type2_reference()
        res = gramians.type2_p_optimize(s, objective=TRACE_PQ)
        assert res.objective_value <= np.trace(Pref @ gramians.type2_q(s)) + 1e-4
        rep = gramians.check_pair(s, gramians.type2_pair(s, P=res.P))
        assert rep.passed

    def test_scalar_closed_form(self):
        # G(p) = [[-2p + 1, 0], [0, -p]] <= 0 forces p >= 1/2
        s = system.StochasticSystem(
            np.array([[-1.0]]), (np.zeros((1, 1)),), np.ones((1, 1)), np.ones((1, 1))
        )
        res = gramians.type2_p_optimize(s, objective=TRACE_P)
        assert res.objective_value == pytest.approx(0.5, abs=1e-5)

    def test_stage_objectives_monotone(self):
        s = system.example1_system(2.0)
        res = gramians.type2_p_optimize(s, objective=TRACE_PQ)
        vals = res.stage_objectives
        for prev, cur in zip(vals, vals[1:]):
            assert cur <= prev + 1e-9 * (1.0 + abs(prev))
        rep = gramians.check_pair(s, gramians.type2_pair(s, P=res.P))
        assert rep.passed

    def test_kkt_residual_contract(self):
        rng = np.random.default_rng(21)
        instances = [system.sec4a_system(), system.example1_system(2.0)]
        instances += [random_stable_system(rng, 4) for _ in range(3)]
        for s in instances:
            res = gramians.type2_p_optimize(s, objective=TRACE_PQ)
            assert res.kkt_residual <= 1e-5 * (1.0 + abs(res.objective_value))


class TestLmiEquivalence:
    def test_matches_direct_inequality_classification(self):
        # Schur equivalence of the inversion-free inequality and its LMI
        rng = np.random.default_rng(22)
        agree = 0
        for _ in range(100):
            n = int(rng.integers(2, 6))
            s = random_stable_system(rng, n)
            P = random_spd(rng, n, scale=float(rng.uniform(0.2, 5.0)))
            Pinv = np.linalg.inv(P)
            direct = Pinv @ s.A + s.A.T @ Pinv + Pinv @ s.B @ s.B.T @ Pinv
            for N in s.N_list:
                direct += N.T @ Pinv @ N
            direct_ok = linalg.classify_definiteness(-direct, tol=1e-9) in (
                linalg.PD,
                linalg.PSD,
            )
            lmi_ok = linalg.classify_definiteness(
                -gramians.lmi_constraint(s, P), tol=1e-9
            ) in (linalg.PD, linalg.PSD)
            assert direct_ok == lmi_ok
            agree += 1
        assert agree == 100

    def test_multi_noise_block_shape(self):
        rng = np.random.default_rng(23)
        s = random_stable_system(rng, 3, k=2)
        G = gramians.lmi_constraint(s, np.eye(3))
        assert G.shape == (9, 9)
        # each noise channel owns one -P diagonal block
        assert np.allclose(G[3:6, 3:6], -np.eye(3))
        assert np.allclose(G[6:9, 6:9], -np.eye(3))


class TestCheckPair:
    def test_reference_type2_pair_passes(self):
        s = system.sec4a_system()
        Pref, _ = system.sec4a_type2_reference()
        rep = gramians.check_pair(s, gramians.type2_pair(s, P=Pref))
        assert rep.passed
        assert rep.slack_p_class in (linalg.PD, linalg.PSD)

    def test_type1_pair_is_not_type2_feasible(self):
        # the two reachability inequalities genuinely differ here
        s = system.example1_system(2.0)
        pair1 = gramians.type1_gramians(s)
        relabeled = gramians.GramianPair(
            P=pair1.P, Q=pair1.Q, kind=TYPE_II, slack_Q=pair1.slack_Q, slack_P=None
        )
        rep = gramians.check_pair(s, relabeled)
        assert not rep.passed
        assert rep.slack_p_class in (linalg.INDEFINITE, linalg.NSD, linalg.ND)

    def test_indefinite_p_fails(self):
        s = system.sec4a_system()
        bad = gramians.GramianPair(
            P=np.diag([1.0, -1.0]),
            Q=np.array([[6.0, 3.0], [3.0, 3.0]]),
            kind=TYPE_II,
            slack_Q=None,
            slack_P=None,
        )
        rep = gramians.check_pair(s, bad)
        assert not rep.passed and not rep.p_pd
        assert any("not PD" in m for m in rep.messages)

    def test_type1_slacks_recomputed(self):
        s = system.sec4a_system()
        pair = gramians.type1_gramians(s)
        rep = gramians.check_pair(s, pair)
        assert rep.passed
        assert abs(rep.q_margin) <= 1e-9
        assert abs(rep.p_margin) <= 1e-9
