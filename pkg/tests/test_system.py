import numpy as np
import pytest

from stochbt import lyapunov, system
from stochbt.errors import DomainError, SystemFormatError


class TestValidate:
    def test_example1_valid(self):
        rep = system.validate(system.example1_system(2.0))
        assert rep.ok
        assert (rep.n, rep.k, rep.m, rep.p) == (2, 1, 1, 1)

    def test_wrong_b_rows(self):
        s = system.StochasticSystem(
            np.eye(2), (np.zeros((2, 2)),), np.zeros((3, 1)), np.zeros((1, 2))
        )
        rep = system.validate(s)
        assert not rep.ok
        assert any("B has shape" in e for e in rep.errors)

    def test_non_finite(self):
        A = np.eye(2)
        A[0, 0] = np.nan
        s = system.StochasticSystem(
            A, (np.zeros((2, 2)),), np.zeros((2, 1)), np.zeros((1, 2))
        )
        rep = system.validate(s)
        assert not rep.ok
        assert any("non-finite" in e for e in rep.errors)


class TestExample1:
    def test_matrices(self):
        s = system.example1_system(2.0)
        assert np.array_equal(s.A, np.diag([-1.0, -4.0]))
        assert np.array_equal(s.N_list[0], [[0.0, 0.0], [1.0, 0.0]])
        assert np.array_equal(s.B, [[1.0], [0.0]])
        assert np.array_equal(s.C, [[0.0, 1.0]])

    def test_domain(self):
        with pytest.raises(DomainError):
            system.example1_system(1.0)
        with pytest.raises(DomainError):
            system.example1_system(0.5)

    @pytest.mark.parametrize("a", [2.0, 3.0])
    def test_product_spectrum(self, a):
        from stochbt import gramians

        s = system.example1_system(a)
        pair = gramians.type1_gramians(s)
        w = np.sort(np.linalg.eigvals(pair.P @ pair.Q).real)
        expected = np.sort([1.0 / (8 * a**2), 1.0 / (8 * a**4)])
        assert np.allclose(w, expected, rtol=1e-10)


class TestExample2:
    def test_gramian_domain(self):
        with pytest.raises(DomainError):
            system.example2_gramian(0.0)
        with pytest.raises(DomainError):
            system.example2_gramian(1.5)

    def test_gramian_value(self):
        P = system.example2_gramian(1.0)
        assert np.allclose(P, np.diag([1.0, 1.0]))


class TestSec4a:
    def test_matrices(self):
        s = system.sec4a_system()
        assert np.array_equal(s.A, [[-1.0, 1.0], [0.0, -1.0]])
        assert np.array_equal(s.B, [[0.0], [3.0]])
        assert np.array_equal(s.C, [[3.0, 0.0]])

    def test_documented_solutions(self):
        s = system.sec4a_system()
        Q = np.array([[6.0, 3.0], [3.0, 3.0]])
        P = np.array([[3.0, 3.0], [3.0, 6.0]])
        N = s.N_list[0]
        res_q = s.A.T @ Q + Q @ s.A + N.T @ Q @ N + s.C.T @ s.C
        res_p = s.A @ P + P @ s.A.T + N @ P @ N.T + s.B @ s.B.T
        assert np.abs(res_q).max() <= 1e-12
        assert np.abs(res_p).max() <= 1e-12


class TestLadder:
    def test_displayed_entries(self):
        s = system.ladder_system(6)
        A, N = s.A, s.N_list[0]
        assert A[1, 0] == pytest.approx(10.0)
        assert A[0, 0] == pytest.approx(-100.0)
        assert np.allclose(N[1], [1.0, -1.0 / 11.0, -10.0 / 11.0, 0.0, 0.0, 0.0])
        assert np.allclose(N[5], [0.0, 0.0, 0.0, 0.0, 1.0, -1.0])
        assert s.B[0, 0] == pytest.approx(100.0)
        assert s.C[0, 0] == pytest.approx(-10.0)
        assert np.count_nonzero(s.B) == 1 and np.count_nonzero(s.C) == 1

    @pytest.mark.parametrize("n", [4, 6, 12, 20])
    def test_band_structure(self, n):
        s = system.ladder_system(n)
        for M in (s.A, s.N_list[0]):
            for i in range(n):
                for j in range(n):
                    if j < i - 1 or j > i + 2:
                        assert M[i, j] == 0.0

    def test_deterministic(self):
        a = system.ladder_system(8)
        b = system.ladder_system(8)
        assert np.array_equal(a.A, b.A) and np.array_equal(a.N_list[0], b.N_list[0])

    def test_domain(self):
        with pytest.raises(DomainError):
            system.ladder_system(5)
        with pytest.raises(DomainError):
            system.ladder_system(2)


class TestHeat:
    def test_shapes_g10(self):
        s = system.heat_system(10)
        assert s.n == 100
        assert s.B.shape == (100, 3)
        assert np.allclose(s.C, np.full((1, 100), 0.01))

    @pytest.mark.parametrize("g", [3, 4, 7])
    def test_noise_is_diagonal_on_one_edge(self, g):
        s = system.heat_system(g)
        N = s.N_list[0]
        assert np.count_nonzero(N) == g
        assert np.count_nonzero(N - np.diag(np.diag(N))) == 0

    def test_g4_stability_and_symmetry(self):
        s = system.heat_system(4)
        assert np.array_equal(s.A, s.A.T)
        assert lyapunov.is_ms_stable(s.A, s.N_list)

    def test_noise_free_drift_is_hurwitz(self):
        s = system.heat_system(5)
        assert lyapunov.is_ms_stable(s.A, [np.zeros_like(s.A)])

    def test_domain(self):
        with pytest.raises(DomainError):
            system.heat_system(2)


class TestPartition:
    def test_blocks_reassemble(self):
        s = system.ladder_system(6)
        part = system.partition(s, 2)
        back = part.reassemble()
        assert np.array_equal(back.A, s.A)
        assert np.array_equal(back.N_list[0], s.N_list[0])
        assert np.array_equal(back.B, s.B)
        assert np.array_equal(back.C, s.C)

    def test_bad_split(self):
        s = system.example1_system(2.0)
        with pytest.raises(DomainError):
            system.partition(s, 0)
        with pytest.raises(DomainError):
            system.partition(s, 2)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        s = system.StochasticSystem(
            rng.normal(size=(3, 3)),
            (rng.normal(size=(3, 3)), rng.normal(size=(3, 3))),
            rng.normal(size=(3, 2)),
            rng.normal(size=(2, 3)),
            name="round trip",
        )
        path = tmp_path / "sys.json"
        system.save_system(s, str(path))
        back = system.load_system(str(path))
        assert np.array_equal(back.A, s.A)
        assert all(np.array_equal(x, y) for x, y in zip(back.N_list, s.N_list))
        assert np.array_equal(back.B, s.B)
        assert np.array_equal(back.C, s.C)
        assert back.name == "round trip"
        assert back.k == 2

    def test_missing_field_named(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"n": 2, "k": 1, "m": 1, "p": 1}')
        with pytest.raises(SystemFormatError) as exc:
            system.load_system(str(path))
        assert exc.value.field == "A"
        assert "'A'" in str(exc.value)

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("not json {")
        with pytest.raises(SystemFormatError):
            system.load_system(str(path))

    def test_shape_mismatch(self, tmp_path):
        s = system.example1_system(2.0)
        path = tmp_path / "sys.json"
        system.save_system(s, str(path))
        text = path.read_text().replace('"m": 1', '"m": 2')
        path.write_text(text)
        with pytest.raises(SystemFormatError) as exc:
            system.load_system(str(path))
        assert exc.value.field == "B"
