import math

import numpy as np
import pytest

from perlyap import (
    BadPeriod,
    CapExceeded,
    ConfigError,
    FullShift,
    ShiftPoint,
    ToralAutomorphism,
    TorusPoint,
    base_from_config,
)

LOG_LAM = math.log((3 + math.sqrt(5)) / 2)


def minimg_dist(a, b):
    diff = np.abs(np.asarray(a) - np.asarray(b))
    diff = np.minimum(diff, 1 - diff)
    return math.sqrt((diff**2).sum())


class TestConstruction:
    def test_cat_map_valid(self, cat):
        assert cat.dim == 2
        assert cat.gamma_hyp == pytest.approx(LOG_LAM, abs=1e-12)

    def test_rejects_non_unimodular(self):
        with pytest.raises(ConfigError):
            ToralAutomorphism([[2, 0], [0, 2]])

    def test_rejects_eigenvalue_on_circle(self):
        # rotation-like integer matrix: eigenvalues on the unit circle
        with pytest.raises(ConfigError):
            ToralAutomorphism([[0, -1], [1, 0]])

    def test_from_config(self):
        sys_ = base_from_config({"kind": "toral", "matrix": [[2, 1], [1, 1]]})
        assert sys_.kind == "toral"
        sh = base_from_config({"kind": "shift", "alphabet": 3})
        assert sh.alphabet_size == 3
        with pytest.raises(ConfigError):
            base_from_config({"kind": "bogus"})


class TestStep:
    def test_forward_example(self, cat):
        x = TorusPoint.from_floats([0.2, 0.3])
        y = cat.step(x, 1)
        assert np.allclose(y.coords, [0.7, 0.5], atol=1e-12)

    def test_inverse_example(self, cat):
        y = TorusPoint.from_floats([0.7, 0.5])
        x = cat.step(y, -1)
        assert np.allclose(x.coords, [0.2, 0.3], atol=1e-12)

    def test_zero_steps_identity(self, cat, rng):
        x = cat.random_point(rng)
        assert cat.step(x, 0) == x

    def test_group_law_exact(self, cat, rng):
        # exact integer arithmetic: zero error, not just 1e-12
        for _ in range(25):
            x = cat.random_point(rng)
            a = int(rng.integers(-20, 21))
            b = int(rng.integers(-20, 21))
            assert cat.step(cat.step(x, a), b) == cat.step(x, a + b)

    def test_shift_step_rotates(self, shift2):
        w = ShiftPoint(core=(0, 1, 1), alphabet_size=2)
        assert shift2.step(w, 1).symbol(0) == w.symbol(1)
        assert shift2.step(shift2.step(w, 2), -2) == w


class TestDist:
    def test_wraparound(self, cat):
        x = TorusPoint.from_floats([0.9, 0.0])
        y = TorusPoint.from_floats([0.1, 0.0])
        assert cat.dist(x, y) == pytest.approx(0.2, abs=1e-12)

    def test_metric_axioms(self, cat, rng):
        pts = [cat.random_point(rng) for _ in range(30)]
        for _ in range(1000):
            i, j, k = rng.integers(0, len(pts), size=3)
            a, b, c = pts[i], pts[j], pts[k]
            assert cat.dist(a, b) == pytest.approx(cat.dist(b, a), abs=1e-15)
            assert cat.dist(a, a) == 0.0
            assert cat.dist(a, c) <= cat.dist(a, b) + cat.dist(b, c) + 1e-12

    def test_shift_identical(self, shift2):
        w = ShiftPoint(core=(0, 1, 1, 0), alphabet_size=2)
        assert shift2.dist(w, w) == 0.0

    def test_shift_first_difference_at_three(self, shift2):
        w = ShiftPoint(core=(0,) * 8, alphabet_size=2)
        v = ShiftPoint(core=(0,) * 8, window=(1,), win_start=3, alphabet_size=2)
        assert shift2.dist(w, v) == 0.125

    def test_shift_metric_axioms(self, shift2, rng):
        pts = [shift2.random_point(rng, core_len=9) for _ in range(12)]
        for _ in range(300):
            i, j, k = rng.integers(0, len(pts), size=3)
            a, b, c = pts[i], pts[j], pts[k]
            assert shift2.dist(a, b) == shift2.dist(b, a)
            assert shift2.dist(a, c) <= shift2.dist(a, b) + shift2.dist(b, c) + 1e-15


class TestFindRecurrence:
    def test_fixed_point_all_returns(self, cat):
        o = TorusPoint((0, 0), 1)
        assert cat.find_recurrence(o, 0.1, k_max=5) == [1, 2, 3, 4, 5]

    def test_fixed_point_window(self, cat):
        o = TorusPoint((0, 0), 1)
        assert cat.find_recurrence(o, 0.1, window=(3, 6)) == [3, 4, 5, 6]

    def test_irrational_orbit_returns(self, cat):
        # start frozen from a build-time scan: returns below 1e-3 within 10^4
        x = cat.random_point(np.random.default_rng(30))
        ks = cat.find_recurrence(x, 1e-3, k_max=10**4)
        assert ks, "expected at least one close return"
        for k in ks:
            assert cat.dist(x, cat.step(x, k)) < 1e-3

    def test_shift_recurrence(self, shift2):
        w = ShiftPoint(core=(0, 1), alphabet_size=2)
        assert shift2.find_recurrence(w, 0.3, k_max=6) == [2, 4, 6]


class TestCloseOrbit:
    def test_already_periodic(self, cat):
        rep = cat.close_orbit(TorusPoint((0, 0), 1), 4)
        assert rep.p.nums == (0, 0)
        assert rep.distances.max() == 0.0
        assert rep.delta == 0.0

    def test_bad_period(self, cat):
        with pytest.raises(BadPeriod):
            cat.close_orbit(TorusPoint((0, 0), 1), 0)

    def test_exact_periodicity(self, cat, rng):
        for k in (3, 11, 25):
            x = cat.random_point(rng)
            rep = cat.close_orbit(x, k)
            assert cat.step(rep.p, k) == rep.p

    def test_shadowing_decay_on_generated_instances(self, cat, rng):
        # near-returns built from a periodic point plus a generic
        # stable/unstable displacement below beta = 1e-3
        evals, evecs = np.linalg.eig(cat.matrix.astype(float))
        vs = evecs[:, np.argmin(np.abs(evals))]
        vs = vs / np.linalg.norm(vs)
        vu = evecs[:, np.argmax(np.abs(evals))]
        vu = vu / np.linalg.norm(vu)
        lam = (3 + math.sqrt(5)) / 2
        count = 0
        for k in range(10, 31):
            for _ in range(3):
                p = cat.close_orbit(cat.random_point(rng), k).p
                s_amp = 0.7e-3 * (0.5 + rng.random())
                u_amp = 0.7e-3 * (0.5 + rng.random()) / lam**k
                x = TorusPoint.from_floats((p.coords + s_amp * vs + u_amp * vu) % 1.0)
                if cat.dist(x, cat.step(x, k)) >= 1e-3:
                    continue
                rep = cat.close_orbit(x, k)
                assert cat.step(rep.p, k) == rep.p
                assert rep.fitted_gamma >= 0.9 * cat.gamma_hyp
                assert abs(rep.fitted_gamma - LOG_LAM) <= 0.15 * LOG_LAM
                assert np.all(rep.distances >= 0)
                m = np.minimum(np.arange(k + 1), k - np.arange(k + 1))
                clear = rep.distances > 1e-13
                assert np.all(rep.distances[clear]
                              <= rep.delta * np.exp(-rep.fitted_gamma * m[clear]) * (1 + 1e-9))
                count += 1
        assert count >= 25

    def test_shift_symbolic_closing(self, shift2, rng):
        x = shift2.random_point(rng, core_len=24)
        k = 12
        rep = shift2.close_orbit(x, k)
        assert shift2.step(rep.p, k) == rep.p
        assert rep.p.core == tuple(x.symbol(n) for n in range(k))
        # decay rate of the 2^-m metric
        assert rep.fitted_gamma == pytest.approx(math.log(2), abs=1e-9)


class TestEnumeratePeriodic:
    def test_counts_match_determinant(self, cat):
        # |det(M^k - I)| = Lucas(2k) - 2 for the cat map
        expected = {1: 1, 2: 5, 3: 16, 4: 45, 5: 121, 6: 320, 7: 841, 8: 2205}
        for k, want in expected.items():
            pts = cat.enumerate_periodic(k)
            assert len(pts) == want
            assert len({p.nums for p in pts}) == want

    def test_points_are_periodic(self, cat):
        for k in (3, 5):
            for p in cat.enumerate_periodic(k):
                assert cat.step(p, k) == p

    def test_cap(self, cat):
        with pytest.raises(CapExceeded) as ei:
            cat.enumerate_periodic(12, cap=1000)
        assert ei.value.required == 103680

    def test_shift_counts(self, shift2):
        pts = shift2.enumerate_periodic(3)
        assert len(pts) == 8
        for p in pts:
            assert shift2.step(p, 3) == p
