import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import roots_legendre

from tdbem.temporal import (
    TimeGrid,
    build_time_basis,
    eval_time_basis,
    eval_time_basis_derivative,
    retarded_integral_table,
)


def p1_closed_form(l, r, dt):
    """Four-branch closed form of the degree-1 retarded time integral."""
    t = lambda k: k * dt
    if t(l + 1) <= r <= t(l + 2):
        return -0.5 * (t(l + 2) - r) ** 2 / dt**2
    if t(l) <= r <= t(l + 1):
        return (t(l + 1) - r) ** 2 / dt**2 + 0.5 * (t(l) - r) ** 2 / dt**2 - 1.0
    if t(l - 1) <= r <= t(l):
        return -((t(l - 1) - r) ** 2 / dt**2 + 0.5 * (t(l) - r) ** 2 / dt**2 - 1.0)
    if t(l - 2) <= r <= t(l - 1):
        return 0.5 * (t(l - 2) - r) ** 2 / dt**2
    return 0.0


def quadrature_oracle(basis, m, a, n, b, r, test_family="c0"):
    """Direct Gauss quadrature of the defining integral for groups (m, n)."""
    dt = basis.grid.dt
    wa = basis.local_support(a) * dt
    wb = basis.local_support(b) * dt if test_family == "c0" else dt
    t0m, t0n = (m - 1) * dt, (n - 1) * dt
    lo = max(t0n, t0m + r)
    hi = min(t0n + wb, t0m + r + wa)
    if hi <= lo:
        return 0.0
    cuts = {lo, hi}
    for c in list(t0n + dt * np.arange(3)) + list(t0m + r + dt * np.arange(3)):
        if lo < c < hi:
            cuts.add(c)
    cuts = sorted(cuts)
    x, w = roots_legendre(20)
    total = 0.0
    for s0, s1 in zip(cuts[:-1], cuts[1:]):
        s = s0 + (s1 - s0) * (x + 1) / 2
        fa = basis.eval_group1(a, s - r - t0m)
        if test_family == "c0":
            fb = basis.eval_group1(b, s - t0n, derivative=True)
        else:
            fb = ((s - t0n) >= 0) & ((s - t0n) < dt)
        total += (s1 - s0) / 2 * np.sum(w * fa * fb)
    return total


class TestTimeBasis:
    def test_dof_count_p1(self):
        basis = build_time_basis(1, TimeGrid(0.5, 8))
        assert basis.n_dofs == 8

    def test_dof_count_p2(self):
        basis = build_time_basis(2, TimeGrid(0.5, 4))
        assert basis.n_dofs == 8

    def test_rejects_p0(self):
        with pytest.raises(ValueError):
            build_time_basis(0, TimeGrid(0.5, 4))

    @pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
    def test_vanishes_at_zero(self, p):
        basis = build_time_basis(p, TimeGrid(0.25, 6))
        for dof in range(basis.n_dofs):
            assert abs(eval_time_basis(basis, dof, 0.0)) < 1e-14

    def test_hat_values(self):
        basis = build_time_basis(1, TimeGrid(0.5, 8))
        for m in range(1, 9):
            dof = m - 1
            tm = 0.5 * m
            assert eval_time_basis(basis, dof, tm) == pytest.approx(1.0, abs=1e-14)
            assert eval_time_basis(basis, dof, tm + 0.25) == pytest.approx(0.5)
            assert eval_time_basis(basis, dof, tm - 0.25) == pytest.approx(0.5)

    def test_hat_derivative(self):
        basis = build_time_basis(1, TimeGrid(0.5, 8))
        # on (t_{m-1}, t_m) the slope is 1/dt; right-continuous at nodes
        assert eval_time_basis_derivative(basis, 2, 1.2) == pytest.approx(2.0)
        assert eval_time_basis_derivative(basis, 2, 1.0) == pytest.approx(2.0)
        assert eval_time_basis_derivative(basis, 2, 1.5) == pytest.approx(-2.0)
        assert eval_time_basis_derivative(basis, 2, 2.0) == pytest.approx(0.0)

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_translate_structure(self, p):
        basis = build_time_basis(p, TimeGrid(0.4, 5))
        ts = np.linspace(0, 0.8, 37)
        for a in range(p):
            v1 = eval_time_basis(basis, a, ts)
            v3 = eval_time_basis(basis, 2 * p + a, ts + 2 * 0.4)
            assert np.allclose(v1, v3, atol=1e-13)

    @pytest.mark.parametrize("p", [2, 4])
    def test_continuity(self, p):
        basis = build_time_basis(p, TimeGrid(0.3, 4))
        eps = 1e-9
        for dof in range(basis.n_dofs):
            for tk in 0.3 * np.arange(1, 5):
                below = eval_time_basis(basis, dof, tk - eps)
                above = eval_time_basis(basis, dof, tk + eps)
                assert abs(below - above) < 1e-7

    def test_bubble_vanishes_at_nodes(self):
        basis = build_time_basis(3, TimeGrid(0.5, 4))
        for a in (1, 2):
            assert abs(eval_time_basis(basis, a, 0.0)) < 1e-14
            assert abs(eval_time_basis(basis, a, 0.5)) < 1e-14


class TestRetardedTable:
    def test_paper_value_l0(self):
        table = retarded_integral_table(1, TimeGrid(0.5, 8))
        val = table.evaluate(0, 0, 0, 0.25)[0]
        assert val == pytest.approx(-0.625, abs=1e-13)

    def test_outside_support(self):
        table = retarded_integral_table(1, TimeGrid(0.5, 8))
        assert table.evaluate(0, 0, 0, 2.0)[0] == 0.0
        for r in np.linspace(0, 5, 11):
            assert table.evaluate(-3, 0, 0, r)[0] == 0.0

    @pytest.mark.parametrize("l", [-1, 0, 1, 2, 5])
    def test_p1_matches_closed_form(self, l):
        dt = 0.5
        table = retarded_integral_table(1, TimeGrid(dt, 8))
        rng = np.random.default_rng(7)
        rs = rng.uniform(0, (l + 2.5) * dt if l > -2 else 1.0, 200)
        rs = rs[rs >= 0]
        for r in rs:
            expected = p1_closed_form(l, r, dt)
            assert table.evaluate(l, 0, 0, r)[0] == pytest.approx(
                expected, abs=1e-13
            )

    @pytest.mark.parametrize("p", [1, 2, 3, 4])
    def test_oracle_equivalence(self, p):
        dt = 0.4
        grid = TimeGrid(dt, 12)
        table = retarded_integral_table(p, grid)
        rng = np.random.default_rng(42)
        for _ in range(25):
            l = int(rng.integers(-1, 5))
            m = int(rng.integers(3, 6))
            n = m + l
            if n < 1 or n > 12:
                continue
            r = float(rng.uniform(0, (l + 2) * dt + 0.2))
            a = int(rng.integers(0, p))
            b = int(rng.integers(0, p))
            expected = quadrature_oracle(table.basis, m, a, n, b, r)
            assert table.evaluate(l, a, b, r)[0] == pytest.approx(
                expected, abs=1e-10
            )

    @pytest.mark.parametrize("p", [1, 3])
    def test_first_group_is_translate(self, p):
        # integrals against test group n = 1 follow the same table
        dt = 0.3
        grid = TimeGrid(dt, 10)
        table = retarded_integral_table(p, grid)
        for r in (0.05, 0.2, 0.4):
            for a in range(p):
                for b in range(p):
                    expected = quadrature_oracle(table.basis, 2, a, 1, b, r)
                    assert table.evaluate(-1, a, b, r)[0] == pytest.approx(
                        expected, abs=1e-12
                    )

    def test_shift_invariance(self):
        # same l from different (m, n) pairs gives identical integrals
        grid = TimeGrid(0.25, 16)
        table = retarded_integral_table(2, grid)
        for l in (-1, 0, 2):
            for r in (0.1, 0.3, 0.7):
                v32 = quadrature_oracle(table.basis, 2, 1, 2 + l, 0, r)
                v76 = quadrature_oracle(table.basis, 6, 1, 6 + l, 0, r)
                assert v32 == pytest.approx(v76, abs=1e-13)
                assert table.evaluate(l, 1, 0, r)[0] == pytest.approx(v32, abs=1e-11)

    def test_partition_of_unity_row_sum(self):
        # p=1: summing over all test groups kills the integral since the
        # test hats sum to 1 where the shifted ansatz hat lives
        dt = 0.5
        table = retarded_integral_table(1, TimeGrid(dt, 40))
        m = 3
        for r in (0.6, 1.13, 2.0):
            total = sum(
                table.evaluate(n - m, 0, 0, r)[0] for n in range(1, 41)
            )
            assert abs(total) < 1e-12

    @given(
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=-1, max_value=6),
        st.floats(min_value=0.0, max_value=5.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_support_window(self, p, l, r):
        table = retarded_integral_table(p, TimeGrid(0.5, 10))
        lo, hi = table.support(l)
        if not (lo <= r <= hi):
            block = table.evaluate_block(l, np.array([r]))
            assert np.all(block == 0.0)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_degree_bound(self, p):
        # refitting each window at higher degree yields ~0 extra coefficients
        table = retarded_integral_table(p, TimeGrid(0.5, 6))
        assert table.coeffs.shape[-1] == 2 * p + 1
        deg_hi = 2 * p + 4
        tau = np.linspace(0, 1, 4 * deg_hi)
        for w in range(4):
            for a in range(p):
                for b in range(p):
                    u = ((w - 2) + tau) * 0.5
                    r = u + 10 * 0.5  # probe via shift l=10 to keep r >= 0
                    vals = table.evaluate(10, a, b, r)
                    c = np.polynomial.chebyshev.chebfit(2 * tau - 1, vals, deg_hi)
                    assert np.all(np.abs(c[2 * p + 1 :]) < 1e-12)

    def test_continuity_in_r(self):
        table = retarded_integral_table(2, TimeGrid(0.5, 8))
        eps = 1e-10
        for l in (-1, 0, 1, 3):
            for k in range(max(0, l - 2), l + 3):
                r = k * 0.5
                if r <= 0:
                    continue
                va = table.evaluate_block(l, np.array([r - eps]))
                vb = table.evaluate_block(l, np.array([r + eps]))
                assert np.allclose(va, vb, atol=1e-8)

    def test_constant_test_family_kills_superdiagonal(self):
        table = retarded_integral_table(1, TimeGrid(0.5, 8), test_family="constant")
        rs = np.linspace(0.0, 0.5, 21)
        assert np.all(table.evaluate_block(-1, rs) == 0.0)

    def test_constant_test_family_oracle(self):
        grid = TimeGrid(0.5, 8)
        table = retarded_integral_table(1, grid, test_family="constant")
        for l in (0, 1, 2):
            for r in (0.1, 0.6, 0.9):
                expected = quadrature_oracle(
                    table.basis, 3, 0, 3 + l, 0, r, test_family="constant"
                )
                assert table.evaluate(l, 0, 0, r)[0] == pytest.approx(
                    expected, abs=1e-12
                )
