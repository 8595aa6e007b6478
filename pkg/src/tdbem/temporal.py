"""Uniform time grid, C0 time basis vanishing at t=0, retarded time integrals.

The degree-p time basis is organized in per-step groups: group m carries the
C0 nodal function peaked at t_m (supported on [t_{m-1}, t_{m+1}]) and p-1
interior bubble functions on (t_{m-1}, t_m), all built on Gauss-Lobatto
nodes. Every group is an exact translate of group 1, so the kernel time
integrals depend on the step difference only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "TimeGrid",
    "TemporalBasis",
    "RetardedTimeIntegral",
    "build_time_basis",
    "retarded_integral_table",
    "eval_time_basis",
    "eval_time_basis_derivative",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform nodes t_k = k*dt, k = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"need at least one step, got {self.n_steps}")

    @property
    def t_end(self) -> float:
        return self.dt * self.n_steps

    def node(self, k: int) -> float:
        return k * self.dt


def gauss_lobatto_nodes(p: int) -> np.ndarray:
    """p+1 Gauss-Lobatto points on [0, 1] (endpoints included)."""
    if p == 1:
        return np.array([0.0, 1.0])
    interior = roots_jacobi(p - 1, 1.0, 1.0)[0]
    return np.concatenate([[0.0], (interior + 1.0) / 2.0, [1.0]])


def _lagrange_coeffs(nodes: np.ndarray) -> np.ndarray:
    """Monomial coefficients of the Lagrange basis at the given nodes.

    Returns (n_nodes, n_nodes); row i holds the coefficients (ascending
    powers) of the polynomial equal to 1 at nodes[i] and 0 elsewhere.
    """
    n = len(nodes)
    out = np.empty((n, n))
    for i in range(n):
        others = np.delete(nodes, i)
        c = np.polynomial.polynomial.polyfromroots(others)
        denom = np.prod(nodes[i] - others)
        out[i] = c / denom
    return out


@dataclass(frozen=True)
class TemporalBasis:
    """Degree-p C0 basis on a uniform grid, vanishing at t = 0.

    Dofs are group-major: dof = (m-1)*p + a for group m = 1..n_steps and
    local index a, where a = 0 is the nodal function at t_m and
    a = 1..p-1 are the bubbles on (t_{m-1}, t_m).
    """

    p: int
    grid: TimeGrid
    # pieces[a][k] = ascending monomial coefficients in tau = s/dt - k of
    # group-1 function a on subinterval [k*dt, (k+1)*dt], k = 0, 1
    _pieces: tuple = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(
                f"time ansatz degree must be >= 1 (C0, vanishing at 0), got {self.p}"
            )
        nodes = gauss_lobatto_nodes(self.p)
        lag = _lagrange_coeffs(nodes)
        pieces = []
        zero = np.zeros(self.p + 1)
        # nodal function: rises to 1 at the right end of interval 0, falls on interval 1
        pieces.append((lag[-1].copy(), lag[0].copy()))
        for j in range(1, self.p):
            pieces.append((lag[j].copy(), zero.copy()))
        object.__setattr__(self, "_pieces", tuple(pieces))

    @property
    def n_dofs(self) -> int:
        return self.p * self.grid.n_steps

    def dof_group_local(self, dof: int) -> tuple[int, int]:
        """Map a flat dof index to (group m in 1..n_steps, local a)."""
        if not 0 <= dof < self.n_dofs:
            raise IndexError(f"dof {dof} out of range")
        return dof // self.p + 1, dof % self.p

    def local_support(self, a: int) -> float:
        """Support width of group-1 function a, in units of dt."""
        return 2.0 if a == 0 else 1.0

    def eval_group1(self, a: int, s, derivative: bool = False) -> np.ndarray:
        """Evaluate group-1 function a (or its derivative) at times s >= absolute."""
        s = np.asarray(s, dtype=float)
        dt = self.grid.dt
        out = np.zeros_like(s)
        for k in (0, 1):
            coeffs = self._pieces[a][k]
            if derivative:
                coeffs = np.polynomial.polynomial.polyder(coeffs) / dt
            lo, hi = k * dt, (k + 1) * dt
            # right-continuous convention at breakpoints
            mask = (s >= lo) & (s < hi)
            if np.any(mask):
                tau = s[mask] / dt - k
                out[mask] = np.polynomial.polynomial.polyval(tau, coeffs)
        if not derivative:
            # close the support at s = 2dt where the basis value is 0 anyway
            out[s == 2 * dt] = 0.0
        return out

    def eval_dof(self, dof: int, t, derivative: bool = False) -> np.ndarray:
        m, a = self.dof_group_local(dof)
        shift = (m - 1) * self.grid.dt
        return self.eval_group1(a, np.asarray(t, dtype=float) - shift, derivative)


def build_time_basis(p: int, grid: TimeGrid) -> TemporalBasis:
    """Degree-p C0 time basis with p * n_steps dofs."""
    return TemporalBasis(p, grid)


def eval_time_basis(basis: TemporalBasis, dof: int, t):
    return basis.eval_dof(dof, t, derivative=False)


def eval_time_basis_derivative(basis: TemporalBasis, dof: int, t):
    """Piecewise derivative, right-continuous at breakpoints."""
    return basis.eval_dof(dof, t, derivative=True)


def _chebyshev_lobatto(n: int) -> np.ndarray:
    k = np.arange(n)
    return (1.0 - np.cos(np.pi * k / (n - 1))) / 2.0


class RetardedTimeIntegral:
    """Tables of I_{l,a,b}(r) = integral of ansatz(t - r) * d/dt test(t).

    The integral for ansatz group m, test group n depends on l = n - m and
    the distance r only. As a function of the shifted variable
    u = r - l*dt it is piecewise polynomial of degree <= 2p on the four
    windows [(w-2)dt, (w-1)dt], w = 0..3, and vanishes outside.

    test_family "c0" pairs the basis with the time-differentiated C0 test
    functions of the Galerkin scheme; "constant" uses piecewise-constant
    (undifferentiated) test functions, the marching-on-in-time variant,
    for which the block at l = -1 vanishes.
    """

    def __init__(self, basis: TemporalBasis, test_family: str = "c0"):
        if test_family not in ("c0", "constant"):
            raise ValueError(f"unknown test family {test_family!r}")
        self.basis = basis
        self.p = basis.p
        self.grid = basis.grid
        self.test_family = test_family
        self.n_test_local = basis.p if test_family == "c0" else 1
        self._build()

    def _build(self):
        p, dt = self.p, self.grid.dt
        deg = 2 * p
        n_samp = deg + 1
        tau = _chebyshev_lobatto(n_samp) if n_samp > 1 else np.array([0.5])
        vander = np.polynomial.polynomial.polyvander(tau, deg)
        # coeffs[a, b, w, k]: ascending monomial coefficients in the local
        # window coordinate tau = u/dt - (w - 2)
        self.coeffs = np.zeros((p, self.n_test_local, 4, deg + 1))
        gl_x, gl_w = roots_legendre(p + 2)
        gl_x = (gl_x + 1.0) / 2.0
        gl_w = gl_w / 2.0
        for w in range(4):
            u_samp = ((w - 2) + tau) * dt
            for a in range(p):
                for b in range(self.n_test_local):
                    vals = np.array(
                        [self._direct_value(a, b, u, gl_x, gl_w) for u in u_samp]
                    )
                    self.coeffs[a, b, w] = np.linalg.solve(vander, vals)

    def _direct_value(self, a, b, u, gl_x, gl_w):
        """Exact piecewise Gauss evaluation of the defining integral at shift u."""
        dt = self.grid.dt
        wa = self.basis.local_support(a) * dt
        lo = max(0.0, u)
        if self.test_family == "c0":
            wb = self.basis.local_support(b) * dt
        else:
            wb = dt
        hi = min(wb, u + wa)
        if hi <= lo + 1e-15 * dt:
            return 0.0
        cuts = {lo, hi}
        for c in (dt, 2 * dt, u, u + dt, u + 2 * dt):
            if lo < c < hi:
                cuts.add(c)
        cuts = sorted(cuts)
        total = 0.0
        for s0, s1 in zip(cuts[:-1], cuts[1:]):
            s = s0 + (s1 - s0) * gl_x
            fa = self.basis.eval_group1(a, s - u)
            if self.test_family == "c0":
                fb = self.basis.eval_group1(b, s, derivative=True)
            else:
                fb = np.ones_like(s)
            total += (s1 - s0) * np.sum(gl_w * fa * fb)
        return total

    def support(self, l: int) -> tuple[float, float]:
        """Closed interval of r outside which I_{l,a,b} vanishes for all a, b."""
        dt = self.grid.dt
        return max(0.0, (l - 2) * dt), (l + 2) * dt

    def grid_radii(self, r_max: float) -> np.ndarray:
        """Light-cone radii t_k = k*dt with 0 < t_k < r_max (kernel kink locations)."""
        dt = self.grid.dt
        kmax = int(np.floor(r_max / dt - 1e-12))
        return dt * np.arange(1, kmax + 1)

    def evaluate(self, l: int, a: int, b: int, r) -> np.ndarray:
        """I_{l,a,b} at distances r >= 0."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return self.evaluate_block(l, r)[a, b]

    def evaluate_block(self, l: int, r: np.ndarray) -> np.ndarray:
        """All local pairs at once: returns (p, n_test_local, len(r))."""
        dt = self.grid.dt
        u = r - l * dt
        widx = np.floor(u / dt).astype(int) + 2
        out = np.zeros((self.p, self.n_test_local, len(r)))
        for w in range(4):
            mask = widx == w
            if not np.any(mask):
                continue
            tau = u[mask] / dt - (w - 2)
            powers = np.polynomial.polynomial.polyvander(tau, 2 * self.p)
            out[:, :, mask] = np.einsum("nk,abk->abn", powers, self.coeffs[:, :, w])
        return out

    def evaluate_shifts(self, shifts, r: np.ndarray) -> np.ndarray:
        """Stack of evaluate_block over several shifts: (n_shifts, p, n_test, n_r)."""
        r = np.asarray(r, dtype=float)
        return np.stack([self.evaluate_block(l, r) for l in shifts])

    def max_abs(self) -> float:
        """Crude upper bound on |I| over all windows (for error floors)."""
        tau = np.linspace(0.0, 1.0, 33)
        powers = np.polynomial.polynomial.polyvander(tau, 2 * self.p)
        vals = np.einsum("nk,abwk->abwn", powers, self.coeffs)
        return float(np.abs(vals).max())


def retarded_integral_table(
    p: int, grid: TimeGrid, test_family: str = "c0"
) -> RetardedTimeIntegral:
    """Exact tables of the retarded kernel time integrals for degree p."""
    if p < 1:
        raise ValueError("ansatz degree must be >= 1; the piecewise-constant "
                         "test space is selected via test_family='constant'")
    return RetardedTimeIntegral(build_time_basis(p, grid), test_family)
