"""Quadrature for the retarded single-layer kernel over triangle pairs.

Integrals of shape_x(x) shape_y(y) radial(|x-y|) / (4 pi |x-y|) over
Tx x Ty are computed by adaptive dyadic subdivision of the pair with a
two-level error estimate per cell. Cells are forced to split while a
light-cone radius (a breakpoint of the radial factor) crosses them.
Touching or near-touching sub-pairs use an outer Gauss rule times an
inner closest-point fan split with Duffy maps whose Jacobian cancels
the 1/r singularity; well-separated sub-pairs use tensor Gauss rules.

All rules are deterministic: identical inputs yield bit-identical sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

__all__ = [
    "QuadratureSpec",
    "PairClass",
    "QuadratureError",
    "RadialFunction",
    "ConstantRadial",
    "TableRadial",
    "classify_pair",
    "integrate_pair",
    "integrate_pair_with_estimate",
    "integrate_pair_vector",
    "integrate_rhs_cell",
    "integrate_rhs_cell_vector",
]

_FOUR_PI = 4.0 * math.pi


class QuadratureError(RuntimeError):
    """Requested tolerance not reached; carries the achieved estimate."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class QuadratureSpec:
    """Control knobs for the pair and right-hand-side integrators.

    tol : target relative tolerance of an entry.
    max_depth : recursion depth budget for the dyadic subdivision.
    base_order : Gauss points per direction of every base rule.
    near_ratio : pairs closer than near_ratio * triangle size take the
        desingularized outer-times-fan route instead of tensor Gauss.
    cone_aware : force subdivision of cells straddling a light-cone
        sphere (up to kink_depth splits).
    """

    tol: float = 1e-6
    max_depth: int = 8
    base_order: int = 3
    near_ratio: float = 0.8
    cone_aware: bool = True
    kink_depth: int = 3
    strict: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.base_order < 1:
            raise ValueError("base_order must be >= 1")


class PairClass(Enum):
    COINCIDENT = "coincident"
    EDGE_ADJACENT = "edge-adjacent"
    VERTEX_ADJACENT = "vertex-adjacent"
    SEPARATED = "separated"


def classify_pair(tri_x, tri_y) -> PairClass:
    """Classification by shared vertex count (3, 2, 1, 0)."""
    ax = {tuple(v) for v in np.asarray(tri_x, dtype=float)}
    ay = {tuple(v) for v in np.asarray(tri_y, dtype=float)}
    shared = len(ax & ay)
    return {
        3: PairClass.COINCIDENT,
        2: PairClass.EDGE_ADJACENT,
        1: PairClass.VERTEX_ADJACENT,
        0: PairClass.SEPARATED,
    }[shared]


# ---------------------------------------------------------------------------
# radial factors
# ---------------------------------------------------------------------------

class RadialFunction:
    """Radial factor with a support window and kink radii.

    fn(r) may return an array with leading component axes; the trailing
    axis matches r.
    """

    def __init__(self, fn, support=(0.0, np.inf), breakpoints=(), n_components=1):
        self.fn = fn
        self.support = (float(support[0]), float(support[1]))
        self.breakpoints = np.asarray(sorted(breakpoints), dtype=float)
        self.n_components = n_components

    def __call__(self, r):
        return self.fn(np.asarray(r, dtype=float))


class ConstantRadial(RadialFunction):
    def __init__(self, value: float = 1.0):
        if value == 0.0:
            support = (0.0, 0.0)
        else:
            support = (0.0, np.inf)
        super().__init__(lambda r: np.full((1, len(r)), value), support, ())
        self.value = value


class TableRadial(RadialFunction):
    """All retarded-time-integral components for a set of shifts, stacked.

    Component layout: (shift, ansatz local, test local) flattened.
    """

    def __init__(self, table, shifts):
        self.table = table
        self.shifts = list(shifts)
        lo = min(table.support(l)[0] for l in self.shifts)
        hi = max(table.support(l)[1] for l in self.shifts)
        # every grid radius in [lo, hi] is a kink, including the support
        # endpoints where the window pieces meet zero
        dt = table.grid.dt
        kmax = int(np.floor(hi / dt + 1e-9))
        radii = dt * np.arange(1, kmax + 1)
        radii = radii[radii >= lo - 1e-12 * dt]
        n_comp = len(self.shifts) * table.p * table.n_test_local

        def fn(r):
            vals = table.evaluate_shifts(self.shifts, r)
            return vals.reshape(n_comp, len(r))

        super().__init__(fn, (lo, hi), radii, n_comp)


# ---------------------------------------------------------------------------
# geometric primitives (scalar numpy, branch code after Ericson)
# ---------------------------------------------------------------------------

def _closest_point_on_triangle(p, a, b, c):
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        return a + (d1 / (d1 - d3)) * ab
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        return a + (d2 / (d2 - d6)) * ac
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b)
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


def _closest_points_on_segments(p1, q1, p2, q2):
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    c = d1 @ r
    b = d1 @ d2
    denom = a * e - b * b
    if denom > 1e-30:
        s = min(max((b * f - c * e) / denom, 0.0), 1.0)
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = min(max(-c / a, 0.0), 1.0)
    elif t > 1.0:
        t = 1.0
        s = min(max((b - c) / a, 0.0), 1.0)
    return p1 + d1 * s, p2 + d2 * t


def _triangle_distance(tx, ty) -> float:
    best = np.inf
    for v in tx:
        q = _closest_point_on_triangle(v, ty[0], ty[1], ty[2])
        best = min(best, float(np.linalg.norm(v - q)))
    for v in ty:
        q = _closest_point_on_triangle(v, tx[0], tx[1], tx[2])
        best = min(best, float(np.linalg.norm(v - q)))
    edges = ((0, 1), (1, 2), (2, 0))
    for i, j in edges:
        for k, l in edges:
            c1, c2 = _closest_points_on_segments(tx[i], tx[j], ty[k], ty[l])
            best = min(best, float(np.linalg.norm(c1 - c2)))
    return best


def _max_vertex_distance(tx, ty) -> float:
    d = tx[:, None, :] - ty[None, :, :]
    return float(np.sqrt(np.sum(d * d, axis=2).max()))


def _diameter(tri) -> float:
    return float(
        max(
            np.linalg.norm(tri[1] - tri[0]),
            np.linalg.norm(tri[2] - tri[1]),
            np.linalg.norm(tri[0] - tri[2]),
        )
    )


def _split4(tri):
    m01 = 0.5 * (tri[0] + tri[1])
    m12 = 0.5 * (tri[1] + tri[2])
    m20 = 0.5 * (tri[2] + tri[0])
    return (
        np.array([tri[0], m01, m20]),
        np.array([m01, tri[1], m12]),
        np.array([m20, m12, tri[2]]),
        np.array([m01, m12, m20]),
    )


# ---------------------------------------------------------------------------
# base rules
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _gauss01(n: int):
    x, w = roots_legendre(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=64)
def _duffy_square(order: int):
    """Collapsed-square rule on the reference triangle: (uv (n,2), w (n,))."""
    x, w = _gauss01(order)
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wts = np.outer(w, w) * xi
    u = xi * (1.0 - eta)
    v = xi * eta
    return np.column_stack([u.ravel(), v.ravel()]), wts.ravel()


def _triangle_points(tri, order: int):
    uv, w = _duffy_square(order)
    pts = tri[0] + np.outer(uv[:, 0], tri[1] - tri[0]) + np.outer(uv[:, 1], tri[2] - tri[0])
    area2 = np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    return pts, w * area2


def _tensor_rule(tx, ty, order: int):
    X, wx = _triangle_points(tx, order)
    Y, wy = _triangle_points(ty, order)
    nx, ny = len(X), len(Y)
    XX = np.repeat(X, ny, axis=0)
    YY = np.tile(Y, (nx, 1))
    W = np.repeat(wx, ny) * np.tile(wy, nx)
    return XX, YY, W


def _eta_panels(wi, wj, max_ratio: float = 2.0, cap: int = 12):
    """Split the angular direction until |w(eta)| varies mildly per panel.

    The fan integrand carries a factor ~ 1/|w(eta)| which spikes when the
    fan vertex sits close to one chord endpoint.
    """

    def nrm(e):
        w = (1.0 - e) * wi + e * wj
        return math.sqrt(w @ w)

    queue = [(0.0, 1.0)]
    out = []
    while queue:
        a, b = queue.pop()
        if len(out) + len(queue) + 2 > cap or (b - a) < 0.02:
            out.append((a, b))
            continue
        vals = (nrm(a), nrm(0.5 * (a + b)), nrm(b))
        if max(vals) <= max_ratio * min(vals):
            out.append((a, b))
        else:
            m = 0.5 * (a + b)
            queue.append((m, b))
            queue.append((a, m))
    return sorted(out)


def _fan_block(c, wi, wj, area2, xi_cuts, eta_panels, order: int):
    """Tensor points of one fan triangle: all xi intervals x eta panels."""
    gx, gw = _gauss01(order)
    xi_cuts = np.asarray(xi_cuts)
    eta_panels = np.asarray(eta_panels)
    lo = xi_cuts[:-1]
    len_xi = xi_cuts[1:] - lo
    XI = lo[:, None] + len_xi[:, None] * gx  # (n_int, g)
    WXI = len_xi[:, None] * gw
    e0 = eta_panels[:, 0]
    len_eta = eta_panels[:, 1] - e0
    ETA = e0[:, None] + len_eta[:, None] * gx  # (n_pan, g)
    WETA = len_eta[:, None] * gw
    xi = XI.reshape(-1, 1)
    wxi = WXI.reshape(-1, 1)
    eta = ETA.reshape(1, -1)
    weta = WETA.reshape(1, -1)
    w_dir = (1.0 - eta)[..., None] * wi + eta[..., None] * wj  # (1, ne, 3)
    pts = c + xi[..., None] * w_dir  # (nx, ne, 3)
    wts = (wxi * weta) * xi[..., 0][:, None] * area2
    return pts.reshape(-1, 3), wts.reshape(-1)


def _fan_rule(x, tri, radii, order: int, layer_cap: int = 9):
    """Inner rule on tri for a fixed outer point x.

    Splits tri into fans around the closest point, applies a Duffy map per
    fan (Jacobian ~ xi cancels 1/r), splits the radial direction at
    light-cone radii and grades geometrically toward the near point.
    """
    c = _closest_point_on_triangle(x, tri[0], tri[1], tri[2])
    d = float(np.linalg.norm(x - c))
    diam = _diameter(tri)
    ys = []
    ws = []
    for i, j in ((0, 1), (1, 2), (2, 0)):
        vi, vj = tri[i], tri[j]
        area2 = np.linalg.norm(np.cross(vi - c, vj - c))
        if area2 <= 1e-14 * diam * diam:
            continue
        wi = vi - c
        wj = vj - c
        # xi cuts: light-cone crossings sampled at eta = 0, 1/2, 1
        cuts = {0.0, 1.0}
        if len(radii):
            for eta_s in (0.0, 0.5, 1.0):
                wv = (1.0 - eta_s) * wi + eta_s * wj
                L2 = wv @ wv
                beta = -(x - c) @ wv  # >= 0 by the projection property
                for rho in radii:
                    if rho <= d:
                        continue
                    disc = beta * beta + L2 * (rho * rho - d * d)
                    if disc <= 0.0 or L2 <= 0.0:
                        continue
                    xi0 = (-beta + math.sqrt(disc)) / L2
                    if 1e-9 < xi0 < 1.0 - 1e-9:
                        cuts.add(xi0)
        # geometric layers toward the near point for 0 < d << diam
        if d > 1e-13 * max(diam, 1.0):
            reach = math.sqrt(max(wi @ wi, wj @ wj))
            k_max = min(layer_cap, max(0, math.ceil(math.log2(reach / d)) - 1))
            for k in range(1, k_max + 1):
                cuts.add(2.0 ** (-k))
        pts, wts = _fan_block(
            c, wi, wj, area2, sorted(cuts), _eta_panels(wi, wj), order
        )
        ys.append(pts)
        ws.append(wts)
    if not ys:
        return np.zeros((0, 3)), np.zeros(0)
    return np.concatenate(ys), np.concatenate(ws)


def _graded_outer_points(tri, shared, order: int, layers: int = 6):
    """Outer rule on tri graded toward the contact set with the partner.

    shared is the list of tri's vertex positions (0..2) coincident with
    the partner triangle. The inner potential has a log-type gradient at
    the contact set, so geometric layers are placed toward it:
    coincident (3 shared) grades from the centroid to the whole boundary,
    edge contact (2 shared) from the opposite vertex toward the edge,
    vertex contact (1 shared) from the shared vertex outward.
    """
    n_sh = len(shared)
    geo_in = [2.0 ** (-k) for k in range(1, layers + 1)]
    if n_sh == 3:
        apex = tri.mean(axis=0)
        corners = [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
        cuts = sorted({0.0, 1.0} | {1.0 - g for g in geo_in})
    elif n_sh == 2:
        opposite = ({0, 1, 2} - set(shared)).pop()
        apex = tri[opposite]
        others = [v for v in range(3) if v != opposite]
        corners = [(tri[others[0]], tri[others[1]])]
        cuts = sorted({0.0, 1.0} | {1.0 - g for g in geo_in})
    else:
        apex = tri[shared[0]]
        others = [v for v in range(3) if v != shared[0]]
        corners = [(tri[others[0]], tri[others[1]])]
        cuts = sorted({0.0, 1.0} | set(geo_in))
    xs = []
    ws = []
    diam = _diameter(tri)
    for vi, vj in corners:
        area2 = np.linalg.norm(np.cross(vi - apex, vj - apex))
        if area2 <= 1e-14 * diam * diam:
            continue
        pts, wts = _fan_block(
            apex, vi - apex, vj - apex, area2, cuts,
            _eta_panels(vi - apex, vj - apex), order,
        )
        xs.append(pts)
        ws.append(wts)
    return np.concatenate(xs), np.concatenate(ws)


def _shared_vertex_positions(tx, ty):
    keys = {tuple(v) for v in ty}
    return [i for i in range(3) if tuple(tx[i]) in keys]


def _eta_cut_points(qa, qb, qc, radii):
    """Roots in (0,1) of L(eta)^2 = rho^2 with L^2 = qa eta^2 + qb eta + qc."""
    pts = set()
    for rho in radii:
        c0 = qc - rho * rho
        if abs(qa) < 1e-300:
            if abs(qb) > 1e-300:
                r = -c0 / qb
                if 1e-12 < r < 1 - 1e-12:
                    pts.add(float(r))
            continue
        disc = qb * qb - 4.0 * qa * c0
        if disc <= 0:
            continue
        sq = math.sqrt(disc)
        for r in ((-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)):
            if 1e-12 < r < 1 - 1e-12:
                pts.add(float(r))
    return sorted(pts)


def _coincident_rule(tri, radii, order: int):
    """Relative-coordinate rule for an identical pair, exact at light cones.

    In the difference variable z = y_hat - x_hat the kernel distance is
    exactly |x - y| = xi * L(eta) per angular sector; the radial factor's
    kink radii map to xi cuts that are flattened by splitting the eta
    range at the exact roots of L(eta) = rho (L^2 is quadratic in eta), so
    every tensor piece is analytic and Gauss converges geometrically.
    Six sectors (three plus argument-swapped mirrors) cover z-space.
    """
    A, B, C = tri
    e1 = B - A
    e2 = C - B
    gram = np.linalg.norm(np.cross(e1, e2)) ** 2  # (2|T|)^2
    gx, gw = _gauss01(order)
    n_eta = order + 2
    ex, ew = _gauss01(n_eta)
    T1, T2 = np.meshgrid(gx, gx, indexing="ij")  # (g, g)
    WT = np.outer(gw * gx, gw)  # includes the t1 Jacobian factor
    # sector direction z(eta) = (z1(eta), z2(eta)) and s0 offset selector
    e11 = e1 @ e1
    e12 = e1 @ e2
    e22 = e2 @ e2
    sectors = (
        # (z1, z2) as (const, linear) coefficient pairs in eta, s0-mode
        (((1.0, 0.0), (0.0, 1.0)), "zero"),      # z = (1, eta)
        (((0.0, 1.0), (1.0, 0.0)), "one_minus"),  # z = (eta, 1)
        (((0.0, -1.0), (1.0, -1.0)), "one"),      # z = (-eta, 1 - eta)
    )
    radii = np.asarray(radii, dtype=float)
    xs = []
    ys = []
    ws = []
    for (z1c, z2c), s0_mode in sectors:
        # L(eta)^2 = |z1 e1 + z2 e2|^2 as a quadratic in eta
        a1, b1 = z1c[1], z1c[0]
        a2, b2 = z2c[1], z2c[0]
        qa = a1 * a1 * e11 + 2 * a1 * a2 * e12 + a2 * a2 * e22
        qb = 2 * (a1 * b1 * e11 + (a1 * b2 + a2 * b1) * e12 + a2 * b2 * e22)
        qc = b1 * b1 * e11 + 2 * b1 * b2 * e12 + b2 * b2 * e22
        eta_cuts = [0.0] + _eta_cut_points(qa, qb, qc, radii) + [1.0]
        for elo, ehi in zip(eta_cuts[:-1], eta_cuts[1:]):
            eta_nodes = elo + (ehi - elo) * ex
            eta_wts = (ehi - elo) * ew
            for ke in range(n_eta):
                eta = eta_nodes[ke]
                z1 = z1c[0] + z1c[1] * eta
                z2 = z2c[0] + z2c[1] * eta
                L = math.sqrt(qa * eta * eta + qb * eta + qc)
                xi, wxi = _xi_blocks(L, radii, gx, gw)
                base = xi * (1.0 - xi) ** 2 * wxi * eta_wts[ke] * gram
                if s0_mode == "zero":
                    s0 = np.zeros_like(xi)
                elif s0_mode == "one_minus":
                    s0 = xi * (1.0 - eta)
                else:
                    s0 = xi
                u1 = s0[:, None, None] + T1[None] * (1.0 - xi)[:, None, None]
                u2 = T1[None] * T2[None] * (1.0 - xi)[:, None, None]
                v1 = u1 + (xi * z1)[:, None, None]
                v2 = u2 + (xi * z2)[:, None, None]
                X = A + u1[..., None] * e1 + u2[..., None] * e2
                Y = A + v1[..., None] * e1 + v2[..., None] * e2
                W = base[:, None, None] * WT[None]
                xs += [X.reshape(-1, 3), Y.reshape(-1, 3)]
                ys += [Y.reshape(-1, 3), X.reshape(-1, 3)]
                ws += [W.reshape(-1), W.reshape(-1)]
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


def _outer_inner_rule(tx, ty, radii, order: int):
    """Outer Gauss on tx times inner fan rule on ty.

    Used as an independent oracle路径 in tests (with uniform refinement and
    extrapolation); production singular pairs take the relative-coordinate
    rules below.
    """
    shared = _shared_vertex_positions(tx, ty)
    if shared:
        X0, wx = _graded_outer_points(tx, shared, order)
    else:
        X0, wx = _triangle_points(tx, order)
    xs = []
    ys = []
    ws = []
    for k in range(len(X0)):
        Yk, Wk = _fan_rule(X0[k], ty, radii, order)
        if len(Wk) == 0:
            continue
        xs.append(np.broadcast_to(X0[k], (len(Wk), 3)))
        ys.append(Yk)
        ws.append(wx[k] * Wk)
    if not xs:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


def _xi_blocks(L_over_xi, radii, gx, gw):
    """Gauss points on [0,1] split exactly at xi where L_over_xi * xi = rho."""
    cuts = {0.0, 1.0}
    for rho in radii:
        c = rho / L_over_xi
        if 1e-12 < c < 1.0 - 1e-12:
            cuts.add(float(c))
    cuts = sorted(cuts)
    xs = []
    ws = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        xs.append(lo + (hi - lo) * gx)
        ws.append((hi - lo) * gw)
    return np.concatenate(xs), np.concatenate(ws)


# Edge-rule sub-boxes: (sign of the along-edge offset, derived coefficients).
# Variables (a, b) range over [0,1]^2; each box defines
#   denominator(a, b), extra Jacobian, u1 lower-bound coefficient, and the
#   scaled offsets (zeta_dir, u2_dir, v2_dir) with (zeta, u2, v2) = rho * dirs,
#   rho = xi / denominator. Derived from splitting relative coordinates by
#   the dominant variable among (|zeta|, u2, v2).
def _edge_boxes(a, b):
    one = np.ones_like(a)
    return (
        # zeta > 0
        (one, a, b, 1.0 + a, one, a),           # zeta dominant
        (a, one, b, 1.0 + a, one, one),         # u2 dominant (a = zeta/u2)
        (a, 1.0 - a * (1.0 - b), one, 1.0 + a * b, a, 1.0 - a * (1.0 - b)),
        (a, (1.0 - a) * b, one, one, 1.0 - a, (1.0 - a) * one),
        # zeta < 0
        (-one, a, b, 1.0 + b, one, 1.0 + b),    # zeta dominant
        (-a, one, b * (1.0 - a), one, 1.0 - a, one),
        (-a, one, 1.0 - a * (1.0 - b), 1.0 + a * b, a, 1.0 - a * (1.0 - b) + a),
        (-a, b, one, 1.0 + a, one, 1.0 + a),    # v2 dominant
    )


def _edge_rule(tx, ty, radii, order: int):
    """Relative-coordinate rule for panels sharing a full edge."""
    shared_x = _shared_vertex_positions(tx, ty)
    shared_y = _shared_vertex_positions(ty, tx)
    sx = [tuple(tx[i]) for i in shared_x]
    s0, s1 = sorted(sx)
    S0 = np.array(s0)
    S1 = np.array(s1)
    O1 = tx[[i for i in range(3) if tuple(tx[i]) not in (s0, s1)][0]]
    O2 = ty[[i for i in range(3) if tuple(ty[i]) not in (s0, s1)][0]]
    e0 = S1 - S0
    f1 = O1 - S1
    f2 = O2 - S1
    gram = (
        np.linalg.norm(np.cross(e0, f1)) * np.linalg.norm(np.cross(e0, f2))
    )
    gx, gw = _gauss01(order)
    na = order + 1
    ax, aw = _gauss01(na)
    A, B = np.meshgrid(ax, ax, indexing="ij")
    WA = np.outer(aw, aw)
    xs = []
    ys = []
    ws = []
    for zdir, adir, bdir, denom, jac, lo in _edge_boxes(A.ravel(), B.ravel()):
        zdir = np.broadcast_to(zdir, A.size)
        adir = np.broadcast_to(adir, A.size)
        bdir = np.broadcast_to(bdir, A.size)
        denom = np.broadcast_to(denom, A.size)
        jac = np.broadcast_to(jac, A.size)
        lo = np.broadcast_to(lo, A.size)
        D = (
            -zdir[:, None] * e0 + adir[:, None] * f1 - bdir[:, None] * f2
        )
        L = np.linalg.norm(D, axis=1)
        for k in range(A.size):
            xi, wxi = _xi_blocks(L[k] / denom[k], radii, gx, gw)
            rho = xi / denom[k]
            base = (
                WA.ravel()[k] * jac[k] * xi**2 * (1.0 - xi) / denom[k] ** 3 * wxi
            )
            u1 = (rho * lo[k])[:, None] + np.outer(1.0 - xi, gx)  # (nxi, g)
            u2 = (rho * adir[k])[:, None]
            v1 = u1 + (rho * zdir[k])[:, None]
            v2 = (rho * bdir[k])[:, None]
            X = S0 + u1[..., None] * e0 + np.broadcast_to(
                u2[..., None], u1.shape + (1,)
            ) * f1
            Y = S0 + v1[..., None] * e0 + np.broadcast_to(
                v2[..., None], v1.shape + (1,)
            ) * f2
            W = np.outer(base, gw) * gram
            xs.append(X.reshape(-1, 3))
            ys.append(Y.reshape(-1, 3))
            ws.append(W.reshape(-1))
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


def _vertex_rule(tx, ty, radii, order: int):
    """Relative-coordinate rule for panels sharing exactly one vertex."""
    px = _shared_vertex_positions(tx, ty)[0]
    py = _shared_vertex_positions(ty, tx)[0]
    P = tx[px]
    A1, B1 = [tx[i] for i in range(3) if i != px]
    A2, B2 = [ty[i] for i in range(3) if i != py]
    d1 = A1 - P
    d2 = B1 - A1
    g1 = A2 - P
    g2 = B2 - A2
    gram = np.linalg.norm(np.cross(d1, d2)) * np.linalg.norm(np.cross(g1, g2))
    gx, gw = _gauss01(order)
    n3 = order + 1
    sx3, sw3 = _gauss01(n3)
    ETA, S1, S2 = np.meshgrid(sx3, sx3, sx3, indexing="ij")
    WS = (
        sw3[:, None, None] * sw3[None, :, None] * sw3[None, None, :]
    ).ravel()
    eta = ETA.ravel()
    s1 = S1.ravel()
    s2 = S2.ravel()
    Gu = d1 + s1[:, None] * d2
    Gv = g1 + s2[:, None] * g2
    xs = []
    ys = []
    ws = []
    for region in (0, 1):
        if region == 0:
            D = Gu - eta[:, None] * Gv
        else:
            D = eta[:, None] * Gu - Gv
        L = np.linalg.norm(D, axis=1)
        for k in range(len(eta)):
            xi, wxi = _xi_blocks(L[k], radii, gx, gw)
            if region == 0:
                ux, vx = xi, xi * eta[k]
            else:
                ux, vx = xi * eta[k], xi
            X = P + np.outer(ux, Gu[k])
            Y = P + np.outer(vx, Gv[k])
            W = WS[k] * eta[k] * xi**3 * wxi * gram
            xs.append(X)
            ys.append(Y)
            ws.append(W)
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


# ---------------------------------------------------------------------------
# adaptive pair engine
# ---------------------------------------------------------------------------

class _Cell:
    __slots__ = ("tx", "ty", "depth", "rmin", "rmax", "value")

    def __init__(self, tx, ty, depth):
        self.tx = tx
        self.ty = ty
        self.depth = depth
        self.rmin = _triangle_distance(tx, ty)
        self.rmax = _max_vertex_distance(tx, ty)
        self.value = None


def _singular_rule(tx, ty, n_shared, radii, order: int):
    if n_shared == 3:
        return _coincident_rule(tx, radii, order)
    if n_shared == 2:
        return _edge_rule(tx, ty, radii, order)
    return _vertex_rule(tx, ty, radii, order)


def _cell_rule(cell: _Cell, contrib, radial: RadialFunction, spec: QuadratureSpec):
    lo, hi = radial.support
    if cell.rmax <= lo or cell.rmin >= hi:
        return None  # exact zero
    X, Y, W = _tensor_rule(cell.tx, cell.ty, spec.base_order)
    return contrib(X, Y, W)


def _children(cell: _Cell):
    if _diameter(cell.tx) >= _diameter(cell.ty):
        return [_Cell(t, cell.ty, cell.depth + 1) for t in _split4(cell.tx)]
    return [_Cell(cell.tx, t, cell.depth + 1) for t in _split4(cell.ty)]


def _straddles(cell: _Cell, radii) -> bool:
    if len(radii) == 0:
        return False
    idx = np.searchsorted(radii, (cell.rmin, cell.rmax))
    return idx[1] > idx[0]


def adaptive_pair_integral(tri_x, tri_y, contrib, radial: RadialFunction,
                           spec: QuadratureSpec):
    """Adaptive integral over tri_x x tri_y; returns (values, error_estimate).

    contrib(X, Y, W) must return a flat component vector; values has the
    same shape. The error estimate is the accumulated two-level defect.
    """
    tx = np.asarray(tri_x, dtype=float)
    ty = np.asarray(tri_y, dtype=float)
    lo, hi = radial.support
    root = _Cell(tx, ty, 0)
    if root.rmax <= lo or root.rmin >= hi:
        probe = contrib(tx[:1], ty[:1] + 1.0 + root.rmax, np.zeros(1))
        return np.zeros_like(probe), 0.0
    n_shared = len(_shared_vertex_positions(tx, ty))
    if n_shared > 0:
        # touching pairs: spectral relative-coordinate rules with exact
        # light-cone cuts; escalate the order instead of subdividing
        value = None
        err = np.inf
        g = spec.base_order
        for step in range(4):
            X, Y, W = _singular_rule(tx, ty, n_shared, radial.breakpoints, g)
            refined = contrib(X, Y, W)
            if value is not None:
                err = float(np.max(np.abs(refined - value)))
            value = refined
            scale = max(float(np.max(np.abs(value))), 1e-300)
            if err <= spec.tol * scale:
                return value, err
            g += 2
        if spec.strict and err > 10 * spec.tol * float(np.max(np.abs(value))):
            raise QuadratureError(
                f"singular-pair quadrature stalled at estimate {err:.3e}", err
            )
        return value, err
    root.value = _cell_rule(root, contrib, radial, spec)
    if root.value is None:
        probe = contrib(tx[:1], ty[:1] + 1.0 + root.rmax, np.zeros(1))
        return np.zeros_like(probe), 0.0
    total = np.zeros_like(root.value)
    err_acc = 0.0
    deficit = 0.0
    scale = 0.0
    size = max(_diameter(tx), _diameter(ty))
    stack = [root]
    while stack:
        cell = stack.pop()
        kids = _children(cell)
        v1 = np.zeros_like(cell.value)
        live = []
        for kid in kids:
            kid.value = _cell_rule(kid, contrib, radial, spec)
            if kid.value is not None:
                v1 += kid.value
                live.append(kid)
        err = float(np.max(np.abs(v1 - cell.value)))
        scale = max(scale, float(np.max(np.abs(v1))))
        force = (
            spec.cone_aware
            and cell.depth < spec.kink_depth
            and _straddles(cell, radial.breakpoints)
        ) or (
            cell.depth == 0
            and cell.rmin <= spec.near_ratio * size
        )
        tol_abs = spec.tol * scale + 1e-300
        if not force and err <= tol_abs:
            total += v1
            err_acc += err
        elif cell.depth + 1 >= spec.max_depth:
            total += v1
            err_acc += err
            deficit += err
        else:
            stack.extend(live)
    if spec.strict and deficit > max(spec.tol * scale, 1e-14 * scale):
        raise QuadratureError(
            f"pair quadrature missed tolerance {spec.tol:g}: "
            f"achieved estimate {deficit / max(scale, 1e-300):.3e} (relative)",
            deficit,
        )
    return total, err_acc


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _as_radial(radial_fn) -> RadialFunction:
    if isinstance(radial_fn, RadialFunction):
        return radial_fn
    if np.isscalar(radial_fn):
        return ConstantRadial(float(radial_fn))
    return RadialFunction(lambda r: np.atleast_2d(radial_fn(r)))


def _shape_on(tri, shape):
    """Wrap a reference-coordinate shape callable for physical points."""
    v0 = tri[0]
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    g = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
    ginv = np.linalg.inv(g)

    def values(pts):
        rel = pts - v0
        rhs = np.stack([rel @ e1, rel @ e2], axis=1)
        uv = rhs @ ginv.T
        out = np.asarray(shape(uv), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        return out

    return values


def integrate_pair_vector(tri_x, tri_y, shapes_x, shapes_y, radial_fn,
                          spec: QuadratureSpec):
    """All (component, shape_x, shape_y) entries of the kernel integral.

    shapes_x/shapes_y map reference coordinates (n, 2) to (n, n_shapes).
    Returns (values[(c, i, j)], error_estimate). The pair is canonically
    oriented first so that swapped arguments give bit-identical results.
    """
    tx = np.asarray(tri_x, dtype=float)
    ty = np.asarray(tri_y, dtype=float)
    radial = _as_radial(radial_fn)
    swap = tuple(map(tuple, tx)) > tuple(map(tuple, ty))
    if swap:
        tx, ty = ty, tx
        shapes_x, shapes_y = shapes_y, shapes_x
    sx = _shape_on(tx, shapes_x)
    sy = _shape_on(ty, shapes_y)

    def contrib(X, Y, W):
        r = np.linalg.norm(X - Y, axis=1)
        vals = radial(r)
        kern = vals / (_FOUR_PI * np.maximum(r, 1e-300))
        out = np.einsum("cn,n,ni,nj->cij", np.atleast_2d(kern), W, sx(X), sy(Y))
        return out.ravel()

    flat, err = adaptive_pair_integral(tx, ty, contrib, radial, spec)
    nc = radial.n_components
    vals = flat.reshape(nc, -1)
    n_i = sx(tx[:1])[0:1].shape[1]
    out = vals.reshape(nc, n_i, -1)
    if swap:
        out = np.swapaxes(out, 1, 2)
    return out, err


def integrate_pair_with_estimate(tri_x, tri_y, local_shape_x, local_shape_y,
                                 radial_fn, spec: QuadratureSpec):
    def wrap(shape):
        def values(uv):
            out = np.asarray(shape(uv), dtype=float)
            return out[:, None] if out.ndim == 1 else out

        return values

    vals, err = integrate_pair_vector(
        tri_x, tri_y, wrap(local_shape_x), wrap(local_shape_y), radial_fn, spec
    )
    return float(vals.reshape(-1)[0]) if vals.size == 1 else vals[:, 0, 0], err


def integrate_pair(tri_x, tri_y, local_shape_x, local_shape_y, radial_fn,
                   spec: QuadratureSpec) -> float:
    """Kernel integral for one shape pair and one radial factor.

    shape callables take reference coordinates (n, 2) of their triangle
    and return values (n,).
    """
    value, _ = integrate_pair_with_estimate(
        tri_x, tri_y, local_shape_x, local_shape_y, radial_fn, spec
    )
    return value


# ---------------------------------------------------------------------------
# right-hand-side cells
# ---------------------------------------------------------------------------

def _split_at_kinks(t0, t1, kinks, grade: float = 0.25):
    """Subdivide [t0, t1] at declared kinks, one graded level toward each."""
    pts = {t0, t1}
    for k in kinks:
        if t0 < k < t1:
            pts.add(k)
    pts = sorted(pts)
    refined = []
    for a, b in zip(pts[:-1], pts[1:]):
        extra = set()
        if any(abs(a - k) < 1e-14 for k in kinks):
            extra.add(a + grade * (b - a))
        if any(abs(b - k) < 1e-14 for k in kinks):
            extra.add(b - grade * (b - a))
        sub = sorted({a, b} | extra)
        refined.extend(zip(sub[:-1], sub[1:]))
    return refined


def integrate_rhs_cell_vector(tri, t_interval, f, time_weights, shapes,
                              spec: QuadratureSpec, time_kinks=()):
    """Integral of f(t, x) * w_k(t) * shape_j(x) over [t0, t1] x tri.

    time_weights(t) -> (n, n_w); shapes maps reference coords to (n, n_s).
    Adaptive bisection in time; fixed-order spatial Gauss with one
    embedded comparison. Returns ((n_w, n_s) array, error estimate).
    """
    tri = np.asarray(tri, dtype=float)
    sx = _shape_on(tri, shapes)
    t0, t1 = t_interval
    if t1 <= t0:
        raise ValueError("empty time interval")
    order_s = max(spec.base_order + 3, 6)
    Xs, Ws = _triangle_points(tri, order_s)
    Xs_hi, Ws_hi = _triangle_points(tri, order_s + 3)
    Sv = sx(Xs)
    Sv_hi = sx(Xs_hi)
    gx, gw = _gauss01(max(spec.base_order + 2, 5))

    def panel_value(a, b, pts, wts, shape_vals):
        t = a + (b - a) * gx
        wt = time_weights(t)
        fv = np.stack([np.asarray(f(tk, pts), dtype=float) for tk in t])
        return (b - a) * np.einsum("k,kw,kn,n,ns->ws", gw, np.atleast_2d(wt), fv, wts, shape_vals)

    def adaptive(a, b, depth, coarse):
        mid = 0.5 * (a + b)
        left = panel_value(a, mid, Xs, Ws, Sv)
        right = panel_value(mid, b, Xs, Ws, Sv)
        fine = left + right
        err = float(np.max(np.abs(fine - coarse)))
        scale = max(float(np.max(np.abs(fine))), 1e-300)
        if err <= spec.tol * scale or depth >= spec.max_depth:
            return fine, err
        vl, el = adaptive(a, mid, depth + 1, left)
        vr, er = adaptive(mid, b, depth + 1, right)
        return vl + vr, el + er

    total = None
    err_total = 0.0
    for a, b in _split_at_kinks(t0, t1, time_kinks):
        coarse = panel_value(a, b, Xs, Ws, Sv)
        val, err = adaptive(a, b, 0, coarse)
        total = val if total is None else total + val
        err_total += err
    # embedded spatial check on the whole cell
    probe = panel_value(t0, t1, Xs_hi, Ws_hi, Sv_hi)
    base = panel_value(t0, t1, Xs, Ws, Sv)
    err_total += float(np.max(np.abs(probe - base)))
    return total, err_total


def integrate_rhs_cell(tri, t_interval, f, test_time_derivative, shape,
                       spec: QuadratureSpec, time_kinks=()) -> float:
    """Scalar forcing integral for one test time factor and one shape."""

    def weights(t):
        return np.asarray(test_time_derivative(t), dtype=float)[:, None]

    def shapes(uv):
        out = np.asarray(shape(uv), dtype=float)
        return out[:, None] if out.ndim == 1 else out

    val, _ = integrate_rhs_cell_vector(
        tri, t_interval, f, weights, shapes, spec, time_kinks
    )
    return float(val[0, 0])
