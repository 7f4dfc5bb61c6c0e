"""Non-local boundary energy forms on snowflake curves and on their polygons.

The fractal form weighs squared differences by ``1 / (sigma_alpha * mu(B))``;
the polygonal form swaps in ``mu_n`` and switches to ``r^(2 alpha - 1)``
below the cutoff radius ``A r_n``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import _kernels
from ._quadrature import EdgeNodes, build_tree, csr_by_centre, edge_nodes, pair_lists
from .geometry import GeometryConstants, PolygonalLevel, point_segment_distance, scale_radius
from .measures import AveragedMeasure, BoundaryMeasure, average_function, gauss_on_edges

SIGMA_MODES = ("measure_scaled", "d_regular")
DIRECT_EDGE_LIMIT = 768
DIRECT_DEPTH_LIMIT = 4
FAR_ETA = 0.15


@dataclass(frozen=True)
class FormSpec:
    """Everything needed to evaluate a boundary form.

    ``eta`` controls cluster separation in the double sums (0 = every pair
    evaluated directly, ``None`` = direct up to ``DIRECT_EDGE_LIMIT`` edges).
    ``ball_eps`` is the relative resolution of the fractal ball measures used
    inside double sums; single ball queries are always certified brackets.
    """

    alpha: float = 1.0
    sigma_mode: str = "measure_scaled"
    A: float | None = None
    level: int | None = None
    r_n: float | None = None
    quad_order: int = 4
    ball_depth: int | None = None
    d: float | None = None
    eta: float | None = None
    ball_eps: float = 0.1
    subdiv: int = 4
    near_factor: float = 1.0
    diag_cut_rel: float = 1e-4

    def __post_init__(self):
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"unknown sigma mode {self.sigma_mode!r}")
        if self.quad_order < 2:
            raise ValueError("quadrature order must be at least 2")
        if self.A is not None and self.A <= 0:
            raise ValueError("A must be positive")

    @classmethod
    def for_level(cls, curve, constants: GeometryConstants, n: int, A: float | None = None,
                  **kw) -> "FormSpec":
        """Spec for the level-``n`` form with ``r_n`` and the default cutoff constant."""
        return cls(level=n, r_n=scale_radius(constants, curve, n),
                   A=constants.default_A if A is None else A, **kw)

    @property
    def cutoff(self) -> float:
        if self.A is None or self.r_n is None:
            raise ValueError("cutoff needs both A and r_n")
        return self.A * self.r_n

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class BoundaryFunction:
    """Function on the plane evaluated at ``(N, 2)`` point arrays.

    ``gradient`` (optional) returns ``(N, 2)`` arrays; it feeds Dirichlet
    energies of the superposed form.
    """

    evaluator: Callable
    lipschitz_bound: float | None = None
    name: str = "custom"
    gradient: Callable | None = None

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = np.asarray(self.evaluator(pts), dtype=float)
        if v.shape == ():
            v = np.full(len(pts), float(v))
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.name} is not finite at some node")
        return v

    def scaled(self, a: float) -> "BoundaryFunction":
        lip = None if self.lipschitz_bound is None else abs(a) * self.lipschitz_bound
        grad = None if self.gradient is None else (lambda p: a * self.gradient(p))
        return BoundaryFunction(lambda p: a * self.evaluator(p), lip, f"{a}*{self.name}", grad)

    def check_lipschitz(self, pts, slack: float = 1e-9) -> float:
        """Largest sampled difference quotient; raises when it beats the declared bound."""
        pts = np.asarray(pts, dtype=float)
        v = self(pts)
        worst = 0.0
        for s in range(0, len(pts), 512):
            d = np.linalg.norm(pts[s:s + 512, None, :] - pts[None, :, :], axis=2)
            dv = np.abs(v[s:s + 512, None] - v[None, :])
            ok = d > 0
            if ok.any():
                worst = max(worst, float(np.max(dv[ok] / d[ok])))
        if self.lipschitz_bound is not None and worst > self.lipschitz_bound * (1 + slack):
            raise ValueError(f"difference quotient {worst} exceeds bound {self.lipschitz_bound}")
        return worst


# catalog of named test functions; bounds hold on the box [-1/4, 5/4] x [-1/2, 5/4]
_CENTRE = np.array([0.5, math.sqrt(3) / 6])
def _radial_grad(p):
    d = p - _CENTRE
    n = np.linalg.norm(d, axis=1)
    return np.where(n[:, None] > 0, d / np.where(n > 0, n, 1)[:, None], 0.0)


CATALOG = {
    "const": (lambda p: np.ones(len(p)), 0.0, lambda p: np.zeros((len(p), 2))),
    "coord-x": (lambda p: p[:, 0].copy(), 1.0, lambda p: np.tile([1.0, 0.0], (len(p), 1))),
    "coord-y": (lambda p: p[:, 1].copy(), 1.0, lambda p: np.tile([0.0, 1.0], (len(p), 1))),
    "product-xy": (lambda p: p[:, 0] * p[:, 1], math.hypot(1.25, 1.25),
                   lambda p: np.stack([p[:, 1], p[:, 0]], axis=1)),
    "abs-sum": (lambda p: np.abs(p[:, 0]) + np.abs(p[:, 1]), math.sqrt(2.0),
                lambda p: np.sign(p)),
    "radial": (lambda p: np.linalg.norm(p - _CENTRE, axis=1), 1.0, _radial_grad),
}


def test_function(name: str) -> BoundaryFunction:
    """Named function from the built-in catalog."""
    if name not in CATALOG:
        raise ValueError(f"unknown test function {name!r}; choose from {sorted(CATALOG)}")
    f, lip, grad = CATALOG[name]
    return BoundaryFunction(f, lip, name, grad)


test_function.__test__ = False


@dataclass
class EnergyValue:
    value: float
    short_part: float
    long_part: float
    quadrature_error_estimate: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.value, self.short_part, self.long_part) < 0:
            raise ValueError("energies are nonnegative")

    def to_json(self) -> dict:
        return {"schema": 1, "alpha": self.meta.get("alpha"), "mode": self.meta.get("mode"),
                "level": self.meta.get("level"), "value": self.value, "short": self.short_part,
                "long": self.long_part, "err_est": self.quadrature_error_estimate}


# --------------------------------------------------------------------------
# symbols


def _dimension(spec: FormSpec, mu: BoundaryMeasure | None) -> float:
    if spec.d is not None:
        return spec.d
    if mu is None:
        raise ValueError("dimension unknown without a boundary measure")
    return mu.dimension()


def _check_alpha(spec: FormSpec, d: float, prefractal: bool):
    lo = 0.5 if prefractal else (2 - d) / 2
    hi = 1 + (2 - d) / 2
    if not lo < spec.alpha < hi:
        raise ValueError(f"alpha={spec.alpha} outside ({lo:.4f}, {hi:.4f})")


def _ball_depth(spec: FormSpec, mu: BoundaryMeasure, level: int) -> int:
    depth = level + 6 if spec.ball_depth is None else spec.ball_depth
    return min(depth, mu.resolution_cap)


def sigma_alpha(spec: FormSpec, mu: BoundaryMeasure, x, r: float, depth: int | None = None) -> float:
    """Kernel symbol: ``r^(2 alpha - 2) mu(B(x, r))`` or ``r^(2 alpha')``."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if spec.sigma_mode == "d_regular":
        d = _dimension(spec, mu)
        return r ** (2 * (spec.alpha - (2 - d) / 2))
    depth = _ball_depth(spec, mu, spec.level or 0) if depth is None else depth
    return r ** (2 * spec.alpha - 2) * mu.ball(x, r, depth).mid


def rho_n(spec: FormSpec, constants: GeometryConstants | None, xi, r: float,
          mu: BoundaryMeasure | None = None, depth: int | None = None) -> float:
    """Scale-split symbol: ``sigma_alpha`` above ``A r_n``, ``r^(2 alpha - 1)`` at or below."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if spec.r_n is None and constants is not None and mu is not None:
        spec = replace(spec, r_n=scale_radius(constants, mu.curve, spec.level))
    if spec.A is None and constants is not None:
        spec = replace(spec, A=constants.default_A)
    if r <= spec.cutoff:
        return r ** (2 * spec.alpha - 1)
    return sigma_alpha(spec, mu, xi, r, depth)


# --------------------------------------------------------------------------
# kernel evaluation in CSR layout (pairs grouped by centre)


# radial spread of a straddling arc's mass, in units of its disc radius
_KAPPA = 0.6


class _FractalBalls:
    def __init__(self, mu: BoundaryMeasure, depth: int, eps: float):
        self.mu, self.depth, self.eps = mu, depth, eps
        self.tree = mu._tree(depth)
        extra = depth + 12 if mu.curve.omega is None else max(depth, len(mu.curve.omega))
        self.gam = mu.centroid_coefficients(extra)[: depth + 2]

    def __call__(self, C, offsets, r):
        roots, root_mass, omegas, heights, child_w = self.tree
        lo = np.zeros(len(r))
        hi = np.zeros(len(r))
        est = np.zeros(len(r))
        _kernels.grouped_tree_profiles(np.ascontiguousarray(C[:, 0]), np.ascontiguousarray(C[:, 1]),
                                       offsets, np.ascontiguousarray(r), roots, root_mass, omegas,
                                       heights, self.depth, self.eps, child_w, self.gam, _KAPPA,
                                       lo, hi, est)
        hi = np.minimum(hi, 1.0)
        if self.eps == 0:
            est = 0.5 * (lo + hi)
        return np.maximum(est, np.minimum(lo + 1e-300, hi)), hi - lo


def _polyline_balls(mun: AveragedMeasure, C, offsets, r):
    out = np.zeros(len(r))
    _kernels.grouped_polyline_profiles(np.ascontiguousarray(C[:, 0]), np.ascontiguousarray(C[:, 1]),
                                       offsets, np.ascontiguousarray(r), *mun._segments(), out)
    return out


def _sub_offsets(offsets, mask):
    cs = np.zeros(len(mask) + 1, dtype=np.int64)
    np.cumsum(mask, out=cs[1:])
    return cs[offsets]


class _Kernel:
    """``k(xi, r) = 1 / (rho(xi, r) * nu(B(xi, r)))`` for pairs grouped by centre.

    ``nu`` is ``mu`` for the fractal form and ``mu_n`` for the polygonal one.
    Returns the kernel, a long-range flag and a relative uncertainty coming
    from bracketed fractal ball measures.
    """

    def __init__(self, spec: FormSpec, mu: BoundaryMeasure | None, mun: AveragedMeasure | None,
                 depth: int):
        self.spec, self.mu, self.mun = spec, mu, mun
        self.d = _dimension(spec, mu) if spec.sigma_mode == "d_regular" else None
        self.balls = _FractalBalls(mu, depth, spec.ball_eps) if mu is not None else None

    def _sigma(self, C, offsets, r):
        """Symbol values, the fractal ball midpoints (or None) and their relative widths."""
        a = self.spec.alpha
        if self.spec.sigma_mode == "d_regular":
            return r ** (2 * (a - (2 - self.d) / 2)), None, np.zeros(len(r))
        mid, width = self.balls(C, offsets, r)
        return r ** (2 * a - 2) * mid, mid, width / mid

    def __call__(self, C, offsets, r):
        a = self.spec.alpha
        if self.mun is None:
            sig, mid, rel = self._sigma(C, offsets, r)
            if mid is None:
                mid, width = self.balls(C, offsets, r)
                return 1.0 / (sig * mid), np.ones(len(r), bool), 0.5 * width / mid
            return 1.0 / (sig * mid), np.ones(len(r), bool), rel
        mn = _polyline_balls(self.mun, C, offsets, r)
        long = r > self.spec.cutoff
        rho = r ** (2 * a - 1)
        rel = np.zeros(len(r))
        if long.any():
            keep = np.flatnonzero(long)
            sig, _, srel = self._sigma(C, _sub_offsets(offsets, long), r[keep])
            rho[keep] = sig
            rel[keep] = 0.5 * srel
        return 1.0 / (rho * mn), long, rel


def _grouped(ci, pi, n_centres):
    order, offsets = csr_by_centre(ci, n_centres)
    return ci[order], pi[order], order, offsets


# --------------------------------------------------------------------------
# fractal form


def _fractal_sum(spec: FormSpec, mu: BoundaryMeasure, phi: BoundaryFunction, depth: int,
                 eta: float):
    pts = mu.arc_points(depth)
    W = mu.arc_masses(depth)
    tree = build_tree(pts, W)
    far, (na, nb) = pair_lists(tree, eta)
    keep = na != nb
    blocks = [(k, ia, ib) for k, (ia, ib) in enumerate(far) if len(ia)]
    blocks.append((tree.depth, na[keep], nb[keep]))
    # one global centre numbering across levels
    starts = np.cumsum([0] + [len(m) for m in tree.mass])
    C_all = np.vstack(tree.centroid)
    W_all = np.concatenate(tree.mass)
    U_all = phi(C_all)
    ci = np.concatenate([starts[k] + ia for k, ia, _ in blocks])
    pi = np.concatenate([starts[k] + ib for k, _, ib in blocks])
    ci, pi, _, offsets = _grouped(ci, pi, len(C_all))
    r = np.linalg.norm(C_all[ci] - C_all[pi], axis=1)
    kern = _Kernel(spec, mu, None, _ball_depth(spec, mu, depth))
    K, _, rel = kern(C_all, offsets, r)
    contrib = W_all[ci] * W_all[pi] * (U_all[ci] - U_all[pi]) ** 2 * K
    return float(np.sum(contrib)), float(np.sum(contrib * rel)), len(ci)


def eval_Q_fractal(spec: FormSpec, mu: BoundaryMeasure, phi: BoundaryFunction, depth: int,
                   error_estimate: bool = True) -> EnergyValue:
    """Double sum over depth-``depth`` arc midpoints with weights ``mu(a_i) mu(a_j)``.

    Diagonal terms are omitted. With ``spec.eta > 0`` well separated groups
    of arcs are lumped at their mass centroids (second-order accurate).
    The error estimate is the change from ``depth - 1``; the worst case
    effect of the ball-measure brackets is kept as ``meta["bracket_bound"]``
    (it is also the estimate when ``error_estimate`` is off).
    """
    _check_alpha(spec, _dimension(spec, mu), prefractal=False)
    eta = spec.eta if spec.eta is not None else (0.0 if depth <= DIRECT_DEPTH_LIMIT else FAR_ETA)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    value, werr, npairs = _fractal_sum(spec, mu, phi, depth, eta)
    err = werr
    if error_estimate and depth > 1:
        coarse, _, _ = _fractal_sum(spec, mu, phi, depth - 1, eta)
        err = abs(value - coarse)
    return EnergyValue(value, 0.0, value, err,
                       {"alpha": spec.alpha, "mode": spec.sigma_mode, "level": None, "depth": depth,
                        "eta": eta, "pairs": npairs, "bracket_bound": werr})


# --------------------------------------------------------------------------
# polygonal form


def _segment_gap(a0, a1, b0, b1):
    d = np.minimum.reduce([point_segment_distance(a0, b0, b1), point_segment_distance(a1, b0, b1),
                           point_segment_distance(b0, a0, a1), point_segment_distance(b1, a0, a1)])
    return d


class PrefractalQuadrature:
    """Pair quadrature for ``Q_n`` shared by the form evaluator and the matrix assembly.

    Leaves are the polygon edges. Near edge pairs use tensor Gauss rules
    (``q`` points per edge, or ``q * subdiv`` points when the edges are
    closer than ``near_factor`` times the longer length); separated clusters
    are lumped at their ``mu_n`` centroids.
    """

    def __init__(self, spec: FormSpec, mun: AveragedMeasure, mu: BoundaryMeasure | None = None,
                 eta: float | None = None):
        self.spec, self.mun = spec, mun
        self.mu = mu if mu is not None else getattr(mun, "parent", None)
        if spec.sigma_mode == "measure_scaled" and self.mu is None:
            raise ValueError("measure_scaled symbols need the boundary measure")
        d = _dimension(spec, self.mu) if (spec.d is not None or self.mu is not None) else 1.0
        _check_alpha(spec, d, prefractal=True)
        poly = mun.edges
        E = poly.n_edges
        if eta is None:
            eta = spec.eta
        if eta is None:
            eta = 0.0 if E <= DIRECT_EDGE_LIMIT else FAR_ETA
        self.eta = eta
        self.nodes: EdgeNodes = edge_nodes(poly.starts, poly.ends, mun.densities, spec.quad_order,
                                           spec.subdiv)
        mids = 0.5 * (poly.starts + poly.ends)
        ext = np.stack([poly.starts, poly.ends], axis=1)
        self.tree = build_tree(mids, mun.arc_mass, ext)
        self.far, (ea, eb) = pair_lists(self.tree, eta, threshold=spec.cutoff)
        L = poly.edge_lengths
        gap = _segment_gap(poly.starts[ea], poly.ends[ea], poly.starts[eb], poly.ends[eb])
        self.close = gap <= spec.near_factor * np.maximum(L[ea], L[eb])
        order = np.argsort(ea, kind="stable")
        self.ea, self.eb, self.close = ea[order], eb[order], self.close[order]
        level = mun.level if spec.level is None else spec.level
        depth = _ball_depth(spec, self.mu, level) if self.mu is not None else 0
        self.kernel = _Kernel(spec, self.mu, mun, depth)
        self.diag_cut = spec.diag_cut_rel * L if spec.alpha > 1 else None

    def near_blocks(self, max_pairs: int = 2_000_000):
        """Yield ``(ci, pi, s, long, rel)`` for node pairs, ``s = w_i w_j k(x_i, |x_i - x_j|)``."""
        q, qm = self.spec.quad_order, self.spec.quad_order * self.spec.subdiv
        cost = np.where(self.close, qm * qm, q * q)
        if not len(cost):
            return
        # blocks end at centre-edge boundaries so every centre sees all its partners
        ends = np.r_[np.flatnonzero(np.diff(self.ea)) + 1, len(self.ea)]
        cum = np.r_[0, np.cumsum(cost)]
        lo = 0
        for j, hi in enumerate(ends):
            if cum[hi] - cum[lo] >= max_pairs or j == len(ends) - 1:
                yield self._block(self.ea[lo:hi], self.eb[lo:hi], self.close[lo:hi])
                lo = hi

    def _block(self, ea, eb, close):
        nodes = self.nodes
        q = self.spec.quad_order
        parts_c, parts_p = [], []
        for mask, pick in ((~close, nodes.coarse), (close, nodes.fine)):
            if not mask.any():
                continue
            A = pick(ea[mask])
            B = pick(eb[mask])
            k = A.shape[1]
            c = np.repeat(A, k, axis=1)
            p = np.tile(B, (1, k))
            if pick == nodes.fine:
                # same-edge diagonal cells go to the collapsed rule below
                cell = np.arange(k) // q
                diag = (ea[mask] == eb[mask])[:, None] & \
                    (np.repeat(cell, k) == np.tile(cell, k))[None, :]
                c, p = c[~diag], p[~diag]
                same = ea[mask][ea[mask] == eb[mask]]
                if len(same):
                    S, T = nodes.diagonal(same)
                    c = np.concatenate([c.ravel(), S.ravel(), T.ravel()])
                    p = np.concatenate([p.ravel(), T.ravel(), S.ravel()])
            parts_c.append(c.ravel())
            parts_p.append(p.ravel())
        ci = np.concatenate(parts_c)
        pi = np.concatenate(parts_p)
        r = np.linalg.norm(nodes.pos[ci] - nodes.pos[pi], axis=1)
        if self.diag_cut is not None:
            ok = r >= self.diag_cut[nodes.edge[ci]]
        else:
            ok = r > 0
        ci, pi, r = ci[ok], pi[ok], r[ok]
        uc, inv = np.unique(ci, return_inverse=True)
        order, offsets = csr_by_centre(inv, len(uc))
        ci, pi, r = ci[order], pi[order], r[order]
        K, long, rel = self.kernel(nodes.pos[uc], offsets, r)
        s = nodes.weight[ci] * nodes.weight[pi] * K
        return ci, pi, s, long, rel

    def far_blocks(self):
        """Yield ``(level, ci, pi, s, long, rel)`` for separated cluster pairs."""
        for k, (ia, ib) in enumerate(self.far):
            if not len(ia):
                continue
            C = self.tree.centroid[k]
            W = self.tree.mass[k]
            ia, ib, _, offsets = _grouped(ia, ib, len(C))
            r = np.linalg.norm(C[ia] - C[ib], axis=1)
            K, long, rel = self.kernel(C, offsets, r)
            yield k, ia, ib, W[ia] * W[ib] * K, long, rel

    def energy(self, phi: BoundaryFunction) -> EnergyValue:
        u = phi(self.nodes.pos)
        short = long_ = err = 0.0
        for ci, pi, s, lg, rel in self.near_blocks():
            c = s * (u[ci] - u[pi]) ** 2
            short += float(np.sum(c[~lg]))
            long_ += float(np.sum(c[lg]))
            err += float(np.sum(c * rel))
        for k, ia, ib, s, lg, rel in self.far_blocks():
            uk = phi(self.tree.centroid[k])
            c = s * (uk[ia] - uk[ib]) ** 2
            short += float(np.sum(c[~lg]))
            long_ += float(np.sum(c[lg]))
            err += float(np.sum(c * rel))
        if self.diag_cut is not None and phi.lipschitz_bound is not None:
            # band |xi - eta| < cut on each edge, integrand <= Lip^2 r^(2 - 2 alpha) / density
            a = self.spec.alpha
            dens = self.mun.densities
            cut = self.diag_cut
            L = self.mun.edges.edge_lengths
            err += float(np.sum(phi.lipschitz_bound ** 2 * dens * L * 2 * cut ** (3 - 2 * a)
                                / (3 - 2 * a)))
        return EnergyValue(short + long_, short, long_, err,
                           {"alpha": self.spec.alpha, "mode": self.spec.sigma_mode,
                            "level": self.mun.level, "eta": self.eta,
                            "cutoff": self.spec.cutoff})


def eval_Q_prefractal(spec: FormSpec, mun: AveragedMeasure, phi: BoundaryFunction,
                      mu: BoundaryMeasure | None = None, eta: float | None = None) -> EnergyValue:
    """``Q_n(phi)`` with its short-range (``r <= A r_n``) and long-range parts."""
    return PrefractalQuadrature(spec, mun, mu, eta).energy(phi)


def eval_split_decay(specs, muns, phi: BoundaryFunction, mu: BoundaryMeasure | None = None):
    """Rows ``(n, short_part, long_part)`` for a sequence of levels."""
    rows = []
    for spec, mun in zip(specs, muns):
        ev = eval_Q_prefractal(spec, mun, phi, mu)
        rows.append((mun.level, ev.short_part, ev.long_part))
    return rows


def besov_norm(spec: FormSpec, mu: BoundaryMeasure, phi: BoundaryFunction, depth: int) -> float:
    """``(||phi||^2_{L^2(mu)} + Q(phi))^(1/2)`` with both terms at depth ``depth``."""
    l2 = float(np.sum(mu.arc_masses(depth) * phi(mu.arc_points(depth)) ** 2))
    return math.sqrt(l2 + eval_Q_fractal(spec, mu, phi, depth, error_estimate=False).value)


# --------------------------------------------------------------------------
# extension


def lipschitz_extension(points, values, L: float, check: bool = True) -> BoundaryFunction:
    """Inf-convolution extension ``x -> min_p (phi(p) + L |x - p|)``."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(values, dtype=float).ravel()
    if len(P) != len(v):
        raise ValueError("points and values differ in length")
    if L < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    if check:
        for s in range(0, len(P), 512):
            d = np.linalg.norm(P[s:s + 512, None, :] - P[None, :, :], axis=2)
            if np.any(np.abs(v[s:s + 512, None] - v[None, :]) > L * d * (1 + 1e-9) + 1e-14):
                raise ValueError("data violate the Lipschitz premise")

    px, py = np.ascontiguousarray(P[:, 0]), np.ascontiguousarray(P[:, 1])

    def ext(x):
        out = np.empty(len(x))
        _kernels.mcshane(px, py, v, float(L), np.ascontiguousarray(x[:, 0]),
                         np.ascontiguousarray(x[:, 1]), out)
        return out

    return BoundaryFunction(ext, L, "extension")


# --------------------------------------------------------------------------
# generator


@functools.lru_cache(maxsize=None)
def _gauss01(q: int):
    g, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (g + 1), 0.5 * w


def _graded(a, b, q: int, toward_a: bool, levels: int, panels: int = 1):
    """Gauss nodes on intervals ``[a, b]`` (arrays) with geometric grading toward one end.

    Cells longer than ``1 / panels`` of the interval are split evenly.
    Returns node positions and weights, one row per interval.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    g, w = _gauss01(q)
    br = np.concatenate([[0.0], 2.0 ** -np.arange(levels, -1, -1)])
    if not toward_a:
        br = 1 - br[::-1]
    if panels > 1:
        br = np.unique(np.concatenate([br, np.linspace(0.0, 1.0, panels + 1)]))
    lo, hi = br[:-1], br[1:]
    s = (lo[:, None] + (hi - lo)[:, None] * g[None, :]).ravel()
    ws = ((hi - lo)[:, None] * w[None, :]).ravel()
    return a[:, None] + (b - a)[:, None] * s[None, :], (b - a)[:, None] * ws[None, :]


def _grading_levels(scale: float, near: float, cap: int = 40) -> int:
    if near <= 0:
        return cap
    return int(min(cap, max(2, math.ceil(math.log2(max(scale / near, 1.0))) + 3)))


# levels of the symmetric grading around the principal-value point; the
# symmetrised integrand is bounded there, so this only resolves the kinks
PV_LEVELS = 16


def _generator_nodes(poly: PolygonalLevel, dens, xi, e0: int, t0: float, q: int,
                     panels: int = 32):
    """Nodes, weights (times density) and distances for the principal-value integral around ``xi``."""
    a, b = poly.starts, poly.ends
    L = poly.edge_lengths
    U = (b - a) / L[:, None]
    u = U[e0]
    left, right = t0 * L[e0], (1 - t0) * L[e0]
    s0 = min(left, right)
    pts, wts, rs = [], [], []
    if s0 > 0:
        lev = int(np.clip(math.floor(math.log2(s0 / (1e-9 * L[e0]))), 0, PV_LEVELS))
        s, w = _graded(0.0, s0, q, True, lev, panels)
        s, w = s[0], w[0] * dens[e0]
        pts += [xi + s[:, None] * u, xi - s[:, None] * u]
        wts += [w, w]
        rs += [s, s]
    far_side = max(left, right)
    if far_side > s0:
        s, w = _graded(s0, far_side, q, True, _grading_levels(far_side, s0), panels)
        s, w = s[0], w[0] * dens[e0]
        pts.append(xi + (1.0 if right > left else -1.0) * s[:, None] * u)
        wts.append(w)
        rs.append(s)
    # other edges, graded toward their closest point to xi
    others = np.flatnonzero(np.arange(poly.n_edges) != e0)
    tt = np.clip(np.einsum("ij,ij->i", xi - a[others], U[others]), 0.0, L[others])
    dist = np.linalg.norm(a[others] + tt[:, None] * U[others] - xi, axis=1)
    levs = np.array([_grading_levels(L[e], d) for e, d in zip(others, dist)])
    for lev in np.unique(levs):
        sel = levs == lev
        e = others[sel]
        for lo_, hi_, toward in ((np.zeros(len(e)), tt[sel], False), (tt[sel], L[e], True)):
            s, w = _graded(lo_, hi_, q, toward, int(lev), panels)
            P = a[e][:, None, :] + s[:, :, None] * U[e][:, None, :]
            pts.append(P.reshape(-1, 2))
            wts.append((w * dens[e][:, None]).ravel())
            rs.append(np.linalg.norm(P.reshape(-1, 2) - xi, axis=1))
    P, W, r = np.vstack(pts), np.concatenate(wts), np.concatenate(rs)
    ok = (r > 0) & (W > 0)
    return P[ok], W[ok], r[ok]


def apply_generator(spec: FormSpec, measure, phi: BoundaryFunction, at, edge: int | None = None,
                    mu: BoundaryMeasure | None = None, depth: int | None = None) -> float:
    """Pointwise generator ``L phi(at)`` as a principal-value integral.

    For an :class:`AveragedMeasure` the kernel is ``k(xi, eta) + k(eta, xi)``
    with the scale split at ``A r_n``; ``edge`` names the edge holding ``at``
    (found by proximity when omitted). For a :class:`BoundaryMeasure` (only
    ``alpha = 1`` with measure-scaled symbol) the integral runs over
    depth-``depth`` arcs, omitting the arc nearest to ``at``.
    """
    at = np.asarray(at, dtype=float)
    q = spec.quad_order
    if isinstance(measure, BoundaryMeasure):
        mu = measure
        if spec.alpha != 1 or spec.sigma_mode != "measure_scaled":
            raise ValueError("fractal generator implemented for alpha = 1, measure_scaled")
        depth = (spec.level or 0) + 6 if depth is None else depth
        pts = mu.arc_points(depth)
        W = mu.arc_masses(depth)
        i0 = int(np.argmin(np.linalg.norm(pts - at, axis=1)))
        keep = np.arange(len(pts)) != i0
        pts, W = pts[keep], W[keep]
        r = np.linalg.norm(pts - at, axis=1)
        bd = _ball_depth(spec, mu, depth)
        lo, hi = mu.ball_profile(at, r, bd, eps=spec.ball_eps)
        mx = 0.5 * (lo + hi)
        my, _ = _FractalBalls(mu, bd, spec.ball_eps)(pts, np.arange(len(pts) + 1), r)
        j = mx ** -2 + my ** -2
        return float(np.sum(W * (phi(pts) - phi(at[None])[0]) * j))
    mun: AveragedMeasure = measure
    mu = mu if mu is not None else getattr(mun, "parent", None)
    poly = mun.edges
    if edge is None:
        edge = int(np.argmin(point_segment_distance(at[None], poly.starts, poly.ends)))
    a, b = poly.starts[edge], poly.ends[edge]
    t0 = float(np.clip(np.dot(at - a, b - a) / np.dot(b - a, b - a), 0.0, 1.0))
    xi = a + t0 * (b - a)
    P, W, r = _generator_nodes(poly, mun.densities, xi, edge, t0, q)
    level = mun.level if spec.level is None else spec.level
    depth = _ball_depth(spec, mu, level) if mu is not None else 0
    kern = _Kernel(spec, mu, mun, depth)
    kx, _, _ = kern(xi[None], np.array([0, len(r)]), r)
    ky, _, _ = kern(P, np.arange(len(r) + 1), r)
    return float(np.sum(W * (phi(P) - phi(xi[None])[0]) * (kx + ky)))


def generator_pairing(spec: FormSpec, mun: AveragedMeasure, phi: BoundaryFunction,
                      mu: BoundaryMeasure | None = None, outer: int | None = None,
                      outer_levels: int = 6) -> float:
    """``<-L phi, phi>`` in ``L^2(mu_n)`` with outer nodes graded toward the vertices."""
    poly = mun.edges
    q = spec.quad_order if outer is None else outer
    half = [_graded(lo_, hi_, q, toward, outer_levels)
            for lo_, hi_, toward in ((0.0, 0.5, True), (0.5, 1.0, False))]
    t = np.concatenate([h[0][0] for h in half])
    w0 = np.concatenate([h[1][0] for h in half])
    total = 0.0
    for e in range(poly.n_edges):
        w = w0 * poly.edge_lengths[e] * mun.densities[e]
        a, b = poly.starts[e], poly.ends[e]
        for tk, wk in zip(t, w):
            x = a + tk * (b - a)
            total -= wk * phi(x[None])[0] * apply_generator(spec, mun, phi, x, edge=e, mu=mu)
    return total


__all__ = ["FormSpec", "BoundaryFunction", "EnergyValue", "CATALOG", "test_function",
           "sigma_alpha", "rho_n", "eval_Q_fractal", "eval_Q_prefractal", "eval_split_decay",
           "besov_norm", "lipschitz_extension", "apply_generator", "generator_pairing",
           "PrefractalQuadrature", "average_function", "gauss_on_edges"]
