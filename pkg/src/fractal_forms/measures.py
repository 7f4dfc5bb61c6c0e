"""Arc-weight measures on snowflake curves and their averaged versions on polygons."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .geometry import (ArcAddress, PolygonalLevel, SnowflakeCurve, _koch_height, build_level)

DEFAULT_DEPTH_OFFSET = 6


@dataclass(frozen=True)
class MeasureInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi + 1e-15 and self.hi <= 1 + 1e-12):
            raise ValueError(f"invalid bracket [{self.lo}, {self.hi}]")

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True, eq=False)
class BoundaryMeasure:
    """Probability measure on a snowflake curve defined by arc weights.

    Each level-0 arc carries ``root_weights[k]``; an arc splits into four
    children whose share of the parent mass is ``split_rule`` (the same rule
    at every level unless a per-level sequence is given).
    """

    curve: SnowflakeCurve
    split_rule: tuple | None = None
    root_weights: tuple = (Fraction(1, 3),) * 3
    resolution_cap: int = 14

    def __post_init__(self):
        if sum(Fraction(w) for w in self.root_weights) != 1:
            raise ValueError("root weights must sum to one")
        for rule in self._rules(1):
            if abs(sum(rule) - 1) > 1e-15:
                raise ValueError("child weights must sum to one")
            if min(rule) <= 0:
                raise ValueError("child weights must be positive")

    def _rules(self, n: int) -> list[tuple]:
        if self.split_rule is None:
            return [(Fraction(1, 4),) * 4] * n
        rule = self.split_rule
        if len(rule) == 4 and not isinstance(rule[0], (tuple, list)):
            return [tuple(rule)] * n
        if len(rule) < n:
            raise ValueError(f"split rule only covers {len(rule)} levels")
        return [tuple(r) for r in rule[:n]]

    @property
    def is_uniform(self) -> bool:
        return self.split_rule is None

    def arc_measure(self, addr: ArcAddress):
        """Exact mass of an arc (``Fraction`` for rational rules)."""
        if not 0 <= addr.root < 3:
            raise ValueError("invalid root")
        m = self.root_weights[addr.root]
        for rule, d in zip(self._rules(addr.level), addr.path):
            m = m * rule[d]
        return m

    def arc_masses(self, level: int) -> np.ndarray:
        """Masses of all level-``level`` arcs in clockwise order (float)."""
        m = np.array([float(w) for w in self.root_weights])
        for rule in self._rules(level):
            m = np.kron(m, np.array([float(w) for w in rule]))
        return m

    # tree description used by the compiled ball queries
    def _tree(self, depth: int):
        if depth > self.resolution_cap:
            raise ValueError(f"depth {depth} exceeds resolution cap {self.resolution_cap}")
        base = np.asarray(self.curve.base, dtype=float)
        roots = np.hstack([base, np.roll(base, -1, axis=0)])
        omegas = np.array([self.curve.omega_at(k) for k in range(1, depth + 1)] + [0.3])
        heights = np.array([_koch_height(w) for w in omegas[:-1]] + [0.0])
        child_w = np.array([[float(w) for w in r] for r in self._rules(depth)] + [[0.25] * 4])
        root_mass = np.array([float(w) for w in self.root_weights])
        return roots, root_mass, omegas, heights, child_w

    def centroid_coefficients(self, depth: int) -> np.ndarray:
        """Complex ``g_k`` (as rows ``(re, im)``) with the mass centroid of a level-``k``
        arc at ``p0 + (p1 - p0) g_k``, for the measure resolved at depth ``depth``.

        Depth-``depth`` arcs are represented by their chord midpoints.
        """
        g = np.zeros(depth + 2, dtype=complex)
        g[depth:] = 0.5
        rules = self._rules(depth)
        for k in range(depth - 1, -1, -1):
            w = self.curve.omega_at(k + 1)
            z = np.array([0, w, 0.5 + 1j * _koch_height(w), 1 - w, 1])
            cw = np.array([float(c) for c in rules[k]])
            g[k] = np.sum(cw * (z[:-1] + (z[1:] - z[:-1]) * g[k + 1]))
        return np.stack([g.real, g.imag], axis=1)

    def ball(self, x, r: float, depth: int) -> MeasureInterval:
        lo, hi = self.ball_profile(x, np.array([r]), depth, eps=0.0)
        return MeasureInterval(float(lo[0]), float(min(hi[0], 1.0)))

    def ball_profile(self, x, radii, depth: int, eps: float = 0.0):
        """Brackets ``(lo, hi)`` of ``mu(B(x, r))`` for many radii about one centre.

        With ``eps = 0`` each bracket equals the one obtained from all
        depth-``depth`` arcs. A positive ``eps`` stops refining arcs whose
        radius is below ``eps`` times their distance to ``x``; the brackets
        stay certified but widen.
        """
        radii = np.asarray(radii, dtype=float)
        order = np.argsort(radii, kind="stable")
        rs = np.ascontiguousarray(radii[order])
        roots, root_mass, omegas, heights, child_w = self._tree(depth)
        lo = np.empty_like(rs)
        hi = np.empty_like(rs)
        _kernels.tree_ball_bracket(float(x[0]), float(x[1]), rs, roots, root_mass, omegas,
                                   heights, depth, float(eps), child_w, lo, hi)
        out_lo = np.empty_like(lo)
        out_hi = np.empty_like(hi)
        out_lo[order] = lo
        out_hi[order] = np.minimum(hi, 1.0)
        return out_lo, out_hi

    def ball_many(self, xs, rs, depth: int):
        """Depth-``depth`` brackets for independent (centre, radius) queries."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        rs = np.broadcast_to(np.asarray(rs, dtype=float), (len(xs),)).copy()
        roots, root_mass, omegas, heights, child_w = self._tree(depth)
        lo = np.empty(len(xs))
        hi = np.empty(len(xs))
        _kernels.ball_brackets_many(np.ascontiguousarray(xs[:, 0]), np.ascontiguousarray(xs[:, 1]),
                                    rs, roots, root_mass, omegas, heights, depth, 0.0, child_w,
                                    lo, hi)
        return lo, np.minimum(hi, 1.0)

    def arc_points(self, depth: int) -> np.ndarray:
        """Points of the curve at the middle of every depth-``depth`` arc."""
        return build_level(self.curve, depth + 1).vertices[2::4]

    def dimension(self) -> float:
        return self.curve_dimension(self.curve)

    @staticmethod
    def curve_dimension(curve: SnowflakeCurve, n: int = 24) -> float:
        logs = [-math.log(curve.omega_at(k)) for k in range(1, n + 1)] if curve.omega else \
            [-math.log(curve.p)]
        return math.log(4.0) / float(np.mean(logs))


def arc_measure(mu: BoundaryMeasure, addr: ArcAddress):
    return mu.arc_measure(addr)


def mu_ball(mu: BoundaryMeasure, x, r: float, depth: int) -> MeasureInterval:
    """Certified bracket for ``mu(B(x, r))`` resolved with depth-``depth`` arcs."""
    return mu.ball(x, r, depth)


# --------------------------------------------------------------------------
# averaged measures on polygons


@dataclass(frozen=True, eq=False)
class AveragedMeasure:
    """Measure on a polygon with constant density on every edge."""

    level: int
    densities: np.ndarray
    edges: PolygonalLevel
    arc_mass: np.ndarray = field(default=None)
    parent: BoundaryMeasure | None = None

    def __post_init__(self):
        if np.any(self.densities <= 0):
            raise ValueError("densities must be positive")
        if self.arc_mass is None:
            object.__setattr__(self, "arc_mass", self.densities * self.edges.edge_lengths)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.densities * self.edges.edge_lengths))

    def _segments(self):
        a, b = self.edges.starts, self.edges.ends
        return (np.ascontiguousarray(a[:, 0]), np.ascontiguousarray(a[:, 1]),
                np.ascontiguousarray(b[:, 0]), np.ascontiguousarray(b[:, 1]),
                np.ascontiguousarray(self.densities, dtype=float))

    def ball(self, xi, r: float) -> float:
        return float(self.ball_profile(xi, np.array([r]))[0])

    def ball_profile(self, xi, radii) -> np.ndarray:
        radii = np.asarray(radii, dtype=float)
        order = np.argsort(radii, kind="stable")
        rs = np.ascontiguousarray(radii[order])
        out = np.empty_like(rs)
        _kernels.polyline_ball_profile(float(xi[0]), float(xi[1]), rs, *self._segments(), out)
        res = np.empty_like(out)
        res[order] = out
        return res

    def ball_many(self, xs, rs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        rs = np.broadcast_to(np.asarray(rs, dtype=float), (len(xs),)).copy()
        return _kernels.polyline_ball_many(np.ascontiguousarray(xs[:, 0]),
                                           np.ascontiguousarray(xs[:, 1]), rs, *self._segments())

    def to_json(self) -> dict:
        return {"schema": 1, "level": self.level, "densities": self.densities.tolist()}


def build_averaged(mu: BoundaryMeasure, lvl: PolygonalLevel) -> AveragedMeasure:
    """Densities ``mu(a_j) / H^1(e_j)`` on the edges of ``lvl``."""
    if lvl.curve is None:
        raise ValueError("polygon carries no arc hierarchy")
    lengths = lvl.edge_lengths
    if np.any(lengths <= 0):
        raise ValueError("zero-length edge")
    masses = mu.arc_masses(lvl.level)
    return AveragedMeasure(lvl.level, masses / lengths, lvl, masses, mu)


def uniform_measure(poly: PolygonalLevel) -> AveragedMeasure:
    """Normalized length measure on an arbitrary closed polygon."""
    lengths = poly.edge_lengths
    dens = np.full(len(lengths), 1.0 / lengths.sum())
    return AveragedMeasure(poly.level, dens, poly)


def mun_ball(mun: AveragedMeasure, xi, r: float) -> float:
    """Exact ``mu_n(B(xi, r))`` from segment-circle intersections."""
    if r <= 0:
        raise ValueError("radius must be positive")
    return mun.ball(xi, r)


# --------------------------------------------------------------------------
# quadrature along edges


def gauss_on_edges(poly: PolygonalLevel, order: int, subdiv: int = 1):
    """Gauss-Legendre nodes on every edge.

    Returns ``(points, weights, edge_index, t)`` where ``weights`` are length
    weights (summing to the edge length per edge) and ``t`` is the local
    parameter in ``[0, 1]``.
    """
    g, w = np.polynomial.legendre.leggauss(order)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    sub = (np.arange(subdiv)[:, None] + g[None, :]).ravel() / subdiv
    sw = np.tile(w, subdiv) / subdiv
    a, b = poly.starts, poly.ends
    L = poly.edge_lengths
    pts = a[:, None, :] + sub[None, :, None] * (b - a)[:, None, :]
    wts = L[:, None] * sw[None, :]
    eidx = np.repeat(np.arange(poly.n_edges), len(sub))
    t = np.tile(sub, poly.n_edges)
    return pts.reshape(-1, 2), wts.ravel(), eidx, t


def average_function(mun: AveragedMeasure, phi: Callable, quad_order: int = 8) -> np.ndarray:
    """Edge means ``[phi]_n`` (one value per arc)."""
    pts, w, eidx, _ = gauss_on_edges(mun.edges, quad_order)
    vals = np.asarray(phi(pts), dtype=float)
    sums = np.bincount(eidx, weights=w * vals, minlength=mun.edges.n_edges)
    return sums / mun.edges.edge_lengths


def integrate_prefractal(mun: AveragedMeasure, phi: Callable, quad_order: int = 8) -> float:
    """``int phi d mu_n`` by Gauss quadrature on each edge."""
    pts, w, eidx, _ = gauss_on_edges(mun.edges, quad_order)
    vals = np.asarray(phi(pts), dtype=float)
    return float(np.sum(w * mun.densities[eidx] * vals))


def integrate_fractal(mu: BoundaryMeasure, u: Callable, depth: int) -> float:
    """``int u d mu`` by the arc-midpoint rule on depth-``depth`` arcs."""
    return float(np.sum(mu.arc_masses(depth) * np.asarray(u(mu.arc_points(depth)), dtype=float)))


def weak_convergence_gap(mu: BoundaryMeasure, mun: AveragedMeasure, u: Callable,
                         depth: int | None = None) -> float:
    """``|int u d mu_n - int u d mu|`` with the fractal side at level ``depth >= n + 4``."""
    depth = mun.level + 4 if depth is None else depth
    if depth < mun.level + 4:
        raise ValueError("reference depth must be at least n + 4")
    return abs(integrate_prefractal(mun, u) - integrate_fractal(mu, u, depth))


def adjacent_arc_comparability(mu: BoundaryMeasure, n: int) -> float:
    """Largest mass ratio of two adjacent level-``n`` arcs."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = mu.arc_masses(n)
    nxt = np.roll(m, -1)
    return float(max(np.max(nxt / m), np.max(m / nxt)))


# --------------------------------------------------------------------------
# scaling diagnostics


@dataclass
class ScalingReport:
    d_hat: float
    s_hat: float
    c_mu_hat: float
    worst_case: tuple
    c_doubling: float = float("nan")
    dim_pooled: float = float("nan")
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"schema": 1, "d_hat": self.d_hat, "s_hat": self.s_hat, "c_mu_hat": self.c_mu_hat,
                "worst_case": list(self.worst_case), "c_doubling": self.c_doubling,
                "dim_pooled": self.dim_pooled, **self.extra}


def _fit_slopes(logr: np.ndarray, logm: np.ndarray):
    """Per-row least-squares slopes and the pooled slope with per-row intercepts."""
    xc = logr - logr.mean(axis=1, keepdims=True)
    yc = logm - logm.mean(axis=1, keepdims=True)
    slopes = (xc * yc).sum(1) / (xc * xc).sum(1)
    pooled = float((xc * yc).sum() / (xc * xc).sum())
    return slopes, pooled


def verify_scaling(measure, n_points: int = 24, radii=None, ks=(2.0, 4.0, 8.0),
                   depth: int = 10, seed: int = 0, C: float = 2.0, constants=None) -> ScalingReport:
    """Empirical scaling exponents and constants.

    For a :class:`BoundaryMeasure` the probe points are curve points and the
    radii span three decades; ``d_hat``/``s_hat`` are the extreme per-point
    log-log slopes. For an :class:`AveragedMeasure` the probe checks linear
    growth ``mu_n(B(xi, r)) ~ r`` below ``C M r_n`` and reports the band of
    ``mu_n(B(xi, r)) / r`` and the worst doubling ratio.
    """
    rng = np.random.default_rng(seed)
    if isinstance(measure, BoundaryMeasure):
        mu = measure
        diam = float(np.ptp(np.asarray(mu.curve.base), axis=0).max()) * 2 / math.sqrt(3)
        radii = np.geomspace(3e-4, 0.3, 16) if radii is None else np.asarray(radii)
        pts_all = mu.arc_points(6)
        pts = pts_all[rng.choice(len(pts_all), size=n_points, replace=False)]
        ks = np.asarray(ks, dtype=float)
        all_r = np.unique(np.concatenate([radii, np.outer(ks, radii).ravel()]))
        all_r = all_r[all_r <= diam]
        vals = np.empty((len(pts), len(all_r)))
        for i, x in enumerate(pts):
            lo, hi = mu.ball_profile(x, all_r, depth)
            vals[i] = 0.5 * (lo + hi)
        base = np.isin(all_r, radii)
        slopes, pooled = _fit_slopes(np.log(all_r[base])[None, :].repeat(len(pts), 0),
                                     np.log(vals[:, base]))
        d_hat, s_hat = float(slopes.min()), float(slopes.max())
        c_best, worst = 1.0, (None, None, None)
        index = {r: j for j, r in enumerate(all_r)}
        for i in range(len(pts)):
            for r in radii:
                for k in ks:
                    if k * r > diam or k * r not in index:
                        continue
                    a, b = vals[i, index[r]], vals[i, index[k * r]]
                    c = max(k**d_hat * a / b, b / (k**s_hat * a))
                    if c > c_best:
                        c_best, worst = c, (pts[i].tolist(), float(r), float(k))
        dbl = [vals[i, index[2 * r]] / vals[i, index[r]] for i in range(len(pts)) for r in radii
               if 2 * r in index]
        return ScalingReport(d_hat, s_hat, float(c_best), worst, float(max(dbl)), pooled,
                             {"kind": "fractal", "n_points": len(pts), "depth": depth,
                              "radii": [float(r) for r in radii]})

    mun = measure
    from .geometry import scale_radius
    if constants is None:
        raise ValueError("constants are needed to scale the probe radii")
    rn = scale_radius(constants, mun.edges.curve, mun.level)
    rmax = C * constants.M * rn
    n_samples = n_points
    e = rng.choice(mun.edges.n_edges, size=n_samples, p=mun.arc_mass / mun.arc_mass.sum())
    t = rng.random(n_samples)
    xi = mun.edges.starts[e] + t[:, None] * (mun.edges.ends[e] - mun.edges.starts[e])
    r = rmax * rng.random(n_samples) ** 1.0
    r = np.maximum(r, 1e-6 * rmax)
    m1 = mun.ball_many(xi, r)
    m2 = mun.ball_many(xi, r / 2)
    local = m1 / (r * mun.arc_mass[e] / rn)
    ratio = local.max() / local.min()
    dbl = np.max(m1 / m2)
    j = int(np.argmax(local))
    return ScalingReport(1.0, 1.0, float(ratio), (xi[j].tolist(), float(r[j]), 1.0), float(dbl),
                         float("nan"),
                         {"kind": "prefractal", "level": mun.level, "band_lo": float(local.min()),
                          "band_hi": float(local.max()), "band_ratio": float(ratio),
                          "r_max": float(rmax), "n_samples": n_samples})
