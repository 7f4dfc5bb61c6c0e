"""Snowflake-like curves, their pre-fractal polygons and polygon utilities.

Curves are traversed clockwise. Every edge of a level is replaced by a Koch
type segment whose peak sits on the left of the edge direction, i.e. on the
outside of the enclosed domain.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

MAX_EDGES = 3 * 4**11


class Point2(NamedTuple):
    x: float
    y: float


def _koch_height(p: float) -> float:
    if not 0.25 <= p < 0.5:
        raise ValueError(f"Koch parameter p={p} outside [1/4, 1/2)")
    return math.sqrt(max(p * p - (0.5 - p) ** 2, 0.0))


@dataclass(frozen=True)
class SnowflakeCurve:
    """Homogeneous snowflake-like curve.

    Parameters
    ----------
    p, q : float
        The two admissible scale factors, ``1/4 <= q <= p < 1/2``.
    omega : sequence of float, optional
        Scale choice per refinement step, each entry equal to ``p`` or ``q``.
        When omitted every step uses ``p`` and the sequence is unbounded.
    base : (3, 2) array_like, optional
        Clockwise vertices of the initial equilateral triangle.
    """

    p: float = 1.0 / 3.0
    q: float | None = None
    omega: tuple[float, ...] | None = None
    base: tuple[tuple[float, float], ...] = (
        (0.0, 0.0),
        (0.5, math.sqrt(3.0) / 2.0),
        (1.0, 0.0),
    )

    def __post_init__(self):
        q = self.p if self.q is None else self.q
        object.__setattr__(self, "q", q)
        if not (0.25 <= q <= self.p < 0.5):
            raise ValueError("need 1/4 <= q <= p < 1/2")
        if self.omega is not None:
            omega = tuple(float(w) for w in self.omega)
            for w in omega:
                if not (math.isclose(w, self.p) or math.isclose(w, q)):
                    raise ValueError(f"omega entry {w} is neither p nor q")
            object.__setattr__(self, "omega", omega)
        base = np.asarray(self.base, dtype=float)
        if base.shape != (3, 2):
            raise ValueError("base must hold three 2D vertices")
        sides = np.linalg.norm(base - np.roll(base, -1, axis=0), axis=1)
        if np.ptp(sides) > 1e-12 * sides.max():
            raise ValueError("base triangle is not equilateral")
        if _signed_area(base) >= 0:
            raise ValueError("base triangle must be ordered clockwise")
        object.__setattr__(self, "base", tuple(map(tuple, base.tolist())))

    def omega_at(self, k: int) -> float:
        """Scale factor used in refinement step ``k`` (1-based)."""
        if k < 1:
            raise ValueError("steps are numbered from 1")
        if self.omega is None:
            return self.p
        if k > len(self.omega):
            raise ValueError(f"omega prefix has length {len(self.omega)} < {k}")
        return self.omega[k - 1]

    def omega_product(self, n: int) -> float:
        out = 1.0
        for k in range(1, n + 1):
            out *= self.omega_at(k)
        return out

    @property
    def base_edge(self) -> float:
        b = np.asarray(self.base)
        return float(np.linalg.norm(b[1] - b[0]))

    def to_dict(self) -> dict:
        return {"type": "snowflake", "p": self.p, "q": self.q,
                "omega": list(self.omega) if self.omega is not None else None}


@dataclass(frozen=True)
class ArcAddress:
    level: int
    path: tuple[int, ...]
    root: int

    def __post_init__(self):
        if len(self.path) != self.level:
            raise ValueError("path length must equal level")
        if not 0 <= self.root < 3:
            raise ValueError("root must be 0, 1 or 2")
        if any(d not in (0, 1, 2, 3) for d in self.path):
            raise ValueError("path digits must lie in {0,1,2,3}")

    @property
    def index(self) -> int:
        """Position of the arc in the clockwise edge order of its level."""
        j = self.root
        for d in self.path:
            j = 4 * j + d
        return j

    @classmethod
    def from_index(cls, level: int, j: int) -> ArcAddress:
        if not 0 <= j < 3 * 4**level:
            raise ValueError(f"arc index {j} out of range at level {level}")
        path = []
        for _ in range(level):
            path.append(j % 4)
            j //= 4
        return cls(level, tuple(reversed(path)), j)


@dataclass(frozen=True, eq=False)
class PolygonalLevel:
    """Closed polygon ``Gamma_n`` with vertices listed clockwise.

    Edge ``j`` joins vertex ``j`` to vertex ``j + 1`` (cyclically). For the
    snowflake family edge ``j`` is the chord of the arc with index ``j``.
    """

    level: int
    vertices: np.ndarray
    curve: SnowflakeCurve | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    @property
    def edges(self) -> np.ndarray:
        i = np.arange(self.n_edges)
        return np.stack([i, (i + 1) % self.n_edges], axis=1)

    @property
    def starts(self) -> np.ndarray:
        return self.vertices

    @property
    def ends(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0)

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.ends - self.starts, axis=1)

    @property
    def has_hierarchy(self) -> bool:
        return self.curve is not None

    def arc_address(self, j: int) -> ArcAddress:
        if self.curve is None:
            raise ValueError("polygon carries no arc hierarchy")
        return ArcAddress.from_index(self.level, j)

    @property
    def arc_addresses(self) -> list[ArcAddress]:
        return [self.arc_address(j) for j in range(self.n_edges)]

    def area(self) -> float:
        return abs(_signed_area(self.vertices))

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "level": self.level,
            "vertices": self.vertices.tolist(),
            "edges": self.edges.tolist(),
        }

    def to_svg(self, size: int = 480, stroke: str = "black") -> str:
        v = self.vertices
        lo, hi = v.min(axis=0), v.max(axis=0)
        scale = (size - 20) / max(hi - lo)
        pts = " ".join(f"{10 + (x - lo[0]) * scale:.4f},{size - 10 - (y - lo[1]) * scale:.4f}"
                       for x, y in v)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">'
                f'<polygon points="{pts}" fill="none" stroke="{stroke}" stroke-width="0.5"/>'
                "</svg>\n")


@dataclass(frozen=True)
class GeometryConstants:
    """Empirical geometric constants of a curve (all values are estimates)."""

    S: float
    theta: float
    M: float
    diam: float
    c0: float
    c1: float
    probe_level: int = 0

    def __post_init__(self):
        if self.S < 1 or not (0 < self.theta <= 1) or self.M <= 1 or self.c0 > self.c1:
            raise ValueError(f"inconsistent geometry constants {self}")

    @property
    def default_A(self) -> float:
        return max(128.0 * self.S, self.M)


# --------------------------------------------------------------------------
# construction


def koch_segment(p: float, start: Sequence[float], end: Sequence[float]) -> np.ndarray:
    """Five vertices of the Koch type segment with parameter ``p`` on ``start -> end``."""
    h = _koch_height(p)
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    d = b - a
    if not np.any(d):
        raise ValueError("start and end coincide")
    left = np.array([-d[1], d[0]])
    return np.array([a, a + p * d, a + 0.5 * d + h * left, a + (1 - p) * d, b])


def _refine(vertices: np.ndarray, p: float) -> np.ndarray:
    h = _koch_height(p)
    a = vertices
    d = np.roll(vertices, -1, axis=0) - a
    left = np.stack([-d[:, 1], d[:, 0]], axis=1)
    out = np.empty((4 * len(a), 2))
    out[0::4] = a
    out[1::4] = a + p * d
    out[2::4] = a + 0.5 * d + h * left
    out[3::4] = a + (1 - p) * d
    return out


def build_level(curve: SnowflakeCurve, n: int, cap: int = MAX_EDGES) -> PolygonalLevel:
    """Pre-fractal polygon ``Gamma_n`` of a snowflake curve."""
    if n < 0:
        raise ValueError("level must be nonnegative")
    if 3 * 4**n > cap:
        raise MemoryError(f"level {n} has {3 * 4**n} edges, above the cap {cap}")
    v = np.asarray(curve.base, dtype=float)
    for k in range(1, n + 1):
        v = _refine(v, curve.omega_at(k))
    return PolygonalLevel(n, v, curve)


def refine_arc(curve: SnowflakeCurve, level: int, start, end, extra: int) -> np.ndarray:
    """Vertex chain of one level-``level`` arc resolved ``extra`` levels deeper."""
    pts = np.array([start, end], dtype=float)
    for k in range(level + 1, level + extra + 1):
        p = curve.omega_at(k)
        h = _koch_height(p)
        a, b = pts[:-1], pts[1:]
        d = b - a
        left = np.stack([-d[:, 1], d[:, 0]], axis=1)
        new = np.empty((4 * len(a) + 1, 2))
        new[0:-1:4] = a
        new[1::4] = a + p * d
        new[2::4] = a + 0.5 * d + h * left
        new[3::4] = a + (1 - p) * d
        new[-1] = b[-1]
        pts = new
    return pts


def lattice_vertices(n: int) -> np.ndarray:
    """Integer lattice coordinates of the classical (p=1/3) snowflake at level ``n``.

    A row ``(X, Y)`` stands for the point ``(X, Y*sqrt(3)) / (2*3**n)`` when the
    base triangle is the default unit one. Exact integer arithmetic.
    """
    v = np.array([[0, 0], [1, 1], [2, 0]], dtype=np.int64)
    for _ in range(n):
        d = np.roll(v, -1, axis=0) - v
        dx, dy = d[:, 0], d[:, 1]
        out = np.empty((4 * len(v), 2), dtype=np.int64)
        out[0::4] = 3 * v
        out[1::4] = 3 * v + d
        out[2::4, 0] = 3 * v[:, 0] + (3 * dx - 3 * dy) // 2
        out[2::4, 1] = 3 * v[:, 1] + (3 * dy + dx) // 2
        out[3::4] = 3 * v + 2 * d
        v = out
    return v


def load_curve(spec: dict | str):
    """Read a curve description (dict or JSON path) into a curve or polygon."""
    if isinstance(spec, str):
        with open(spec) as fh:
            spec = json.load(fh)
    kind = spec.get("type")
    if kind == "snowflake":
        omega = spec.get("omega")
        return SnowflakeCurve(p=float(spec["p"]), q=spec.get("q"),
                              omega=tuple(omega) if omega else None)
    if kind == "polyline":
        pts = np.asarray(spec["points"], dtype=float)
        if not spec.get("closed", True):
            raise ValueError("only closed polylines are supported")
        return PolygonalLevel(0, pts)
    raise ValueError(f"unknown curve type {kind!r}")


# --------------------------------------------------------------------------
# polygon predicates


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(vertices) -> float:
    return abs(_signed_area(np.asarray(vertices, dtype=float)))


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def segments_intersect(p1, p2, q1, q2, eps: float = 0.0) -> np.ndarray:
    """Vectorized closed-segment intersection test (touching counts)."""
    p1, p2, q1, q2 = (np.asarray(t, dtype=float) for t in (p1, p2, q1, q2))
    o1 = _orient(p1, p2, q1)
    o2 = _orient(p1, p2, q2)
    o3 = _orient(q1, q2, p1)
    o4 = _orient(q1, q2, p2)
    proper = (o1 * o2 < -eps) & (o3 * o4 < -eps)

    def on_seg(a, b, c, o):
        return (np.abs(o) <= eps) & (np.minimum(a[..., 0], b[..., 0]) <= c[..., 0]) & \
            (c[..., 0] <= np.maximum(a[..., 0], b[..., 0])) & \
            (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1]) & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]))

    touch = on_seg(p1, p2, q1, o1) | on_seg(p1, p2, q2, o2) | on_seg(q1, q2, p1, o3) | on_seg(q1, q2, p2, o4)
    return proper | touch


def is_simple(vertices) -> bool:
    """True when the closed polygon has no self-intersections.

    Candidate edge pairs come from a KD-tree over edge midpoints; every
    candidate pair is then tested exactly.
    """
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    if n < 3:
        return False
    a, b = v, np.roll(v, -1, axis=0)
    lengths = np.linalg.norm(b - a, axis=1)
    if np.any(lengths == 0):
        return False
    mid = 0.5 * (a + b)
    pairs = cKDTree(mid).query_pairs(r=float(lengths.max()) * (1 + 1e-12), output_type="ndarray")
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        adjacent = ((j - i) % n == 1) | ((i - j) % n == 1)
        ii, jj = i[~adjacent], j[~adjacent]
        if np.any(segments_intersect(a[ii], b[ii], a[jj], b[jj])):
            return False
    # adjacent edges may only share their common vertex: reject reversals
    d0 = b - a
    d1 = np.roll(d0, -1, axis=0)
    cross = d0[:, 0] * d1[:, 1] - d0[:, 1] * d1[:, 0]
    dot = np.einsum("ij,ij->i", d0, d1)
    if np.any((np.abs(cross) <= 1e-14 * lengths * np.roll(lengths, -1)) & (dot < 0)):
        return False
    return True


def is_simple_bruteforce(vertices) -> bool:
    """Quadratic reference check used by tests."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    a, b = v, np.roll(v, -1, axis=0)
    i, j = np.triu_indices(n, 1)
    keep = ((j - i) % n != 1) & ((i - j) % n != 1)
    return not np.any(segments_intersect(a[i[keep]], b[i[keep]], a[j[keep]], b[j[keep]]))


# --------------------------------------------------------------------------
# constants


def _chain_diameter(points: np.ndarray) -> float:
    if len(points) < 4:
        return float(max(np.linalg.norm(points[:, None] - points[None], axis=-1).max(), 0.0))
    try:
        hull = points[ConvexHull(points).vertices]
    except Exception:  # collinear points
        hull = points
    d = hull[:, None, :] - hull[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _bounded_turning(v: np.ndarray) -> float:
    """max over vertex pairs of (smaller arc diameter) / distance."""
    n = len(v)
    best = 1.0
    dist = np.sqrt(((v[:, None, :] - v[None, :, :]) ** 2).sum(-1))
    k = np.arange(1, n)
    for i in range(n):
        order = np.roll(np.arange(n), -i)
        d = dist[np.ix_(order, order)]
        upper = np.triu(d, 1)
        fwd = np.maximum.accumulate(upper.max(axis=0))          # diam of chain 0..k
        tail = np.maximum.accumulate(upper.max(axis=1)[::-1])[::-1]  # diam of chain k..n-1
        to_start = np.maximum.accumulate(d[0][::-1])[::-1]
        comp = np.maximum(tail, to_start)                         # chain k..n-1, 0
        ratio = np.minimum(fwd[k], comp[k]) / d[0, k]
        best = max(best, float(ratio.max()))
    return best


def _theta_estimate(v: np.ndarray, samples: int, rng: np.random.Generator, diam: float) -> float:
    n = len(v)
    a, b = v, np.roll(v, -1, axis=0)
    worst = 1.0
    idx = rng.choice(n, size=min(samples, n), replace=False)
    radii = diam * np.geomspace(0.02, 0.45, 8)
    for i in idx:
        xi = v[i]
        dist_v = np.linalg.norm(v - xi, axis=1)
        for r in radii:
            # component of the closed ball containing xi: walk both ways
            fwd = 0
            while fwd < n - 1 and dist_v[(i + fwd + 1) % n] <= r:
                fwd += 1
            bwd = 0
            while bwd < n - 1 - fwd and dist_v[(i - bwd - 1) % n] <= r:
                bwd += 1
            if fwd + bwd >= n - 2:
                continue
            # edges fully outside the component (skip the two crossing edges)
            first = (i + fwd + 1) % n
            last = (i - bwd - 1) % n
            m = (last - first) % n
            rest = (first + 1 + np.arange(max(m - 1, 0))) % n
            if len(rest) == 0:
                continue
            dmin = point_segment_distance(xi[None, :], a[rest], b[rest]).min()
            worst = min(worst, dmin / r)
    return worst


def point_segment_distance(p, a, b) -> np.ndarray:
    """Distances between points ``p`` and segments ``a->b`` (broadcasting)."""
    p, a, b = (np.asarray(t, dtype=float) for t in (p, a, b))
    d = b - a
    dd = np.einsum("...i,...i->...", d, d)
    t = np.clip(np.einsum("...i,...i->...", p - a, d) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
    proj = a + t[..., None] * d
    return np.linalg.norm(p - proj, axis=-1)


def estimate_constants(curve: SnowflakeCurve, probe_level: int = 4, seed: int = 0,
                       s_level: int = 4, extra: int = 6) -> GeometryConstants:
    """Empirical constants ``S``, ``theta``, ``M``, ``diam``, ``c0``, ``c1``.

    ``S`` is a maximum over all vertex pairs of ``V_k`` with
    ``k = min(probe_level, s_level)`` (cubic cost). Arc diameters use arcs
    resolved ``extra`` levels below their own level.
    """
    rng = np.random.default_rng(seed)
    top = build_level(curve, probe_level)
    diam = _chain_diameter(top.vertices)
    S = _bounded_turning(build_level(curve, min(probe_level, s_level)).vertices)

    ratios = []
    for n in range(0, probe_level + 1):
        lvl = build_level(curve, n)
        # homogeneous curves: all arcs of one level are similar, probe a few
        js = np.unique(np.linspace(0, lvl.n_edges - 1, min(lvl.n_edges, 6)).astype(int))
        for j in js:
            chain = refine_arc(curve, n, lvl.starts[j], lvl.ends[j], extra)
            ratios.append(_chain_diameter(chain) / curve.omega_product(n))
    c0, c1 = float(min(ratios)), float(max(ratios))
    M = max(c1 / diam, 1.0) * (1 + 1e-3)

    theta_raw = _theta_estimate(build_level(curve, min(probe_level, 5)).vertices, 40, rng, diam)
    grid = np.round(np.arange(10, 0, -1) / 10, 1)
    theta = float(next((t for t in grid if t <= theta_raw + 1e-12), 0.1))
    return GeometryConstants(S=max(S, 1.0), theta=theta, M=M, diam=diam, c0=c0, c1=c1,
                             probe_level=probe_level)


def scale_radius(constants: GeometryConstants, curve: SnowflakeCurve, n: int) -> float:
    """``r_n = omega_1 ... omega_n diam / (2 M S)``."""
    if n < 1:
        raise ValueError("scale radius is defined for n >= 1")
    return curve.omega_product(n) * constants.diam / (2.0 * constants.M * constants.S)


# --------------------------------------------------------------------------
# ad hoc partition of a Jordan polyline


class ArcWalkError(ValueError):
    pass


def _circle_crossings(a, b, c, r):
    """Parameters t in [0,1] where segment a->b meets the circle |x-c| = r."""
    d = b - a
    f = a - c
    A = d @ d
    B = 2 * f @ d
    C = f @ f - r * r
    disc = B * B - 4 * A * C
    if disc < 0 or A == 0:
        return []
    sq = math.sqrt(disc)
    out = []
    for t in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
        if 0.0 <= t <= 1.0:
            out.append(t)
    return out


def arc_walk_partition(polyline, theta: float, r_target: float) -> PolygonalLevel:
    """Jordan polygon with edges of length ``r_target`` inscribed in a closed curve.

    From the current point the walk follows the curve forward and takes the
    last exit from ``B(x_j, r)`` that happens before the curve leaves the
    closed ball ``B(x_j, r/theta)``. The walk stops at the first point inside
    ``B(x_0, r)``; the polygon is then closed either by an edge back to
    ``x_0`` or, when the final point lies in ``B(x_0, r/4)``, by dropping
    ``x_0`` and joining the final point to ``x_1``.
    """
    pts = np.asarray(polyline, dtype=float)
    if np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    r = float(r_target)
    n = len(pts)
    seg_a = pts
    seg_b = np.roll(pts, -1, axis=0)
    seglen = np.linalg.norm(seg_b - seg_a, axis=1)
    if seglen.max() >= r / 100:
        raise ArcWalkError("sampling too coarse: consecutive samples must be closer than r/100")
    x0 = pts[0]
    R = r / theta
    if np.linalg.norm(pts - x0, axis=1).max() <= R:
        raise ArcWalkError("curve too short: it lies inside B(x0, r/theta)")

    def walk_from(seg: int, t: float, x: np.ndarray):
        """Return (seg, t, point) of the next walk point, scanning forward."""
        last = None
        k = seg
        t0 = t
        for _ in range(2 * n):
            a, b = seg_a[k % n], seg_b[k % n]
            # leaving the closed big ball?
            da, db = np.linalg.norm(a - x), np.linalg.norm(b - x)
            exits_big = [u for u in _circle_crossings(a, b, x, R) if u > t0]
            out_t = None
            if db > R or exits_big:
                out_t = min(exits_big) if exits_big else 1.0
            for u in _circle_crossings(a, b, x, r):
                if u <= t0 or (out_t is not None and u > out_t):
                    continue
                # outward crossing: distance increasing through r
                dd = (a + u * (b - a)) - x
                if dd @ (b - a) > 0:
                    last = (k, u)
            if out_t is not None:
                break
            k += 1
            t0 = -1.0
        else:
            raise ArcWalkError("walk did not leave the ball; curve too short")
        if last is None:
            raise ArcWalkError("sampling too coarse: no exit point located")
        k, u = last
        p = seg_a[k % n] + u * (seg_b[k % n] - seg_a[k % n])
        return k, u, p

    walk = [x0]
    pos = (0, 0.0)
    travelled = 0
    k_prev = 0
    while True:
        k, u, p = walk_from(pos[0], pos[1], walk[-1])
        if k < k_prev or k >= 2 * n:
            raise ArcWalkError("non-simple output: walk wrapped around the curve")
        k_prev = k
        pos = (k, u)
        if len(walk) > 1 and np.linalg.norm(p - x0) < r:
            break
        if k >= n:  # passed the start point
            break
        walk.append(p)
        travelled += 1
    xk = p
    if np.linalg.norm(xk - x0) < r / 4:
        verts = np.array(walk[1:] + [xk])
        closing = "dropped_start"
    else:
        verts = np.array(walk + [xk])
        closing = "edge_to_start"
    if not is_simple(verts):
        raise ArcWalkError("non-simple output: theta or r inconsistent with the curve")
    return PolygonalLevel(0, verts, None, {"closing": closing, "r_target": r, "theta": theta})


# --------------------------------------------------------------------------
# Hausdorff distance and symmetric difference


def _distance_to_polygon(points: np.ndarray, poly: PolygonalLevel, tree=None) -> np.ndarray:
    a, b = poly.starts, poly.ends
    mid = 0.5 * (a + b)
    half = 0.5 * poly.edge_lengths.max()
    tree = tree or cKDTree(mid)
    k = min(8, len(mid))
    dm, idx = tree.query(points, k=k)
    dm = dm.reshape(len(points), k)
    idx = idx.reshape(len(points), k)
    d = point_segment_distance(points[:, None, :], a[idx], b[idx]).min(axis=1)
    # segments not among the k nearest midpoints are farther than dm_k - half
    bad = np.nonzero(dm[:, -1] - half < d)[0]
    for i in bad:
        cand = tree.query_ball_point(points[i], d[i] + half)
        if cand:
            d[i] = min(d[i], point_segment_distance(points[i], a[cand], b[cand]).min())
    return d


def directed_hausdorff(a: PolygonalLevel, b: PolygonalLevel, tol: float = 1e-9) -> float:
    """sup over x in a of dist(x, b), certified to ``tol`` by branch and bound."""
    tree = cKDTree(0.5 * (b.starts + b.ends))
    p0, p1 = a.starts.copy(), a.ends.copy()
    d0 = _distance_to_polygon(p0, b, tree)
    d1 = _distance_to_polygon(p1, b, tree)
    best = float(max(d0.max(), d1.max()))
    k = min(8, b.n_edges)
    for _ in range(80):
        ell = np.linalg.norm(p1 - p0, axis=1)
        upper = 0.5 * (d0 + d1 + ell)  # dist(., b) is 1-Lipschitz
        # distance to one segment is convex along a line: its endpoint max bounds the piece
        _, idx = tree.query(0.5 * (p0 + p1), k=k)
        idx = idx.reshape(len(p0), k)
        e0 = point_segment_distance(p0[:, None, :], b.starts[idx], b.ends[idx])
        e1 = point_segment_distance(p1[:, None, :], b.starts[idx], b.ends[idx])
        upper = np.minimum(upper, np.maximum(e0, e1).min(axis=1))
        keep = upper > best + tol
        if not np.any(keep):
            return best
        p0, p1, d0, d1 = p0[keep], p1[keep], d0[keep], d1[keep]
        pm = 0.5 * (p0 + p1)
        dm = _distance_to_polygon(pm, b, tree)
        best = max(best, float(dm.max()))
        p0, p1 = np.concatenate([p0, pm]), np.concatenate([pm, p1])
        d0, d1 = np.concatenate([d0, dm]), np.concatenate([dm, d1])
    return best


def hausdorff_distance(a: PolygonalLevel, b: PolygonalLevel, tol: float = 1e-9) -> float:
    """Symmetric Hausdorff distance between two closed polygonal curves."""
    return max(directed_hausdorff(a, b, tol), directed_hausdorff(b, a, tol))


def symmetric_difference_area(a: PolygonalLevel, b: PolygonalLevel) -> float:
    """Area of the symmetric difference of the enclosed regions."""
    from shapely.geometry import Polygon

    pa, pb = Polygon(a.vertices), Polygon(b.vertices)
    if pa.area == 0 or pb.area == 0:
        raise ValueError("degenerate polygon")
    return float(pa.symmetric_difference(pb).area)
