"""P1 finite elements on polygonal snowflake domains with a non-local boundary term.

The energy is ``D_n(u) + Q_n(u|_Gamma)``: the Dirichlet integral over the
polygon plus the boundary form applied to the piecewise linear trace.
Domain and boundary share the P1 unknowns.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from . import _kernels
from .forms import BoundaryFunction, FormSpec, PrefractalQuadrature
from .geometry import PolygonalLevel
from .measures import AveragedMeasure


class SolverError(RuntimeError):
    """Raised when an iterative solve does not reach its tolerance."""


# --------------------------------------------------------------------------
# meshes


@dataclass
class TriMesh:
    """Conforming triangulation of a polygonal domain.

    ``boundary_loop`` lists boundary nodes in the polygon's traversal order;
    ``edge_of_node[k]`` is the polygon edge holding ``boundary_loop[k]`` (a
    polygon vertex is assigned to the edge that starts there) and
    ``edge_param[k]`` its position on that edge in ``[0, 1)``.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray
    edge_of_node: np.ndarray
    edge_param: np.ndarray
    polygon: PolygonalLevel | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return np.max(np.stack([np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1)
                                for i in range(3)]), axis=0)

    def min_angle(self) -> float:
        """Smallest interior angle in degrees."""
        p = self.nodes[self.triangles]
        out = np.inf
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            c = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out = min(out, float(np.degrees(np.arccos(np.clip(c, -1, 1))).min()))
        return out

    def boundary_segments(self):
        """Consecutive boundary node pairs and the polygon edge they lie on."""
        b = self.boundary_loop
        return b, np.roll(b, -1), self.edge_of_node

    def to_json(self) -> dict:
        return {"schema": 1, "nodes": self.nodes.tolist(), "triangles": self.triangles.tolist(),
                "boundary_loop": self.boundary_loop.tolist(),
                "edge_of_node": self.edge_of_node.tolist()}


def _angle_key(a, b, c) -> float:
    """Smallest angle of triangle ``abc`` (radians)."""
    pts = (a, b, c)
    best = math.pi
    for i in range(3):
        u = pts[(i + 1) % 3] - pts[i]
        v = pts[(i + 2) % 3] - pts[i]
        cosv = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
        best = min(best, math.acos(max(-1.0, min(1.0, cosv))))
    return best


def _ear_clip(V: np.ndarray) -> list:
    """Ear clipping on a counter-clockwise simple polygon, best-shaped ear first."""
    n = len(V)
    prev = list(range(-1, n - 1))
    prev[0] = n - 1
    nxt = list(range(1, n + 1))
    nxt[-1] = 0
    alive = np.ones(n, bool)

    def cross(o, a, b):
        return (V[a, 0] - V[o, 0]) * (V[b, 1] - V[o, 1]) - (V[a, 1] - V[o, 1]) * (V[b, 0] - V[o, 0])

    def is_ear(i):
        a, b = prev[i], nxt[i]
        if cross(a, i, b) <= 0:
            return False
        idx = np.flatnonzero(alive)
        idx = idx[(idx != a) & (idx != i) & (idx != b)]
        if not len(idx):
            return True
        P = V[idx]
        tri = V[[a, i, b]]
        # points inside or on the closed triangle block the ear
        s = []
        for k in range(3):
            o, e = tri[k], tri[(k + 1) % 3]
            s.append((e[0] - o[0]) * (P[:, 1] - o[1]) - (e[1] - o[1]) * (P[:, 0] - o[0]))
        inside = (s[0] >= 0) & (s[1] >= 0) & (s[2] >= 0)
        return not inside.any()

    score = {}
    for i in range(n):
        if is_ear(i):
            score[i] = _angle_key(V[prev[i]], V[i], V[nxt[i]])
    tris = []
    remaining = n
    while remaining > 3:
        if not score:
            raise ValueError("degenerate polygon: no ear found")
        i = max(score, key=lambda k: (score[k], -k))
        a, b = prev[i], nxt[i]
        tris.append((a, i, b))
        alive[i] = False
        score.pop(i)
        nxt[a], prev[b] = b, a
        remaining -= 1
        for j in (a, b):
            score.pop(j, None)
            if is_ear(j):
                score[j] = _angle_key(V[prev[j]], V[j], V[nxt[j]])
    i = int(np.flatnonzero(alive)[0])
    tris.append((prev[i], i, nxt[i]))
    return tris


class _Bisector:
    """Conforming longest-edge bisection (each split also splits the neighbour)."""

    def __init__(self, nodes, tris, bseg):
        self.P = [np.asarray(p, float) for p in nodes]
        self.T = {k: tuple(t) for k, t in enumerate(tris)}
        self.next_id = len(tris)
        self.E = {}
        for k, t in self.T.items():
            for e in self._edges(t):
                self.E.setdefault(e, set()).add(k)
        self.dirty = set(self.E)
        self.L2 = {}
        self.long = {}
        self.bseg = dict(bseg)      # boundary segment -> (polygon edge, {node: edge parameter})
        self.bnode = {}

    @staticmethod
    def _edges(t):
        a, b, c = t
        return [tuple(sorted((a, b))), tuple(sorted((b, c))), tuple(sorted((c, a)))]

    def _len2(self, e):
        v = self.L2.get(e)
        if v is None:
            (x0, y0), (x1, y1) = self.P[e[0]], self.P[e[1]]
            v = self.L2[e] = (x1 - x0) ** 2 + (y1 - y0) ** 2
        return v

    def longest(self, k):
        e = self.long.get(k)
        if e is None:
            e = self.long[k] = max(self._edges(self.T[k]), key=lambda e: (self._len2(e), e))
        return e

    def moved(self):
        """Forget cached lengths after node positions change."""
        self.L2 = {}
        self.long = {}
        self.dirty = set(self.E)

    def _drop(self, k):
        for e in self._edges(self.T[k]):
            self.E[e].discard(k)
            if not self.E[e]:
                del self.E[e]
        del self.T[k]
        self.long.pop(k, None)

    def _add(self, t):
        k = self.next_id
        self.next_id += 1
        self.T[k] = t
        for e in self._edges(t):
            self.E.setdefault(e, set()).add(k)
            self.dirty.add(e)
        return k

    def _split_tri(self, k, e, m):
        a, b, c = self.T[k]
        self._drop(k)
        # keep orientation: replace one endpoint of e by m in each child
        t = [a, b, c]
        i, j = t.index(e[0]), t.index(e[1])
        t1, t2 = list(t), list(t)
        t1[i] = m
        t2[j] = m
        self._add(tuple(t1))
        self._add(tuple(t2))

    def bisect(self, k):
        e = self.longest(k)
        while True:
            nb = [j for j in self.E.get(e, ()) if j != k]
            if not nb or self.longest(nb[0]) == e:
                break
            self.bisect(nb[0])
        m = len(self.P)
        self.P.append(0.5 * (self.P[e[0]] + self.P[e[1]]))
        nb = [j for j in self.E.get(e, ()) if j != k]
        if e in self.bseg:
            g, par = self.bseg.pop(e)
            tm = 0.5 * (par[e[0]] + par[e[1]])
            self.bnode[m] = (g, tm)
            for v in e:
                self.bseg[tuple(sorted((v, m)))] = (g, {v: par[v], m: tm})
        self._split_tri(k, e, m)
        for j in nb:
            self._split_tri(j, e, m)

    def _rotated(self, k, e):
        """Triangle ``k`` as ``(a, b, c)`` in its own orientation with ``{a, b} = e``."""
        t = self.T[k]
        for r in range(3):
            a, b, c = t[r], t[(r + 1) % 3], t[(r + 2) % 3]
            if {a, b} == set(e):
                return a, b, c
        raise KeyError(e)

    def delaunay_flips(self):
        """Lawson flips of interior edges until every one is locally Delaunay."""
        stack = sorted(self.dirty)
        self.dirty = set()
        flips = 0
        while stack:
            e = stack.pop()
            ks = sorted(self.E.get(e, ()))
            if len(ks) != 2 or e in self.bseg:
                continue
            a, b, c = self._rotated(ks[0], e)
            _, _, d = self._rotated(ks[1], e)
            (ax, ay), (bx, by), (cx, cy), (dx, dy) = (self.P[v] for v in (a, b, c, d))
            ax, ay, bx, by, cx, cy = ax - dx, ay - dy, bx - dx, by - dy, cx - dx, cy - dy
            det = (ax * (by * (cx * cx + cy * cy) - cy * (bx * bx + by * by))
                   - ay * (bx * (cx * cx + cy * cy) - cx * (bx * bx + by * by))
                   + (ax * ax + ay * ay) * (bx * cy - by * cx))
            scale = max((ax - bx) ** 2 + (ay - by) ** 2, cx * cx + cy * cy) ** 2
            if det <= 1e-12 * scale:
                continue
            self._drop(ks[0])
            self._drop(ks[1])
            self._add((a, d, c))
            self._add((d, b, c))
            flips += 1
            stack += [tuple(sorted(x)) for x in ((a, d), (d, b), (b, c), (c, a))]
        self.dirty = set()
        return flips


def _tri_min_angles(P, T, hmax=np.inf):
    """Smallest angle per triangle; -1 for inverted triangles or edges above ``hmax``."""
    a, b, c = P[T[:, 0]], P[T[:, 1]], P[T[:, 2]]
    out = np.full(len(T), np.pi)
    too_long = np.zeros(len(T), bool)
    for u, v in ((a, b), (b, c), (c, a)):
        too_long |= np.einsum("ij,ij->i", u - v, u - v) > hmax * hmax
    for o, u, v in ((a, b, c), (b, c, a), (c, a, b)):
        x, y = u - o, v - o
        cr = x[:, 0] * y[:, 1] - x[:, 1] * y[:, 0]
        ang = np.arctan2(np.abs(cr), np.einsum("ij,ij->i", x, y))
        out = np.minimum(out, np.where(cr > 0, ang, -1.0))
    return np.where(too_long, -1.0, out)


def _smooth(P, T, fixed, sweeps: int = 3, hmax: float = np.inf):
    """Angle-improving Laplacian smoothing of free nodes, one colour class at a time."""
    N = len(P)
    I = np.concatenate([T[:, 0], T[:, 1], T[:, 2], T[:, 1], T[:, 2], T[:, 0]])
    J = np.concatenate([T[:, 1], T[:, 2], T[:, 0], T[:, 0], T[:, 1], T[:, 2]])
    A = sp.coo_matrix((np.ones(len(I)), (I, J)), shape=(N, N)).tocsr()
    A.data[:] = 1.0
    deg = np.asarray(A.sum(axis=1)).ravel()
    # greedy colouring so that no two nodes of a class share a triangle
    colour = np.full(N, -1)
    for v in range(N):
        used = set(colour[A.indices[A.indptr[v]:A.indptr[v + 1]]].tolist())
        c = 0
        while c in used:
            c += 1
        colour[v] = c
    owner = np.repeat(np.arange(len(T)), 3)
    node = T.ravel()
    order = np.argsort(node, kind="stable")
    node, owner = node[order], owner[order]
    starts = np.searchsorted(node, np.arange(N))
    has = np.bincount(node, minlength=N) > 0
    for _ in range(sweeps):
        for c in range(colour.max() + 1):
            S = (colour == c) & ~fixed & has & (deg > 0)
            if not S.any():
                continue
            cand = P.copy()
            cand[S] = (A @ P)[S] / deg[S, None]
            old = np.minimum.reduceat(_tri_min_angles(P, T)[owner], starts[has])
            new = np.minimum.reduceat(_tri_min_angles(cand, T, hmax)[owner], starts[has])
            ok = np.zeros(N, bool)
            ok[np.flatnonzero(has)] = new > old
            ok &= S
            P[ok] = cand[ok]
    return P


def triangulate(lvl: PolygonalLevel, h_target: float) -> TriMesh:
    """Ear clipping of the polygon, then longest-edge bisection to diameter ``h_target``.

    Interior edges are flipped to the constrained Delaunay configuration
    after every bisection sweep, which keeps the angles away from zero.
    Boundary edges are bisected evenly whenever they are longer than
    ``h_target``, so every polygon vertex is a node and traces are piecewise
    linear along the polygon.
    """
    if not h_target > 0:
        raise ValueError("h_target must be positive")
    V = np.asarray(lvl.vertices, dtype=float)
    E = len(V)
    if E < 3 or abs(_signed(V)) < 1e-14:
        raise ValueError("degenerate polygon")
    order = np.arange(E) if _signed(V) > 0 else np.arange(E)[::-1]
    tris = [tuple(order[list(t)]) for t in _ear_clip(V[order])]
    # boundary segment (sorted pair) -> polygon edge g from V[g] to V[g+1], params
    bseg = {tuple(sorted((g, (g + 1) % E))): (g, {g: 0.0, (g + 1) % E: 1.0}) for g in range(E)}
    bis = _Bisector(V, tris, bseg)
    tol = h_target * (1 + 1e-12)
    bis.delaunay_flips()
    while True:
        big = [k for k in sorted(bis.T) if bis._len2(bis.longest(k)) > tol * tol]
        if not big:
            break
        for k in big:
            if k in bis.T:
                bis.bisect(k)
        bis.delaunay_flips()
        if not any(bis._len2(bis.longest(k)) > tol * tol for k in bis.T):
            fixed = np.zeros(len(bis.P), bool)
            fixed[[v for e in bis.bseg for v in e]] = True
            for _ in range(3):
                P = _smooth(np.array(bis.P), np.array([bis.T[k] for k in sorted(bis.T)]), fixed,
                            hmax=tol)
                bis.P = list(P)
                bis.moved()
                bis.delaunay_flips()
    nodes = np.array(bis.P)
    tri = np.array([bis.T[k] for k in sorted(bis.T)], dtype=np.int64)
    # boundary loop in polygon order
    rows = [(g, 0.0, g) for g in range(E)] + [(g, tm, m) for m, (g, tm) in bis.bnode.items()]
    rows.sort()
    loop = np.array([r[2] for r in rows], dtype=np.int64)
    eon = np.array([r[0] for r in rows], dtype=np.int64)
    par = np.array([r[1] for r in rows])
    mesh = TriMesh(nodes, tri, loop, eon, par, lvl)
    _fix_orientation(mesh)
    return mesh


def _signed(V):
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _fix_orientation(mesh: TriMesh):
    neg = mesh.areas() < 0
    mesh.triangles[neg] = mesh.triangles[neg][:, [0, 2, 1]]
    if np.any(np.abs(mesh.areas()) <= 0):
        raise ValueError("zero-area triangle")


# --------------------------------------------------------------------------
# assembly


def assemble_dirichlet(mesh: TriMesh) -> sp.csr_matrix:
    """P1 stiffness matrix of ``int |grad u|^2``."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.areas()
    if np.any(area <= 0):
        raise ValueError("zero-area or inverted triangle")
    # gradients of the barycentric hats
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    Kloc = np.einsum("tik,tjk->tij", e, e) / (4 * area[:, None, None])
    I = np.repeat(mesh.triangles, 3, axis=1).ravel()
    J = np.tile(mesh.triangles, (1, 3)).ravel()
    K = sp.coo_matrix((Kloc.ravel(), (I, J)), shape=(mesh.n_nodes,) * 2).tocsr()
    return 0.5 * (K + K.T)


def assemble_mass(mesh: TriMesh, mun: AveragedMeasure):
    """``(M_omega, M_gamma)``: P1 area mass and boundary mass with the ``mu_n`` edge densities."""
    area = mesh.areas()
    loc = (np.ones((3, 3)) + np.eye(3)) / 12.0
    I = np.repeat(mesh.triangles, 3, axis=1).ravel()
    J = np.tile(mesh.triangles, (1, 3)).ravel()
    Mo = sp.coo_matrix(((area[:, None, None] * loc).ravel(), (I, J)),
                       shape=(mesh.n_nodes,) * 2).tocsr()
    a, b, g = mesh.boundary_segments()
    seg = np.linalg.norm(mesh.nodes[b] - mesh.nodes[a], axis=1) * mun.densities[g]
    bl = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    ab = np.stack([a, b], axis=1)
    I = np.repeat(ab, 2, axis=1).ravel()
    J = np.tile(ab, (1, 2)).ravel()
    Mg = sp.coo_matrix(((seg[:, None, None] * bl).ravel(), (I, J)),
                       shape=(mesh.n_nodes,) * 2).tocsr()
    return 0.5 * (Mo + Mo.T), 0.5 * (Mg + Mg.T)


def _trace_maps(mesh: TriMesh, quad: PrefractalQuadrature):
    """For every quadrature node on the polygon: the two boundary dofs and the hat weight."""
    nodes = quad.nodes
    E = mesh.polygon.n_edges if mesh.polygon is not None else int(mesh.edge_of_node.max()) + 1
    dof0 = np.empty(len(nodes.t), dtype=np.int64)
    dof1 = np.empty(len(nodes.t), dtype=np.int64)
    tt = np.empty(len(nodes.t))
    loop = mesh.boundary_loop
    nb = len(loop)
    starts = np.searchsorted(mesh.edge_of_node, np.arange(E))
    for g in range(E):
        sel = np.flatnonzero(nodes.edge == g)
        s0 = starts[g]
        s1 = starts[g + 1] if g + 1 < E else nb
        knots = np.r_[mesh.edge_param[s0:s1], 1.0]
        k = np.clip(np.searchsorted(knots, nodes.t[sel], side="right") - 1, 0, s1 - s0 - 1)
        dof0[sel] = loop[s0 + k]
        dof1[sel] = loop[(s0 + k + 1) % nb]
        tt[sel] = (nodes.t[sel] - knots[k]) / (knots[k + 1] - knots[k])
    return dof0, dof1, tt


def assemble_boundary(mesh: TriMesh, mun: AveragedMeasure, spec: FormSpec) -> np.ndarray:
    """Dense ``Q_ij = Q_n(psi_i, psi_j)`` over hat traces (zero on interior nodes).

    Uses the same pair quadrature as the form evaluator with every pair
    evaluated directly, so ``u^T Q u`` equals the form of the trace up to
    rounding.
    """
    if spec.alpha != 1:
        raise ValueError("boundary matrix assembly is restricted to alpha = 1")
    quad = PrefractalQuadrature(spec, mun, eta=0.0)
    dof0, dof1, tt = _trace_maps(mesh, quad)
    Q = np.zeros((mesh.n_nodes, mesh.n_nodes))
    for ci, pi, s, _, _ in quad.near_blocks():
        _kernels.accumulate_pair_matrix(ci, pi, s, dof0, dof1, tt, Q)
    return 0.5 * (Q + Q.T)


def trace_function(mesh: TriMesh, values) -> BoundaryFunction:
    """Piecewise linear interpolant of nodal boundary values along the polygon."""
    v = np.asarray(values, dtype=float)
    loop = mesh.boundary_loop
    P = mesh.nodes[loop]
    Q = np.roll(P, -1, axis=0)
    vb, vb1 = v[loop], np.roll(v[loop], -1)
    d = Q - P
    L2 = np.einsum("ij,ij->i", d, d)

    def ev(x):
        out = np.empty(len(x))
        for s in range(0, len(x), 4096):
            X = x[s:s + 4096]
            t = np.clip(np.einsum("kij,ij->ki", X[:, None, :] - P[None], d) / L2, 0, 1)
            dist = np.linalg.norm(P[None] + t[..., None] * d[None] - X[:, None, :], axis=2)
            k = np.argmin(dist, axis=1)
            tk = t[np.arange(len(X)), k]
            out[s:s + 4096] = (1 - tk) * vb[k] + tk * vb1[k]
        return out

    return BoundaryFunction(ev, None, "trace")


# --------------------------------------------------------------------------
# problems and solves


@dataclass
class AssembledSystem:
    K: sp.csr_matrix
    Q: np.ndarray
    M_omega: sp.csr_matrix
    M_gamma: sp.csr_matrix
    lam: float
    mesh: TriMesh | None = None
    _bidx: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self._bidx is None:
            nz = np.flatnonzero(np.any(self.Q != 0, axis=1))
            self._bidx = nz
        b = self._bidx
        self._Qb = np.ascontiguousarray(self.Q[np.ix_(b, b)])

    @property
    def M(self):
        return self.M_omega + self.M_gamma

    def apply_Q(self, u):
        out = np.zeros_like(u)
        out[self._bidx] = self._Qb @ u[self._bidx]
        return out

    def energy(self, u) -> float:
        """``D_n(u) + Q_n(u)``."""
        return float(u @ (self.K @ u) + u @ self.apply_Q(u))

    def operator(self, shift: float, scale: float = 1.0):
        """``shift * M + scale * (K + Q + lambda M)`` as a linear operator plus its diagonal."""
        S = self.M
        A = (scale * self.K + (shift + scale * self.lam) * S).tocsr()
        n = A.shape[0]

        def mv(x):
            return A @ x + scale * self.apply_Q(x)

        diag = A.diagonal().copy()
        diag[self._bidx] += scale * np.diag(self._Qb)
        return LinearOperator((n, n), matvec=mv, dtype=float), diag


def assemble_system(mesh: TriMesh, mun: AveragedMeasure, spec: FormSpec, lam: float) -> AssembledSystem:
    K = assemble_dirichlet(mesh)
    Q = assemble_boundary(mesh, mun, spec)
    Mo, Mg = assemble_mass(mesh, mun)
    return AssembledSystem(K, Q, Mo, Mg, lam, mesh, np.sort(mesh.boundary_loop))


@dataclass
class EllipticProblem:
    lam: float
    f: Callable
    phi: Callable

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass
class ParabolicProblem:
    lam: float
    u0: Callable
    dt: float
    T: float
    checkpoints: tuple = ()

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < self.dt:
            raise ValueError("T must be at least dt")


@dataclass
class Solution:
    u: np.ndarray
    residual: float
    iterations: int
    energy: float

    def to_csv(self, mesh: TriMesh) -> str:
        return solution_csv(mesh, self.u)


def _cg(A, b, diag, rtol: float, maxiter: int, x0=None):
    Minv = LinearOperator(A.shape, matvec=lambda x: x / diag, dtype=float)
    it = [0]

    def cb(_):
        it[0] += 1

    bn = float(np.linalg.norm(b))
    if bn == 0:
        return np.zeros_like(b), 0.0, 0
    x, info = cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=Minv, callback=cb)
    res = float(np.linalg.norm(b - A @ x)) / bn
    if info != 0 or res > 10 * rtol:
        raise SolverError(f"conjugate gradients stopped at relative residual {res:.3e}")
    return x, res, it[0]


def _nodal(fn, pts):
    v = fn(pts)
    return np.broadcast_to(np.asarray(v, dtype=float), (len(pts),)).copy()


def solve_elliptic(sys: AssembledSystem, prob: EllipticProblem, rtol: float = 1e-10,
                   maxiter: int = 20000) -> Solution:
    """Solve ``(K + Q + lambda (M_omega + M_gamma)) u = M_omega f + M_gamma phi``."""
    if not prob.lam > 0:
        raise ValueError("lambda must be positive")
    if prob.lam != sys.lam:
        sys = AssembledSystem(sys.K, sys.Q, sys.M_omega, sys.M_gamma, prob.lam, sys.mesh, sys._bidx)
    X = sys.mesh.nodes
    F = sys.M_omega @ _nodal(prob.f, X) + sys.M_gamma @ _nodal(prob.phi, X)
    A, diag = sys.operator(0.0)
    u, res, it = _cg(A, F, diag, rtol, maxiter)
    return Solution(u, res, it, sys.energy(u))


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    norms: np.ndarray
    dissipation: np.ndarray

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        return self.states[k]


def step_parabolic(sys: AssembledSystem, prob: ParabolicProblem, rtol: float = 1e-10,
                   maxiter: int = 20000, keep: str = "checkpoints") -> Trajectory:
    """Implicit Euler for ``M du/dt = -(K + Q + lambda M) u``.

    ``keep="all"`` stores every step, otherwise only the initial state, the
    configured checkpoints and the final state.
    """
    if prob.lam != sys.lam:
        sys = AssembledSystem(sys.K, sys.Q, sys.M_omega, sys.M_gamma, prob.lam, sys.mesh, sys._bidx)
    M = sys.M
    n_steps = int(round(prob.T / prob.dt))
    A, diag = sys.operator(1.0, prob.dt)
    u = _nodal(prob.u0, sys.mesh.nodes)
    marks = {int(round(c / prob.dt)) for c in prob.checkpoints}
    times, states = [0.0], [u.copy()]
    norms = [math.sqrt(float(u @ (M @ u)))]
    diss = [0.0]
    for k in range(1, n_steps + 1):
        u_new, _, _ = _cg(A, M @ u, diag, rtol, maxiter, x0=u)
        u = u_new
        norms.append(math.sqrt(max(float(u @ (M @ u)), 0.0)))
        diss.append(diss[-1] + prob.dt * (sys.energy(u) + sys.lam * norms[-1] ** 2))
        if keep == "all" or k in marks or k == n_steps:
            times.append(k * prob.dt)
            states.append(u.copy())
    return Trajectory(np.array(times), states, np.array(norms), np.array(diss))


# --------------------------------------------------------------------------
# files


def solution_csv(mesh: TriMesh, u) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "x", "y", "value"])
    for k, (p, v) in enumerate(zip(mesh.nodes, u)):
        w.writerow([k, repr(float(p[0])), repr(float(p[1])), repr(float(v))])
    return buf.getvalue()


def mesh_json(mesh: TriMesh) -> str:
    return json.dumps(mesh.to_json(), sort_keys=True)


def write_trajectory(traj: Trajectory, mesh: TriMesh, directory, stem: str = "state") -> list:
    """One CSV per stored time; returns the written paths."""
    from pathlib import Path
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, u in zip(traj.times, traj.states):
        p = out / f"{stem}_t{t:.6f}.csv"
        p.write_text(solution_csv(mesh, u))
        paths.append(p)
    return paths


SOLVER_KEYS = {"level": int, "h_target": float, "lambda": float, "dt": float, "T": float,
               "quad_order": int, "A_override": float}


def read_solver_config(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` comments) restricted to the documented keys."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in SOLVER_KEYS:
            raise ValueError(f"line {ln}: unknown key {k!r}")
        try:
            out[k] = SOLVER_KEYS[k](v)
        except ValueError:
            raise ValueError(f"line {ln}: bad value {v!r} for {k}") from None
    return out


__all__ = ["TriMesh", "AssembledSystem", "EllipticProblem", "ParabolicProblem", "Solution",
           "Trajectory", "SolverError", "triangulate", "assemble_dirichlet", "assemble_boundary",
           "assemble_mass", "assemble_system", "trace_function", "solve_elliptic",
           "step_parabolic", "solution_csv", "mesh_json", "write_trajectory",
           "read_solver_config"]
