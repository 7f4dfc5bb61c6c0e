"""Cluster trees and pair lists for double integrals over curves.

A double sum over leaf pairs is split into well-separated cluster pairs,
evaluated once at the cluster centroids, and near leaf pairs, handed to a
leaf rule. With ``eta = 0`` nothing is separated and every leaf pair is near.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ClusterTree:
    """Clusters of consecutive leaves, four children per parent.

    ``centroid[k]``, ``mass[k]``, ``radius[k]`` describe level ``k``
    (0 = coarsest); ``first[k]`` / ``count[k]`` give the child range of each
    cluster on level ``k + 1``. The last level holds the leaves.
    """

    centroid: list
    mass: list
    radius: list
    first: list
    count: list
    leaf_range: list

    @property
    def depth(self) -> int:
        return len(self.mass) - 1


def build_tree(points: np.ndarray, mass: np.ndarray, extent: np.ndarray | None = None,
               n_top: int = 3) -> ClusterTree:
    """Tree over leaves in curve order.

    ``points`` are the leaf nodes (centroid inputs), ``extent`` an optional
    ``(N, m, 2)`` array of points whose hull contains each leaf (e.g. edge
    endpoints); each cluster disc contains the extent of all its leaves.
    """
    pts = np.asarray(points, dtype=float)
    w = np.asarray(mass, dtype=float)
    if extent is None:
        rad = np.zeros(len(pts))
    else:
        rad = np.max(np.linalg.norm(extent - pts[:, None, :], axis=2), axis=1)
    cents, masses, rads, firsts, counts, ranges = [pts], [w], [rad], [], [], [
        np.stack([np.arange(len(pts)), np.arange(1, len(pts) + 1)], axis=1)]
    while len(masses[-1]) > n_top:
        c, m, r, lr = cents[-1], masses[-1], rads[-1], ranges[-1]
        n = len(m)
        n_par = max(n_top, -(-n // 4))
        bounds = np.linspace(0, n, n_par + 1).round().astype(np.int64) if n % 4 else \
            np.arange(0, n + 1, 4)
        first = bounds[:-1]
        cnt = np.diff(bounds)
        pm = np.add.reduceat(m, first)
        pc = np.add.reduceat(c * m[:, None], first) / pm[:, None]
        owner = np.repeat(np.arange(len(first)), cnt)
        pr = np.zeros(len(first))
        np.maximum.at(pr, owner, np.linalg.norm(c - pc[owner], axis=1) + r)
        cents.append(pc)
        masses.append(pm)
        rads.append(pr)
        firsts.append(first)
        counts.append(cnt)
        ranges.append(np.stack([lr[first, 0], lr[first + cnt - 1, 1]], axis=1))
    cents.reverse(), masses.reverse(), rads.reverse(), firsts.reverse(), counts.reverse()
    ranges.reverse()
    return ClusterTree(cents, masses, rads, firsts, counts, ranges)


def pair_lists(tree: ClusterTree, eta: float, threshold: float | None = None,
               max_pairs: int = 60_000_000):
    """Far cluster pairs per level and near leaf pairs (ordered, all combinations).

    A pair is far when ``max(rho_a, rho_b) <= eta * gap`` with ``gap`` the
    distance between the cluster discs, and when no distance between the two
    discs equals ``threshold``.
    """
    n0 = len(tree.mass[0])
    ia, ib = np.meshgrid(np.arange(n0), np.arange(n0), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()
    far = []
    L = tree.depth
    for k in range(L + 1):
        if k > 0:
            fa, ca = tree.first[k - 1][ia], tree.count[k - 1][ia]
            fb, cb = tree.first[k - 1][ib], tree.count[k - 1][ib]
            if len(ia) * 16 > max_pairs:
                raise MemoryError("pair list exceeds the configured cap")
            sa = fa[:, None, None] + np.arange(4)[None, :, None]
            sb = fb[:, None, None] + np.arange(4)[None, None, :]
            ok = (np.arange(4)[None, :, None] < ca[:, None, None]) & \
                 (np.arange(4)[None, None, :] < cb[:, None, None])
            ia = np.broadcast_to(sa, ok.shape)[ok]
            ib = np.broadcast_to(sb, ok.shape)[ok]
        if eta > 0 and k < L:
            c, r = tree.centroid[k], tree.radius[k]
            d = np.linalg.norm(c[ia] - c[ib], axis=1)
            gap = d - r[ia] - r[ib]
            adm = (gap > 0) & (np.maximum(r[ia], r[ib]) <= eta * gap)
            if threshold is not None:
                adm &= ~((gap < threshold) & (d + r[ia] + r[ib] > threshold))
            far.append((ia[adm], ib[adm]))
            ia, ib = ia[~adm], ib[~adm]
        else:
            far.append((ia[:0], ib[:0]))
    return far, (ia, ib)


def csr_by_centre(ci: np.ndarray, n_centres: int):
    """Stable ordering of pairs by centre and CSR offsets."""
    order = np.argsort(ci, kind="stable")
    offsets = np.zeros(n_centres + 1, dtype=np.int64)
    np.cumsum(np.bincount(ci, minlength=n_centres), out=offsets[1:])
    return order, offsets


@dataclass
class EdgeNodes:
    """Gauss nodes on polygon edges.

    Per edge there are ``q`` coarse nodes, ``q * m`` fine nodes (``m`` cells)
    and ``2 m q^2`` collapsed-triangle nodes for the diagonal cells of a
    same-edge pair: the ``j``-th "s" node pairs with the ``j``-th "t" node,
    and each carries the square root of the pair weight so that
    ``weight[i] * weight[j]`` is the pair weight in either order.
    """

    pos: np.ndarray
    weight: np.ndarray     # length weight times edge density
    edge: np.ndarray
    t: np.ndarray
    n_coarse: int
    q: int
    m: int

    @property
    def n_fine(self) -> int:
        return self.n_coarse * self.m

    def coarse(self, e):
        return e[:, None] * self.q + np.arange(self.q)[None, :]

    def fine(self, e):
        qm = self.q * self.m
        return self.n_coarse + e[:, None] * qm + np.arange(qm)[None, :]

    def diagonal(self, e):
        """``(s, t)`` node indices of the collapsed rules on the diagonal cells of edge ``e``."""
        nd = self.m * self.q * self.q
        base = self.n_coarse + self.n_fine + e[:, None] * 2 * nd + np.arange(nd)[None, :]
        return base, base + nd


def _diagonal_rule(q: int, m: int):
    """Collapsed Gauss rule on ``{s < t}`` inside each of ``m`` cells of ``[0, 1]``."""
    g, w = np.polynomial.legendre.leggauss(q)
    g, w = 0.5 * (g + 1), 0.5 * w
    x, y = np.meshgrid(g, g, indexing="ij")
    wx, wy = np.meshgrid(w, w, indexing="ij")
    cell = np.arange(m)[:, None]
    t = (cell + x.ravel()[None, :]) / m
    s = (cell + (x * y).ravel()[None, :]) / m
    wt = np.broadcast_to((x * wx * wy).ravel() / m ** 2, t.shape)
    return s.ravel(), t.ravel(), wt.ravel()


def edge_nodes(starts, ends, dens, q: int, m: int) -> EdgeNodes:
    g, w = np.polynomial.legendre.leggauss(q)
    g, w = 0.5 * (g + 1), 0.5 * w
    sub = ((np.arange(m)[:, None] + g[None, :]) / m).ravel()
    sw = np.tile(w, m) / m
    ds, dt, dw = _diagonal_rule(q, m)
    rw = np.sqrt(dw)
    L = np.linalg.norm(ends - starts, axis=1)
    E = len(L)
    pos, wt, ed, tt = [], [], [], []
    for s, ws in ((g, w), (sub, sw), (np.r_[ds, dt], np.r_[rw, rw])):
        pos.append((starts[:, None, :] + s[None, :, None] * (ends - starts)[:, None, :]).reshape(-1, 2))
        wt.append((L * dens)[:, None] * ws[None, :])
        ed.append(np.repeat(np.arange(E), len(s)))
        tt.append(np.tile(s, E))
    return EdgeNodes(np.vstack(pos), np.concatenate([x.ravel() for x in wt]),
                     np.concatenate(ed), np.concatenate(tt), E * q, q, m)
