"""Radius search under the group distance.

A ``cKDTree`` over ``(X, sigma * t)`` acts as a Chebyshev-box prefilter;
candidates are then checked with the exact group distance.
"""

import numpy as np
from scipy.spatial import cKDTree

__all__ = ["NeighborIndex"]


class NeighborIndex:
    """Exact group-metric ball queries over a fixed point set.

    Parameters
    ----------
    points : ndarray, shape (N, n+1)
    model : GroupModel
    """

    def __init__(self, points, model):
        self.points = model.check(np.atleast_2d(points))
        self.model = model
        self._trees = {}
        X = self.points[:, :-1]
        self._rmax = float(np.max(np.sqrt(np.sum(X * X, axis=1)), initial=0.0))

    def __len__(self):
        return self.points.shape[0]

    def _sigma(self, r, centers):
        if self.model.kind == "parabolic":
            return 1.0 / r
        cmax = float(np.max(np.linalg.norm(centers[:, :-1], axis=1), initial=0.0))
        # |eta(c, y)| <= |c| |y - c| / 2 < |c| r / 2
        return r / (r * r + 0.5 * cmax * r)

    def _tree(self, sigma):
        key = float(sigma)
        tree = self._trees.get(key)
        if tree is None:
            if len(self._trees) > 8:
                self._trees.clear()
            scaled = self.points.copy()
            scaled[:, -1] *= sigma
            tree = cKDTree(scaled)
            self._trees[key] = tree
        return tree

    def query_flat(self, centers, r):
        """Flat form of :meth:`query_ball`.

        Returns ``(idx, d, offsets)``: hits of center ``c`` are
        ``idx[offsets[c]:offsets[c + 1]]`` with distances ``d[...]``,
        sorted by index.
        """
        centers = self.model.check(np.atleast_2d(centers))
        m = centers.shape[0]
        r = float(r)
        if len(self) == 0 or r <= 0 or m == 0:
            return np.zeros(0, np.intp), np.zeros(0), np.zeros(m + 1, np.intp)
        sigma = self._sigma(r, centers)
        tree = self._tree(sigma)
        scaled = centers.copy()
        scaled[:, -1] *= sigma
        ctree = cKDTree(scaled)
        pairs = ctree.sparse_distance_matrix(tree, r * (1 + 1e-12), p=np.inf,
                                             output_type="ndarray")
        owner = pairs["i"].astype(np.intp)
        flat = pairs["j"].astype(np.intp)
        order = np.lexsort((flat, owner))
        owner, flat = owner[order], flat[order]
        d = self.model.dist(self.points[flat], centers[owner])
        keep = d < r
        flat, d, owner = flat[keep], d[keep], owner[keep]
        offsets = np.zeros(m + 1, dtype=np.intp)
        np.cumsum(np.bincount(owner, minlength=m), out=offsets[1:])
        return flat, d, offsets

    def iter_flat(self, centers, r, max_pairs=2_000_000):
        """Chunked :meth:`query_flat` keeping each chunk near ``max_pairs`` hits.

        Yields ``(start, stop, idx, d, offsets)`` for consecutive center
        ranges.
        """
        centers = self.model.check(np.atleast_2d(centers))
        m = centers.shape[0]
        if m == 0:
            return
        probe = centers[:: max(1, m // 64)]
        est = max(1.0, float(np.mean(np.diff(self.query_flat(probe, r)[2]))))
        step = max(1, int(max_pairs / (2.0 * est)))
        for s in range(0, m, step):
            e = min(m, s + step)
            flat, d, off = self.query_flat(centers[s:e], r)
            yield s, e, flat, d, off

    def query_ball(self, centers, r, return_dist=False):
        """Indices of points with ``d(point, center) < r`` for each center.

        Returns a list of sorted index arrays (and distances if asked).
        """
        flat, d, off = self.query_flat(centers, r)
        idx = [flat[off[i]:off[i + 1]] for i in range(off.size - 1)]
        if return_dist:
            return idx, [d[off[i]:off[i + 1]] for i in range(off.size - 1)]
        return idx

    def nearest(self, queries, r0):
        """Exact nearest point (index, distance) for each query.

        The search radius starts at ``r0`` and doubles until a hit.  Ties go
        to the lower index.
        """
        queries = self.model.check(np.atleast_2d(queries))
        m = queries.shape[0]
        best_i = np.full(m, -1, dtype=np.intp)
        best_d = np.full(m, np.inf)
        if len(self) == 0:
            return best_i, best_d
        todo = np.arange(m)
        r = float(r0)
        while todo.size:
            flat, d, off = self.query_flat(queries[todo], r)
            owner = np.repeat(np.arange(todo.size), np.diff(off))
            order = np.lexsort((flat, d, owner))
            first = np.ones(order.size, dtype=bool)
            first[1:] = owner[order][1:] != owner[order][:-1]
            sel = order[first]
            best_i[todo[owner[sel]]] = flat[sel]
            best_d[todo[owner[sel]]] = d[sel]
            todo = todo[np.diff(off) == 0]
            r *= 2.0
        return best_i, best_d
