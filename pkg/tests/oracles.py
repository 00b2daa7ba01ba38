"""Independent reference computations used by the tests.

None of these call into the library's solvers: the flat distance is found
by enumerating LP vertices, beta by a grid search over planes, and the
alpha_k lower bound by integrating explicit test functions.
"""

import itertools

import numpy as np
from scipy.optimize import minimize, minimize_scalar


# ---------------------------------------------------------------------------
# distance to the complement of a ball

def _move_cost(dX, dt, R, a):
    """Cost of moving ``a`` outward in space plus the cheapest time move."""
    b = np.maximum(0.0, R * R - dt - (dX + a) ** 2)
    return np.sqrt(a * a + b)


def parabolic_boundary_distance(Y, X, R):
    """``inf {d(Y, Z) : d(Z, X) >= R}`` in parabolic space, by 1-d search.

    Moving ``a`` outward in space and ``b`` in time costs
    ``sqrt(a**2 + b)`` and needs ``(|dX| + a)**2 + |dt| + b >= R**2``.
    ``a`` is searched on a grid and then by ternary search (the cost is
    unimodal in ``a``).  Vectorised over the rows of ``Y``.
    """
    Y = np.atleast_2d(Y)
    dX = np.linalg.norm(Y[:, :-1] - X[:-1], axis=1)
    dt = np.abs(Y[:, -1] - X[-1])
    grid = np.linspace(0.0, R, 257)
    best = np.empty(dX.size)
    lo = np.empty(dX.size)
    hi = np.empty(dX.size)
    for s in range(0, dX.size, 2048):
        sl = slice(s, s + 2048)
        v = _move_cost(dX[sl, None], dt[sl, None], R, grid[None, :])
        i = np.argmin(v, axis=1)
        best[sl] = v[np.arange(v.shape[0]), i]
        lo[sl] = grid[np.maximum(i - 1, 0)]
        hi[sl] = grid[np.minimum(i + 1, grid.size - 1)]
    for _ in range(100):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        go = _move_cost(dX, dt, R, m1) < _move_cost(dX, dt, R, m2)
        hi = np.where(go, m2, hi)
        lo = np.where(go, lo, m1)
    best = np.minimum(best, _move_cost(dX, dt, R, 0.5 * (lo + hi)))
    # the kink where the time move drops to zero is a candidate of its own
    kink = np.maximum(0.0, np.sqrt(np.maximum(R * R - dt, 0.0)) - dX)
    best = np.minimum(best, _move_cost(dX, dt, R, kink))
    best[dX * dX + dt >= R * R] = 0.0
    return best


def boundary_bounds(model, pts, X, R):
    if model.kind == "parabolic":
        return parabolic_boundary_distance(np.asarray(pts, dtype=float), X, R)
    # quasi-metric model: the triangle-inequality bound is the definition used
    return np.maximum(0.0, R - np.array([model.dist(p, X) for p in pts]))


# ---------------------------------------------------------------------------
# flat distance by vertex enumeration

def _prufer_trees(nodes):
    """Edge lists of all labelled trees on ``nodes`` vertices (Prufer decoding)."""
    if nodes == 1:
        yield []
        return
    if nodes == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(nodes), repeat=nodes - 2):
        degree = [1] * nodes
        for v in seq:
            degree[v] += 1
        edges = []
        for v in seq:
            leaf = min(i for i in range(nodes) if degree[i] == 1)
            edges.append((leaf, v))
            degree[leaf] -= 1
            degree[v] -= 1
        u, w = [i for i in range(nodes) if degree[i] == 1]
        edges.append((u, w))
        yield edges


_TREE_CACHE = {}


def _tree_tables(n):
    """For every tree on ground + n nodes: parent of each node and the
    root-path incidence matrix ``P[t, i, c]`` (edge indexed by child)."""
    if n in _TREE_CACHE:
        return _TREE_CACHE[n]
    parents, paths = [], []
    for edges in _prufer_trees(n + 1):
        adj = {v: [] for v in range(n + 1)}
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        par = [-1] * (n + 1)
        order = [0]
        seen = {0}
        for v in order:
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    par[u] = v
                    order.append(u)
        P = np.zeros((n, n))
        for i in range(1, n + 1):
            v = i
            while v != 0:
                P[i - 1, v - 1] = 1.0
                v = par[v]
        parents.append(par[1:])
        paths.append(P)
    out = (np.array(parents), np.array(paths))
    _TREE_CACHE[n] = out
    return out


def lp_vertex_max(c, g, D, tol=1e-9):
    """``max c.f`` subject to ``|f_i| <= g_i`` and ``|f_i - f_j| <= D_ij``.

    Every vertex of this polytope is pinned by a spanning tree of the
    complete graph on the nodes plus a ground node (edges to the ground
    are tight bounds) with a sign per edge; all are enumerated.
    """
    c = np.asarray(c, dtype=float)
    g = np.asarray(g, dtype=float)
    n = c.size
    if n == 0:
        return 0.0
    parents, paths = _tree_tables(n)
    signs = np.array(list(itertools.product([-1.0, 1.0], repeat=n)))
    best = -np.inf
    child = np.arange(1, n + 1)
    for s in range(0, parents.shape[0], 512):
        par = parents[s:s + 512]
        P = paths[s:s + 512]
        # edge value for each child: bound if attached to the ground, else distance
        v = np.where(par == 0, g[None, :], D[np.maximum(par - 1, 0), child[None, :] - 1])
        f = np.einsum("tic,tsc->tsi", P, signs[None, :, :] * v[:, None, :])
        ok = np.all(np.abs(f) <= g + tol, axis=2)
        diff = np.abs(f[:, :, :, None] - f[:, :, None, :])
        ok &= np.all(diff <= D + tol, axis=(2, 3))
        if np.any(ok):
            best = max(best, float(np.max((f @ c)[ok])))
    return best


def flat_oracle(model, mu_pts, mu_w, om_pts, om_w, X, r):
    """Flat distance of two small discrete measures for ``B(X, r)``."""
    R = 3.0 * r
    pts, coef = [], []
    for P, W, sgn in ((mu_pts, mu_w, 1.0), (om_pts, om_w, -1.0)):
        for p, w in zip(np.atleast_2d(P), np.atleast_1d(W)):
            if model.dist(p, X) < R:
                pts.append(np.asarray(p, dtype=float))
                coef.append(sgn * float(w))
    # identical points are one LP variable
    nodes, cc = [], []
    for p, w in zip(pts, coef):
        for i, q in enumerate(nodes):
            if np.array_equal(p, q):
                cc[i] += w
                break
        else:
            nodes.append(p)
            cc.append(w)
    if not nodes:
        return 0.0
    nodes = np.array(nodes)
    g = boundary_bounds(model, nodes, X, R)
    D = np.array([[model.dist(a, b) for b in nodes] for a in nodes])
    return max(0.0, lp_vertex_max(np.array(cc), g, D))


# ---------------------------------------------------------------------------
# beta by search over planes

def _normal_residual(Y, w, normals):
    """Weighted second moment of ``Y`` along the normal directions about its mean."""
    mean = (w @ Y) / np.sum(w)
    D = Y - mean
    P = D @ np.atleast_2d(normals).T
    return float(np.sum(w * np.sum(P * P, axis=1)))


def _sphere(res):
    th = np.linspace(0, np.pi, res)
    ph = np.linspace(0, 2 * np.pi, 2 * res, endpoint=False)
    T, F = np.meshgrid(th, ph, indexing="ij")
    return np.column_stack([np.sin(T).ravel() * np.cos(F).ravel(),
                            np.sin(T).ravel() * np.sin(F).ravel(), np.cos(T).ravel()])


def beta_bruteforce(model, pts, w, X, r, k):
    """Grid search over spatial k-planes (n <= 3), refined locally."""
    idx = np.array([i for i, p in enumerate(pts) if model.dist(p, X) < r])
    Y = pts[idx, :-1] - X[:-1]
    ww = w[idx]
    n = Y.shape[1]
    W = float(np.sum(ww))
    if n == 2 and k == 1:
        def f(th):
            return _normal_residual(Y, ww, [[-np.sin(th), np.cos(th)]])
        grid = np.linspace(0, np.pi, 7201)
        v = np.array([f(t) for t in grid])
        i = int(np.argmin(v))
        res = minimize_scalar(f, bounds=(grid[max(i - 1, 0)], grid[min(i + 1, 7200)]),
                              method="bounded", options={"xatol": 1e-12})
        best = min(res.fun, v[i])
    elif n == 3:
        def unit(a):
            t, p = a
            return np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])

        if k == 2:
            def f(a):
                return _normal_residual(Y, ww, [unit(a)])
        elif k == 1:
            def f(a):
                u = unit(a)
                Q, _ = np.linalg.qr(np.column_stack([u, np.eye(3)]))
                return _normal_residual(Y, ww, Q[:, 1:3].T)
        else:
            raise ValueError("unsupported plane dimension")
        S = _sphere(120)
        ang = np.column_stack([np.arccos(np.clip(S[:, 2], -1, 1)), np.arctan2(S[:, 1], S[:, 0])])
        v = np.array([f(a) for a in ang])
        i = int(np.argmin(v))
        res = minimize(f, ang[i], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        best = min(res.fun, v[i])
    else:
        raise ValueError("oracle covers n <= 3")
    return float(np.sqrt(max(best, 0.0) / (r * r * W)))


# ---------------------------------------------------------------------------
# alpha_k lower bound in parabolic R^2 x R

def alpha_k_lower_bound(model, pts, w, X, r, n_theta=360, n_offset=241):
    """Certified lower bound for ``alpha_1`` in parabolic ``R^2 x R``.

    For a vertical line ``L`` the function
    ``f_L(Y) = min(dist(Y, L), dist(Y, complement of B(X, 3r)))`` is
    1-Lipschitz, supported in the ball and vanishes on every member of
    ``M_1`` built on ``L``, so ``alpha_1 >= int f_L dmu / r**4``
    minimised over lines.  The minimum runs over an angle/offset grid and
    is corrected by the largest change of ``f_L`` between grid points.
    """
    if model.kind != "parabolic" or model.n != 2 or model.k != 1:
        raise ValueError("oracle covers parabolic R^2 x R with k = 1")
    R = 3.0 * r
    inside = np.array([model.dist(p, X) < R for p in pts])
    P = pts[inside]
    ww = w[inside]
    g = boundary_bounds(model, P, X, R)
    Y = P[:, :-1] - X[:-1]
    th = np.linspace(0, np.pi, n_theta, endpoint=False)
    off = np.linspace(-R, R, n_offset)
    dth = np.pi / n_theta
    doff = off[1] - off[0]
    best = np.inf
    for t in th:
        s = Y @ np.array([-np.sin(t), np.cos(t)])
        F = np.minimum(np.abs(s[None, :] - off[:, None]), g[None, :])
        best = min(best, float(np.min(F @ ww)))
    # |f_{t,p} - f_{t',p'}| <= |Y| |t - t'| + |p - p'| with |Y| < R
    corr = float(np.sum(ww)) * (R * dth / 2 + doff / 2)
    return max(0.0, best - corr) / r ** (model.k + 3)


# ---------------------------------------------------------------------------
# distance to a vertical plane by sampling the plane

def plane_distance_bruteforce(model, a, L, rng, samples=10_000):
    """``min_{p in L x R} d(a, p)`` from sampled plane points, refined locally.

    Plane points are drawn around the orthogonal projection's neighbourhood
    in a window large enough to contain the minimiser, then the best few
    seeds are polished by Nelder-Mead in (in-plane coordinates, time).
    """
    a = np.asarray(a, dtype=float)
    m = L.m
    X, t = a[:-1], a[-1]
    S = float(np.linalg.norm(X - L.shift)) + 1.0
    T = 2.0 * (S * S + S * (np.linalg.norm(X) + np.linalg.norm(L.shift)))
    U = rng.uniform(-S, S, size=(samples, m)) + (X - L.shift) @ L.basis.T
    tau = t + rng.uniform(-T, T, size=samples)

    def dist(z):
        z = np.atleast_2d(z)
        P = L.points(z[:, :m], z[:, m])
        return model.dist(a, P)

    Z = np.column_stack([U, tau])
    d = dist(Z)
    best = float(np.min(d))
    for i in np.argsort(d)[:3]:
        res = minimize(lambda z: float(dist(z)[0]), Z[i], method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        best = min(best, float(res.fun))
    return best
