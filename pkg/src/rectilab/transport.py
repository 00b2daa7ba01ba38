"""Flat transport distance, alpha numbers and the HSDC packing test.

The flat distance between two discrete measures in ``B(X, r)`` is the
value of a finite linear program: one variable per atom inside
``B(X, 3r)``, pairwise 1-Lipschitz constraints and the bound
``|f_i| <= dist(atom i, complement of B(X, 3r))``.  A feasible vector
extends to an admissible function (McShane), so the LP value is the
discrete supremum.

Large problems are reduced in two sound ways, both of which can only
raise the returned value:

* pruning: only a nearest-neighbour plus random-pair subset of the pair
  constraints is imposed (a relaxation);
* coarsening: atoms are moved to representatives and the transport cost
  ``sum |c_i| d(i, rep_i)`` is added back.

So ``flat_distance`` is exact for small problems and an upper bound
otherwise.  A feasible lower bound is also produced by repairing the LP
solution into a 1-Lipschitz function on all atoms.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .beta import carleson_norm
from .group import VerticalPlane
from .measures import DiscreteMeasure, ModelMeasure, TimeMeasure, require_scale

__all__ = [
    "FlatResult",
    "flat_distance",
    "flat_problem",
    "write_lp",
    "AlphaEstimate",
    "alpha_m",
    "model_candidate",
    "HSDCReport",
    "hsdc_flags",
    "cube_alphas",
    "hsdc_classify",
    "BackwardADRReport",
    "backward_onesided_adr_check",
]


# ---------------------------------------------------------------------------
# flat distance

@dataclass
class FlatResult:
    """Outcome of one flat-distance LP.

    ``value`` is exact when ``exact`` is true and an upper bound otherwise;
    ``lower`` is the value of an admissible function (NaN if skipped).
    """

    value: float
    lower: float
    exact: bool
    points: np.ndarray  # LP nodes
    coef: np.ndarray  # (mu - omega) mass at each node
    bound: np.ndarray  # |f_i| <= bound_i
    edges: np.ndarray  # (E, 2) constrained pairs
    lengths: np.ndarray  # pair distances
    f: np.ndarray  # optimal LP vector
    correction: float = 0.0  # coarsening transport cost included in value
    info: dict = field(default_factory=dict)


def _boundary_bound(pts, X, R, model):
    """Distance from each atom to the complement of ``B(X, R)``."""
    if model.kind == "parabolic":
        dX = np.sqrt(np.sum((pts[:, :-1] - X[:-1]) ** 2, axis=1))
        dt = np.abs(pts[:, -1] - X[-1])
        return np.maximum(0.0, np.sqrt(np.maximum(R * R - dt, 0.0)) - dX)
    # quasi-metric: the triangle-inequality bound
    return np.maximum(0.0, R - model.dist(pts, X))


def _merge(pts, coef, tol):
    """Sum coefficients of atoms closer than ``tol``; drop cancelled ones."""
    if pts.shape[0] == 0:
        return pts, coef
    scale = max(float(np.max(np.abs(coef))), 1e-300)
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    if pairs.size:
        n = pts.shape[0]
        g = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, lab = connected_components(g, directed=False)
        first = np.full(lab.max() + 1, n, dtype=np.intp)
        np.minimum.at(first, lab, np.arange(n))
        coef = np.bincount(lab, weights=coef)
        pts = pts[first]
    keep = np.abs(coef) > 1e-12 * scale
    return pts[keep], coef[keep]


def _pairs_dense(n):
    i, j = np.triu_indices(n, 1)
    return np.column_stack([i, j])


def _pairs_pruned(pts, model, knn, extra, rng):
    n = pts.shape[0]
    q = min(n, knn + 1)
    # the Euclidean prefilter is only a heuristic for which pairs to keep
    scaled = pts.copy()
    scaled[:, -1] = np.sign(scaled[:, -1]) * np.sqrt(np.abs(scaled[:, -1]))
    _, nb = cKDTree(scaled).query(scaled, k=q)
    nb = np.atleast_2d(nb)
    a = np.repeat(np.arange(n), q)
    b = nb.reshape(-1)
    ra = rng.integers(0, n, size=extra * n)
    rb = rng.integers(0, n, size=extra * n)
    a = np.concatenate([a, ra])
    b = np.concatenate([b, rb])
    keep = a != b
    e = np.sort(np.column_stack([a[keep], b[keep]]), axis=1)
    return np.unique(e, axis=0)


def _solve(coef, bound, edges, lengths):
    n = coef.size
    m = edges.shape[0]
    rows = np.repeat(np.arange(2 * m), 2)
    cols = np.column_stack([edges, edges]).reshape(-1)
    vals = np.tile([1.0, -1.0, -1.0, 1.0], m)
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * m, n)) if m else None
    b = np.repeat(lengths, 2) if m else None
    res = linprog(-coef, A_ub=A, b_ub=b, bounds=np.column_stack([-bound, bound]),
                  method="highs")
    if res.status != 0:
        raise RuntimeError(f"flat-distance LP failed: {res.message}")
    return float(-res.fun), np.asarray(res.x)


def _repair(f, nodes, targets, t_bound, model, chunk=256):
    """Values at ``targets`` of the McShane extension of ``f`` from ``nodes``,
    clipped to the boundary bound.  The result is 1-Lipschitz."""
    out = np.empty(targets.shape[0])
    for s in range(0, targets.shape[0], chunk):
        D = model.pairwise(targets[s:s + chunk], nodes)
        up = np.min(f[None, :] + D, axis=1)
        out[s:s + chunk] = up
    return np.clip(out, -t_bound, t_bound)


def _collect(mu, omega, X, R):
    parts, coefs = [], []
    for meas, sign in ((mu, 1.0), (omega, -1.0)):
        if meas is None or len(meas) == 0:
            continue
        idx, _ = meas.ball(X, R)
        parts.append(meas.points[idx])
        coefs.append(sign * meas.weights[idx])
    if not parts:
        return np.zeros((0, X.size)), np.zeros(0)
    return np.concatenate(parts), np.concatenate(coefs)


def flat_problem(mu, omega, X, r, *, dense_limit=600, budget=2000, knn=12,
                 extra_pairs=4, seed=0, lower=True, merge_tol=1e-9):
    """Solve the flat-distance LP between ``mu`` and ``omega`` for ``B(X, r)``.

    Parameters
    ----------
    mu, omega : DiscreteMeasure
        Same group model; ``omega`` may be ``None`` (the zero measure).
    X : array_like, shape (n+1,)
    r : float
        Ball radius; test functions are supported in ``B(X, 3r)``.
    dense_limit : int
        Above this many nodes only a pruned pair set is constrained.
    budget : int
        Above this many nodes atoms are coarsened to representatives.
    lower : bool
        Also compute an admissible lower bound.

    Returns
    -------
    FlatResult
    """
    model = mu.model
    X = model.check(np.asarray(X, dtype=float))
    R = 3.0 * float(r)
    pts, coef = _collect(mu, omega, X, R)
    pts, coef = _merge(pts, coef, merge_tol * max(r, 1e-300))
    g = _boundary_bound(pts, X, R, model)
    live = g > 0
    pts, coef, g = pts[live], coef[live], g[live]
    full_pts, full_coef, full_g = pts, coef, g
    empty = np.zeros((0, 2), dtype=np.intp)
    if pts.shape[0] == 0:
        return FlatResult(0.0, 0.0, True, pts, coef, g, empty, np.zeros(0), np.zeros(0))
    exact = True
    correction = 0.0
    info = {"atoms": int(pts.shape[0])}
    if pts.shape[0] > budget:
        pts, coef, correction = _coarsen(pts, coef, model, budget, r)
        g = _boundary_bound(pts, X, R, model)
        exact = False
        info["coarsened_to"] = int(pts.shape[0])
    n = pts.shape[0]
    if n <= dense_limit:
        edges = _pairs_dense(n)
    else:
        edges = _pairs_pruned(pts, model, knn, extra_pairs, np.random.default_rng(seed))
        exact = False
        info["pruned"] = True
    lengths = model.dist(pts[edges[:, 0]], pts[edges[:, 1]]) if len(edges) else np.zeros(0)
    # |f_i - f_j| <= g_i + g_j already follows from the bounds
    need = lengths < g[edges[:, 0]] + g[edges[:, 1]] if len(edges) else np.zeros(0, bool)
    edges, lengths = edges[need], lengths[need]
    value, f = _solve(coef, g, edges, lengths)
    value = max(value, 0.0)
    lo = value
    if not exact:
        lo = np.nan
        if lower and full_pts.shape[0] * n <= 4e7:
            F = _repair(f, pts, full_pts, full_g, model)
            lo = max(0.0, float(np.dot(full_coef, F)))
    return FlatResult(value + correction, lo, exact, pts, coef, g, edges, lengths, f,
                      correction, info)


def _coarsen(pts, coef, model, budget, r):
    """Move atoms to one representative per grid cell, at most ``budget`` cells.

    Cells are ``s``-boxes in space times ``s**2`` intervals in time, with
    ``s`` doubled from ``r / 64`` until few enough cells are occupied.  The
    representative is the cell's lowest-index atom.  Returns the merged
    nodes, their coefficients and the transport cost of the move.
    """
    s = r / 64.0
    while True:
        key = np.floor(pts[:, :-1] / s).astype(np.int64)
        kt = np.floor(pts[:, -1] / (s * s)).astype(np.int64)
        cells, inv = np.unique(np.column_stack([key, kt]), axis=0, return_inverse=True)
        if cells.shape[0] <= budget:
            break
        s *= 2.0
    inv = inv.reshape(-1)
    rep = np.full(cells.shape[0], pts.shape[0], dtype=np.intp)
    np.minimum.at(rep, inv, np.arange(pts.shape[0]))
    d = model.dist(pts, pts[rep[inv]])
    correction = float(np.sum(np.abs(coef) * d))
    c = np.bincount(inv, weights=coef, minlength=cells.shape[0])
    keep = c != 0
    return pts[rep][keep], c[keep], correction


def flat_distance(mu, omega, X, r, **kw):
    """Flat (bounded-Lipschitz) distance of ``mu`` and ``omega`` in ``B(X, r)``.

    Exact up to LP tolerance below the pruning limit, an upper bound above
    it; see :func:`flat_problem` for the options.
    """
    return flat_problem(mu, omega, X, r, **kw).value


def write_lp(path, res):
    """Dump an LP instance as plain text.

    Lines: ``maximize`` objective coefficients, one ``bound i g_i`` line per
    variable and one ``pair i j d_ij`` line per constrained pair
    (``|f_i - f_j| <= d_ij``).
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# flat-distance LP: {res.coef.size} variables, {len(res.edges)} pairs\n")
        fh.write("maximize " + " ".join("%.17g" % c for c in res.coef) + "\n")
        for i, b in enumerate(res.bound):
            fh.write("bound %d %.17g\n" % (i, b))
        for (i, j), d in zip(res.edges, res.lengths):
            fh.write("pair %d %d %.17g\n" % (i, j, d))


# ---------------------------------------------------------------------------
# alpha numbers

@dataclass
class AlphaEstimate:
    """Certified upper bound for ``alpha_m`` at one ball.

    ``omega`` is the discrete candidate that achieves ``value``; feeding it
    back into :func:`flat_distance` reproduces ``value * r**(k+3)`` minus the
    logged quadrature term (zero unless the candidate lattice was coarsened).
    """

    m: int
    value: float
    center: np.ndarray
    r: float
    candidate: ModelMeasure = None
    omega: DiscreteMeasure = None
    log: list = field(default_factory=list)
    lp_lower: float = np.nan  # admissible-function value for the best candidate
    certified: bool = False  # value is a certified lower bound, see ``certify_above``

    @property
    def infinite(self):
        return not np.isfinite(self.value)


def _weighted_frame(Y, w):
    W = np.sum(w)
    mean = (w @ Y) / W
    D = Y - mean
    S = (D * w[:, None]).T @ D
    evals, evecs = np.linalg.eigh(S)
    return mean, evals[::-1], evecs[:, ::-1].T


def _lattice_frame(coords, h, tol=1e-6):
    """In-plane orthonormal frame in which ``coords`` sit on ``h Z^m``.

    Tries the given frame first, then frames built from difference vectors
    of length ``h``.  Returns a rotation matrix or ``None``.
    """
    m = coords.shape[1]
    if m == 0 or coords.shape[0] < 2:
        return np.eye(m)

    def fits(Rm):
        z = (coords - coords[0]) @ Rm.T / h
        return np.max(np.abs(z - np.round(z))) < tol

    if fits(np.eye(m)):
        return np.eye(m)
    d = coords - coords[0]
    ln = np.sqrt(np.sum(d * d, axis=1))
    near = np.flatnonzero(np.abs(ln - h) < 1e-6 * h)
    if near.size == 0:
        return None
    vecs = []
    for i in near:
        v = d[i] / h
        if not vecs or np.linalg.matrix_rank(np.vstack(vecs + [v]), tol=1e-6) > len(vecs):
            vecs.append(v)
        if len(vecs) == m:
            break
    if len(vecs) < m:
        return None
    Rm = np.vstack(vecs)
    if np.max(np.abs(Rm @ Rm.T - np.eye(m))) > 1e-6:
        return None
    # nearest orthogonal matrix, so the frame is orthonormal to rounding
    U, _, Vt = np.linalg.svd(Rm)
    Rm = U @ Vt
    return Rm if fits(Rm) else None


def _bins(t, w, pitch):
    """Time bins of width ``pitch`` anchored at the first atom."""
    lab = np.floor((t - t.min()) / pitch + 0.5).astype(np.int64)
    uniq, inv = np.unique(lab, return_inverse=True)
    mass = np.bincount(inv, weights=w)
    tm = np.bincount(inv, weights=w * t) / mass
    return tm, mass, inv


def _plane_nodes(basis, anchor, center, R, pitch):
    """Lattice ``anchor + pitch Z^m`` along ``basis`` within ``R`` of ``center``."""
    m = basis.shape[0]
    if m == 0:
        return anchor[None, :].copy()
    c0 = np.round((center - anchor) @ basis.T / pitch)
    num = int(np.ceil(R / pitch)) + 1
    ax = np.arange(-num, num + 1, dtype=float)
    grids = np.meshgrid(*([ax] * m), indexing="ij")
    U = (np.column_stack([g.reshape(-1) for g in grids]) + c0) * pitch
    Xs = anchor + U @ basis
    return Xs[np.sqrt(np.sum((Xs - center) ** 2, axis=1)) < R]


def _snap(mu, P, rel=1e-9):
    """Replace points within ``rel * h`` of an atom of ``mu`` by that atom.

    Candidate lattices are built through several group operations and
    differ from coincident sample atoms by rounding only; snapping makes
    the membership tests (box, ball) agree exactly.
    """
    d, i = mu.kdtree.query(P, distance_upper_bound=rel * mu.h)
    hit = np.isfinite(d)
    if np.any(hit):
        P = P.copy()
        P[hit] = mu.points[i[hit]]
    return P, hit


def _box_nodes(mu, base, Xs):
    """Drop local plane nodes whose spatial position misses the box.

    Left translation by ``base`` shifts spatial coordinates additively, so
    the spatial footprint of the box decides membership for every time.
    """
    box = mu.box
    if box is None or Xs.shape[0] == 0:
        return Xs
    dX = Xs + base[:-1] - box.center[:-1]
    if box.kind in ("ball", "cylinder"):
        g = np.sqrt(np.sum(dX * dX, axis=1))
    else:
        g = np.max(np.abs(dX), axis=1)
    return Xs[g < box.radius + 1e-9 * mu.h]


def _in_box(mu, P, hit, rel=1e-9):
    """Box membership robust to rounding: snapped atoms are in, other
    points must clear the boundary by ``rel * h``."""
    if mu.box is None:
        return np.ones(P.shape[0], dtype=bool)
    box = mu.box
    ok = box.gauge(P, mu.model) < box.radius - rel * mu.h
    if box.kind == "slab":
        lo, hi = box.interval
        ok &= (P[:, -1] >= lo + rel * mu.h**2) & (P[:, -1] < hi - rel * mu.h**2)
    return ok | hit


def model_candidate(mu, X, r, base, basis, anchor, time_atoms, time_weights,
                    max_atoms=400_000):
    """Discrete member of ``M_m`` restricted to ``B(X, 3r)``.

    In local coordinates the candidate is ``H^m|_L x nu`` with ``L`` the
    span of ``basis`` through the origin, sampled at nodes
    ``anchor + h Z^m`` (weight ``h**m``) times the time atoms; it is then
    left translated by ``base``.  If the product would exceed
    ``max_atoms`` atoms the lattice pitch doubles.  Atoms outside
    ``mu.box`` are dropped so windowed samples compare like with like.

    Returns ``(omega, quadrature)`` where ``quadrature`` bounds the flat
    distance between the pitch-``h`` candidate and the coarser one actually
    built (zero when no coarsening was needed).
    """
    model = mu.model
    h = mu.h
    m = basis.shape[0]
    R = 3.0 * r
    X = np.asarray(X, dtype=float)
    base = np.asarray(base, dtype=float)
    center = model.compose(-base, X)[:-1]
    pitch = h
    while True:
        Xs = _box_nodes(mu, base, _plane_nodes(basis, anchor, center, R, pitch))
        if m == 0 or Xs.shape[0] * time_atoms.size <= max_atoms:
            break
        pitch *= 2.0
    tw = time_weights * (pitch / h) ** m
    P = np.column_stack([np.repeat(Xs, time_atoms.size, axis=0),
                         np.tile(time_atoms, Xs.shape[0])])
    W = np.tile(tw, Xs.shape[0]) * h ** m
    P, hit = _snap(mu, model.compose(base, P))
    keep = (model.dist(P, X) < R) & _in_box(mu, P, hit)
    omega = DiscreteMeasure(P[keep], W[keep], h, model, mu.box,
                            {"generator": "model_candidate", "m": m, "pitch": pitch})
    quad = 0.0
    if pitch != h:
        # every pitch-h node lies within half a coarse cell of its representative
        quad = float(np.sum(W[keep])) * 0.5 * pitch * np.sqrt(m)
    return omega, quad


def _plane_mass_at_times(mu, X, r, base, basis, anchor, times):
    """Plane mass (node count times ``h**m``) inside ``B(X, 3r)`` and the
    sampling box at each time atom."""
    model = mu.model
    h = mu.h
    R = 3.0 * r
    center = model.compose(-np.asarray(base, dtype=float), X)[:-1]
    Xs = _box_nodes(mu, base, _plane_nodes(basis, anchor, center, R, h))
    out = np.zeros(times.size)
    chunk = max(1, 200_000 // max(1, Xs.shape[0]))
    for s in range(0, times.size, chunk):
        tt = times[s:s + chunk]
        P = np.column_stack([np.repeat(Xs, tt.size, axis=0), np.tile(tt, Xs.shape[0])])
        P, hit = _snap(mu, model.compose(base, P))
        ok = (model.dist(P, X) < R) & _in_box(mu, P, hit)
        out[s:s + chunk] = np.bincount(np.tile(np.arange(tt.size), Xs.shape[0]),
                                       weights=ok.astype(float), minlength=tt.size)
    return out * h ** basis.shape[0]


def alpha_m(mu, X, r, m, *, floor=4.0, fan=0, fan_angle=0.1, mass_scales=(1.0,),
            normalization="lip", seed=0, lp=None, certify_above=None):
    """Upper bound for ``alpha_m`` of ``mu`` in ``B(X, r)``.

    Candidates are translates of ``H^m|_L x nu``: ``L`` is spanned by the
    top-``m`` principal directions of ``mu`` in ``B(X, 3r)`` through the
    weighted spatial barycentre (plus ``fan`` random tilts of size
    ``fan_angle``), and ``nu`` is the time marginal of ``mu`` in that ball,
    binned at pitch ``h**2`` and divided by the plane mass sampled at the
    same times.  Each candidate's flat distance divided by ``r**(k+3)`` is
    an upper bound; the smallest wins.

    ``normalization="intro"`` uses test functions with Lipschitz constant
    ``1/r`` and the prefactor ``1/r**(n+1)`` instead.

    For ``m > n`` no plane exists and the value is ``+inf``.

    With ``certify_above`` (parabolic models), a candidate whose
    separation lower bound already exceeds it skips the LP; if such a
    candidate ends up the smallest, ``value`` is that certified lower bound
    and ``certified`` is set.  Either way ``value > certify_above`` holds
    exactly when the full computation would give it.
    """
    model = mu.model
    require_scale(r, mu.h, floor, "alpha_m")
    X = model.check(np.asarray(X, dtype=float))
    k, n = model.k, model.n
    m = int(m)
    if m < 0:
        raise ValueError("m must be non-negative")
    if normalization == "lip":
        denom = r ** (k + 3)
    elif normalization == "intro":
        denom = r * r ** (n + 1)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    if m > n:
        return AlphaEstimate(m, np.inf, X.copy(), float(r), log=[{"reason": "m > n"}])
    lp = dict(lp or {})
    R = 3.0 * r
    idx, _ = mu.ball(X, R)
    if idx.size == 0:
        raise ValueError("empty ball")
    # coordinates centred at X
    Y = model.compose(-X, mu.points[idx])
    w = mu.weights[idx]
    mean, _, evecs = _weighted_frame(Y[:, :-1], w)
    planes = [evecs[:m]]
    rng = np.random.default_rng(seed)
    for _ in range(int(fan)):
        B = evecs[:m] + fan_angle * rng.standard_normal((m, n))
        Q, _ = np.linalg.qr(B.T)
        planes.append(Q[:, :m].T)
    h = mu.h
    best = None
    log = []
    for pi, B in enumerate(planes):
        # move the plane through the origin: translate by (-mean, 0)
        g = np.append(-mean, 0.0)
        Z = model.compose(g, Y)
        c = Z[:, :-1] @ B.T if m else np.zeros((Z.shape[0], 0))
        # anchor: projection of the atom nearest the ball centre
        a0 = int(np.argmin(model.norm(Y)))
        Rm = _lattice_frame(np.round(c, 12), h) if m else np.eye(0)
        Bf = (Rm @ B) if (m and Rm is not None) else B
        anchor_c = Z[a0, :-1] @ Bf.T if m else np.zeros(0)
        anchor = anchor_c @ Bf if m else np.zeros(n)
        # time marginal within the ball, per unit plane mass at each time
        tm, tmass, inv = _bins(Z[:, -1], w, h * h)
        base = model.compose(X, np.append(mean, 0.0))
        plane_mass = _plane_mass_at_times(mu, X, r, base, Bf, anchor, tm)
        ok = plane_mass > 0
        nu0 = np.where(ok, tmass / np.where(ok, plane_mass, 1.0), 0.0)
        for s in mass_scales:
            nu_w = nu0 * s
            sel = nu_w > 0
            if not np.any(sel):
                continue
            omega, quad = model_candidate(mu, X, r, base, Bf, anchor, tm[sel], nu_w[sel])
            if len(omega) == 0:
                continue
            cand = ModelMeasure(VerticalPlane(Bf, np.zeros(n)),
                                TimeMeasure.custom(tm[sel], nu_w[sel]), base)
            if certify_above is not None and model.kind == "parabolic":
                low = _separation_lower(mu, omega, X, R) / denom
                if low > certify_above:
                    log.append({"plane": pi, "scale": float(s), "value": low,
                                "certified": True, "atoms": len(omega)})
                    if best is None or low < best[0]:
                        best = (low, cand, omega, low, True)
                    continue
            res = flat_problem(mu, omega, X, r, seed=seed, **lp)
            val = (res.value + quad) / denom
            lowv = res.lower / denom if np.isfinite(res.lower) else np.nan
            log.append({"plane": pi, "scale": float(s), "value": val,
                        "exact_lp": res.exact, "quadrature": quad / denom,
                        "atoms": len(omega)})
            if best is None or val < best[0]:
                best = (val, cand, omega, lowv, False)
    if best is None:
        return AlphaEstimate(m, np.inf, X.copy(), float(r), log=log)
    return AlphaEstimate(m, best[0], X.copy(), float(r), best[1], best[2], log, best[3],
                         best[4])


def _separation_lower(mu, omega, X, R):
    """``sum omega * min(dist_x(., S), dist(., complement of B(X, R)))``.

    ``S`` holds the spatial parts of the atoms of ``mu`` in the ball and
    ``dist_x`` is spatial distance.  Both terms are 1-Lipschitz for the
    parabolic metric, the function vanishes on ``mu`` inside the ball and
    outside the ball, so the sum bounds the flat distance from below.
    """
    g = _boundary_bound(omega.points, X, R, mu.model)
    inside = g > 0
    if not np.any(inside):
        return 0.0
    idx, _ = mu.ball(X, R)
    if idx.size:
        d, _ = cKDTree(mu.points[idx, :-1]).query(omega.points[inside, :-1])
    else:
        d = np.inf
    return float(np.sum(omega.weights[inside] * np.minimum(d, g[inside])))


# ---------------------------------------------------------------------------
# HSDC

@dataclass
class HSDCReport:
    """Per-cube HSDC flags and the packing sums of the flagged family.

    ``alpha1[E]`` and ``alpha2[E]`` are the upper bounds for ``alpha_{k+1}``
    at ``B(Z_E, M1 ell)`` and ``alpha_{k+2}`` at ``B(Z_E, M2 ell)``, or
    certified lower bounds when those exceed ``lam``; NaN means not
    computed because the other test already decided the flag.
    """

    lam: float
    M1: float
    M2: float
    alpha1: np.ndarray
    alpha2: np.ndarray
    flags: np.ndarray
    packing: np.ndarray  # per cube: sum of flagged masses below, over its mass
    roots: list

    @property
    def sup(self):
        return float(np.max(self.packing, initial=0.0))

    def root_packing(self):
        return {int(r): float(self.packing[r]) for r in self.roots}


def hsdc_flags(alpha1, alpha2, lam):
    """``alpha_{k+1} < lam`` or ``alpha_{k+2} <= lam`` (NaN counts as no)."""
    a1 = np.asarray(alpha1, dtype=float)
    a2 = np.asarray(alpha2, dtype=float)
    with np.errstate(invalid="ignore"):
        return (a1 < lam) | (a2 <= lam)


def _alpha_task(args):
    mu, X, r, m, kw = args
    return alpha_m(mu, X, r, m, **kw).value


def cube_alphas(mu, tree, m, M=1.0, ids=None, jobs=1, **kw):
    """``alpha_m(Z_E, M ell(E))`` for the listed cubes (all by default)."""
    ids = list(range(len(tree))) if ids is None else list(ids)
    tasks = [(mu, tree.cubes[i].center, M * tree.cubes[i].ell, m, kw) for i in ids]
    if jobs and jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            vals = list(ex.map(_alpha_task, tasks, chunksize=8))
    else:
        vals = [_alpha_task(t) for t in tasks]
    out = np.full(len(tree), np.nan)
    out[ids] = vals
    return out


def hsdc_classify(mu, tree, lam, M1=1.0, M2=1.0, alpha1=None, alpha2=None,
                  lazy=True, certify=True, jobs=1, **alpha_kw):
    """Flag the lam-HSDC cubes and pack them.

    A cube is flagged when ``alpha_{k+1}(Z_E, M1 ell) < lam`` or
    ``alpha_{k+2}(Z_E, M2 ell) <= lam``.  Precomputed alpha tables can be
    passed in; otherwise they are computed, and with ``lazy`` the second
    number is only computed for cubes the first test did not flag.  With
    ``certify`` a cube whose cheap lower bound already exceeds ``lam``
    skips the LP; its table entry is then that lower bound, which decides
    the flag the same way.
    """
    k = mu.model.k
    if certify:
        alpha_kw = dict(alpha_kw, certify_above=float(lam))
    if alpha1 is None:
        alpha1 = cube_alphas(mu, tree, k + 1, M1, jobs=jobs, **alpha_kw)
    alpha1 = np.asarray(alpha1, dtype=float)
    if alpha2 is None:
        need = np.arange(len(tree))
        if lazy:
            need = np.flatnonzero(~(alpha1 < lam))
        alpha2 = np.full(len(tree), np.nan)
        if k + 2 > mu.model.n:
            alpha2[need] = np.inf
        elif need.size:
            alpha2 = cube_alphas(mu, tree, k + 2, M2, ids=need, jobs=jobs, **alpha_kw)
    alpha2 = np.asarray(alpha2, dtype=float)
    flags = hsdc_flags(alpha1, alpha2, lam)
    res = carleson_norm(tree, family=flags)
    return HSDCReport(float(lam), float(M1), float(M2), alpha1, alpha2, flags,
                      res.per_cube, list(tree.roots))


# ---------------------------------------------------------------------------
# backward one-sided regularity

@dataclass
class BackwardADRReport:
    """Backward half-ball masses against ``r**(k+2)``.

    ``table`` rows: (centre index, r, full mass, backward mass).  ``C_back``
    is the smallest ``mu(B_-) / r**(k+2)``, ``C_ref`` the largest full-ball
    ratio; the check passes iff ``C_back >= C_ref / C0**2``.  ``slope`` is
    the least-squares exponent of the smallest backward mass per scale
    against ``r``, reported next to ``k + 1`` and ``k + 2``.
    """

    C_back: float
    C_ref: float
    passed: bool
    slope: float
    exponents: tuple
    table: np.ndarray
    worst: tuple


def backward_onesided_adr_check(mu, scales, centers, C0=4.0, floor=4.0):
    """Mass of ``B(X, r)_- = {(Y, s) in B(X, r) : s <= t}`` at sampled centres."""
    k = mu.model.k
    d = k + 2
    scales = [float(r) for r in scales]
    for r in scales:
        require_scale(r, mu.h, floor, "backward_onesided_adr_check")
    centers = np.asarray(centers, dtype=np.intp).reshape(-1)
    rows = []
    for r in scales:
        flat, _, off = mu.index.query_flat(mu.points[centers], r)
        owner = np.repeat(np.arange(centers.size), np.diff(off))
        w = mu.weights[flat]
        back = mu.points[flat, -1] <= mu.points[centers[owner], -1]
        full_m = np.bincount(owner, weights=w, minlength=centers.size)
        back_m = np.bincount(owner, weights=w * back, minlength=centers.size)
        rows.extend(zip(centers, np.full(centers.size, r), full_m, back_m))
    table = np.array(rows, dtype=float).reshape(-1, 4)
    rr = table[:, 1]
    back_ratio = table[:, 3] / rr**d
    C_back = float(np.min(back_ratio))
    C_ref = float(np.max(table[:, 2] / rr**d))
    i = int(np.argmin(back_ratio))
    mins = np.array([np.min(table[table[:, 1] == r, 3]) for r in scales])
    slope = np.nan
    if len(scales) > 1 and np.all(mins > 0):
        slope = float(np.polyfit(np.log(scales), np.log(mins), 1)[0])
    return BackwardADRReport(C_back, C_ref, bool(C_back >= C_ref / C0**2), slope,
                             (k + 1, k + 2), table, (int(table[i, 0]), float(table[i, 1])))
