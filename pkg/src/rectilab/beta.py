"""Vertical-plane beta numbers and Carleson sums over dyadic trees.

The distance from ``(Y, s)`` to a vertical plane ``L x R`` is the Euclidean
distance from ``Y`` to ``L``, so the best plane in a ball is found by
weighted principal components of the spatial coordinates alone.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .dyadic import cubes_below
from .group import VerticalPlane
from .measures import require_scale

__all__ = [
    "PlaneFit",
    "BetaCoefficient",
    "beta_at",
    "cube_betas",
    "ur_sum",
    "URSumReport",
    "ur_growth",
    "upward_domination_filter",
    "dupcond_holds",
    "carleson_norm",
    "CarlesonResult",
    "write_coefficient_csv",
]

MIN_ATOMS = 8


@dataclass
class PlaneFit:
    plane: VerticalPlane
    rms: float
    spectrum: np.ndarray  # eigenvalues of the weighted scatter, ascending


@dataclass
class BetaCoefficient:
    center: np.ndarray
    r: float
    k: int
    value: float
    fit: PlaneFit
    mass: float
    count: int


def _segment_fits(X, w, owner, nseg, k):
    """Weighted k-plane fits for many point groups at once.

    Returns means, eigenvalues (ascending), eigenvectors and the residual
    second moments ``sum w |X - P(X)|^2`` computed by direct projection.
    """
    n = X.shape[1]
    W = np.bincount(owner, weights=w, minlength=nseg)
    mean = np.stack([np.bincount(owner, weights=w * X[:, a], minlength=nseg)
                     for a in range(n)], axis=1) / np.where(W > 0, W, 1.0)[:, None]
    D = X - mean[owner]
    S = np.zeros((nseg, n, n))
    for a in range(n):
        for b in range(a, n):
            v = np.bincount(owner, weights=w * D[:, a] * D[:, b], minlength=nseg)
            S[:, a, b] = v
            S[:, b, a] = v
    evals, evecs = np.linalg.eigh(S)
    normals = evecs[:, :, : n - k]
    P = np.einsum("an,anm->am", D, normals[owner])
    resid = np.bincount(owner, weights=w * np.sum(P * P, axis=1), minlength=nseg)
    return W, mean, evals, evecs, resid


def _beta_values(resid, W, r, k, normalization):
    if normalization == "mass":
        denom = r * r * W
    elif normalization == "scale":
        denom = r * r * r ** (k + 2)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return np.sqrt(np.maximum(resid, 0.0) / denom)


def beta_at(mu, X, r, k=None, normalization="mass", floor=4.0):
    """Vertical beta number of ``mu`` in the ball ``B(X, r)``.

    Parameters
    ----------
    mu : DiscreteMeasure
    X : array_like, shape (n+1,)
    r : float
    k : int, optional
        Plane dimension, defaults to the model's ``k``.
    normalization : {"mass", "scale"}
        Divide the second moment by ``r**2 mu(B)`` or by ``r**2 r**(k+2)``.
    floor : float
        Radii below ``floor * h`` are rejected.
    """
    require_scale(r, mu.h, floor, "beta_at")
    k = mu.model.k if k is None else int(k)
    X = np.asarray(X, dtype=float)
    idx, _ = mu.ball(X, r)
    if idx.size < MIN_ATOMS:
        raise ValueError(f"ball holds {idx.size} atoms, fewer than {MIN_ATOMS}")
    Y = mu.points[idx, :-1] - X[:-1]
    w = mu.weights[idx]
    owner = np.zeros(idx.size, dtype=np.intp)
    W, mean, evals, evecs, resid = _segment_fits(Y, w, owner, 1, k)
    value = float(_beta_values(resid, W, r, k, normalization)[0])
    n = Y.shape[1]
    basis = evecs[0][:, n - k:].T[::-1]
    plane = VerticalPlane(_orthonormal(basis), mean[0] + X[:-1])
    fit = PlaneFit(plane, float(np.sqrt(resid[0] / W[0])), evals[0])
    return BetaCoefficient(X.copy(), float(r), k, value, fit, float(W[0]), int(idx.size))


def _orthonormal(B):
    if B.shape[0] == 0:
        return B
    Q, R = np.linalg.qr(B.T)
    return (Q * np.sign(np.diag(R))).T


def cube_betas(mu, tree, A=1.0, k=None, normalization="mass", floor=4.0):
    """``beta(Z_E, A ell(E))`` for every cube of the tree, indexed by cube id."""
    k = mu.model.k if k is None else int(k)
    out = np.full(len(tree), np.nan)
    for j, ids in tree.generations.items():
        r = A * 2.0 ** j
        require_scale(r, mu.h, floor, "cube_betas")
        centers = np.array([tree.cubes[c].center for c in ids])
        ids = np.asarray(ids)
        for s, e, flat, _, off in mu.index.iter_flat(centers, r):
            counts = np.diff(off)
            if np.any(counts < MIN_ATOMS):
                raise ValueError(f"a generation-{j} ball holds fewer than {MIN_ATOMS} atoms")
            owner = np.repeat(np.arange(e - s), counts)
            Y = mu.points[flat, :-1] - centers[s + owner, :-1]
            W, _, _, _, resid = _segment_fits(Y, mu.weights[flat], owner, e - s, k)
            out[ids[s:e]] = _beta_values(resid, W, r, k, normalization)
    return out


@dataclass
class CarlesonResult:
    norm: float
    per_cube: np.ndarray  # sum over E below E0 of theta(E), divided by mu(E0)
    argmax: int


def _subtree_sums(tree, theta):
    """``sum_{E subset E0} theta(E)`` for every cube E0."""
    tot = np.asarray(theta, dtype=float).copy()
    for j in sorted(tree.generations):
        for c in tree.generations[j]:
            p = tree.cubes[c].parent
            if p >= 0:
                tot[p] += tot[c]
    return tot


def carleson_norm(tree, theta=None, family=None):
    """Carleson norm of a coefficient map or of a family of cubes.

    Parameters
    ----------
    tree : CubeTree
    theta : array_like, optional
        Non-negative coefficient per cube id.
    family : array_like of bool or ints, optional
        Indicator variant: ``theta(E) = mu(E)`` on the family, zero off it.
    """
    mass = tree.mass
    if family is not None:
        fam = np.zeros(len(tree), dtype=bool)
        family = np.asarray(family)
        if family.dtype == bool:
            fam[:] = family
        else:
            fam[family.astype(np.intp)] = True
        theta = np.where(fam, mass, 0.0)
    if theta is None:
        raise ValueError("give theta or family")
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("Carleson coefficients must be non-negative")
    per = _subtree_sums(tree, theta) / mass
    if per.size == 0:
        return CarlesonResult(0.0, per, -1)
    i = int(np.argmax(per))
    return CarlesonResult(float(per[i]), per, i)


@dataclass
class URSumReport:
    per_cube: np.ndarray
    sup: float
    betas: np.ndarray
    depth: np.ndarray  # generations from each cube down to the leaves, inclusive


def ur_sum(mu, tree, A=1.0, betas=None, **kw):
    """Dyadic square sum ``sum_{E in E0} beta(E)^2 mu(E) / mu(E0)`` per cube."""
    if A < 1:
        raise ValueError("A must be at least 1")
    if betas is None:
        betas = cube_betas(mu, tree, A, **kw)
    res = carleson_norm(tree, np.asarray(betas) ** 2 * tree.mass)
    depth = np.array([c.j - tree.bottom + 1 for c in tree.cubes])
    return URSumReport(res.per_cube, res.norm, np.asarray(betas), depth)


def ur_growth(report, tree):
    """Mean UR sum against subtree depth and its least-squares slope.

    Returns ``(depths, means, slope)``; ``means[i]`` averages the per-cube
    sums over interior cubes with ``depths[i]`` generations at or below
    them (boundary cubes are kept when a depth has no interior cube).
    """
    per = np.asarray(report.per_cube, dtype=float)
    bnd = np.array([c.boundary for c in tree.cubes], dtype=bool)
    depths, means = [], []
    for d in np.unique(report.depth):
        sel = report.depth == d
        if np.any(sel & ~bnd):
            sel &= ~bnd
        depths.append(int(d))
        means.append(float(np.mean(per[sel])))
    depths = np.array(depths)
    means = np.array(means)
    slope = float(np.polyfit(depths, means, 1)[0]) if depths.size > 1 else float("nan")
    return depths, means, slope


def upward_domination_filter(tree, betas, eps, rtol=1e-12):
    """Cubes not dominated from above.

    ``E`` is kept when every ancestor ``E'`` has
    ``beta(E')**2 <= (ell(E') / ell(E))**eps * beta(E)**2``.
    Returns a boolean mask over cube ids.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    b2 = np.asarray(betas, dtype=float) ** 2
    key = b2 * tree.ell ** (-eps)
    worst = np.full(len(tree), -np.inf)  # max key over strict ancestors
    for j in sorted(tree.generations, reverse=True):
        for c in tree.generations[j]:
            p = tree.cubes[c].parent
            if p >= 0:
                worst[c] = max(worst[p], key[p])
    return worst <= key * (1 + rtol) + 1e-300


def dupcond_holds(tree, betas, eps, E):
    """Literal check of the domination condition for one cube."""
    b2 = np.asarray(betas, dtype=float) ** 2
    ell = tree.cubes[E].ell
    for a in tree.ancestors(E):
        lhs = b2[a]
        rhs = (tree.cubes[a].ell / ell) ** eps * b2[E]
        if lhs > rhs * (1 + 1e-12) + 1e-300:
            return False
    return True


def write_coefficient_csv(path, tree, columns, model):
    """Per-cube table with id, generation, centre coordinates and extra columns.

    ``columns`` maps column names to arrays indexed by cube id.  Floats are
    written with 17 significant digits so files are reproducible byte for
    byte.
    """
    n = model.n
    head = ["cube_id", "generation", "ell", "parent", "boundary", "mass"]
    head += [f"x{i + 1}" for i in range(n)] + ["t"] + list(columns)

    def fmt(v):
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return "%.17g" % float(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(head)
        for c in tree.cubes:
            row = [c.id, c.j, c.ell, c.parent, bool(c.boundary), c.mass]
            row += list(c.center) + [columns[name][c.id] for name in columns]
            wr.writerow([fmt(v) for v in row])
