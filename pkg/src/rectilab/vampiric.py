"""Empirical checks of the vampiric symmetry laws.

A measure is vampiric when every spatially odd Lipschitz convolution
vanishes on its support.  The checks here measure how far a sample is
from that: odd-convolution residuals, support membership of reflected
points, mass equalities of reflected cylinders and slabs, and the
structure of time slices.  Membership is judged against ``2h``, the
nearest-atom distance on an ``h`` mesh.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .czo import _scaled, _support_radius, convolve, default_family
from .group import Region
from .measures import interior_mask, require_scale

__all__ = [
    "VampiricTestResult",
    "vampiric_residual",
    "ReflectionReport",
    "parabolic_reflection_check",
    "heisenberg_sigma",
    "heisenberg_sigma_check",
    "lattice_closure_check",
    "SliceStructure",
    "slice_structure",
    "trichotomy_report",
]


@dataclass
class VampiricTestResult:
    """Largest odd-convolution residual over the evaluated atoms.

    Residuals are relative: ``|phi * mu(X)| / sum_i |phi(X_i^{-1} X)| w_i``,
    which is scale free and 0 for exactly symmetric samples.
    """

    max_residual: float
    location: int  # atom index of the worst residual
    per_function: dict
    h: float
    tolerance: float
    passed: bool
    residuals: np.ndarray  # (F, evaluated atoms)
    atoms: np.ndarray


def _abs_convolve(phi, mu, targets, lam, dilation):
    """``sum_i |phi_lam(X_i^{-1} Y)| w_i`` (the residual's natural scale)."""
    model = mu.model
    out = np.zeros(targets.shape[0])
    for s, e, flat, _, off in mu.index.iter_flat(targets, _support_radius(phi.support, lam, dilation)):
        owner = np.repeat(np.arange(e - s), np.diff(off))
        Z = _scaled(model.compose(model.inverse(mu.points[flat]), targets[s + owner]), lam, dilation)
        v = np.sqrt(np.sum(phi(Z, model) ** 2, axis=1)) * mu.weights[flat]
        out[s:e] = np.bincount(owner, weights=v, minlength=e - s)
    return out


def vampiric_residual(mu, family=None, lam=1.0, at=None, tol=None, floor=4.0,
                      sample=None, seed=0, dilation="anisotropic"):
    """Odd-convolution residuals of ``mu`` at its own atoms.

    Parameters
    ----------
    family : list of OddTestFunction, optional
        Defaults to :func:`czo.default_family`.
    lam : float
        Dilation applied to every test function.
    at : array_like of int, optional
        Atoms to evaluate; defaults to atoms whose test-function support
        stays inside the sampling box.
    tol : float, optional
        Verdict threshold; defaults to ``h / (lam * smallest radius)``.
    sample : int, optional
        Evaluate a seeded random subset of this size.
    """
    family = default_family() if family is None else list(family)
    rmin = min(p.support for p in family) * lam
    rmax = _support_radius(max(p.support for p in family), lam, dilation)
    require_scale(rmin, mu.h, floor, "vampiric_residual")
    if at is None:
        at = np.flatnonzero(interior_mask(mu, rmax))
    at = np.asarray(at, dtype=np.intp)
    if sample is not None and at.size > sample:
        at = np.sort(np.random.default_rng(seed).choice(at, sample, replace=False))
    if at.size == 0:
        raise ValueError("no atoms to evaluate")
    T = mu.points[at]
    res = np.zeros((len(family), at.size))
    per = {}
    for fi, phi in enumerate(family):
        c = convolve(phi, mu, T, lam, dilation)
        scale = _abs_convolve(phi, mu, T, lam, dilation)
        res[fi] = np.sqrt(np.sum(c * c, axis=1)) / np.where(scale > 0, scale, 1.0)
        per[phi.name] = float(np.max(res[fi]))
    flat = np.max(res, axis=0)
    i = int(np.argmax(flat))
    tol = mu.h / rmin if tol is None else float(tol)
    worst = float(flat[i])
    return VampiricTestResult(worst, int(at[i]), per, mu.h, tol, worst <= tol, res, at)


# ---------------------------------------------------------------------------
# reflections

@dataclass
class ReflectionReport:
    """Support-membership distances and relative mass discrepancies.

    ``membership`` rows: (i, j, l, distance to the nearest atom);
    ``masses`` rows: (i, j, l, r, reference mass, reflected mass,
    relative discrepancy).  Out-of-box reflections are counted, not
    judged.  ``slack`` is the tolerance discrepancies are judged against.
    """

    membership: np.ndarray
    masses: np.ndarray
    out_of_box: int
    member_tol: float
    slack: float
    extra: dict = field(default_factory=dict)

    @property
    def max_membership(self):
        return float(np.max(self.membership[:, -1], initial=0.0))

    @property
    def max_discrepancy(self):
        return float(np.max(self.masses[:, -1], initial=0.0))

    @property
    def passed(self):
        return self.max_membership <= self.member_tol and self.max_discrepancy <= self.slack


def _region_mass(mu, region):
    """Mass of ``mu`` in a region (cube/cylinder/slab) by direct filtering."""
    return float(np.sum(mu.weights[region.contains(mu.points, mu.model)]))


def _inside_box(mu, pts, margin):
    if mu.box is None:
        return np.ones(pts.shape[0], dtype=bool)
    return interior_mask(mu.replace(points=pts, weights=np.ones(pts.shape[0])), margin)


def _sample_pairs(mu, count, seed, margin, radius=None):
    """Seeded pairs of interior atoms; with ``radius`` the second atom is a
    random support point within that distance of the first."""
    inner = np.flatnonzero(interior_mask(mu, margin))
    if inner.size < 2:
        raise ValueError("too few interior atoms to sample pairs")
    rng = np.random.default_rng(seed)
    a = rng.choice(inner, count)
    if radius is None:
        b = rng.choice(inner, count)
    else:
        flat, _, off = mu.index.query_flat(mu.points[a], radius)
        cnt = np.diff(off)
        b = flat[off[:-1] + (rng.random(count) * cnt).astype(np.intp)]
    keep = a != b
    return np.column_stack([a[keep], b[keep]])


def parabolic_reflection_check(mu, pairs=None, r_grid=(1.0,), ls=(-2, -1, 1, 2),
                               n_pairs=32, seed=0, slack=0.1, member_tol=None,
                               pair_radius=None, max_offset=None):
    """Reflections ``(X + 2l(Y - X), t)`` of sampled support pairs.

    For each pair ``(X, t), (Y, s)`` and each ``l``: the distance of the
    reflected point to the support, the cylinder masses
    ``mu(C_r(X + 2l(Y-X), t))`` against ``mu(C_r(X, t))``, and the slab
    masses ``mu(Q_r(X + 2l(Y-X)) x I)`` against ``mu(Q_r(Y) x I)`` for
    ``I = (s - r**2, s + r**2)``.  Sampled pairs are interior atoms,
    the second within ``pair_radius`` of the first when given.
    """
    if mu.model.kind != "parabolic":
        raise ValueError("parabolic model required")
    rmax = max(r_grid)
    member_tol = 2 * mu.h if member_tol is None else member_tol
    if pairs is None:
        pairs = _sample_pairs(mu, n_pairs, seed, rmax, pair_radius)
    pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    memb, mass_rows, slab_rows = [], [], []
    out = 0
    for i, j in pairs:
        X, Y = mu.points[i], mu.points[j]
        dZ = Y[:-1] - X[:-1]
        if max_offset is not None and 2 * max(abs(l) for l in ls) * np.linalg.norm(dZ) > max_offset:
            continue
        for l in ls:
            P = X.copy()
            P[:-1] = X[:-1] + 2 * l * dZ
            if not _inside_box(mu, P[None, :], rmax)[0]:
                out += 1
                continue
            _, dn = mu.index.nearest(P[None, :], mu.h)
            memb.append((i, j, l, dn[0]))
            for r in r_grid:
                ref = _region_mass(mu, Region.cylinder(X, r))
                new = _region_mass(mu, Region.cylinder(P, r))
                mass_rows.append((i, j, l, r, ref, new, abs(new - ref) / max(ref, 1e-300)))
                I = (Y[-1] - r * r, Y[-1] + r * r)
                ref = _region_mass(mu, Region.slab(Y[:-1], r, I))
                new = _region_mass(mu, Region.slab(P[:-1], r, I))
                slab_rows.append((i, j, l, r, ref, new, abs(new - ref) / max(ref, 1e-300)))
    membership = np.array(memb, dtype=float).reshape(-1, 4)
    masses = np.array(mass_rows + slab_rows, dtype=float).reshape(-1, 7)
    rep = ReflectionReport(membership, masses, out, member_tol, slack)
    cyl = np.array(mass_rows, dtype=float).reshape(-1, 7)
    slb = np.array(slab_rows, dtype=float).reshape(-1, 7)
    rep.extra = {"cylinder_max": float(np.max(cyl[:, -1], initial=0.0)),
                 "slab_max": float(np.max(slb[:, -1], initial=0.0))}
    return rep


def heisenberg_sigma(X, Y):
    """``Sigma_X(Y) = (2X - Y, t_Y + X_2 Y_1 - Y_2 X_1)``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    out = np.empty(np.broadcast_shapes(X.shape, Y.shape))
    out[..., :2] = 2 * X[..., :2] - Y[..., :2]
    out[..., 2] = Y[..., 2] + X[..., 1] * Y[..., 0] - Y[..., 1] * X[..., 0]
    return out


def heisenberg_sigma_check(mu, pairs=None, r_grid=(1.0,), n_pairs=32, seed=0, slack=0.1,
                           member_tol=None, pair_radius=None):
    """Support membership of ``Sigma_X(Y)`` and ``mu(B_r(Sigma_X Y)) = mu(B_r(Y))``."""
    if mu.model.kind != "heisenberg":
        raise ValueError("Heisenberg model required")
    rmax = max(r_grid)
    member_tol = 2 * mu.h if member_tol is None else member_tol
    if pairs is None:
        pairs = _sample_pairs(mu, n_pairs, seed, rmax, pair_radius)
    pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    memb, rows = [], []
    out = 0
    inv_err = 0.0
    for i, j in pairs:
        X, Y = mu.points[i], mu.points[j]
        S = heisenberg_sigma(X, Y)
        inv_err = max(inv_err, float(np.max(np.abs(heisenberg_sigma(X, S) - Y))))
        if not _inside_box(mu, S[None, :], rmax)[0]:
            out += 1
            continue
        _, dn = mu.index.nearest(S[None, :], mu.h)
        memb.append((i, j, 0, dn[0]))
        for r in r_grid:
            ref = mu.ball_mass(Y, r)
            new = mu.ball_mass(S, r)
            rows.append((i, j, 0, r, ref, new, abs(new - ref) / max(ref, 1e-300)))
    rep = ReflectionReport(np.array(memb, dtype=float).reshape(-1, 4),
                           np.array(rows, dtype=float).reshape(-1, 7), out, member_tol, slack)
    rep.extra = {"involution_error": inv_err}
    return rep


def lattice_closure_check(mu, base, K, member_tol=None, margin=0.0):
    """Membership of ``(Y_0 + sum a_i (Y_i - Y_0), s_0)`` for ``a_i in 2**l Z cap [-K, K]``.

    ``base`` lists ``l + 1`` atom indices.  Returns a report whose
    membership rows are ``(combination index, 0, 0, distance)``; the
    coefficient vectors are in ``extra["coefficients"]``.
    """
    if mu.model.kind != "parabolic":
        raise ValueError("parabolic model required")
    base = np.asarray(base, dtype=np.intp)
    l = base.size - 1
    if l < 1:
        raise ValueError("need at least two base points")
    member_tol = 2 * mu.h if member_tol is None else member_tol
    step = 2**l
    grid = np.arange(-(K // step) * step, K + 1, step)
    Y0 = mu.points[base[0]]
    D = mu.points[base[1:], :-1] - Y0[:-1]
    coefs, memb = [], []
    out = 0
    for a in itertools.product(grid, repeat=l):
        if not any(a):
            continue
        P = Y0.copy()
        P[:-1] += np.asarray(a, dtype=float) @ D
        if not _inside_box(mu, P[None, :], margin)[0]:
            out += 1
            continue
        _, dn = mu.index.nearest(P[None, :], mu.h)
        memb.append((len(coefs), 0, 0, dn[0]))
        coefs.append(a)
    rep = ReflectionReport(np.array(memb, dtype=float).reshape(-1, 4),
                           np.zeros((0, 7)), out, member_tol, 0.0)
    rep.extra = {"coefficients": np.array(coefs, dtype=float).reshape(-1, l)}
    return rep


# ---------------------------------------------------------------------------
# slices

@dataclass
class SliceStructure:
    """Affine structure of the atoms in a thin time slab.

    ``L`` (dimension ``m``) spans the connected piece of the slice through
    the base atom; ``offsets`` are independent vectors orthogonal to ``L``
    reaching the other pieces (``q`` of them).
    """

    t: float
    tau: float
    count: int
    span_dim: int
    m: int
    basis: np.ndarray
    q: int
    offsets: np.ndarray
    base: int
    count_ok: bool


def _rank(D, w, rel):
    if D.shape[0] < 2:
        return 0, np.zeros((0, D.shape[1]))
    C = D - np.average(D, axis=0, weights=w)
    S = (C * w[:, None]).T @ C
    ev, V = np.linalg.eigh(S)
    ev, V = ev[::-1], V[:, ::-1]
    if ev[0] <= 0:
        return 0, np.zeros((0, D.shape[1]))
    r = int(np.sum(ev > rel * ev[0]))
    return r, V[:, :r].T


def slice_structure(mu, t, window, tau=None, rel=1e-6, link=None, min_atoms=32):
    """Span and offset structure of ``{(Y, s) in window : |s - t| <= tau**2}``.

    The slab's atoms are linked when closer than ``link`` (default
    ``2.5 h``) in space; the piece containing the atom nearest the window
    centre gives ``L`` by weighted principal components with a relative
    eigenvalue cut ``rel``.  Offsets of the other pieces are their spatial
    means relative to the base atom projected off ``L``; shortest first,
    an offset is kept when it is independent of those already kept.
    """
    model = mu.model
    tau = max(window.radius / 64.0, mu.h) if tau is None else float(tau)
    link = 2.5 * mu.h if link is None else float(link)
    sel = np.flatnonzero(window.contains(mu.points, model)
                         & (np.abs(mu.points[:, -1] - t) <= tau * tau))
    if sel.size < min_atoms:
        raise ValueError(f"slab holds {sel.size} atoms, fewer than {min_atoms}")
    Xs = mu.points[sel, :-1]
    w = mu.weights[sel]
    from scipy.spatial import cKDTree
    pairs = cKDTree(Xs).query_pairs(link, output_type="ndarray")
    n = sel.size
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    ncomp, lab = connected_components(g, directed=False)
    span_dim, _ = _rank(Xs, w, rel)
    b = int(np.argmin(np.sum((Xs - window.center[:-1]) ** 2, axis=1)))
    piece = lab == lab[b]
    m, basis = _rank(Xs[piece], w[piece], rel)
    offs = []
    for c in range(ncomp):
        if c == lab[b]:
            continue
        v = np.average(Xs[lab == c], axis=0, weights=w[lab == c]) - Xs[b]
        if m:
            v = v - (v @ basis.T) @ basis
        offs.append(v)
    offs.sort(key=lambda v: float(np.linalg.norm(v)))
    kept = []
    for v in offs:
        if np.linalg.norm(v) <= mu.h:
            continue
        M = np.vstack(kept + [v]) if kept else v[None, :]
        if np.linalg.matrix_rank(M, tol=1e-6 * np.linalg.norm(v)) > len(kept):
            kept.append(v)
    q = len(kept)
    offsets = np.array(kept).reshape(-1, model.n)
    return SliceStructure(float(t), tau, int(sel.size), span_dim, m, basis, q, offsets,
                          int(sel[b]), m + q <= model.k + 2)


def trichotomy_report(mu, X, r, lam, M1=1.0, M2=1.0, window=None, **alpha_kw):
    """Combine slice structure and alpha bounds around one point.

    Reports ``alpha_k(X, r)``, ``alpha_{k+1}(X, M1 r)``,
    ``alpha_{k+2}(X, M2 r)``, which of the two smallness alternatives holds
    at level ``lam``, and the slice structure at the time of ``X``.
    """
    from .transport import alpha_m

    k = mu.model.k
    X = np.asarray(X, dtype=float)
    a0 = alpha_m(mu, X, r, k, **alpha_kw).value
    a1 = alpha_m(mu, X, M1 * r, k + 1, **alpha_kw).value
    a2 = alpha_m(mu, X, M2 * r, k + 2, **alpha_kw).value
    window = Region.cube(X, r) if window is None else window
    try:
        sl = slice_structure(mu, float(X[-1]), window)
    except ValueError:
        sl = None
    return {
        "alpha_k": a0, "alpha_k1": a1, "alpha_k2": a2,
        "not_plane": bool(a0 > 0), "k1_small": bool(a1 < lam), "k2_small": bool(a2 < lam),
        "slice": None if sl is None else {"m": sl.m, "q": sl.q, "span": sl.span_dim,
                                         "count_ok": sl.count_ok},
    }
