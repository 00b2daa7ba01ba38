"""Weighted space-time point clouds and their generators.

A :class:`DiscreteMeasure` is a finite sum of weighted Dirac masses in
R^{n+1} together with the sampling mesh ``h`` it was built at.  Analysers
refuse radii that are small compared with ``h``.
"""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .group import GroupModel, Region, VerticalPlane
from .index import NeighborIndex

__all__ = [
    "ResolutionError",
    "TimeMeasure",
    "DiscreteMeasure",
    "ModelMeasure",
    "ADRReport",
    "make_vertical_plane_measure",
    "make_example_A",
    "make_example_B",
    "make_example_C",
    "make_plane_with_defect",
    "adr_check",
    "time_marginal",
    "spatial_marginal",
    "restrict",
    "interior_mask",
    "save_measure",
    "load_measure",
]


class ResolutionError(ValueError):
    """A requested scale is too small for the sampling mesh."""


def require_scale(r, h, factor, what):
    if r < factor * h * (1 - 1e-12):
        raise ResolutionError(
            f"{what}: scale {r:g} is below the resolution floor {factor:g}*h = {factor * h:g}")


# ---------------------------------------------------------------------------
# time measures

@dataclass(frozen=True)
class TimeMeasure:
    """Atomic measure on the time line.

    ``cells`` holds the width of the time interval each atom stands for
    (zero for genuine point masses); jittered sampling moves atoms inside
    their cell.
    """

    kind: str
    atoms: np.ndarray
    weights: np.ndarray
    cells: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        c = np.broadcast_to(np.asarray(self.cells, dtype=float), a.shape).copy()
        if a.shape != w.shape:
            raise ValueError("time atoms and weights differ in length")
        if np.any(w <= 0):
            raise ValueError("time weights must be positive")
        order = np.argsort(a, kind="stable")
        object.__setattr__(self, "atoms", a[order])
        object.__setattr__(self, "weights", w[order])
        object.__setattr__(self, "cells", c[order])

    @property
    def mass(self):
        return float(np.sum(self.weights))

    def interval_mass(self, lo, hi):
        i = np.searchsorted(self.atoms, lo, side="left")
        j = np.searchsorted(self.atoms, hi, side="left")
        return float(np.sum(self.weights[i:j]))

    def ball_mass(self, t, r):
        """Mass of the metric ball ``{s : |s - t|^(1/2) < r}``."""
        return self.interval_mass(t - r * r, t + r * r)

    @classmethod
    def lebesgue(cls, a, b, pitch):
        num = max(1, int(round((b - a) / pitch)))
        pitch = (b - a) / num
        atoms = a + pitch * (np.arange(num) + 0.5)
        return cls("lebesgue", atoms, np.full(num, pitch), pitch,
                   {"a": a, "b": b, "pitch": pitch})

    @classmethod
    def dirac(cls, t0=0.0, mass=1.0):
        return cls("dirac", [t0], [mass], 0.0, {"t0": t0, "mass": mass})

    @classmethod
    def cantor_quarter(cls, top, h=None, depth=None, origin=None):
        """Ratio-1/4 Cantor measure on ``[origin, origin + top]``.

        Each of the ``2**depth`` surviving intervals carries mass
        ``sqrt(top) / 2**depth``, so an interval of length ``l`` in the
        construction has mass ``sqrt(l)``.  The depth defaults to the
        level whose intervals have length about ``h**2``.
        """
        if depth is None:
            if h is None:
                raise ValueError("give either h or depth")
            depth = max(0, int(round(np.log(top / h**2) / np.log(4.0))))
        if origin is None:
            origin = -0.5 * top
        left = np.array([0.0])
        length = float(top)
        for _ in range(depth):
            length /= 4.0
            left = np.concatenate([left, left + 3.0 * length])
        atoms = origin + np.sort(left) + 0.5 * length
        w = np.full(atoms.size, np.sqrt(top) / 2.0**depth)
        return cls("cantor_quarter", atoms, w, length,
                   {"top": top, "depth": depth, "origin": origin})

    @classmethod
    def inverted_cantor(cls, levels, h, unit=1.0, origin=None):
        """Lebesgue below ``unit``, Cantor branching above it.

        Start from an interval of length ``unit * 4**levels`` and keep the
        outer quarters ``levels`` times; each surviving unit interval
        carries Lebesgue measure sampled at pitch ``h**2``.  A metric ball
        of radius ``r`` then has mass comparable to ``min(r, r**2)`` in
        units where ``unit = 1``.
        """
        top = unit * 4.0**levels
        if origin is None:
            origin = -0.5 * top
        left = np.array([0.0])
        length = top
        for _ in range(levels):
            length /= 4.0
            left = np.concatenate([left, left + 3.0 * length])
        num = max(1, int(round(length / h**2)))
        pitch = length / num
        offs = pitch * (np.arange(num) + 0.5)
        atoms = origin + (np.sort(left)[:, None] + offs[None, :]).reshape(-1)
        return cls("inverted_cantor", atoms, np.full(atoms.size, pitch), pitch,
                   {"levels": levels, "unit": unit, "origin": origin, "pitch": pitch})

    @classmethod
    def triangle_density(cls, half_width, pitch, t0=0.0):
        num = max(1, int(round(2 * half_width / pitch)))
        pitch = 2 * half_width / num
        atoms = t0 - half_width + pitch * (np.arange(num) + 0.5)
        dens = 1.0 - np.abs(atoms - t0) / half_width
        return cls("triangle_density", atoms, dens * pitch, pitch,
                   {"half_width": half_width, "pitch": pitch, "t0": t0})

    @classmethod
    def custom(cls, atoms, weights, cells=0.0):
        return cls("custom", atoms, weights, cells, {})


# ---------------------------------------------------------------------------
# discrete measures

class DiscreteMeasure:
    """Finite weighted point cloud in R^{n+1}.

    Parameters
    ----------
    points : ndarray, shape (N, n+1)
    weights : ndarray, shape (N,)
        Strictly positive.
    h : float
        Sampling mesh in the group metric.
    model : GroupModel
    box : Region, optional
        Sampling window; atoms near its edge are truncation artefacts.
    meta : dict, optional
    """

    def __init__(self, points, weights, h, model, box=None, meta=None):
        pts = np.asarray(points, dtype=float).reshape(-1, model.width)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if pts.shape[0] != w.size:
            raise ValueError("atom count and weight count differ")
        if np.any(~(w > 0)):
            raise ValueError("weights must be positive")
        if not np.all(np.isfinite(pts)):
            raise ValueError("atoms must be finite")
        pts.setflags(write=False)
        w.setflags(write=False)
        self.points = pts
        self.weights = w
        self.h = float(h)
        self.model = model
        self.box = box
        self.meta = dict(meta or {})

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return (f"DiscreteMeasure({self.model.kind}, n={self.model.n}, "
                f"k={self.model.k}, atoms={len(self)}, h={self.h:g})")

    @property
    def count(self):
        return len(self)

    @property
    def mass(self):
        return float(np.sum(self.weights))

    @property
    def spatial(self):
        return self.points[:, :-1]

    @property
    def times(self):
        return self.points[:, -1]

    @cached_property
    def index(self):
        return NeighborIndex(self.points, self.model)

    @cached_property
    def kdtree(self):
        """Euclidean tree over the raw coordinates (for exact coincidences)."""
        return cKDTree(self.points)

    def replace(self, points=None, weights=None, box=None, meta=None, keep_box=True):
        return DiscreteMeasure(
            self.points if points is None else points,
            self.weights if weights is None else weights,
            self.h, self.model,
            box if box is not None else (self.box if keep_box else None),
            self.meta if meta is None else meta)

    def subset(self, idx):
        idx = np.asarray(idx)
        return DiscreteMeasure(self.points[idx], self.weights[idx], self.h,
                               self.model, self.box, self.meta)

    def ball(self, center, r):
        """Indices and distances of atoms in the open ball ``B(center, r)``."""
        idx, d = self.index.query_ball(np.atleast_2d(center), r, return_dist=True)
        return idx[0], d[0]

    def ball_mass(self, center, r):
        idx, _ = self.ball(center, r)
        return float(np.sum(self.weights[idx]))

    def translate(self, g):
        """Left translate ``g . mu``; the box moves with it."""
        pts = self.model.compose(np.asarray(g, dtype=float), self.points)
        box = None
        if self.box is not None:
            c = self.model.compose(np.asarray(g, dtype=float), self.box.center)
            box = Region(self.box.kind, c, self.box.radius, self.box.interval)
        return DiscreteMeasure(pts, self.weights, self.h, self.model, box, self.meta)

    def dilate(self, lam):
        """Push forward by the dilation; weights scale by ``lam**(k+2)``."""
        pts = self.model.dilate(self.points, lam)
        w = self.weights * lam ** self.model.dim
        return DiscreteMeasure(pts, w, self.h * lam, self.model, None, self.meta)

    def rotate(self, R):
        pts = self.model.rotate(self.points, R)
        return DiscreteMeasure(pts, self.weights, self.h, self.model, None, self.meta)


def restrict(mu, region):
    """Atoms of ``mu`` inside ``region``, weights unchanged."""
    keep = region.contains(mu.points, mu.model)
    return mu.subset(np.flatnonzero(keep))


def interior_mask(mu, margin):
    """Atoms whose ``margin``-ball stays inside the sampling box.

    Without a box every atom counts as interior.
    """
    box = mu.box
    if box is None:
        return np.ones(len(mu), dtype=bool)
    p = mu.points
    c = box.center
    dX = p[:, :-1] - c[:-1]
    if box.kind == "ball":
        return mu.model.dist(p, c) + margin < box.radius
    if box.kind == "cylinder":
        sp = np.sqrt(np.sum(dX * dX, axis=1))
    else:
        sp = np.max(np.abs(dX), axis=1)
    ok = sp + margin < box.radius
    if box.kind == "slab":
        lo, hi = box.interval
        ok &= (p[:, -1] - margin**2 >= lo) & (p[:, -1] + margin**2 < hi)
    else:
        ok &= np.abs(p[:, -1] - c[-1]) + margin**2 < box.radius**2
    return ok


@dataclass(frozen=True)
class ModelMeasure:
    """Translate of ``H^m|_L x nu``; ``L`` is a spatial plane through ``shift``."""

    plane: VerticalPlane
    time: TimeMeasure
    translation: np.ndarray = None

    def discretize(self, box, h, model, **kw):
        mu = make_vertical_plane_measure(self.plane, self.time, box, h, model, **kw)
        if self.translation is not None:
            mu = mu.translate(self.translation)
        return mu


def _lattice_coords(m, bound, h):
    num = int(np.ceil(bound / h))
    ax = h * np.arange(-num, num + 1)
    if m == 0:
        return np.zeros((1, 0))
    grids = np.meshgrid(*([ax] * m), indexing="ij")
    return np.column_stack([g.reshape(-1) for g in grids])


def make_vertical_plane_measure(L, time, box, h, model, jitter=0.0, seed=0,
                                meta=None):
    """Product sampling of ``H^m|_L x time`` inside ``box``.

    Spatial nodes sit on the lattice ``shift + h Z^m`` of the plane and
    carry weight ``h**m``; each is paired with every time atom.  The sample
    is the left translate by ``(shift, 0)`` of the product through the
    origin, which only matters in the Heisenberg model.  With
    ``jitter > 0`` every atom is moved uniformly inside its cell (in-plane
    and in time) by a seeded generator, which keeps the support inside
    the plane but breaks the lattice symmetry.
    """
    if L.m > model.n or L.n != model.n:
        raise ValueError("plane does not fit the spatial dimension")
    c = box.center
    reach = float(np.linalg.norm(L.shift - c[:-1])) + np.sqrt(model.n) * box.radius
    U = _lattice_coords(L.m, reach, h)
    X = L.shift + U @ L.basis
    dX = X - c[:-1]
    if box.kind in ("ball", "cylinder"):
        near = np.sqrt(np.sum(dX * dX, axis=1)) < box.radius
    else:
        near = np.max(np.abs(dX), axis=1) < box.radius
    U, X = U[near], X[near]
    # sheared copies need time atoms beyond the box's own time extent
    te = box.time_extent(model) + float(np.max(np.abs(model.eta(L.shift, X - L.shift)), initial=0.0))
    tc = c[-1]
    tsel = (time.atoms > tc - te - 1e-12) & (time.atoms < tc + te + 1e-12)
    ta, tw, tcell = time.atoms[tsel], time.weights[tsel], time.cells[tsel]
    if X.shape[0] == 0 or ta.size == 0:
        raise ValueError("the plane sample does not meet the box")
    nu, nt = X.shape[0], ta.size
    Ui = np.repeat(U, nt, axis=0)
    ti = np.tile(ta, nu)
    wi = h ** L.m * np.tile(tw, nu)
    if jitter:
        rng = np.random.default_rng(seed)
        Ui = Ui + jitter * h * rng.uniform(-0.5, 0.5, size=Ui.shape)
        ti = ti + jitter * np.tile(tcell, nu) * rng.uniform(-0.5, 0.5, size=ti.shape)
    V = Ui @ L.basis
    # left translate of the product through the origin by (shift, 0)
    pts = np.column_stack([L.shift + V, ti + model.eta(L.shift, V)])
    keep = box.contains(pts, model)
    if not np.any(keep):
        raise ValueError("the plane sample does not meet the box")
    info = {"generator": "vertical_plane", "m": L.m, "time": time.kind,
            "jitter": jitter, "seed": seed}
    info.update(meta or {})
    return DiscreteMeasure(pts[keep], wi[keep], h, model, box, info)


def _cantor_for_box(box, model, h):
    te = box.time_extent(model)
    return TimeMeasure.cantor_quarter(2 * te, h=h, origin=box.center[-1] - te)


def make_example_A(model, box, h, jitter=0.0, seed=0, time=None):
    """``H^{k+1}|_L x`` quarter-Cantor time, ``L`` the first ``k+1`` axes."""
    if model.k + 1 > model.n:
        raise ValueError("needs k+1 <= n")
    L = VerticalPlane.coordinate(model.n, range(model.k + 1))
    if time is None:
        time = _cantor_for_box(box, model, h)
    return make_vertical_plane_measure(L, time, box, h, model, jitter, seed,
                                       {"generator": "example_A"})


def make_example_B(model, L, e, box, h, levels=None, unit=1.0, jitter=0.0, seed=0,
                   mass_scale=1.0):
    """Parallel k-planes ``L + i e`` times the inverted Cantor time measure.

    ``L`` is a spatial k-plane (through ``L.shift``), ``e`` a non-zero
    vector orthogonal to it.  ``mass_scale`` rescales all weights; the
    regularity constant is free.
    """
    e = np.asarray(e, dtype=float)
    if not np.any(e):
        raise ValueError("e must be non-zero")
    if L.m and np.max(np.abs(L.basis @ e)) > 1e-12 * np.linalg.norm(e):
        raise ValueError("e must be orthogonal to L")
    te = box.time_extent(model)
    if levels is None:
        levels = max(0, int(np.ceil(np.log(te / unit + 0.5) / np.log(4.0))))
    # the box's time centre sits mid-way along the leftmost unit interval
    time = TimeMeasure.inverted_cantor(levels, h, unit, origin=box.center[-1] - 0.5 * unit)
    reach = float(np.linalg.norm(L.shift - box.center[:-1])) + np.sqrt(model.n) * box.radius
    imax = int(np.ceil(reach / np.linalg.norm(e)))
    parts_p, parts_w = [], []
    for i in range(-imax, imax + 1):
        Li = VerticalPlane(L.basis, L.shift + i * e)
        try:
            mi = make_vertical_plane_measure(Li, time, box, h, model, jitter, seed + 7919 * (i + imax))
        except ValueError:
            continue
        parts_p.append(mi.points)
        parts_w.append(mi.weights)
    if not parts_p:
        raise ValueError("the plane lattice does not meet the box")
    meta = {"generator": "example_B", "levels": levels, "unit": unit,
            "e": [float(v) for v in e], "jitter": jitter, "seed": seed}
    return DiscreteMeasure(np.concatenate(parts_p), mass_scale * np.concatenate(parts_w),
                           h, model, box, meta)


def make_example_C(model, box, h, jitter=0.0, seed=0):
    """``H^{k+2}|_L x delta_0`` with ``L`` the first ``k+2`` axes."""
    if model.k + 2 > model.n:
        raise ValueError("needs k+2 <= n")
    L = VerticalPlane.coordinate(model.n, range(model.k + 2))
    time = TimeMeasure.dirac(float(box.center[-1]))
    return make_vertical_plane_measure(L, time, box, h, model, jitter, seed,
                                       {"generator": "example_C"})


def make_plane_with_defect(model, L, time, box, h, offset, radius, density=1.0,
                           at=None, jitter=0.0, seed=0):
    """Plane product plus a small off-plane cluster.

    The cluster is a copy of the plane sample inside ``B(at, radius)``
    pushed by ``offset`` (a spatial vector, usually normal to ``L``) and
    scaled by ``density``.
    """
    base = make_vertical_plane_measure(L, time, box, h, model, jitter, seed)
    if at is None:
        at = np.append(L.shift, box.center[-1])
    idx, _ = base.ball(at, radius)
    if idx.size == 0:
        raise ValueError("defect ball misses the plane sample")
    shift = np.append(np.asarray(offset, dtype=float), 0.0)
    cl = base.points[idx] + shift
    pts = np.concatenate([base.points, cl])
    w = np.concatenate([base.weights, density * base.weights[idx]])
    meta = dict(base.meta, generator="plane_with_defect",
                defect=[float(v) for v in shift[:-1]], defect_atoms=int(idx.size))
    return DiscreteMeasure(pts, w, h, model, box, meta)


# ---------------------------------------------------------------------------
# regularity

@dataclass
class ADRReport:
    C_lower: float
    C_upper: float
    ratio: float
    passed: bool
    table: np.ndarray  # rows (center index, r, mass, mass / r**d)

    @property
    def pass_(self):
        return self.passed


def adr_check(mu, d, scales, centers, C0=4.0, floor=4.0):
    """Upper and lower regularity constants over sampled balls.

    Parameters
    ----------
    mu : DiscreteMeasure
    d : float
        Regularity dimension.
    scales : sequence of float
    centers : array_like of int
        Atom indices used as ball centres.
    C0 : float
        Passes iff ``C_upper / C_lower <= C0**2``.
    floor : float
        Scales below ``floor * h`` are rejected.
    """
    scales = [float(r) for r in scales]
    for r in scales:
        require_scale(r, mu.h, floor, "adr_check")
    centers = np.asarray(centers, dtype=np.intp).reshape(-1)
    rows = []
    for r in scales:
        idx = mu.index.query_ball(mu.points[centers], r)
        for c, ii in zip(centers, idx):
            m = float(np.sum(mu.weights[ii]))
            rows.append((c, r, m, m / r**d))
    table = np.array(rows, dtype=float).reshape(-1, 4)
    lo = float(np.min(table[:, 3]))
    hi = float(np.max(table[:, 3]))
    ratio = hi / lo if lo > 0 else np.inf
    return ADRReport(lo, hi, ratio, bool(ratio <= C0**2), table)


# ---------------------------------------------------------------------------
# marginals

def time_marginal(mu):
    t, inv = np.unique(mu.times, return_inverse=True)
    w = np.bincount(inv, weights=mu.weights, minlength=t.size)
    return TimeMeasure.custom(t, w)


def spatial_marginal(mu):
    """Distinct spatial positions and the mass above each."""
    X, inv = np.unique(mu.spatial, axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    w = np.bincount(inv, weights=mu.weights, minlength=X.shape[0])
    return X, w


# ---------------------------------------------------------------------------
# serialisation

_MAGIC = "# rectilab-measure "


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def measure_header(mu):
    return {
        "model": mu.model.kind, "n": mu.model.n, "k": mu.model.k,
        "h": mu.h, "count": len(mu),
        "box": None if mu.box is None else mu.box.to_dict(),
        "meta": _jsonable(mu.meta),
    }


def dumps_measure(mu):
    head = _MAGIC + json.dumps(measure_header(mu), sort_keys=True)
    data = np.column_stack([mu.points, mu.weights])
    # %.17g round-trips every double exactly
    body = "\n".join(" ".join("%.17g" % v for v in row) for row in data)
    return head + "\n" + body + ("\n" if len(mu) else "")


def save_measure(mu, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_measure(mu))


def load_measure(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith(_MAGIC):
            raise ValueError(f"{path} is not a measure file")
        head = json.loads(first[len(_MAGIC):])
        rows = [line.split() for line in fh if line.strip()]
    model = GroupModel(head["model"], head["n"], head["k"])
    data = np.array([[float(v) for v in r] for r in rows]).reshape(-1, model.width + 1)
    if data.shape[0] != head["count"]:
        raise ValueError("atom count does not match the header")
    box = Region.from_dict(head["box"]) if head.get("box") else None
    return DiscreteMeasure(data[:, :-1], data[:, -1], head["h"], model, box, head.get("meta"))
