"""Homogeneous group structures on R^{n+1}.

Points are numpy arrays whose last axis has length ``n + 1``; the first
``n`` entries are the spatial coordinates ``X`` and the last one is the
time ``t``.  Two structures are supported:

* parabolic space, where the group law is plain addition, and
* the first Heisenberg group (``n = 2``), with
  ``(X, t) . (Y, s) = (X + Y, t + s + eta(X, Y))`` and
  ``eta(X, Y) = (x1*y2 - x2*y1) / 2``.

Both carry the gauge ``||(X, t)|| = sqrt(|X|^2 + |t|)`` and the
left-invariant distance ``d(a, b) = ||b^{-1} . a||``.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GroupModel",
    "VerticalPlane",
    "HorizontalRotation",
    "Region",
    "point",
    "compose",
    "inverse",
    "norm",
    "dist",
    "dilate",
    "rotate",
    "dist_to_vertical_plane",
    "mcshane_extend",
    "LipschitzViolation",
]


class LipschitzViolation(ValueError):
    """Sample data breaks the requested Lipschitz bound."""

    def __init__(self, i, j, excess):
        self.pair = (int(i), int(j))
        self.excess = float(excess)
        super().__init__(
            f"samples {i} and {j} violate the Lipschitz bound by {excess:.3e}")


@dataclass(frozen=True)
class GroupModel:
    """Active group structure.

    Parameters
    ----------
    kind : {"parabolic", "heisenberg"}
    n : int
        Spatial dimension.
    k : int
        Codimension parameter; measures of interest are (k+2)-regular.
    """

    kind: str
    n: int
    k: int

    def __post_init__(self):
        if self.kind not in ("parabolic", "heisenberg"):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.kind == "heisenberg":
            if (self.n, self.k) != (2, 1):
                raise ValueError("the Heisenberg model is fixed at n=2, k=1")
        elif not 1 <= self.k <= self.n - 1:
            raise ValueError(f"k must lie in 1..n-1, got k={self.k}, n={self.n}")

    @classmethod
    def parabolic(cls, n, k):
        return cls("parabolic", int(n), int(k))

    @classmethod
    def heisenberg(cls):
        return cls("heisenberg", 2, 1)

    @property
    def dim(self):
        """Ahlfors regularity dimension ``k + 2`` of the measures studied."""
        return self.k + 2

    @property
    def width(self):
        return self.n + 1

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "k": self.k}

    @classmethod
    def from_dict(cls, d):
        return cls(str(d["kind"]), int(d["n"]), int(d["k"]))

    def check(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape[-1] != self.width:
            raise ValueError(
                f"expected points with {self.width} coordinates, got shape {a.shape}")
        return a

    # -- group structure -------------------------------------------------
    def eta(self, X, Y):
        """Bilinear twist of the group law, evaluated on spatial parts."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if self.kind == "parabolic":
            return np.zeros(np.broadcast_shapes(X.shape[:-1], Y.shape[:-1]))
        return 0.5 * (X[..., 0] * Y[..., 1] - X[..., 1] * Y[..., 0])

    def compose(self, a, b):
        a = self.check(a)
        b = self.check(b)
        X, t = a[..., :-1], a[..., -1]
        Y, s = b[..., :-1], b[..., -1]
        shape = np.broadcast_shapes(a.shape, b.shape)
        out = np.empty(shape)
        out[..., :-1] = X + Y
        out[..., -1] = t + s + self.eta(X, Y)
        return out

    def inverse(self, a):
        return -self.check(a)

    def norm(self, a):
        a = self.check(a)
        return np.sqrt(np.sum(a[..., :-1] ** 2, axis=-1) + np.abs(a[..., -1]))

    def dist(self, a, b):
        """Left-invariant distance ``||b^{-1} . a||``."""
        a = self.check(a)
        b = self.check(b)
        dX = a[..., :-1] - b[..., :-1]
        dt = a[..., -1] - b[..., -1] - self.eta(b[..., :-1], a[..., :-1])
        return np.sqrt(np.sum(dX * dX, axis=-1) + np.abs(dt))

    def pairwise(self, a, b=None):
        """Distance matrix ``D[i, j] = d(a_i, b_j)``."""
        a = self.check(a)
        b = a if b is None else self.check(b)
        return self.dist(a[:, None, :], b[None, :, :])

    def dilate(self, a, lam):
        a = self.check(a)
        out = np.array(a, dtype=float, copy=True)
        out[..., :-1] *= lam
        out[..., -1] *= lam * lam
        return out

    def rotate(self, a, R):
        if not isinstance(R, HorizontalRotation):
            R = HorizontalRotation(R)
        R.validate_for(self)
        a = self.check(a)
        out = np.array(a, dtype=float, copy=True)
        out[..., :-1] = a[..., :-1] @ R.matrix.T
        return out

    def translate(self, g, a):
        """Left translation ``g . a``."""
        return self.compose(g, a)


def point(spatial, time):
    """Pack spatial coordinates and a time into one array."""
    spatial = np.atleast_1d(np.asarray(spatial, dtype=float))
    return np.concatenate([spatial, [float(time)]])


def compose(a, b, model):
    return model.compose(a, b)


def inverse(a, model=None):
    return -np.asarray(a, dtype=float)


def norm(a, model=None):
    a = np.asarray(a, dtype=float)
    return np.sqrt(np.sum(a[..., :-1] ** 2, axis=-1) + np.abs(a[..., -1]))


def dist(a, b, model):
    return model.dist(a, b)


def dilate(a, lam, model=None):
    a = np.asarray(a, dtype=float)
    out = a.copy()
    out[..., :-1] *= lam
    out[..., -1] *= lam * lam
    return out


def rotate(a, R, model):
    return model.rotate(a, R)


@dataclass(frozen=True)
class HorizontalRotation:
    """Orthogonal map acting on the spatial coordinates only."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("rotation matrix must be square")
        if np.max(np.abs(M @ M.T - np.eye(M.shape[0]))) > 1e-12:
            raise ValueError("rotation matrix is not orthogonal to 1e-12")
        object.__setattr__(self, "matrix", M)

    @property
    def det(self):
        return float(np.linalg.det(self.matrix))

    def validate_for(self, model):
        if self.matrix.shape[0] != model.n:
            raise ValueError("rotation size does not match the spatial dimension")
        # eta(AX, AY) = det(A) eta(X, Y) in the Heisenberg group
        if model.kind == "heisenberg" and self.det < 0:
            raise ValueError("Heisenberg rotations must have determinant +1")

    @classmethod
    def random(cls, n, rng, proper=True):
        Q, R = np.linalg.qr(rng.standard_normal((n, n)))
        Q = Q * np.sign(np.diag(R))
        if proper and np.linalg.det(Q) < 0:
            Q[:, 0] = -Q[:, 0]
        return cls(Q)


@dataclass(frozen=True)
class VerticalPlane:
    """Spatial affine plane ``shift + span(basis)`` times the full time line.

    Parameters
    ----------
    basis : array_like, shape (m, n)
        Orthonormal rows spanning the spatial directions.
    shift : array_like, shape (n,)
        A spatial point of the plane.
    """

    basis: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        s = np.asarray(self.shift, dtype=float).reshape(-1)
        if B.size == 0:
            B = np.zeros((0, s.size))
        if B.shape[1] != s.size:
            raise ValueError("basis and shift dimensions differ")
        if B.shape[0] > B.shape[1]:
            raise ValueError("plane dimension exceeds the spatial dimension")
        if B.shape[0] and np.max(np.abs(B @ B.T - np.eye(B.shape[0]))) > 1e-12:
            raise ValueError("plane basis is not orthonormal to 1e-12")
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "shift", s)

    @classmethod
    def from_span(cls, vectors, shift=None):
        V = np.atleast_2d(np.asarray(vectors, dtype=float))
        Q, _ = np.linalg.qr(V.T)
        Q = Q[:, : V.shape[0]].T
        if shift is None:
            shift = np.zeros(V.shape[1])
        return cls(Q, shift)

    @classmethod
    def coordinate(cls, n, axes, shift=None):
        """Plane spanned by the listed coordinate axes."""
        B = np.eye(n)[list(axes)]
        return cls(B, np.zeros(n) if shift is None else shift)

    @property
    def m(self):
        return self.basis.shape[0]

    @property
    def n(self):
        return self.basis.shape[1]

    def coords(self, X):
        """In-plane coordinates of spatial points."""
        return (np.asarray(X, dtype=float) - self.shift) @ self.basis.T

    def project(self, X):
        return self.shift + self.coords(X) @ self.basis

    def residual(self, X):
        """Spatial offset of ``X`` from its projection onto the plane."""
        X = np.asarray(X, dtype=float)
        return X - self.project(X)

    def points(self, coords, times):
        """Group points with given in-plane coordinates and times."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        X = self.shift + coords @ self.basis
        times = np.broadcast_to(np.asarray(times, dtype=float), (X.shape[0],))
        return np.column_stack([X, times])

    def normal_basis(self):
        """Orthonormal basis of the spatial orthogonal complement."""
        if self.m == 0:
            return np.eye(self.n)
        _, _, Vt = np.linalg.svd(self.basis, full_matrices=True)
        return Vt[self.m:]


def dist_to_vertical_plane(a, L, model=None):
    """Distance from group points to a vertical plane.

    The nearest point of a vertical plane shares the time of ``a`` (after
    the group correction), so the distance is the Euclidean distance of
    the spatial part to the spatial plane.
    """
    a = np.asarray(a, dtype=float)
    R = L.residual(a[..., :-1])
    return np.sqrt(np.sum(R * R, axis=-1))


_REGION_KINDS = ("ball", "cube", "cylinder", "slab")


@dataclass(frozen=True)
class Region:
    """Ball, cube, cylinder or spatial-cube-times-interval.

    ``ball``      B_r(c) = {d(Y, c) < r}
    ``cube``      Q_r(c) = {|Y - X|_inf < r, |s - t| < r^2}
    ``cylinder``  C_r(c) = {|Y - X| < r, |s - t| < r^2}
    ``slab``      {|Y - X|_inf < r, s in interval}
    """

    kind: str
    center: np.ndarray
    radius: float
    interval: tuple = field(default=None)

    def __post_init__(self):
        if self.kind not in _REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "radius", float(self.radius))
        if self.kind == "slab":
            if self.interval is None:
                raise ValueError("slab regions need a time interval")
            lo, hi = self.interval
            object.__setattr__(self, "interval", (float(lo), float(hi)))

    @classmethod
    def ball(cls, center, r):
        return cls("ball", center, r)

    @classmethod
    def cube(cls, center, r):
        return cls("cube", center, r)

    @classmethod
    def cylinder(cls, center, r):
        return cls("cylinder", center, r)

    @classmethod
    def slab(cls, spatial_center, r, interval):
        c = np.append(np.asarray(spatial_center, dtype=float), 0.5 * (interval[0] + interval[1]))
        return cls("slab", c, r, tuple(interval))

    def to_dict(self):
        d = {"kind": self.kind, "center": [float(v) for v in self.center],
             "radius": self.radius}
        if self.interval is not None:
            d["interval"] = list(self.interval)
        return d

    @classmethod
    def from_dict(cls, d):
        iv = d.get("interval")
        return cls(d["kind"], d["center"], d["radius"], tuple(iv) if iv else None)

    def gauge(self, pts, model):
        """Homogeneous size of ``pts`` relative to the region's shape.

        ``pts`` lies in the region iff its gauge is ``< radius`` (slabs also
        need the time interval).  The gauge is 1-Lipschitz for balls.
        """
        pts = np.asarray(pts, dtype=float)
        if self.kind == "ball":
            return model.dist(pts, self.center)
        dX = pts[..., :-1] - self.center[:-1]
        dt = np.sqrt(np.abs(pts[..., -1] - self.center[-1]))
        if self.kind == "cube":
            return np.maximum(np.max(np.abs(dX), axis=-1), dt)
        if self.kind == "cylinder":
            return np.maximum(np.sqrt(np.sum(dX * dX, axis=-1)), dt)
        return np.max(np.abs(dX), axis=-1)

    def contains(self, pts, model):
        pts = np.asarray(pts, dtype=float)
        inside = self.gauge(pts, model) < self.radius
        if self.kind == "slab":
            lo, hi = self.interval
            inside &= (pts[..., -1] >= lo) & (pts[..., -1] < hi)
        return inside

    def spatial_extent(self):
        """Half-width of a spatial box containing the region about its center."""
        return self.radius

    def time_extent(self, model):
        """Half-length of a time interval containing the region."""
        if self.kind == "slab":
            return 0.5 * (self.interval[1] - self.interval[0])
        r = self.radius
        if self.kind == "ball" and model.kind == "heisenberg":
            return r * r + 0.5 * r * float(np.linalg.norm(self.center[:-1]))
        return r * r


def mcshane_extend(samples, values, lipconst, support, model, parity=None):
    """Lipschitz extension of sampled values, cut off outside ``support``.

    The extension is the inf-convolution
    ``Phi(X) = min_i (f_i + L d(Y_i, X))`` multiplied by the radial bump
    ``clip(2 (r - gauge(X)) / r, 0, 1)`` of the support region.

    Parameters
    ----------
    samples : ndarray, shape (N, n+1)
    values : ndarray, shape (N,)
    lipconst : float
    support : Region
    model : GroupModel
    parity : {None, "even", "odd"}
        Symmetrise the extension in the spatial variable.  Even data gives
        an even extension with the same Lipschitz bound.

    Returns
    -------
    callable
        Maps an array of points to extension values.  Values agree with the
        samples wherever the bump equals one (gauge at most half the radius).

    Raises
    ------
    LipschitzViolation
        If two samples break ``|f_i - f_j| <= L d(Y_i, Y_j)``.
    """
    Y = model.check(np.atleast_2d(samples))
    f = np.asarray(values, dtype=float).reshape(-1)
    if f.size != Y.shape[0]:
        raise ValueError("one value per sample is required")
    L = float(lipconst)
    D = model.pairwise(Y)
    excess = np.abs(f[:, None] - f[None, :]) - L * D
    tol = 1e-12 * max(1.0, float(np.max(np.abs(f), initial=0.0)))
    if excess.size and excess.max() > tol:
        i, j = np.unravel_index(np.argmax(excess), excess.shape)
        raise LipschitzViolation(i, j, excess[i, j])

    def raw(X):
        X = model.check(np.asarray(X, dtype=float))
        flat = X.reshape(-1, X.shape[-1])
        vals = np.min(f[None, :] + L * model.pairwise(flat, Y).reshape(flat.shape[0], -1),
                      axis=1)
        r = support.radius
        bump = np.clip(2.0 * (r - support.gauge(flat, model)) / r, 0.0, 1.0)
        if support.kind == "slab":
            lo, hi = support.interval
            bump = bump * ((flat[:, -1] >= lo) & (flat[:, -1] < hi))
        return (vals * bump).reshape(X.shape[:-1])

    if parity is None:
        return raw
    sign = {"even": 1.0, "odd": -1.0}[parity]

    def phi(X):
        X = np.asarray(X, dtype=float)
        Xr = X.copy()
        Xr[..., :-1] *= -1.0
        return 0.5 * (raw(X) + sign * raw(Xr))

    return phi
