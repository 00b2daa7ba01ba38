"""Spatially odd kernels, truncated singular integrals and square sums.

Test functions are vector valued, ``phi(X, t) = X psi(X, t)`` with ``psi``
a radial bump in the homogeneous gauge, so ``phi(-X, t) = -phi(X, t)``.
Dilations are anisotropic by default: ``phi_lam(Z) = phi(delta_{1/lam} Z)``.
Convolutions against a discrete measure follow the left-invariant
convention ``(phi * mu)(Y) = sum_i phi(X_i^{-1} . Y) w_i``.
"""

from dataclasses import dataclass, field

import numpy as np

from .beta import carleson_norm
from .measures import require_scale

__all__ = [
    "OddTestFunction",
    "default_family",
    "family_from_config",
    "KernelSpec",
    "AdmissibilityReport",
    "admissibility_check",
    "CZOResult",
    "truncated_czo_apply",
    "convolve",
    "lp_terms",
    "lp_square_sum",
    "theta_coefficient",
    "cube_thetas",
    "SquareFunctionReport",
    "square_function_report",
    "CarlesonDetection",
    "find_carleson",
]


# ---------------------------------------------------------------------------
# test functions

def _ramp(u):
    return np.clip(1.0 - u, 0.0, 1.0)


def _smooth(u):
    u = np.clip(u, 0.0, 1.0)
    return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u * u)


# profile -> (function of u in [0, 1], sup of |derivative|)
PROFILES = {"lipschitz": (_ramp, 1.0), "smooth": (_smooth, 1.875)}


@dataclass(frozen=True)
class OddTestFunction:
    """``phi(X, t) = X psi(X, t)`` with ``psi = p((||Z|| / radius - a) / (1 - a))``.

    ``psi`` equals 1 on ``B(0, a * radius)``, vanishes outside
    ``B(0, radius)`` and is even in space; ``a`` is ``plateau``.
    """

    radius: float = 1.0
    profile: str = "lipschitz"
    plateau: float = 2.0 / 3.0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        if not (self.radius > 0 and 0 <= self.plateau < 1):
            raise ValueError("need radius > 0 and 0 <= plateau < 1")

    @property
    def name(self):
        return f"{self.profile}-r{self.radius:g}"

    @property
    def support(self):
        return float(self.radius)

    @property
    def lip(self):
        """Lipschitz bound: ``sup psi + sup |X| * Lip(psi)``."""
        return 1.0 + PROFILES[self.profile][1] / (1.0 - self.plateau)

    def psi(self, Z, model):
        s = model.norm(Z) / self.radius
        return PROFILES[self.profile][0]((s - self.plateau) / (1.0 - self.plateau))

    def __call__(self, Z, model):
        Z = np.asarray(Z, dtype=float)
        return Z[..., :-1] * self.psi(Z, model)[..., None]

    def to_dict(self):
        return {"radius": self.radius, "profile": self.profile, "plateau": self.plateau}


def default_family(radii=(1.0, 1.5, 2.0), profiles=("lipschitz", "smooth")):
    """Three support radii times two profiles."""
    return [OddTestFunction(r, p) for r in radii for p in profiles]


def family_from_config(entries):
    """Build test functions from ``[{radius, profile, plateau}, ...]``."""
    return [OddTestFunction(float(e.get("radius", 1.0)), str(e.get("profile", "lipschitz")),
                            float(e.get("plateau", 2.0 / 3.0))) for e in entries]


def _scaled(Z, lam, dilation):
    Z = np.array(Z, dtype=float, copy=True)
    Z[..., :-1] /= lam
    Z[..., -1] /= lam * lam if dilation == "anisotropic" else lam
    return Z


def _support_radius(rho, lam, dilation):
    if dilation == "anisotropic":
        return rho * lam
    if dilation == "isotropic":
        # ||(X/lam, t/lam)|| < rho  implies  |X| < rho lam and |t| < rho^2 lam
        return rho * np.sqrt(lam * lam + lam)
    raise ValueError(f"unknown dilation {dilation!r}")


def convolve(phi, mu, targets, lam=1.0, dilation="anisotropic", max_pairs=2_000_000):
    """``(phi_lam * mu)(Y)`` at each target point, shape ``(T, n)``."""
    model = mu.model
    targets = model.check(np.atleast_2d(targets))
    out = np.zeros((targets.shape[0], model.n))
    rad = _support_radius(phi.support, lam, dilation)
    for s, e, flat, _, off in mu.index.iter_flat(targets, rad, max_pairs):
        owner = np.repeat(np.arange(e - s), np.diff(off))
        Z = model.compose(-mu.points[flat], targets[s + owner])
        vals = phi(_scaled(Z, lam, dilation), model) * mu.weights[flat, None]
        for a in range(model.n):
            out[s:e, a] = np.bincount(owner, weights=vals[:, a], minlength=e - s)
    return out


# ---------------------------------------------------------------------------
# kernels

@dataclass(frozen=True)
class KernelSpec:
    """A kernel ``K`` on the group minus the origin, vector valued.

    ``degree`` is the homogeneity ``d`` in ``|K(Z)| <~ ||Z||^{-d}``.
    """

    kind: str
    degree: int
    func: object = field(compare=False, repr=False)
    model: object = None

    def __call__(self, Z):
        return np.asarray(self.func(np.asarray(Z, dtype=float)))

    @classmethod
    def parabolic_riesz(cls, model):
        """``X / ||(X, t)||**(k+3)``."""
        d = model.k + 2

        def K(Z):
            return Z[..., :-1] / model.norm(Z)[..., None] ** (d + 1)

        return cls("parabolic_riesz", d, K, model)

    @classmethod
    def heisenberg_riesz(cls, model):
        """``X / ||(X, t)||**4`` (dimension 3)."""
        if model.kind != "heisenberg":
            raise ValueError("needs the Heisenberg model")

        def K(Z):
            return Z[..., :-1] / model.norm(Z)[..., None] ** 4

        return cls("heisenberg_riesz", 3, K, model)

    @classmethod
    def odd_test(cls, phi, model):
        return cls("odd_test", model.k + 2, lambda Z: phi(Z, model), model)

    @classmethod
    def custom(cls, func, model, degree, kind="custom"):
        return cls(kind, int(degree), func, model)


@dataclass
class AdmissibilityReport:
    odd: bool
    odd_error: float
    constants: dict  # (l, j) -> sup |D K| ||Z||^{d + l + 2j}
    refined: dict  # same with half the difference step
    radii: np.ndarray

    @property
    def passed(self):
        return self.odd and all(np.isfinite(v) for v in self.constants.values())


def _unit_directions(model, count, rng):
    Z = rng.standard_normal((count, model.width))
    nz = model.norm(Z)
    Z[:, :-1] /= nz[:, None]
    Z[:, -1] /= nz * nz
    return Z


def _derivative(K, P, model, spatial, j, step):
    """Central differences along left-invariant fields.

    ``spatial`` lists the spatial axes differentiated once each; ``j``
    time derivatives follow.  Steps are ``step * ||P||`` in space and
    ``(step * ||P||)**2`` in time.
    """
    scale = model.norm(P)[:, None]
    if spatial:
        a, rest = spatial[0], spatial[1:]
        e = np.zeros(model.width)
        e[a] = 1.0
        hs = step * scale
        plus = model.compose(P, e * hs)
        minus = model.compose(P, -e * hs)
        return (_derivative(K, plus, model, rest, j, step)
                - _derivative(K, minus, model, rest, j, step)) / (2 * hs)
    if j:
        e = np.zeros(model.width)
        e[-1] = 1.0
        ht = (step * scale) ** 2
        plus = model.compose(P, e * ht)
        minus = model.compose(P, -e * ht)
        return (_derivative(K, plus, model, spatial, j - 1, step)
                - _derivative(K, minus, model, spatial, j - 1, step)) / (2 * ht)
    return np.atleast_2d(K(P)).reshape(P.shape[0], -1)


def admissibility_check(K, orders=((0, 0), (1, 0), (0, 1)), radii=None, directions=64,
                        step=1e-3, seed=0):
    """Finite-difference size and smoothness constants of a kernel.

    For each order ``(l, j)`` reports ``sup |grad_X^l d_t^j K(Z)| ||Z||^{d+l+2j}``
    over a log-radial grid; derivatives are taken along left-invariant
    fields, which in the Heisenberg model are the horizontal ones.  The
    value at half the step is reported alongside so convergence can be
    judged.  Oddness ``K(-X, t) = -K(X, t)`` is checked to ``1e-12``.
    """
    model = K.model
    rng = np.random.default_rng(seed)
    radii = np.logspace(-2, 2, 9) if radii is None else np.asarray(radii, dtype=float)
    U = _unit_directions(model, directions, rng)
    P = np.concatenate([model.dilate(U, r) for r in radii])
    Pbar = P.copy()
    Pbar[:, :-1] *= -1
    v = np.atleast_2d(K(P)).reshape(P.shape[0], -1)
    vb = np.atleast_2d(K(Pbar)).reshape(P.shape[0], -1)
    scale = np.maximum(np.abs(v), 1e-300)
    odd_err = float(np.max(np.abs(v + vb) / np.max(scale, axis=1, keepdims=True)))
    norms = model.norm(P)
    consts, refined = {}, {}
    for (l, j) in orders:
        expo = K.degree + l + 2 * j
        for target, st in ((consts, step), (refined, step / 2)):
            total = np.zeros(P.shape[0])
            for axes in np.ndindex(*([model.n] * l)):
                D = _derivative(K, P, model, list(axes), j, st)
                total += np.sum(D * D, axis=1)
            target[(l, j)] = float(np.max(np.sqrt(total) * norms**expo))
    return AdmissibilityReport(odd_err <= 1e-12, odd_err, consts, refined, radii)


@dataclass
class CZOResult:
    values: np.ndarray  # (T, c)
    targets: np.ndarray  # atom indices
    tail_bound: float  # bound on the mass-weighted kernel beyond the cutoff


def truncated_czo_apply(K, mu, f=None, eps=None, targets=None, floor=2.0, cutoff=1e3,
                        chunk=None):
    """``T_eps f(X_i) = sum_{d(X_j, X_i) > eps} K(X_j^{-1} . X_i) f_j w_j``.

    Direct summation.  Sources farther than ``cutoff * eps`` are skipped
    and bounded by ``sum |f_j| w_j * (cutoff * eps)**(-degree)``.  Each
    target's contributions are sorted before summing, so the result does
    not depend on the order of the atoms.
    """
    require_scale(eps, mu.h, floor, "truncated_czo_apply")
    model = mu.model
    N = len(mu)
    f = np.ones(N) if f is None else np.asarray(f, dtype=float)
    targets = np.arange(N) if targets is None else np.asarray(targets, dtype=np.intp)
    fw = f * mu.weights
    chunk = max(1, 1_000_000 // max(N, 1)) if chunk is None else chunk
    out = None
    far_mass = 0.0
    cut = cutoff * eps
    for s in range(0, targets.size, chunk):
        T = mu.points[targets[s:s + chunk]]
        Z = model.compose(-mu.points[None, :, :], T[:, None, :])
        d = model.norm(Z)
        near = (d > eps) & (d <= cut)
        far = d > cut
        far_mass = max(far_mass, float(np.max(np.sum(np.abs(fw)[None, :] * far, axis=1))))
        Zs = np.where(near[..., None], Z, 1.0)
        vals = np.asarray(K(Zs.reshape(-1, model.width))).reshape(T.shape[0], N, -1)
        vals = vals * (fw[None, :, None] * near[..., None])
        vals = np.sort(vals, axis=1)
        block = np.sum(vals, axis=1)
        out = block if out is None else np.concatenate([out, block])
    tail = far_mass * cut ** (-K.degree)
    return CZOResult(out, targets, float(tail))


# ---------------------------------------------------------------------------
# square sums and Theta

def _scales(R, low):
    """Dyadic ``lam = 2**-j`` with ``low <= lam <= R``, largest first."""
    j0 = int(np.ceil(-np.log2(R) - 1e-12))
    out = []
    j = j0
    while 2.0 ** (-j) >= low * (1 - 1e-12):
        out.append(2.0 ** (-j))
        j += 1
    return out


def lp_terms(phi, mu, X, R, floor=8.0, dilation="anisotropic", low=None):
    """Per-scale terms of the Littlewood-Paley sum at ``B(X, R)``.

    Returns ``[(lam, term)]`` with
    ``term = int_{B_R(X)} |lam**-(k+2) (phi_lam * mu)|**2 dmu`` for dyadic
    ``lam <= R`` down to ``low`` (default ``floor * h``).
    """
    model = mu.model
    d = model.dim
    low = floor * mu.h if low is None else low
    require_scale(R, low, 1.0, "lp_square_sum")
    idx, _ = mu.ball(X, R)
    Y = mu.points[idx]
    w = mu.weights[idx]
    out = []
    for lam in _scales(R, low):
        c = convolve(phi, mu, Y, lam, dilation)
        out.append((lam, float(np.sum(w * np.sum(c * c, axis=1)) * lam ** (-2 * d))))
    return out


def lp_square_sum(phi, mu, X, R, floor=8.0, dilation="anisotropic"):
    """``sum_{lam <= R} int_{B_R(X)} |lam**-(k+2) phi_lam * mu|**2 dmu``."""
    return float(sum(t for _, t in lp_terms(phi, mu, X, R, floor, dilation)))


def theta_coefficient(phi, mu, center, ell, A=1.0, floor=8.0, dilation="anisotropic"):
    """``int_{B(Z_E, A ell)} |ell**-(k+2) (phi_ell * mu)|**2 dmu``."""
    require_scale(ell, mu.h, floor, "theta_coefficient")
    idx, _ = mu.ball(center, A * ell)
    c = convolve(phi, mu, mu.points[idx], ell, dilation)
    return float(np.sum(mu.weights[idx] * np.sum(c * c, axis=1)) * ell ** (-2 * mu.model.dim))


def cube_thetas(family, mu, tree, A=1.0, floor=8.0, dilation="anisotropic"):
    """``Theta_{phi, A}(E)`` for every test function and cube, shape ``(F, cubes)``.

    Convolutions are evaluated once per generation at every atom and then
    integrated over each cube's ball.
    """
    d = mu.model.dim
    out = np.zeros((len(family), len(tree)))
    for j, ids in tree.generations.items():
        ell = 2.0 ** j
        require_scale(ell, mu.h, floor, "cube_thetas")
        centers = np.array([tree.cubes[c].center for c in ids])
        ids = np.asarray(ids)
        for fi, phi in enumerate(family):
            c = convolve(phi, mu, mu.points, ell, dilation)
            dens = mu.weights * np.sum(c * c, axis=1) * ell ** (-2 * d)
            for s, e, flat, _, off in mu.index.iter_flat(centers, A * ell):
                owner = np.repeat(np.arange(e - s), np.diff(off))
                out[fi, ids[s:e]] = np.bincount(owner, weights=dens[flat], minlength=e - s)
    return out


@dataclass
class SquareFunctionReport:
    """Square sums per sampled ball and Theta per cube."""

    names: list
    centers: np.ndarray  # atom indices of the sampled balls
    radii: np.ndarray
    sums: np.ndarray  # (F, balls, radii)
    normalized: np.ndarray  # sums / R**(k+2)
    thetas: np.ndarray = None  # (F, cubes)
    carleson: dict = field(default_factory=dict)

    def spread(self):
        """Max over (function, ball) of max/min of the normalised sum across radii."""
        v = self.normalized
        lo = np.min(v, axis=2)
        hi = np.max(v, axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.max(np.where(lo > 0, hi / lo, np.inf)))


def square_function_report(family, mu, centers, radii, floor=8.0, tree=None, A=1.0,
                           dilation="anisotropic"):
    d = mu.model.dim
    centers = np.asarray(centers, dtype=np.intp)
    radii = np.asarray(radii, dtype=float)
    sums = np.zeros((len(family), centers.size, radii.size))
    for fi, phi in enumerate(family):
        for ci, c in enumerate(centers):
            for ri, R in enumerate(radii):
                sums[fi, ci, ri] = lp_square_sum(phi, mu, mu.points[c], R, floor, dilation)
    rep = SquareFunctionReport([p.name for p in family], centers, radii, sums,
                               sums / radii[None, None, :] ** d)
    if tree is not None:
        th = cube_thetas(family, mu, tree, A, floor, dilation)
        rep.thetas = th
        for fi, phi in enumerate(family):
            rep.carleson[phi.name] = carleson_norm(tree, th[fi] * tree.mass / tree.ell ** d).norm
    return rep


@dataclass
class CarlesonDetection:
    """Cubes with ``max_phi Theta >= delta ell**(k+2)`` and the bounds around them.

    ``theta_map[E] = sum_phi Theta_phi(E) mu(E) / ell(E)**(k+2)``; since
    every flagged cube has ``delta mu(E) <= theta_map[E]``, the family's
    Carleson norm is at most ``square_norm / delta``.  Per root the chain
    ``delta * packed_mass <= theta_sum`` is recorded together with the
    raw ``sum_phi sum_E Theta / ell(E0)**(k+2)``.
    """

    delta: float
    family: np.ndarray
    family_norm: float
    square_norm: float
    bound: float
    holds: bool
    chain: dict  # root -> (delta * packed mass, theta sum, raw Theta sum / ell**(k+2))
    theta_map: np.ndarray


def find_carleson(tree, thetas, delta, k):
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    d = k + 2
    ell_d = tree.ell ** d
    fam = np.max(thetas, axis=0) >= delta * ell_d
    theta_map = np.sum(thetas, axis=0) * tree.mass / ell_d
    fam_res = carleson_norm(tree, family=fam)
    sq = carleson_norm(tree, theta_map)
    bound = sq.norm / delta
    raw = carleson_norm(tree, np.sum(thetas, axis=0)).per_cube * tree.mass
    chain = {}
    for r in tree.roots:
        m = tree.mass[r]
        chain[int(r)] = (delta * fam_res.per_cube[r] * m, sq.per_cube[r] * m,
                         raw[r] / ell_d[r])
    holds = fam_res.norm <= bound * (1 + 1e-12) + 1e-300
    return CarlesonDetection(float(delta), fam, fam_res.norm, sq.norm, bound, bool(holds),
                             chain, theta_map)
