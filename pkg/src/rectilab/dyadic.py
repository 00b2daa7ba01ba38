"""Christ-type dyadic cubes over the atoms of a discrete measure.

Generation ``j`` has sidelength ``ell = 2**j``.  Cubes are cut top-down:
every parent is split into the nearest-point cells of a greedy net of
radius ``ell / 16`` drawn from its own atoms, so nesting holds by
construction and every cube stays within ``ell / 8`` of an anchor atom,
hence ``diam E <= ell / 4`` in a metric space.  Thin cells along parent
boundaries are merged into siblings, and each cube's designated centre is
its atom farthest from the other cubes, which is what keeps the centre
separation constant ``c*`` from decaying with depth.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .index import NeighborIndex
from .measures import interior_mask, require_scale

__all__ = [
    "DyadicCube",
    "CubeTree",
    "AxiomReport",
    "build_tree",
    "verify_grid_axioms",
    "cubes_below",
    "neighbors",
    "overlap_count",
    "dump_tree_jsonl",
    "greedy_net",
]


@dataclass
class DyadicCube:
    id: int
    j: int
    members: np.ndarray
    center_index: int
    center: np.ndarray
    parent: int = -1
    children: tuple = ()
    boundary: bool = False
    mass: float = 0.0

    @property
    def ell(self):
        return 2.0 ** self.j


@dataclass
class CubeTree:
    """Cubes of all generations with parent/child links.

    ``generations`` maps ``j`` to the list of cube ids of that generation,
    ordered as built.  Ids are assigned from the top generation down.
    """

    cubes: list
    generations: dict
    c_star: float = float("nan")
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.cubes)

    def __getitem__(self, i):
        return self.cubes[i]

    @property
    def top(self):
        return max(self.generations)

    @property
    def bottom(self):
        return min(self.generations)

    @property
    def roots(self):
        return [c.id for c in self.cubes if c.parent < 0]

    @property
    def ell(self):
        return np.array([c.ell for c in self.cubes])

    @property
    def mass(self):
        return np.array([c.mass for c in self.cubes])

    @property
    def j(self):
        return np.array([c.j for c in self.cubes])

    def ancestors(self, i):
        out = []
        p = self.cubes[i].parent
        while p >= 0:
            out.append(p)
            p = self.cubes[p].parent
        return out

    def labels(self, j, n_atoms):
        lab = np.full(n_atoms, -1, dtype=np.intp)
        for cid in self.generations[j]:
            lab[self.cubes[cid].members] = cid
        return lab


def greedy_net(flat, off, order, group=None):
    """Greedy net from precomputed neighbour lists.

    ``flat[off[i]:off[i+1]]`` lists the points within the net radius of
    point ``i``.  Points are visited in ``order``; with ``group`` given,
    a point only covers neighbours of the same group.  Returns the chosen
    positions.
    """
    n = off.size - 1
    covered = np.zeros(n, dtype=bool)
    chosen = []
    for pos in order:
        if covered[pos]:
            continue
        chosen.append(pos)
        nb = flat[off[pos]:off[pos + 1]]
        if group is not None:
            nb = nb[group[nb] == group[pos]]
        covered[nb] = True
        covered[pos] = True
    return np.asarray(chosen, dtype=np.intp)


def _first_per_owner(owner, key, flat):
    order = np.lexsort((flat, key, owner))
    first = np.ones(order.size, dtype=bool)
    first[1:] = owner[order][1:] != owner[order][:-1]
    return order[first]


def _diameter(pts, model, chunk=2048):
    if pts.shape[0] < 2:
        return 0.0
    best = 0.0
    for s in range(0, pts.shape[0], chunk):
        best = max(best, float(np.max(model.pairwise(pts[s:s + chunk], pts))))
    return best


def build_tree(mu, top_scale, bottom_scale, seed=0, floor=8.0, net_ratio=1 / 16,
               target=1 / 28, boundary_margin=0.25, max_candidates=64):
    """Dyadic cube tree of ``mu`` between two scales.

    Generations are built top-down.  Inside every parent cube the atoms
    are covered by a greedy net of radius ``net_ratio * ell`` (visited in a
    seeded random order) and each atom joins its nearest net point.  A cube
    whose best centre is closer than ``target * ell`` to another cube is
    merged into its nearest sibling when the merged cube stays within
    ``ell / 8`` of the sibling's net point.  Each cube's centre ``Z_E`` is
    the candidate atom farthest from the other cubes.

    Parameters
    ----------
    mu : DiscreteMeasure
    top_scale, bottom_scale : float
        Sidelengths of the coarsest and finest generations are the powers
        of two inside ``[bottom_scale, top_scale]``.
    seed : int
    floor : float
        ``bottom_scale`` must be at least ``floor * h``.
    net_ratio : float
        Net radius as a fraction of the sidelength.
    target : float
        Separation sought for the centres, as a fraction of ``ell``.
    boundary_margin : float
        A cube is flagged as boundary when its centre is closer than
        ``boundary_margin * ell`` to the edge of the sampling box.
    max_candidates : int
        Centre candidates per cube (the atoms nearest the net point).
    """
    n_atoms = len(mu)
    if n_atoms == 0:
        raise ValueError("cannot build a tree over an empty measure")
    if bottom_scale > top_scale:
        raise ValueError("bottom_scale exceeds top_scale")
    require_scale(bottom_scale, mu.h, floor, "build_tree")
    model = mu.model
    pts = mu.points
    reach = float(np.max(model.dist(pts, pts[0])))
    if top_scale > 8.0 * max(reach, mu.h):
        raise ValueError("top_scale exceeds four times the support diameter")
    j_bot = int(np.ceil(np.log2(bottom_scale) - 1e-9))
    j_top = int(np.floor(np.log2(top_scale) + 1e-9))
    if j_top < j_bot:
        raise ValueError("no power of two between the scales")
    rng = np.random.default_rng(seed)
    index = mu.index

    parent_lab = np.zeros(n_atoms, dtype=np.intp)
    parent_ids = np.array([-1])
    cubes = []
    generations = {}
    for j in range(j_top, j_bot - 1, -1):
        ell = 2.0 ** j
        rho = net_ratio * ell
        flat, d, off = index.query_flat(pts, rho)
        net = greedy_net(flat, off, rng.permutation(n_atoms), parent_lab)
        lab = _voronoi(mu, net, parent_lab, rho)
        lab, centers, depth = _settle(mu, lab, net, parent_lab, ell, target,
                                      max_candidates)
        ncube = centers.size
        inner = interior_mask(mu, boundary_margin * ell)
        order = np.argsort(lab, kind="stable")
        bounds = np.concatenate([[0], np.cumsum(np.bincount(lab, minlength=ncube))])
        base = len(cubes)
        ids = []
        for c in range(ncube):
            mem = order[bounds[c]:bounds[c + 1]]
            ca = int(centers[c])
            par = int(parent_ids[parent_lab[ca]])
            cubes.append(DyadicCube(
                id=base + c, j=j, members=mem, center_index=ca, center=pts[ca].copy(),
                parent=par, boundary=not bool(inner[ca]),
                mass=float(np.sum(mu.weights[mem]))))
            ids.append(base + c)
        generations[j] = ids
        parent_lab = lab
        parent_ids = np.asarray(ids)
    kids = {}
    for c in cubes:
        if c.parent >= 0:
            kids.setdefault(c.parent, []).append(c.id)
    for pid, ch in kids.items():
        cubes[pid].children = tuple(ch)
    tree = CubeTree(cubes, generations, params={
        "seed": seed, "top_scale": top_scale, "bottom_scale": bottom_scale,
        "net_ratio": net_ratio, "target": target,
        "boundary_margin": boundary_margin})
    tree.c_star = measure_c_star(tree, mu)
    return tree


def _voronoi(mu, net, parent_lab, rho):
    """Label each atom by its nearest net point inside the same parent."""
    n = len(mu)
    nidx = NeighborIndex(mu.points[net], mu.model)
    r = rho
    lab = np.full(n, -1, dtype=np.intp)
    todo = np.arange(n)
    while todo.size:
        flat, d, off = nidx.query_flat(mu.points[todo], r * (1 + 1e-9))
        owner = np.repeat(np.arange(todo.size), np.diff(off))
        ok = parent_lab[net[flat]] == parent_lab[todo[owner]]
        flat, d, owner = flat[ok], d[ok], owner[ok]
        sel = _first_per_owner(owner, d, flat)
        lab[todo[owner[sel]]] = flat[sel]
        todo = todo[lab[todo] < 0]
        r *= 2.0
    return lab


def _depths(mu, lab, cand, owner, reach):
    """Distance from each candidate atom to atoms outside its cube."""
    flat, d, off = mu.index.query_flat(mu.points[cand], reach)
    seg = np.repeat(np.arange(cand.size), np.diff(off))
    out = lab[flat] != owner[seg]
    dout = np.full(cand.size, reach)
    np.minimum.at(dout, seg[out], d[out])
    return dout


def _settle(mu, lab, net, parent_lab, ell, target, max_candidates):
    """Pick deep centres and merge shallow cubes into siblings."""
    model = mu.model
    pts = mu.points
    ncube = net.size
    reach = 2.0 * target * ell

    def candidates(cubes_):
        order = np.argsort(lab, kind="stable")
        bounds = np.concatenate([[0], np.cumsum(np.bincount(lab, minlength=ncube))])
        cand, owner = [], []
        for c in cubes_:
            mem = order[bounds[c]:bounds[c + 1]]
            if mem.size > max_candidates:
                dn = model.dist(pts[mem], pts[net[c]])
                mem = mem[np.argsort(dn, kind="stable")[:max_candidates]]
            cand.append(mem)
            owner.append(np.full(mem.size, c))
        return np.concatenate(cand), np.concatenate(owner)

    def best(cubes_):
        cand, owner = candidates(cubes_)
        dout = _depths(mu, lab, cand, owner, reach)
        # deepest candidate; ties go to the smallest atom index
        sel = _first_per_owner(owner, -dout, cand)
        return owner[sel], cand[sel], dout[sel]

    alive = np.arange(ncube)
    own, cen, dep = best(alive)
    centers = np.empty(ncube, dtype=np.intp)
    depth = np.empty(ncube)
    centers[own], depth[own] = cen, dep
    shallow = [c for c in np.argsort(depth, kind="stable") if depth[c] < target * ell]
    if shallow:
        npar = parent_lab[net]
        merged = set()
        touched = set()
        for c in shallow:
            if c in touched:
                continue
            sib = np.flatnonzero((npar == npar[c]) & (np.arange(ncube) != c))
            sib = np.array([s for s in sib if s not in merged], dtype=np.intp)
            if sib.size == 0:
                continue
            dn = model.dist(pts[net[sib]], pts[net[c]])
            for s in sib[np.argsort(dn, kind="stable")]:
                mem = np.flatnonzero((lab == c) | (lab == s))
                if np.max(model.dist(pts[mem], pts[net[s]])) <= ell / 8:
                    lab[lab == c] = s
                    merged.add(c)
                    touched.add(s)
                    break
        if merged:
            keep = np.array([c for c in range(ncube) if c not in merged])
            own, cen, dep = best(keep)
            centers[own], depth[own] = cen, dep
            remap = np.full(ncube, -1, dtype=np.intp)
            remap[keep] = np.arange(keep.size)
            lab = remap[lab]
            centers, depth = centers[keep], depth[keep]
    return lab, centers, depth


def measure_c_star(tree, mu, cap=0.125):
    """``min_E dist(Z_E, supp \\ E) / ell(E)``, capped at ``cap``."""
    worst = cap
    n = len(mu)
    for j, ids in tree.generations.items():
        ell = 2.0 ** j
        lab = tree.labels(j, n)
        centers = np.array([tree.cubes[c].center_index for c in ids])
        flat, d, off = mu.index.query_flat(mu.points[centers], cap * ell)
        seg = np.repeat(np.asarray(ids), np.diff(off))
        out = lab[flat] != seg
        if np.any(out):
            worst = min(worst, float(np.min(d[out])) / ell)
    return worst


@dataclass
class AxiomReport:
    partition: bool
    nesting: bool
    centers_inside: bool
    diameter: bool
    worst_diameter_ratio: float
    mass: bool
    mass_lower: float
    mass_upper: float
    c_star: float
    separation: bool
    generations: int
    failures: list

    @property
    def passed(self):
        return (self.partition and self.nesting and self.centers_inside
                and self.diameter and self.mass and self.separation)


def verify_grid_axioms(tree, mu, c_star_min=1 / 32, mass_ratio_max=256.0,
                       exact_diameter_limit=3000):
    """Check the dyadic grid axioms on a tree.

    Diameters are computed exactly for cubes with at most
    ``exact_diameter_limit`` atoms and bounded by twice the radius about
    the centre otherwise (exact in the parabolic metric up to that factor).
    Mass bounds use ``mu(E) / ell**(k+2)`` over non-boundary cubes and pass
    when the spread of that ratio is at most ``mass_ratio_max``.
    """
    n = len(mu)
    model = mu.model
    failures = []
    partition = True
    for j, ids in tree.generations.items():
        allm = np.concatenate([tree.cubes[c].members for c in ids]) if ids else np.zeros(0, int)
        if allm.size != n or not np.array_equal(np.sort(allm), np.arange(n)):
            partition = False
            failures.append(f"generation {j} is not a partition")
    nesting = True
    centers_inside = True
    worst_diam = 0.0
    ratios = []
    for c in tree.cubes:
        if c.parent >= 0:
            if not np.all(np.isin(c.members, tree.cubes[c.parent].members)):
                nesting = False
                failures.append(f"cube {c.id} is not inside its parent")
        if not np.any(c.members == c.center_index):
            centers_inside = False
            failures.append(f"cube {c.id} does not contain its centre")
        P = mu.points[c.members]
        if c.members.size <= exact_diameter_limit:
            diam = _diameter(P, model)
        else:
            diam = 2.0 * float(np.max(model.dist(P, c.center)))
        worst_diam = max(worst_diam, diam / c.ell)
        if not c.boundary:
            ratios.append(c.mass / c.ell ** model.dim)
    diameter = worst_diam <= 0.25 + 1e-12
    if not diameter:
        failures.append(f"diameter ratio {worst_diam:.4f} exceeds 1/4")
    lo = float(min(ratios)) if ratios else float("nan")
    hi = float(max(ratios)) if ratios else float("nan")
    mass_ok = bool(ratios) and hi / lo <= mass_ratio_max
    if not mass_ok:
        failures.append(f"mass ratio spread {hi / lo if ratios else float('nan'):.3g}")
    cs = measure_c_star(tree, mu)
    separation = cs >= c_star_min * (1 - 1e-12)
    if not separation:
        failures.append(f"c* = {cs:.4f} below {c_star_min:.4f}")
    return AxiomReport(partition, nesting, centers_inside, diameter, worst_diam,
                       mass_ok, lo, hi, cs, separation, len(tree.generations), failures)


def cubes_below(tree, E0):
    """``E0`` followed by all its descendants (depth first)."""
    stack = [E0]
    while stack:
        c = stack.pop()
        yield c
        stack.extend(reversed(tree.cubes[c].children))


def neighbors(tree, mu, E, A):
    """Same-generation cubes whose centre lies within ``A * ell(E)`` of ``Z_E``."""
    c = tree.cubes[E]
    ids = tree.generations[c.j]
    Z = np.array([tree.cubes[i].center for i in ids])
    d = mu.model.dist(Z, c.center)
    return [i for i, di in zip(ids, d) if di < A * c.ell]


def overlap_count(tree, mu, A, j):
    """Largest number of balls ``B(Z_E, A ell)`` of generation ``j`` sharing an atom."""
    ids = tree.generations[j]
    ell = 2.0 ** j
    centers = np.array([tree.cubes[i].center for i in ids])
    idx = mu.index.query_ball(centers, A * ell)
    cnt = np.zeros(len(mu), dtype=np.intp)
    for ii in idx:
        cnt[ii] += 1
    return int(cnt.max(initial=0))


def dump_tree_jsonl(tree, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in tree.cubes:
            rec = {"id": c.id, "generation": c.j, "ell": c.ell,
                   "center": [float(v) for v in c.center],
                   "center_index": c.center_index, "parent": c.parent,
                   "children": list(c.children), "count": int(c.members.size),
                   "mass": c.mass, "boundary": c.boundary}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
