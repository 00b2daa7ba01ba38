"""Acceptance suite: one test per criterion, each recording a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v``; the recorded lines are
repeated in the terminal summary.  Criteria that fail are left failing.
"""

import os

import numpy as np
import pytest

from oracles import alpha_k_lower_bound, beta_bruteforce, flat_oracle, plane_distance_bruteforce
from rectilab import cli
from rectilab.beta import (beta_at, cube_betas, dupcond_holds, upward_domination_filter,
                           ur_growth, ur_sum)
from rectilab.czo import cube_thetas, default_family, find_carleson, square_function_report
from rectilab.dyadic import build_tree, verify_grid_axioms
from rectilab.group import GroupModel, HorizontalRotation, Region, VerticalPlane, \
    dist_to_vertical_plane
from rectilab.measures import DiscreteMeasure, TimeMeasure, interior_mask, make_example_A, \
    make_example_B, make_example_C, make_plane_with_defect, make_vertical_plane_measure
from rectilab.transport import alpha_m, flat_distance, hsdc_classify, hsdc_flags
from rectilab.vampiric import heisenberg_sigma_check, lattice_closure_check, \
    parabolic_reflection_check, vampiric_residual

P21 = GroupModel.parabolic(2, 1)
H = GroupModel.heisenberg()
MODELS = [GroupModel.parabolic(2, 1), GroupModel.parabolic(3, 1), GroupModel.parabolic(3, 2),
          GroupModel.parabolic(4, 2), H]
L0 = VerticalPlane.coordinate(2, [0])


def plane_measure(h, box, jitter=0.0, seed=0):
    te = box * box
    return make_vertical_plane_measure(L0, TimeMeasure.lebesgue(-te, te, h * h),
                                       Region.cube(np.zeros(3), box), h, P21, jitter, seed)


def nearest_origin(mu):
    return mu.points[np.argmin(mu.model.norm(mu.points))]


@pytest.fixture(scope="module")
def example_a():
    mu = make_example_A(P21, Region.cube(np.zeros(3), 4.0), 0.25)
    tree = build_tree(mu, 16.0, 2.0)
    return mu, tree, cube_betas(mu, tree)


@pytest.fixture(scope="module")
def plane_ref():
    mu = plane_measure(0.25, 4.0)
    return mu, build_tree(mu, 16.0, 2.0)


# ---------------------------------------------------------------------------

def test_1_group_laws(verdict):
    rng = np.random.default_rng(1)
    worst = {}
    for model in MODELS:
        a, b, c, g = (rng.uniform(-5, 5, (10_000, model.width)) for _ in range(4))
        d = model.dist(a, b)
        err = [
            np.abs(model.compose(model.compose(a, b), c) - model.compose(a, model.compose(b, c))),
            np.abs(model.compose(a, model.inverse(a))),
            np.abs(model.compose(model.inverse(a), a)),
            np.abs(model.dist(model.compose(g, a), model.compose(g, b)) - d),
        ]
        # one dilation factor and rotation per block of 100 instances
        for s in range(0, 10_000, 100):
            sl = slice(s, s + 100)
            lam = rng.uniform(0.05, 20)
            err.append(np.abs(model.norm(model.dilate(a[sl], lam)) - lam * model.norm(a[sl])))
            err.append(np.abs(model.dist(model.dilate(a[sl], lam), model.dilate(b[sl], lam))
                              - lam * d[sl]))
            R = HorizontalRotation.random(model.n, rng, proper=model.kind == "heisenberg")
            err.append(np.abs(model.dist(model.rotate(a[sl], R), model.rotate(b[sl], R)) - d[sl]))
        worst[f"{model.kind}{model.n}{model.k}"] = max(float(np.max(e)) for e in err)
    top = max(worst.values())
    ok = verdict("1", top <= 1e-9, f"max group-law error {top:.2e} (<= 1e-9) over "
                                   f"{len(MODELS)} models x 1e4 instances")
    assert ok, worst


def test_2_closest_point(verdict):
    rng = np.random.default_rng(2)
    worst = 0.0
    for model in MODELS:
        for _ in range(100):
            L = VerticalPlane.from_span(rng.normal(size=(model.k, model.n)),
                                        shift=rng.uniform(-1, 1, model.n))
            a = rng.uniform(-2, 2, model.width)
            d = float(dist_to_vertical_plane(a[None, :], L, model)[0])
            bf = plane_distance_bruteforce(model, a, L, rng)
            worst = max(worst, abs(d - bf) / max(bf, 1e-12))
    ok = verdict("2", worst <= 1e-3, f"max relative gap to sampled minimisation {worst:.2e} "
                                     "(<= 1e-3), 100 pairs per model")
    assert ok


def test_3_dyadic_axioms(verdict, example_a, plane_ref):
    rows = []
    for name, (mu, tree) in [("example A", example_a[:2]), ("plane", plane_ref)]:
        rep = verify_grid_axioms(tree, mu)
        rows.append((name, rep.passed, rep.generations, rep.c_star, rep.failures))
    ok = all(p and g >= 4 and c >= 1 / 32 for _, p, g, c, _ in rows)
    verdict("3", ok, "; ".join(f"{n}: axioms {'ok' if p else 'fail'}, {g} generations, "
                               f"c* {c:.3f}" for n, p, g, c, _ in rows))
    assert ok, rows


def test_4_beta_ground_truth(verdict, plane_ref):
    mu, tree = plane_ref
    exact = float(np.max(cube_betas(mu, tree)))
    # plane plus normal noise of amplitude delta
    h, delta = 0.125, 0.05
    clean = plane_measure(h, 3.0)
    pts = clean.points.copy()
    pts[:, 1] += delta * np.random.default_rng(4).uniform(-1, 1, len(pts))
    noisy = DiscreteMeasure(pts, clean.weights, h, P21)
    ratios = [beta_at(noisy, np.zeros(3), r).value / (delta / r) for r in (0.5, 1.0, 2.0)]
    # against a dense plane search on small clouds
    gaps = []
    for model in MODELS[:3]:
        for seed in (0, 1):
            rng = np.random.default_rng(seed)
            scale = np.array([1.0, 0.3, 0.15][: model.n] + [0.8])
            cloud = DiscreteMeasure(rng.normal(size=(150, model.width)) * scale,
                                    rng.uniform(0.5, 1.5, 150), 0.01, model)
            b = beta_at(cloud, np.zeros(model.width), 2.0).value
            bf = beta_bruteforce(model, cloud.points, cloud.weights, np.zeros(model.width),
                                 2.0, model.k)
            gaps.append(abs(b - bf) / bf)
    ok = exact <= 1e-9 and all(0.2 <= q <= 5 for q in ratios) and max(gaps) <= 0.02
    verdict("4", ok, f"plane max beta {exact:.1e}; noise ratios "
                     f"{', '.join('%.3f' % q for q in ratios)}; brute-force gap {max(gaps):.1e}")
    assert ok


def test_5a_beta_lower_bound(verdict, example_a):
    _, tree, b = example_a
    per_gen = {j: float(np.min(b[ids])) for j, ids in sorted(tree.generations.items())}
    ok = min(per_gen.values()) >= 0.05 and len(per_gen) >= 4
    verdict("5a", ok, f"example A min beta per generation "
                      f"{', '.join('%.3f' % v for v in per_gen.values())} (>= 0.05)")
    assert ok


def test_5b_ur_sum_growth(verdict, example_a):
    mu, tree, b = example_a
    depths, means, slope = ur_growth(ur_sum(mu, tree, betas=b), tree)
    ok = slope > 0.5
    verdict("5b", ok, f"UR sum growth slope {slope:.3f} per generation (> 0.5); "
                      f"means {', '.join('%.3f' % m for m in means)}")
    assert ok


def test_5c_square_sum_flat_across_scales(verdict):
    h, box = 0.125, 3.2
    te = box * box
    # shifted so the box's time centre sits on a point with Cantor mass on both sides
    tm = TimeMeasure.cantor_quarter(2 * te, h=h, origin=-0.4 * te)
    mu = make_example_A(P21, Region.cube(np.zeros(3), box), h, jitter=0.5, seed=5, time=tm)
    inner = np.flatnonzero(interior_mask(mu, 3.0))
    cen = np.sort(np.random.default_rng(7).choice(inner, 4, replace=False))
    rep = square_function_report(default_family(), mu, cen, [0.25, 0.5, 1.0], floor=2.0)
    spread = rep.spread()
    ok = spread <= 2.0
    verdict("5c", ok, f"max/min of square sum / R^3 over R in [0.25, 1] is {spread:.2f} "
                      f"(<= 2), 6 functions x 4 balls")
    assert ok


def test_6_flat_distance_oracle(verdict):
    rng = np.random.default_rng(6)
    X = np.zeros(3)
    gap = sym = zero = 0.0
    for i in range(200):
        model = (P21, H)[i % 2]
        na = int(rng.integers(1, 4))
        nb = int(rng.integers(1, 7 - na))
        a = DiscreteMeasure(rng.uniform(-2.5, 2.5, (na, 3)), rng.uniform(0.1, 1, na), 0.01, model)
        b = DiscreteMeasure(rng.uniform(-2.5, 2.5, (nb, 3)), rng.uniform(0.1, 1, nb), 0.01, model)
        v = flat_distance(a, b, X, 1.0)
        o = flat_oracle(model, a.points, a.weights, b.points, b.weights, X, 1.0)
        gap = max(gap, abs(v - o))
        sym = max(sym, abs(v - flat_distance(b, a, X, 1.0)))
        zero = max(zero, abs(flat_distance(a, a, X, 1.0)))
    ok = gap <= 1e-6 and sym <= 1e-9 and zero <= 1e-12
    verdict("6", ok, f"200 instances: oracle gap {gap:.1e}, asymmetry {sym:.1e}, "
                     f"self-distance {zero:.1e}")
    assert ok


def test_7_alpha_ground_truth(verdict, plane_ref, example_a):
    mu = plane_ref[0]
    X = nearest_origin(mu)
    member = {r: alpha_m(mu, X, r, 1).value for r in (1.0, 2.0)}
    mem_ok = all(v <= 1e-3 + 4 * mu.h / r for r, v in member.items())
    A = example_a[0]
    XA = nearest_origin(A)
    idx, _ = A.ball(XA, 3.0)
    lower = alpha_k_lower_bound(P21, A.points[idx], A.weights[idx], XA, 1.0)
    a_next = alpha_m(A, XA, 1.0, 2).value
    flag = bool(hsdc_flags([a_next], [np.inf], 1e-2)[0])
    ok = mem_ok and lower >= 0.02 and a_next <= 1e-2
    verdict("7", ok, f"plane alpha_1 {member[1.0]:.2e}, {member[2.0]:.2e}; example A certified "
                     f"alpha_1 >= {lower:.3g} (>= 0.02), alpha_2 {a_next:.2e} (<= 1e-2), "
                     f"flag {'fires' if flag else 'silent'}")
    assert ok


def test_8_hsdc_packing(verdict):
    h = 0.5
    # roots at the box scale: much larger balls see a thin sample and alpha decays
    plane = plane_measure(h, 3.0)
    tp = build_tree(plane, 8.0, 4.0)
    top = max(hsdc_classify(plane, tp, 0.01).root_packing().values())
    A = make_example_A(P21, Region.cube(np.zeros(3), 3.0), h)
    ta = build_tree(A, 16.0, 4.0)
    low = min(hsdc_classify(A, ta, 0.01).root_packing().values())
    ngen = len(ta.generations)
    ok = top <= 0.05 and low >= 0.9 * ngen
    verdict("8", ok, f"plane packing {top:.3g} (<= 0.05); example A packing {low:.3g} "
                     f"(>= 0.9 x {ngen} generations)")
    assert ok


def test_9_vampiric_refinement(verdict):
    fam = default_family(radii=(1.0, 1.25))
    box = Region.cube(np.zeros(3), 0.95)
    LH = VerticalPlane.from_span([[1.0, 1.0]], shift=[0.1, -0.05])
    gens = {
        "A": lambda h, j: make_example_A(P21, box, h, jitter=j, seed=1),
        "B": lambda h, j: make_example_B(P21, L0, [0.0, 0.5], box, h, jitter=j, seed=2),
        "C": lambda h, j: make_example_C(GroupModel.parabolic(3, 1),
                                         Region.cube(np.zeros(4), 0.8), h, jitter=j, seed=3),
        "H": lambda h, j: make_vertical_plane_measure(LH, TimeMeasure.triangle_density(4, h * h),
                                                      box, h, H, jitter=j, seed=4),
    }
    hs = (1 / 8, 1 / 16, 1 / 32)
    eps = {h: 4 * h * h for h in hs}
    ok, parts = True, []
    for name, g in gens.items():
        res = [vampiric_residual(g(h, 0.5), fam, lam=0.5, floor=2, sample=48).max_residual
               for h in hs]
        exact = vampiric_residual(g(hs[0], 0.0), fam, lam=0.5, floor=2, sample=48).max_residual
        ok &= all(r <= eps[h] for r, h in zip(res, hs))
        ok &= all(res[i + 1] <= 0.7 * res[i] for i in range(2))
        ok &= exact <= eps[hs[0]]
        parts.append(f"{name} " + "/".join("%.1e" % r for r in res))
    defect = []
    for h in hs:
        mu = make_plane_with_defect(P21, L0, TimeMeasure.lebesgue(-3, 3, h * h), box, h,
                                    [0.0, 0.3], 0.3, jitter=0.5, seed=2)
        near = np.flatnonzero(P21.dist(mu.points, np.zeros(3)) < 0.5)
        at = near[:: max(1, len(near) // 48)]
        defect.append(vampiric_residual(mu, fam, lam=0.5, floor=2, at=at).max_residual)
    ok &= all(d >= 10 * eps[h] for d, h in zip(defect, hs))
    verdict("9", ok, f"eps(h) = 4h^2; residuals at h = 1/8, 1/16, 1/32: {', '.join(parts)}; "
                     f"defect {'/'.join('%.2f' % d for d in defect)}")
    assert ok


def test_10_reflections(verdict):
    h = 0.125
    B = make_example_B(P21, L0, [0.0, 0.5], Region.cube(np.zeros(3), 3.0), h)
    ref = parabolic_reflection_check(B, r_grid=(0.5,), n_pairs=40, seed=1, pair_radius=0.7)
    t = B.points[np.argmin(np.abs(B.points[:, -1]))][-1]

    def atom(x, y):
        return int(np.flatnonzero(np.all(np.abs(B.points - [x, y, t]) < 1e-9, axis=1))[0])

    lat = lattice_closure_check(B, [atom(0, 0), atom(0.125, 0.5), atom(0.25, 0.0)], 4)
    LH = VerticalPlane.from_span([[1.0, 1.0]], shift=[0.1, -0.05])
    muH = make_vertical_plane_measure(LH, TimeMeasure.triangle_density(4, h * h),
                                      Region.cube(np.zeros(3), 1.2), h, H)
    sig = heisenberg_sigma_check(muH, r_grid=(0.25,), n_pairs=32)
    inv = sig.extra["involution_error"]
    ok = ref.passed and lat.max_membership <= 2 * h and inv <= 1e-12 \
        and sig.max_membership <= 2 * h
    verdict("10", ok, f"example B reflections: membership {ref.max_membership:.1e}, mass "
                      f"discrepancy {ref.max_discrepancy:.3f} (<= 0.1, {ref.out_of_box} out of "
                      f"box); lattice {lat.max_membership:.1e}; Sigma involution {inv:.1e}, "
                      f"membership {sig.max_membership:.3f} (<= {2 * h})")
    assert ok


def test_11_upward_domination(verdict, example_a):
    mu, tree, b = example_a
    dup = upward_domination_filter(tree, b, 0.1)
    w = b**2 * tree.mass
    frac = float(w[dup].sum() / w.sum())
    literal = all(dupcond_holds(tree, b, 0.1, int(i)) for i in np.flatnonzero(dup))
    ok = frac >= 0.2 and literal
    verdict("11", ok, f"upward share of beta^2 mass {frac:.3f} (>= 0.2), {int(dup.sum())} cubes, "
                      f"literal condition {'holds' if literal else 'fails'}")
    assert ok


def test_12_carleson_detector(verdict):
    mu = plane_measure(0.5, 4.0)
    tree = build_tree(mu, 16.0, 4.0)
    F = cube_thetas(default_family(), mu, tree, floor=2.0)
    det = find_carleson(tree, F, 1e-3, 1)
    chain = all(a <= b * (1 + 1e-12) + 1e-300 for a, b, _ in det.chain.values())
    ok = det.holds and det.family_norm <= det.bound and chain
    verdict("12", ok, f"family norm {det.family_norm:.3g} <= {det.bound:.3g} "
                      f"(square norm / delta); per-root chain {'holds' if chain else 'fails'}")
    assert ok


CONFIG = """
seed = 5
[model]
kind = "parabolic"
n = 2
k = 1
[measure]
generator = "example_A"
h = 0.5
jitter = 0.0
[measure.box]
kind = "cube"
radius = 2.0
[tree]
top = 8.0
bottom = 4.0
[suites.adr]
scales = [1.0]
floor = 2.0
[suites.beta]
[suites.hsdc]
lam = 0.01
[suites.theta]
"""


def test_13_determinism(verdict, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(CONFIG)
    for name in ("one", "two"):
        assert cli.main(["analyze", str(cfg), "--out", str(tmp_path / name)]) == 0
    files = sorted(os.listdir(tmp_path / "one"))
    same = files == sorted(os.listdir(tmp_path / "two")) and all(
        (tmp_path / "one" / f).read_bytes() == (tmp_path / "two" / f).read_bytes() for f in files)
    ok = same and "cubes.csv" in files
    verdict("13", ok, f"two analyze runs: {len(files)} files "
                      f"{'byte-identical' if same else 'differ'}")
    assert ok
