"""Batch driver: ``rectilab generate | analyze | report``.

One TOML file declares the model, the measure generator, the tree scales
and the suites to run.  Only ``--dry-run``, ``--jobs`` and ``--out`` may
override it.  Exit codes: 0 success, 2 configuration error, 3 unmet
precondition (resolution floors, missing prerequisites, bad checksums),
4 acceptance failure under ``--check``.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .beta import carleson_norm, cube_betas, dupcond_holds, upward_domination_filter, ur_growth, \
    ur_sum, write_coefficient_csv
from .czo import cube_thetas, default_family, family_from_config, find_carleson, \
    square_function_report
from .dyadic import build_tree, verify_grid_axioms
from .group import GroupModel, Region, VerticalPlane
from .measures import ResolutionError, TimeMeasure, adr_check, interior_mask, load_measure, \
    make_example_A, make_example_B, make_example_C, make_plane_with_defect, \
    make_vertical_plane_measure, measure_header, save_measure
from .transport import cube_alphas, hsdc_classify
from .vampiric import vampiric_residual

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_CHECK = 0, 2, 3, 4

GENERATORS = ("vertical_plane", "example_A", "example_B", "example_C", "plane_with_defect")
SUITES = ("adr", "beta", "alpha", "hsdc", "theta", "square", "vampiric")
# named counter streams of the seed's Philox generator
STREAMS = {"measure": 0, "tree": 1, "alpha": 2, "square": 3, "vampiric": 4, "adr": 5}


class ConfigError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

def load_config(path):
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    for key in ("model", "measure"):
        if key not in cfg:
            raise ConfigError(f"missing [{key}] section")
    model_from_config(cfg)
    gen = cfg["measure"].get("generator")
    if gen not in GENERATORS:
        raise ConfigError(f"unknown generator {gen!r}; choose from {', '.join(GENERATORS)}")
    h = cfg["measure"].get("h")
    if not isinstance(h, (int, float)) or h <= 0:
        raise ConfigError("measure.h must be a positive number")
    if "box" not in cfg["measure"]:
        raise ConfigError("missing [measure.box] section")
    for name in cfg.get("suites", {}):
        if name not in SUITES:
            raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    if not isinstance(cfg.get("seed", 0), int):
        raise ConfigError("seed must be an integer")
    fam = cfg.get("suites", {}).get("theta", {}).get("family")
    if fam is not None:
        try:
            family_from_config(fam)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad test-function family: {exc}")


def model_from_config(cfg):
    m = cfg["model"]
    try:
        if m.get("kind") == "heisenberg":
            return GroupModel.heisenberg()
        if m.get("kind") == "parabolic":
            return GroupModel.parabolic(m["n"], m["k"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad [model]: {exc}")
    raise ConfigError(f"unknown model kind {m.get('kind')!r}")


def stream_seed(seed, name):
    """32-bit seed of a named counter stream of ``Philox(key=seed)``."""
    bits = np.random.Philox(key=seed, counter=[STREAMS[name], 0, 0, 0])
    return int(np.random.Generator(bits).integers(2**32))


def _box(model, d):
    try:
        c = np.asarray(d.get("center", np.zeros(model.width)), dtype=float)
        if c.shape != (model.width,):
            raise ConfigError(f"box center needs {model.width} coordinates")
        return Region(d.get("kind", "cube"), c, float(d["radius"]),
                      tuple(d["interval"]) if "interval" in d else None)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad [measure.box]: {exc}")


def _plane(model, d, default_dim):
    shift = d.get("shift")
    if "span" in d:
        return VerticalPlane.from_span(np.asarray(d["span"], dtype=float), shift)
    axes = d.get("axes", list(range(default_dim)))
    return VerticalPlane.coordinate(model.n, axes, shift)


def _time(d, box, model, h):
    kind = d.get("kind", "lebesgue")
    te = box.time_extent(model)
    t0 = float(box.center[-1])
    if kind == "lebesgue":
        return TimeMeasure.lebesgue(d.get("a", t0 - te), d.get("b", t0 + te),
                                    d.get("pitch", h * h))
    if kind == "cantor_quarter":
        top = d.get("top", 2 * te)
        return TimeMeasure.cantor_quarter(top, h=h, origin=d.get("origin", t0 - 0.5 * top))
    if kind == "dirac":
        return TimeMeasure.dirac(d.get("t0", t0), d.get("mass", 1.0))
    if kind == "triangle_density":
        return TimeMeasure.triangle_density(d.get("half_width", te), d.get("pitch", h * h),
                                            d.get("t0", t0))
    if kind == "inverted_cantor":
        return TimeMeasure.inverted_cantor(d["levels"], h, d.get("unit", 1.0), d.get("origin"))
    raise ConfigError(f"unknown time measure {kind!r}")


def generate_measure(cfg):
    """Build the configured measure (deterministic in the config's seed)."""
    model = model_from_config(cfg)
    m = cfg["measure"]
    h = float(m["h"])
    box = _box(model, m["box"])
    seed = stream_seed(cfg.get("seed", 0), "measure")
    jitter = float(m.get("jitter", 0.0))
    gen = m["generator"]
    try:
        if gen == "example_A":
            tm = _time(m["time"], box, model, h) if "time" in m else None
            mu = make_example_A(model, box, h, jitter, seed, tm)
        elif gen == "example_C":
            mu = make_example_C(model, box, h, jitter, seed)
        elif gen == "example_B":
            L = _plane(model, m.get("plane", {}), model.k)
            mu = make_example_B(model, L, np.asarray(m["e"], dtype=float), box, h,
                                m.get("levels"), m.get("unit", 1.0), jitter, seed,
                                m.get("mass_scale", 1.0))
        else:
            L = _plane(model, m.get("plane", {}), model.k)
            tm = _time(m.get("time", {}), box, model, h)
            if gen == "vertical_plane":
                mu = make_vertical_plane_measure(L, tm, box, h, model, jitter, seed)
            else:
                mu = make_plane_with_defect(model, L, tm, box, h, m["offset"], m["radius"],
                                            m.get("density", 1.0), m.get("at"), jitter, seed)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad generator parameters: {exc}")
    except ValueError as exc:
        raise ConfigError(f"generator {gen}: {exc}")
    mu.meta = dict(mu.meta or {}, seed=cfg.get("seed", 0))
    return mu


# ---------------------------------------------------------------------------
# preconditions

def _scales(cfg):
    t = cfg["tree"]
    top, bottom = float(t["top"]), float(t["bottom"])
    js = range(int(np.ceil(np.log2(bottom) - 1e-9)), int(np.floor(np.log2(top) + 1e-9)) + 1)
    return [2.0**j for j in js]


def check_preconditions(cfg, mu):
    """Every resolution floor and sampling prerequisite, checked before any
    computation.

    Returns a list of plan lines for ``--dry-run``.
    """
    h = mu.h
    suites = cfg.get("suites", {})
    plan = []
    needs_tree = [s for s in ("beta", "alpha", "hsdc", "theta") if s in suites]
    if needs_tree and "tree" not in cfg:
        raise PreconditionError(f"suites {', '.join(needs_tree)} need a [tree] section")
    ells = []
    if "tree" in cfg:
        t = cfg["tree"]
        try:
            floor = float(t.get("floor", 8.0))
            ells = _scales(cfg)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad [tree]: {exc}")
        if not ells:
            raise PreconditionError("no power-of-two sidelength between tree.bottom and tree.top")
        if ells[0] < floor * h:
            raise PreconditionError(f"tree bottom {ells[0]:g} below {floor:g} h = {floor * h:g}")
        plan.append(f"tree: sidelengths {', '.join('%g' % e for e in ells)}")

    def need(what, r, floor):
        if r < floor * h:
            raise PreconditionError(f"{what}: scale {r:g} below {floor:g} h = {floor * h:g}")

    for name, opts in suites.items():
        floor = float(opts.get("floor", 4.0))
        if name == "beta":
            need(name, opts.get("A", 1.0) * ells[0], floor)
        elif name == "alpha":
            need(name, opts.get("M", 1.0) * ells[0], floor)
        elif name == "hsdc":
            need(name, min(opts.get("M1", 1.0), opts.get("M2", 1.0)) * ells[0], floor)
        elif name == "theta":
            need(name, opts.get("A", 1.0) * ells[0], float(opts.get("floor", 2.0)))
        elif name == "square":
            radii = opts.get("radii", [0.5, 1.0, 2.0])
            need(name, min(radii), float(opts.get("floor", 2.0)))
            _interior(mu, _square_margin(opts, radii), name)
        elif name == "vampiric":
            fam = _family(opts)
            need(name, min(p.support for p in fam) * opts.get("lam", 1.0),
                 float(opts.get("floor", 2.0)))
        elif name == "adr":
            need(name, min(opts.get("scales", [1.0])), floor)
            _interior(mu, max(opts.get("scales", [1.0])), name)
        plan.append(f"suite {name}: {json.dumps(opts, sort_keys=True)}")
    return plan


def _interior(mu, margin, what):
    inner = np.flatnonzero(interior_mask(mu, margin))
    if inner.size == 0:
        raise PreconditionError(f"{what}: no atom has its radius-{margin:g} ball inside the box")
    return inner


def _square_margin(opts, radii):
    """Balls ``B(X, R)`` plus test-function reach ``rho R`` stay in the box."""
    R = max(radii)
    return R * (1.0 + max(p.support for p in _family(opts)))


def _family(opts):
    return family_from_config(opts["family"]) if "family" in opts else default_family()


# ---------------------------------------------------------------------------
# output helpers

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


class BundleWriter:
    """Single writer for a bundle directory; records sha256 of every file."""

    def __init__(self, out):
        self.out = out
        os.makedirs(out, exist_ok=True)
        self.files = {}

    def path(self, name):
        return os.path.join(self.out, name)

    def text(self, name, content):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        self.register(name)

    def json(self, name, obj):
        self.text(name, json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n")

    def register(self, name):
        self.files[name] = sha256_file(self.path(name))

    def manifest(self, extra):
        body = dict(extra, files=dict(sorted(self.files.items())))
        with open(self.path("manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(_clean(body), indent=1, sort_keys=True) + "\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _verdict(key, value, threshold, passed, note=""):
    return {"criterion": key, "value": value, "threshold": threshold, "passed": bool(passed),
            "note": note}


# ---------------------------------------------------------------------------
# suites

def run_suites(mu, cfg, w, jobs=1):
    """Run every configured suite; returns (summaries, verdicts)."""
    model = mu.model
    k = model.k
    seed = cfg.get("seed", 0)
    suites = cfg.get("suites", {})
    gen = cfg["measure"]["generator"]
    exact = float(cfg["measure"].get("jitter", 0.0)) == 0.0
    summary, verdicts, columns = {}, [], {}
    tree = None
    if "tree" in cfg:
        t = cfg["tree"]
        ells = _scales(cfg)
        tree = build_tree(mu, ells[-1], ells[0], seed=stream_seed(seed, "tree"),
                          floor=float(t.get("floor", 8.0)))
        ax = verify_grid_axioms(tree, mu)
        summary["tree"] = {
            "generations": {str(j): len(v) for j, v in sorted(tree.generations.items())},
            "roots": len(tree.roots), "c_star": ax.c_star, "axioms_passed": ax.passed,
            "worst_diameter_ratio": ax.worst_diameter_ratio,
        }
        ngen = len(tree.generations)

    if "adr" in suites:
        o = suites["adr"]
        rng = np.random.default_rng(stream_seed(seed, "adr"))
        scales = [float(s) for s in o.get("scales", [1.0])]
        inner = _interior(mu, max(scales), "adr")
        cen = np.sort(rng.choice(inner, min(inner.size, int(o.get("centers", 16))), replace=False))
        rep = adr_check(mu, float(o.get("d", model.dim)), scales, cen, o.get("C0", 4.0),
                        float(o.get("floor", 4.0)))
        summary["adr"] = {"C_lower": rep.C_lower, "C_upper": rep.C_upper, "ratio": rep.ratio,
                          "passed": rep.passed}

    if "beta" in suites:
        o = suites["beta"]
        b = cube_betas(mu, tree, o.get("A", 1.0), normalization=o.get("normalization", "mass"),
                       floor=float(o.get("floor", 4.0)))
        ur = ur_sum(mu, tree, o.get("A", 1.0), betas=b)
        depths, means, slope = ur_growth(ur, tree)
        eps = float(o.get("eps", 0.1))
        dup = upward_domination_filter(tree, b, eps)
        wgt = b**2 * tree.mass
        frac = float(wgt[dup].sum() / wgt.sum()) if wgt.sum() > 0 else float("nan")
        literal = all(dupcond_holds(tree, b, eps, int(i)) for i in np.flatnonzero(dup))
        columns["beta"] = b
        columns["ur_sum"] = ur.per_cube
        columns["upward"] = dup
        summary["beta"] = {
            "min": float(np.min(b)), "max": float(np.max(b)), "ur_sup": ur.sup,
            "ur_growth": {"depth": depths, "mean": means, "slope": slope},
            "per_generation_min": {str(j): float(np.min(b[ids])) for j, ids in
                                   sorted(tree.generations.items())},
            "upward": {"eps": eps, "fraction": frac, "count": int(dup.sum()),
                       "dupcond_verified": literal},
        }
        if gen == "example_A":
            verdicts.append(_verdict("5a", float(np.min(b)), 0.05,
                                     np.min(b) >= 0.05 and ngen >= 4))
            verdicts.append(_verdict("5b", slope, 0.5, slope > 0.5))
            verdicts.append(_verdict("11", frac, 0.2, frac >= 0.2 and literal))
        elif gen in ("vertical_plane", "example_C") and exact:
            verdicts.append(_verdict("4", float(np.max(b)), 1e-9, np.max(b) <= 1e-9))

    alpha_kw = {}
    if "alpha" in suites:
        o = suites["alpha"]
        alpha_kw = {"floor": float(o.get("floor", 4.0)), "seed": stream_seed(seed, "alpha")}
        gens = o.get("generations")
        ids = None if gens is None else [i for j in gens for i in tree.generations.get(j, [])]
        stats = {}
        for m in o.get("m", [k]):
            a = cube_alphas(mu, tree, int(m), o.get("M", 1.0), ids=ids, jobs=jobs, **alpha_kw)
            columns[f"alpha_{m}"] = a
            fin = a[np.isfinite(a)]
            stats[str(m)] = {"min": float(np.min(fin)) if fin.size else None,
                             "max": float(np.max(fin)) if fin.size else None,
                             "computed": int(np.sum(~np.isnan(a)))}
        summary["alpha"] = stats

    if "hsdc" in suites:
        o = suites["hsdc"]
        kw = dict(alpha_kw) or {"floor": float(o.get("floor", 4.0)),
                                "seed": stream_seed(seed, "alpha")}
        rep = hsdc_classify(mu, tree, float(o.get("lam", 0.01)), o.get("M1", 1.0),
                            o.get("M2", 1.0), lazy=o.get("lazy", True), jobs=jobs, **kw)
        columns["hsdc_alpha1"] = rep.alpha1
        columns["hsdc_alpha2"] = rep.alpha2
        columns["hsdc_flag"] = rep.flags
        columns["hsdc_packing"] = rep.packing
        rp = rep.root_packing()
        summary["hsdc"] = {"lam": rep.lam, "M1": rep.M1, "M2": rep.M2, "sup": rep.sup,
                           "flagged": int(rep.flags.sum()), "root_packing": rp,
                           "generations": ngen}
        worst_root = min(rp.values()) if rp else float("nan")
        if gen == "example_A":
            verdicts.append(_verdict("8", worst_root, 0.9 * ngen, worst_root >= 0.9 * ngen,
                                     "min over roots of the packing sum"))
        elif gen == "vertical_plane":
            top = max(rp.values()) if rp else float("nan")
            verdicts.append(_verdict("8", top, 0.05, top <= 0.05,
                                     "max over roots of the packing sum"))

    if "theta" in suites:
        o = suites["theta"]
        fam = _family(o)
        F = cube_thetas(fam, mu, tree, o.get("A", 1.0), float(o.get("floor", 2.0)))
        det = find_carleson(tree, F, float(o.get("delta", 1e-3)), k)
        for p, row in zip(fam, F):
            columns[f"theta_{p.name}"] = row
        columns["theta_map"] = det.theta_map
        columns["theta_family"] = det.family
        chain_ok = all(a <= b * (1 + 1e-12) + 1e-300 for a, b, _ in det.chain.values())
        summary["theta"] = {"delta": det.delta, "family_norm": det.family_norm,
                            "square_norm": det.square_norm, "bound": det.bound,
                            "holds": det.holds, "chain_holds": chain_ok,
                            "family_size": int(det.family.sum())}
        if gen == "vertical_plane":
            verdicts.append(_verdict("12", det.family_norm, det.bound, det.holds and chain_ok))

    if "square" in suites:
        o = suites["square"]
        radii = [float(r) for r in o.get("radii", [0.5, 1.0, 2.0])]
        rng = np.random.default_rng(stream_seed(seed, "square"))
        inner = _interior(mu, _square_margin(o, radii), "square")
        cen = np.sort(rng.choice(inner, min(inner.size, int(o.get("centers", 2))), replace=False))
        rep = square_function_report(_family(o), mu, cen, radii, float(o.get("floor", 2.0)))
        spread = rep.spread()
        # exact lattice products cancel to rounding; a ratio of rounding noise means nothing
        scale = mu.mass * max(radii) ** (-model.dim)
        vanish = bool(np.max(rep.normalized) <= 1e-12 * scale)
        summary["square"] = {"radii": radii, "centers": cen, "functions": rep.names,
                             "normalized": rep.normalized, "spread": spread,
                             "vanishing": vanish}
        if gen == "example_A":
            verdicts.append(_verdict("5c", spread, 2.0, spread <= 2.0 or vanish,
                                     "sums vanish to rounding" if vanish else ""))

    if "vampiric" in suites:
        o = suites["vampiric"]
        fam = _family(o)
        rep = vampiric_residual(mu, fam, float(o.get("lam", 1.0)), tol=o.get("tol"),
                                floor=float(o.get("floor", 2.0)), sample=o.get("sample", 64),
                                seed=stream_seed(seed, "vampiric"))
        summary["vampiric"] = {"max_residual": rep.max_residual, "location": rep.location,
                               "per_function": rep.per_function, "tolerance": rep.tolerance,
                               "passed": rep.passed, "h": rep.h}
        if gen != "plane_with_defect":
            verdicts.append(_verdict("9", rep.max_residual, rep.tolerance, rep.passed,
                                     "single mesh; refinement is checked across bundles"))

    if tree is not None and columns:
        write_coefficient_csv(w.path("cubes.csv"), tree, columns, model)
        w.register("cubes.csv")
    return summary, verdicts


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args):
    cfg = load_config(args.config)
    out = args.out or cfg.get("output", {}).get("dir", "rectilab-out")
    mu = generate_measure(cfg)
    if args.dry_run:
        print(f"would write {len(mu)} atoms (mass {mu.mass:.6g}) to {out}")
        return EXIT_OK
    w = BundleWriter(out)
    save_measure(mu, w.path("measure.txt"))
    w.register("measure.txt")
    w.manifest({"kind": "measure", "version": __version__, "seed": cfg.get("seed", 0),
                "rng": "philox4x64 counter streams", "streams": STREAMS,
                "h": mu.h, "mass": mu.mass, "count": len(mu), "config": cfg})
    print(f"wrote {len(mu)} atoms to {w.path('measure.txt')}")
    return EXIT_OK


def cmd_analyze(args):
    cfg = load_config(args.config)
    out = args.out or cfg.get("output", {}).get("dir", "rectilab-out")
    if args.measure:
        try:
            mu = load_measure(args.measure)
        except (OSError, ValueError) as exc:
            raise PreconditionError(f"cannot read measure file: {exc}")
        if mu.model != model_from_config(cfg):
            raise PreconditionError("measure file model does not match the config")
    else:
        mu = generate_measure(cfg)
    plan = check_preconditions(cfg, mu)
    if args.dry_run:
        print(f"measure: {len(mu)} atoms, h = {mu.h:g}")
        print("\n".join(plan))
        return EXIT_OK
    w = BundleWriter(out)
    summary, verdicts = run_suites(mu, cfg, w, jobs=args.jobs)
    for name, body in summary.items():
        w.json(f"{name}.json", body)
    ok = all(v["passed"] for v in verdicts)
    w.json("verdict.json", {"criteria": verdicts, "all_passed": ok})
    w.manifest({"kind": "bundle", "version": __version__, "seed": cfg.get("seed", 0),
                "rng": "philox4x64 counter streams", "streams": STREAMS,
                "measure": measure_header(mu), "config": cfg, "suites": sorted(summary)})
    for v in verdicts:
        print(f"criterion {v['criterion']}: {'pass' if v['passed'] else 'FAIL'} "
              f"(value {v['value']}, threshold {v['threshold']})")
    print(f"bundle written to {out}")
    if args.check and not ok:
        return EXIT_CHECK
    return EXIT_OK


def read_bundle(path):
    """Load a bundle after verifying every checksum in its manifest."""
    mpath = os.path.join(path, "manifest.json")
    if not os.path.isfile(mpath):
        raise PreconditionError(f"{path}: no manifest.json")
    with open(mpath, encoding="utf-8") as fh:
        man = json.load(fh)
    bad = []
    for name, digest in man.get("files", {}).items():
        p = os.path.join(path, name)
        if not os.path.isfile(p):
            bad.append(f"{name} missing")
        elif sha256_file(p) != digest:
            bad.append(f"{name} checksum mismatch")
    if bad:
        raise PreconditionError(f"{path}: " + "; ".join(bad))
    data = {}
    for name in man.get("files", {}):
        if name.endswith(".json"):
            with open(os.path.join(path, name), encoding="utf-8") as fh:
                data[name[:-5]] = json.load(fh)
    return man, data


def _headline(data):
    """Flat key -> value map of the main numbers of a bundle."""
    rows = {}
    for suite, body in sorted(data.items()):
        if suite == "verdict":
            for v in body["criteria"]:
                rows[f"verdict.{v['criterion']}"] = "pass" if v["passed"] else "FAIL"
            continue
        for key, val in sorted(body.items()):
            if isinstance(val, (int, float, bool)) or val is None:
                rows[f"{suite}.{key}"] = val
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "%.6g" % v
    return str(v)


def _generation_tables(path, man):
    """Per-generation mean/max/min of every numeric cube column."""
    p = os.path.join(path, "cubes.csv")
    if not os.path.isfile(p):
        return {}
    with open(p, encoding="utf-8") as fh:
        head = fh.readline().strip().split(",")
    data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
    width = man["measure"]["n"] + 1
    first = 6 + width
    ell = data[:, head.index("ell")]
    tables = {}
    for ci in range(first, len(head)):
        lines = ["# ell mean max min count", f"# column {head[ci]}"]
        for e in np.unique(ell):
            v = data[ell == e, ci]
            v = v[np.isfinite(v)]
            if v.size:
                lines.append("%.17g %.17g %.17g %.17g %d" % (e, v.mean(), v.max(), v.min(), v.size))
        tables[head[ci]] = "\n".join(lines) + "\n"
    return tables


def cmd_report(args):
    man, data = read_bundle(args.bundle)
    out = args.out or args.bundle
    os.makedirs(os.path.join(out, "tables"), exist_ok=True)
    lines = [f"rectilab report for {args.bundle}",
             f"model {man['measure']['model']} (n={man['measure']['n']}, k={man['measure']['k']}), "
             f"{man['measure']['count']} atoms, h = {man['measure']['h']}, seed {man['seed']}",
             f"suites: {', '.join(man.get('suites', []))}", ""]
    for key, val in _headline(data).items():
        lines.append(f"  {key:40s} {_fmt(val)}")
    tables = _generation_tables(args.bundle, man)
    for name, body in tables.items():
        with open(os.path.join(out, "tables", f"{name}.dat"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(body)
    if tables:
        lines += ["", f"gnuplot tables: {', '.join(sorted(tables))} (in tables/)"]
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    print(text, end="")
    if args.compare:
        _, other = read_bundle(args.compare)
        a, b = _headline(data), _headline(other)
        rows = [f"{'key':40s} {'A':>14s} {'B':>14s}"]
        for key in sorted(set(a) | set(b)):
            rows.append(f"{key:40s} {_fmt(a.get(key, '-')):>14s} {_fmt(b.get(key, '-')):>14s}")
        comp = "\n".join(rows) + "\n"
        with open(os.path.join(out, "compare.txt"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(comp)
        print(comp, end="")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="rectilab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)
    g = sub.add_parser("generate", help="write the configured measure")
    g.add_argument("config")
    g.add_argument("--out")
    g.add_argument("--dry-run", action="store_true")
    g.set_defaults(func=cmd_generate)
    a = sub.add_parser("analyze", help="run the configured suites")
    a.add_argument("config")
    a.add_argument("--measure", help="measure file from 'generate' (default: regenerate)")
    a.add_argument("--out")
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--dry-run", action="store_true")
    a.add_argument("--check", action="store_true", help="exit 4 when a verdict fails")
    a.set_defaults(func=cmd_analyze)
    r = sub.add_parser("report", help="summarise a bundle")
    r.add_argument("bundle")
    r.add_argument("--compare", help="second bundle for a side-by-side table")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, ResolutionError) as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
