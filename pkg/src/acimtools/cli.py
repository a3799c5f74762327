"""Command-line entry point.

``acimtools <command> --config cfg.json [--seed N] [--out DIR]`` with commands
classify, density, induce-stats, asymptotics, seminorm, audit and
replicate-paper.  Exit status is 0 on success, 2 on invalid input and 3 on a
numerical failure; failures are also recorded in ``errors.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import traceback

import numpy as np

from . import asymptotics as asy
from . import replication
from .assumption_audit import run_audit
from .errors import AcimError, BadSpec, NumericalFailure, ValidationError
from .example_maps import ExampleSpec, build_example
from .induction import level_volumes
from .quasi_holder import QuasiHolderConfig, ly_estimate, seminorm_alpha
from .transfer import (
    build_partition,
    build_transfer,
    classify_measure,
    extend_density,
    invariant_density,
)

COMMANDS = ("classify", "density", "induce-stats", "asymptotics", "seminorm", "audit", "replicate-paper")
REQUIRED = {
    "classify": ("induction",),
    "density": ("transfer",),
    "induce-stats": ("induction",),
    "asymptotics": ("asymptotics",),
    "seminorm": ("transfer", "quasi_holder"),
    "audit": ("audit",),
}
BLOCK_KEYS = {
    "induction": {"n_max", "n_samples", "fit_window", "margin"},
    "transfer": {"resolution", "samples_per_cell", "tol", "max_iter", "n_levels"},
    "quasi_holder": {"alpha", "eps0", "k_max"},
    "asymptotics": {"orbit_length", "fit_window"},
    "audit": {"grid", "radii", "n_centers", "alpha", "samples_per_center", "n_pairs"},
}
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


# ---------------------------------------------------------------------------
# configuration
def load_config(path, seed=None):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadSpec(f"cannot read config: {exc}") from None
    if not isinstance(cfg, dict):
        raise BadSpec("config must be a JSON object")
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def validate_config(cfg, command):
    if "seed" not in cfg:
        raise BadSpec("config must set a seed")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise BadSpec("seed must be a non-negative integer")
    if "map" not in cfg or not isinstance(cfg["map"], dict):
        raise BadSpec("config needs a 'map' block")
    for block in REQUIRED.get(command, ()):
        if block not in cfg:
            raise BadSpec(f"command {command!r} needs a {block!r} block")
    for block, keys in BLOCK_KEYS.items():
        extra = set(cfg.get(block, {})) - keys
        if extra:
            raise BadSpec(f"unknown keys in {block!r}: {sorted(extra)}")


def config_hash(cfg):
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build_map(block):
    block = dict(block)
    component = block.pop("component", None)
    spec = ExampleSpec.from_dict(block)
    built = build_example(spec)
    if spec.example_id == 4:
        if component not in (1, 2):
            raise BadSpec("example 4 needs 'component': 1 or 2 in the map block")
        return built[component]
    if component is not None:
        raise BadSpec("'component' applies to example 4 only")
    return built


# ---------------------------------------------------------------------------
# artifacts
class Artifacts:
    """Collects artifact text in memory; nothing is written until ``flush``."""

    def __init__(self, cfg):
        self.header = {"config_sha256": config_hash(cfg), "seed": cfg.get("seed")}
        self.files = {}

    def csv(self, name, text):
        line = f"# config_sha256={self.header['config_sha256']} seed={self.header['seed']}\n"
        self.files[name] = line + text

    def json(self, name, doc):
        doc = {"header": self.header, **doc}
        self.files[name] = json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"

    def flush(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        for name, text in sorted(self.files.items()):
            with open(os.path.join(out_dir, name), "w") as fh:
                fh.write(text)
        return sorted(self.files)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# commands
def _profile(pmap, cfg):
    ind = cfg["induction"]
    return level_volumes(pmap, n_max=int(ind.get("n_max", 2000)), n_samples=int(ind.get("n_samples", 10**5)),
                         seed=cfg["seed"])


def _fit_window(ind, profile):
    w = ind.get("fit_window")
    if w is None:
        return (max(1, profile.n_max // 10), profile.n_max)
    return tuple(int(v) for v in w)


def cmd_induce_stats(cfg, art, pmap=None):
    if pmap is None:
        pmap = build_map(cfg["map"])
    prof = _profile(pmap, cfg)
    art.csv("tails.csv", prof.to_csv())
    return prof


def cmd_classify(cfg, art):
    pmap = build_map(cfg["map"])
    prof = cmd_induce_stats(cfg, art, pmap)
    ind = cfg["induction"]
    density = None
    if "transfer" in cfg:
        density = _density(pmap, cfg)[0]
    cl = classify_measure(prof, density, margin=float(ind.get("margin", 0.15)), fit_window=_fit_window(ind, prof),
                          k_prime=max(pmap.r_preimage_count, 1))
    doc = cl.to_dict()
    doc.update(residual=prof.residual, sample_count=prof.sample_count, k_prime=pmap.r_preimage_count)
    art.json("classification.json", doc)
    return cl


def _density(pmap, cfg):
    tr = cfg["transfer"]
    part = build_partition(pmap, int(tr.get("resolution", 256)))
    M = build_transfer(pmap, part, int(tr.get("samples_per_cell", 64)), cfg["seed"])
    h = invariant_density(M, float(tr.get("tol", 1e-10)), int(tr.get("max_iter", 20000)))
    return h, M


def cmd_density(cfg, art):
    pmap = build_map(cfg["map"])
    h, M = _density(pmap, cfg)
    tr = cfg["transfer"]
    ext = h
    if pmap.branches[0].local_form is not None and pmap.region.quad_weights is not None:
        ext = extend_density(pmap, h, int(tr.get("n_levels", 10**4)))
    art.csv("density.csv", ext.to_csv())
    art.csv("transfer.csv", M.to_csv())
    art.json("transfer_header.json", M.header())
    if "quasi_holder" in cfg:
        _ly(M, cfg, art)
    return ext


def _qh_config(cfg):
    q = cfg["quasi_holder"]
    return QuasiHolderConfig(float(q.get("alpha", 0.5)), float(q.get("eps0", 0.1)), int(q.get("k_max", 12)))


def _ly(M, cfg, art):
    qc = _qh_config(cfg)
    rep = ly_estimate(M, config=qc, seed=cfg["seed"])
    doc = json.loads(rep.to_json())
    art.json("ly_report.json", doc)
    return rep


def cmd_seminorm(cfg, art):
    pmap = build_map(cfg["map"])
    h, M = _density(pmap, cfg)
    rep = _ly(M, cfg, art)
    doc = json.loads(art.files["ly_report.json"])
    doc.pop("header")
    doc["density_seminorm"] = seminorm_alpha(h, _qh_config(cfg))
    art.json("ly_report.json", doc)
    return rep


def cmd_asymptotics(cfg, art):
    pmap = build_map(cfg["map"])
    block = cfg["asymptotics"]
    n = int(block.get("orbit_length", 10**4))
    win = block.get("fit_window")
    win = tuple(int(v) for v in win) if win is not None else None
    m = pmap.dimension
    rows = []
    starts = {"x-axis": np.eye(m)[0] * 0.2}
    if m >= 2:
        starts["y-axis"] = np.eye(m)[1] * 0.2
    orbits = {}
    for label, x in starts.items():
        o = asy.backward_orbit(pmap, x, n)
        orbits[label] = o
        beta, coeff = asy.radius_exponent(o, fit_window=win)
        rows.append({"claim": f"radius exponent ({label})", "fitted": beta, "start": x.tolist()})
        rows.append({"claim": f"radius prefactor ({label})", "fitted": coeff, "start": x.tolist()})
        rows.append({"claim": f"det product exponent ({label})", "fitted": asy.det_product_exponent(o, win),
                     "start": x.tolist()})
        nd = asy.norm_decay_check(o, win)
        rows.append({"claim": f"inverse norm decay exponent ({label})", "fitted": nd.slope,
                     "exponential_flag": nd.exponential, "start": x.tolist()})
    if "y-axis" in orbits:
        ratio = np.exp(orbits["y-axis"].log_det_inverse - orbits["x-axis"].log_det_inverse)
        rows.append({"claim": "distortion ratio slope (y-axis over x-axis)",
                     "fitted": float(asy.loglog_fit(ratio, win).slope)})
    art.json("asymptotics.json", {"orbit_length": n, "fit_window": win, "rows": rows})
    return rows


def cmd_audit(cfg, art):
    pmap = build_map(cfg["map"])
    a = cfg["audit"]
    rep = run_audit(pmap, alpha=float(a.get("alpha", 0.5)), grid=int(a.get("grid", 32)), radii=a.get("radii"),
                    n_centers=int(a.get("n_centers", 200)), samples_per_center=int(a.get("samples_per_center", 256)),
                    n_pairs=int(a.get("n_pairs", 1000)), seed=cfg["seed"])
    art.json("audit.json", rep.to_dict())
    return rep


HANDLERS = {
    "classify": cmd_classify,
    "density": cmd_density,
    "induce-stats": cmd_induce_stats,
    "asymptotics": cmd_asymptotics,
    "seminorm": cmd_seminorm,
    "audit": cmd_audit,
}


# ---------------------------------------------------------------------------
def determinism_probe(seed=0):
    """Run a small induce-stats + density pipeline twice; True if byte-identical."""
    cfg = {
        "map": {"example_id": "neutral1d"},
        "seed": seed,
        "induction": {"n_max": 500, "n_samples": 20000},
        "transfer": {"resolution": 64, "samples_per_cell": 16, "n_levels": 1000},
    }
    outs = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as d:
            run(cfg, "induce-stats", d)
            run(cfg, "density", d)
            outs.append({n: open(os.path.join(d, n), "rb").read() for n in sorted(os.listdir(d))})
    return outs[0] == outs[1]


def replicate_paper(out_dir, budget=1.0, seed=0, criteria=None):
    """Run every reference check; returns (rows, runtimes, all_passed)."""
    rows, runtimes = [], {}
    for k in criteria or sorted(replication.CHECKS):
        kw = {"determinism": lambda: determinism_probe(seed)} if k == 9 else {}
        try:
            r, dt = replication.run_check(k, budget=budget, seed=seed, **kw)
        except AcimError as exc:
            r, dt = [replication._row(k, "criterion run", "completes", type(exc).__name__, "", False)], float("nan")
        rows += r
        runtimes[str(k)] = {"seconds": round(dt, 3), "limit": replication.RUNTIME_LIMITS[k]}
    cfg = {"command": "replicate-paper", "budget": budget, "seed": seed}
    art = Artifacts(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["criterion", "claim", "expected", "observed", "tolerance", "pass"])
    for r in rows:
        w.writerow([r["criterion"], r["claim"], r["expected"], _fmt(r["observed"]), r["tolerance"], r["pass"]])
    art.csv("summary.csv", buf.getvalue())
    art.json("summary.json", {"rows": rows, "all_passed": all(r["pass"] for r in rows)})
    art.flush(out_dir)
    with open(os.path.join(out_dir, "runtimes.json"), "w") as fh:
        json.dump(_plain(runtimes), fh, indent=2, sort_keys=True)
    return rows, runtimes, all(r["pass"] for r in rows)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_error(out_dir, exc, code):
    os.makedirs(out_dir, exist_ok=True)
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    with open(os.path.join(out_dir, "errors.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def run(cfg, command, out_dir):
    """Validate, run and write artifacts; raises toolkit errors."""
    validate_config(cfg, command)
    art = Artifacts(cfg)
    HANDLERS[command](cfg, art)
    return art.flush(out_dir)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="acimtools", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--budget", type=float, default=1.0, help="replicate-paper: sample-size scale")
    args = ap.parse_args(argv)
    try:
        if args.command == "replicate-paper":
            rows, runtimes, ok = replicate_paper(args.out, args.budget, args.seed or 0)
            for r in rows:
                print(f"[{'PASS' if r['pass'] else 'FAIL'}] {r['criterion']}: {r['claim']}: observed {r['observed']}")
            return EXIT_OK if ok else 1
        if args.config is None:
            raise BadSpec(f"{args.command} needs --config")
        cfg = load_config(args.config, args.seed)
        written = run(cfg, args.command, args.out)
        for name in written:
            print(os.path.join(args.out, name))
        return EXIT_OK
    except ValidationError as exc:
        _write_error(args.out, exc, EXIT_INVALID)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, ArithmeticError) as exc:
        _write_error(args.out, exc, EXIT_NUMERICAL)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError, KeyError) as exc:
        _write_error(args.out, exc, EXIT_INVALID)
        print(f"error: {exc}", file=sys.stderr)
        traceback.print_exc(limit=1)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
