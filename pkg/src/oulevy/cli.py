"""Command-line surface: analyze | charfn | density | simulate | probe | reproduce.

One JSON config per experiment (sections ``model``, ``measure``, ``run``);
all randomness is seeded from the config or flags, never from the clock.
Exit codes: 0 success (including "undecided" verdicts), 2 config/validation
error, 3 refused computation, 4 accuracy failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from . import fixtures, measures
from .charfn import (
    CharFn,
    decay_bound_1d,
    decay_constants_1d,
    singularity_witness,
)
from .criteria import (
    assemble_report,
    condition_iii_diagnostic,
    h1_check,
    h2_check,
    kallenberg_1d_diagnostic,
    kalman_check,
)
from .density import invert_1d, invert_2d, lp_irregularity_probe
from .errors import (
    AccuracyError,
    ConfigError,
    DimensionError,
    DomainError,
    MeasureError,
    RefusalError,
    UnsupportedMeasureError,
)
from .measures import essential_linear_support, rho
from .model import load_model
from .simulate import SimConfig, sample_endpoint

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REFUSED = 3
EXIT_ACCURACY = 4

_CONFIG_ERRORS = (ConfigError, DimensionError, DomainError, MeasureError,
                  UnsupportedMeasureError, KeyError, json.JSONDecodeError)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_atomic(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-oulevy-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_atomic(path, "\n".join(lines) + "\n")


class Manifest:
    def __init__(self, args, command):
        self.data = {
            "command": command,
            "config_path": getattr(args, "config", None),
            "out_dir": args.out,
            "seed": getattr(args, "seed", None),
            "threads": getattr(args, "threads", 1),
            "threads_note": "accepted for interface stability; current "
                            "implementation is single-threaded",
            "toolkit_version": __version__,
            "parameters": {},
            "outputs": [],
        }
        self._t0 = time.perf_counter()

    def write(self, out_dir):
        self.data["wall_clock_seconds"] = time.perf_counter() - self._t0
        path = os.path.join(out_dir, "run_manifest.json")
        _write_atomic(path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path


def _load_config(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _resolve_t(args, cfg) -> float:
    t = args.t if args.t is not None else cfg.get("run", {}).get("t", 1.0)
    return float(t)


def _resolve_seed(args, cfg) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    return int(cfg.get("run", {}).get("seed", 0))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    cfg = _load_config(args.config)
    model = load_model(cfg)
    t = _resolve_t(args, cfg)
    seed = _resolve_seed(args, cfg)
    manifest = Manifest(args, "analyze")
    manifest.data["parameters"] = {"t": t, "seed": seed}
    report = assemble_report(model, t, seed=seed)
    doc = report.to_dict()
    print(f"regularity report (m={report.m}, d={report.d}, t={report.t:g})")
    for name, entry in doc["criteria"].items():
        verdict = entry.get("verdict", "-")
        print(f"  {name:24s} {verdict}")
    for key in ("density_exists", "density_smooth", "schwartz"):
        c = doc["conclusions"][key]
        route = f" [{c['route']}]" if c["route"] else ""
        print(f"{key:16s} -> {c['verdict']}{route}")
    out_path = os.path.join(args.out, "report.json")
    _write_atomic(out_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    manifest.data["outputs"].append(out_path)
    manifest.write(args.out)
    return EXIT_OK


def cmd_charfn(args) -> int:
    cfg = _load_config(args.config)
    model = load_model(cfg)
    t = _resolve_t(args, cfg)
    manifest = Manifest(args, "charfn")
    cf = CharFn(model, t)
    direction = np.zeros(model.m)
    direction[0] = 1.0
    if args.direction:
        direction = np.asarray([float(v) for v in args.direction.split(",")])
        if direction.shape[0] != model.m:
            raise ConfigError("direction length must equal m")
        direction = direction / np.linalg.norm(direction)
    radii = np.linspace(args.z_min, args.z_max, args.z_count)
    zs = radii[:, None] * direction[None, :]
    vals = cf.charfn_many(zs)
    header = [f"z_{i}" for i in range(model.m)] + ["re_phi", "im_phi", "abs_phi"]
    bound_col = None
    if args.bounds:
        if model.m == 1 and model.d == 1 and not model.has_gaussian_part \
                and model.A[0, 0] > 0:
            cst = decay_constants_1d(model.A[0, 0], t)
            bound_col = [decay_bound_1d(model, t, r, cst) if abs(r) > cst.beta else None
                         for r in radii]
            header.append("decay_bound")
        else:
            print("bounds column skipped: the explicit bound needs a scalar "
                  "pure-jump model with positive drift", file=sys.stderr)
    rows = []
    for i, (z, v) in enumerate(zip(zs, vals)):
        row = list(z) + [v.real, v.imag, abs(v)]
        if bound_col is not None:
            row.append(bound_col[i])
        rows.append(row)
    out_path = os.path.join(args.out, "charfn.csv")
    _write_csv(out_path, header, rows)
    manifest.data["parameters"] = {"t": t, "z_min": args.z_min, "z_max": args.z_max,
                                   "z_count": args.z_count,
                                   "direction": direction.tolist()}
    manifest.data["outputs"].append(out_path)
    manifest.write(args.out)
    print(f"wrote {out_path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_density(args) -> int:
    cfg = _load_config(args.config)
    model = load_model(cfg)
    t = _resolve_t(args, cfg)
    manifest = Manifest(args, "density")
    n = args.points
    if model.m == 1:
        grid = invert_1d(model, t, args.x_min, args.x_max, n=n, force=args.force)
        x = grid.axis(0)
        clipped = grid.clipped()
        rows = [(xi, pi) for xi, pi in zip(x, clipped)]
        header = ["x", "p"]
    elif model.m == 2:
        grid = invert_2d(model, t, (args.x_min, args.x_min), (args.x_max, args.x_max),
                         n=(n, n), force=args.force)
        x1, x2 = grid.axis(0), grid.axis(1)
        clipped = grid.clipped()
        rows = [(x1[i], x2[j], clipped[i, j])
                for i in range(n) for j in range(n)]
        header = ["x_0", "x_1", "p"]
    else:
        raise ConfigError("density inversion supports m = 1 or 2")
    out_path = os.path.join(args.out, "density.csv")
    _write_csv(out_path, header, rows)
    side = {"t": t, "norm": grid.normalization(), **{
        k: (list(v) if isinstance(v, tuple) else v) for k, v in grid.meta.items()}}
    side_path = os.path.join(args.out, "density_meta.json")
    _write_atomic(side_path, json.dumps(side, indent=2, sort_keys=True) + "\n")
    manifest.data["parameters"] = {"t": t, "x_min": args.x_min, "x_max": args.x_max,
                                   "points": n, "force": args.force}
    manifest.data["outputs"] += [out_path, side_path]
    manifest.write(args.out)
    print(f"wrote {out_path}; normalization residual "
          f"{grid.meta['normalization_residual']:.3e}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    model = load_model(cfg)
    t = _resolve_t(args, cfg)
    seed = _resolve_seed(args, cfg)
    manifest = Manifest(args, "simulate")
    sim = SimConfig(seed=seed, n_samples=args.n, cutoff=args.cutoff,
                    small_jump_policy=args.small_jump_policy, stream=args.stream)
    batch = sample_endpoint(model, t, sim)
    header = [f"x_{i}" for i in range(model.m)]
    out_path = os.path.join(args.out, "samples.csv")
    _write_csv(out_path, header, batch.samples)
    manifest.data["parameters"] = {
        "t": t, "seed": seed, "n": args.n, "stream": args.stream,
        "eps_cut": batch.eps_cut, "jump_intensity": batch.jump_intensity,
        "dropped_variance": batch.dropped_variance,
        "small_jump_policy": args.small_jump_policy,
    }
    manifest.data["outputs"].append(out_path)
    manifest.write(args.out)
    print(f"wrote {out_path} ({args.n} samples, intensity "
          f"{batch.jump_intensity:.6g}, eps_cut {batch.eps_cut:.3g})")
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = _load_config(args.config)
    model = load_model(cfg)
    t = _resolve_t(args, cfg)
    seed = _resolve_seed(args, cfg)
    manifest = Manifest(args, "probe")
    eps_list = [float(e) for e in args.eps]
    out = lp_irregularity_probe(model, t, args.p, eps_list,
                                mc_samples=args.mc_samples, seed=seed)
    header = ["eps", "alpha", "center", "width", "rho", "bound", "bound_ratio",
              "mc_prob", "mc_hits", "mc_ratio", "flag"]
    rows = [[r[k] for k in header] for r in out["rows"]]
    out_path = os.path.join(args.out, "probe.csv")
    _write_csv(out_path, header, rows)
    manifest.data["parameters"] = {"t": t, "p": args.p, "eps": eps_list,
                                   "mc_samples": args.mc_samples, "seed": seed,
                                   "divergent_trend": out["divergent_trend"]}
    manifest.data["outputs"].append(out_path)
    manifest.write(args.out)
    print(f"wrote {out_path}; divergent trend: {out['divergent_trend']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# The reproduce harness
# ---------------------------------------------------------------------------

def _checks_example2():
    meas = fixtures.linear_factorial_measure()
    model = fixtures.drifted_1d_model(meas)
    checks = []
    r10 = rho(meas, 1.0 / math.factorial(10))
    checks.append(("rho(1/10!) = 3.65 +- 0.05", abs(r10 - 3.65) <= 0.05, r10))
    seq = [rho(meas, 1.0 / math.factorial(N)) for N in range(5, 13)]
    checks.append(("rho(1/N!) strictly increasing, N=5..12",
                   bool(np.all(np.diff(seq) > 0)), seq[-1]))
    diag = condition_iii_diagnostic(meas)
    checks.append(("clipped-moment quotient diverges", diag.verdict == "diverges",
                   diag.verdict))
    kall = kallenberg_1d_diagnostic(meas)
    checks.append(("Kallenberg quotient not diverging", kall.verdict != "diverges",
                   kall.verdict))
    w5 = singularity_witness(meas, 1.0, 5)
    checks.append(("witness(N=5) = 0.046 +- 0.002", abs(w5 - 0.046) <= 0.002, w5))
    w500 = singularity_witness(meas, 1.0, 500)
    checks.append(("witness(N=500) >= 0.95", w500 >= 0.95, w500))
    ws = [singularity_witness(meas, 1.0, N) for N in (10, 50, 100, 500)]
    checks.append(("witness increasing over N in {10,50,100,500}",
                   bool(np.all(np.diff(ws) > 0)), ws[-1]))
    cst = decay_constants_1d(1.0, 1.0)
    cf = CharFn(model, 1.0)
    ok = True
    worst = 0.0
    for z in (10.0, 1e2, 1e3, 1e4, 1e5, 1e6):
        bound = decay_bound_1d(model, 1.0, z, cst)
        val = abs(cf.charfn([z]))
        worst = max(worst, val - bound)
        ok = ok and val <= bound + 1e-12
    checks.append(("decay bound dominates |phi| at z = 10^1..10^6", ok, worst))
    return checks


def _checks_example3():
    meas = fixtures.unit_factorial_measure()
    model = fixtures.drifted_1d_model(meas)
    checks = []
    r10 = rho(meas, 1.0 / math.factorial(10))
    checks.append(("rho(1/10!) = 0.663 +- 0.01", abs(r10 - 0.663) <= 0.01, r10))
    diag = condition_iii_diagnostic(meas)
    checks.append(("clipped-moment quotient vanishes along 1/N!",
                   diag.verdict == "vanishes-liminf", diag.verdict))
    checks.append(("jump mass infinite", meas.has_infinite_mass, "inf"))
    rep = assemble_report(model, 1.0)
    checks.append(("density exists", rep.density_exists.verdict == "yes",
                   rep.density_exists.route))
    checks.append(("density not smooth (outside every L_p)",
                   rep.density_smooth.verdict == "no", rep.density_smooth.route))
    probe = lp_irregularity_probe(model, 0.4, 2.0,
                                  [1.0 / math.factorial(N) for N in (7, 8, 9)])
    checks.append(("probe bound ratios strictly increasing",
                   probe["divergent_trend"],
                   probe["rows"][-1]["bound_ratio"]))
    return checks


def _checks_example4(first: bool):
    model = (fixtures.kolmogorov_first_system() if first
             else fixtures.kolmogorov_modified_system())
    checks = []
    h1 = h1_check(model.A, model.B, model.D)
    h2 = h2_check(model.A, model.D)
    if first:
        checks.append(("H1 holds", h1.holds, h1.rank))
        checks.append(("H2 fails", not h2.holds, h2.rank))
        kal = kalman_check(model.A, model.D)  # D in place of B: diffusion variant
        checks.append(("Kalman holds for the diffusion variant", kal.holds, kal.rank))
    else:
        checks.append(("H2 holds", h2.holds, h2.rank))
        rep = assemble_report(model, 1.0)
        checks.append(("density exists for infinite-activity noise",
                       rep.density_exists.verdict == "yes",
                       rep.density_exists.route))
    return checks


def _checks_curve_measure():
    checks = []
    for d in (2, 3):
        sub = essential_linear_support(fixtures.curve_measure(d))
        checks.append((f"curve measure in d={d} has full essential support",
                       sub.dim == d, sub.dim))
    axis = essential_linear_support(fixtures.axis_measure_2d())
    checks.append(("axis measure in R^2 has 1-d support", axis.dim == 1, axis.dim))
    fin = essential_linear_support(fixtures.single_atom_measure([1.0, 2.0], 3.0))
    checks.append(("finite measure has trivial support", fin.dim == 0, fin.dim))
    return checks


REPRODUCE_IDS = {
    "example2": _checks_example2,
    "example3": _checks_example3,
    "example4-first": lambda: _checks_example4(True),
    "example4-modified": lambda: _checks_example4(False),
    "curve-measure": _checks_curve_measure,
}


def cmd_reproduce(args) -> int:
    if args.example not in REPRODUCE_IDS:
        print(f"unknown example id {args.example!r}; choose from "
              f"{sorted(REPRODUCE_IDS)}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = Manifest(args, "reproduce")
    checks = REPRODUCE_IDS[args.example]()
    all_ok = True
    print(f"reproduction checks for {args.example}:")
    for name, ok, value in checks:
        status = "PASS" if ok else "FAIL"
        all_ok = all_ok and ok
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"  [{status}] {name} (got {value})")
    doc = {"example": args.example,
           "checks": [{"name": n, "pass": bool(ok), "value": str(v)}
                      for n, ok, v in checks],
           "all_pass": bool(all_ok)}
    out_path = os.path.join(args.out, "reproduce.json")
    _write_atomic(out_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    manifest.data["parameters"] = {"example": args.example}
    manifest.data["outputs"].append(out_path)
    manifest.write(args.out)
    return EXIT_OK if all_ok else 1


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _common(p, config_required=True):
    if config_required:
        p.add_argument("--config", required=True, help="JSON config path")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--threads", type=int, default=1,
                   help="reserved; recorded in the manifest")
    p.add_argument("--force", action="store_true",
                   help="override refusals (irregular-density inversion)")
    p.add_argument("--t", type=float, default=None, help="override run.t")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="oulevy",
        description="Regularity criteria, characteristic functions, densities "
                    "and exact Monte Carlo for linear SDEs with Levy noise")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run every criterion and print the report")
    _common(p)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("charfn", help="scan the characteristic function to CSV")
    _common(p)
    p.add_argument("--z-min", type=float, default=0.0)
    p.add_argument("--z-max", type=float, default=50.0)
    p.add_argument("--z-count", type=int, default=201)
    p.add_argument("--direction", default=None,
                   help="comma-separated ray direction (default first axis)")
    p.add_argument("--bounds", action="store_true",
                   help="add the explicit decay-bound column when applicable")
    p.set_defaults(fn=cmd_charfn)

    p = sub.add_parser("density", help="FFT-invert the charfn to a density CSV")
    _common(p)
    p.add_argument("--x-min", type=float, required=True)
    p.add_argument("--x-max", type=float, required=True)
    p.add_argument("--points", type=int, default=512)
    p.set_defaults(fn=cmd_density)

    p = sub.add_parser("simulate", help="draw exact-in-law endpoint samples")
    _common(p)
    p.add_argument("-n", type=int, default=1000, help="sample count")
    p.add_argument("--cutoff", type=float, default=None)
    p.add_argument("--small-jump-policy", default="drop_compensate",
                   choices=["drop_compensate", "gaussian_approx"])
    p.add_argument("--stream", type=int, default=0)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("probe", help="windowed L_p irregularity probe")
    _common(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--eps", nargs="+", required=True)
    p.add_argument("--mc-samples", type=int, default=0)
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("reproduce", help="run the built-in fixture checks")
    _common(p, config_required=False)
    p.add_argument("example", help="one of " + ", ".join(sorted(REPRODUCE_IDS)))
    p.set_defaults(fn=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except RefusalError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except AccuracyError as exc:
        print(f"accuracy failure: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
