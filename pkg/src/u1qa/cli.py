"""Batch experiment driver.

Subcommands: entropy, pfrac, displacement, density, correlation, qdecay
(manifest-driven Monte Carlo runs emitting one CSV per sweep point),
oracle-check (cross-engine equivalence suite), fit (scaling fits over
existing CSVs), psapprox (closed-form corridor weight).

Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import fnmatch
import glob as _glob
import json
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, observables, scaling
from .exact import exhaustive_vs_oracle
from .circuit import ModelSpec, sample_realization
from .lattice import Partition, SectorSpec
from .manifest import ManifestError, RunManifest, load_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def _version_string() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if desc.returncode == 0:
            return f"{__version__}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _run_points(man: RunManifest, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    t0 = time.time()
    for pt in man.points:
        cfg = pt.config
        if man.workers > 1:
            cfg = __import__("dataclasses").replace(cfg, workers=man.workers)
        if man.observable == "entropy":
            series = {"": observables.estimate_entropy_phase_sum(cfg)}
        elif man.observable == "pfrac":
            series = {"": observables.estimate_p_fraction(cfg)}
        elif man.observable == "displacement":
            series = {"": observables.estimate_displacement(cfg)}
        elif man.observable == "density":
            series = {"": observables.estimate_density(cfg)}
        elif man.observable == "qdecay":
            series = {"": observables.estimate_q_decay(cfg)}
        else:
            corr = observables.estimate_correlation(cfg, offsets=pt.offsets)
            series = {f"_x{o}": ts for o, ts in corr.items()}
        for suffix, ts in series.items():
            path = out_dir / f"{pt.label}{suffix}.csv"
            observables.write_timeseries_csv(ts, path)
            written.append(path)
            print(f"wrote {path}")
    echo = {
        "name": man.name,
        "observable": man.observable,
        "version": _version_string(),
        "seed": man.seed,
        "workers": man.workers,
        "points": [pt.label for pt in man.points],
        "wall_seconds": round(time.time() - t0, 3),
        "source": man.source,
    }
    echo_path = out_dir / f"{man.name}__manifest.json"
    echo_path.write_text(json.dumps(echo, indent=1, sort_keys=True) + "\n")
    written.append(echo_path)
    return written


def _cmd_run(args, observable: str) -> int:
    try:
        man = load_manifest(args.manifest, seed_override=args.seed,
                            workers_override=args.workers)
        if man.observable != observable:
            raise ManifestError(
                f"manifest declares observable {man.observable!r}, "
                f"but the {observable!r} subcommand was invoked")
    except ManifestError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    n = len(man.points)
    print(f"{man.name}: {n} sweep point{'s' if n != 1 else ''}")
    _run_points(man, Path(args.out))
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    cases = []
    for model, l_fixed, l_mixed in (("fredkin_swap", 12, 12),
                                    ("swap_only", 12, 10),
                                    ("cswap4", 12, 12)):
        cases.append((model, l_fixed, SectorSpec("fixed", Fraction(1, 2))))
        cases.append((model, l_mixed, SectorSpec("mixed")))
    worst = 0.0
    for model, L, sector in cases:
        for p in args.p:
            part = Partition(L=L, L_A=L // 2, boundary="periodic")
            spec = ModelSpec(model, part, p_u=0.5, p=p)
            for r in range(args.realizations):
                real = sample_realization(spec, args.t_max, seed=args.seed + r)
                rec = np.arange(args.t_max + 1)
                eng, orc = exhaustive_vs_oracle(real, sector, rec)
                dev = float(np.max(np.abs(eng - orc)))
                worst = max(worst, dev)
                print(f"{model:13s} L={L:3d} {sector.kind:5s} p={p:<4g} "
                      f"r={r}: max deviation {dev:.3e}")
    print(f"worst deviation: {worst:.3e} (tolerance {args.tol:g})")
    return EXIT_OK if worst <= args.tol else EXIT_INVARIANT


def _load_csvs(pattern: str):
    paths = sorted(_glob.glob(pattern))
    if not paths:
        raise FileNotFoundError(f"no CSV matches {pattern!r}")
    return [(Path(p), observables.read_timeseries_csv(p)) for p in paths]


def _cmd_fit(args) -> int:
    try:
        data = _load_csvs(args.csv)
    except (FileNotFoundError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    window = tuple(args.window)
    if args.form in scaling.FORMS:
        for path, ts in data:
            if args.form == "power":
                fit = scaling.fit_power_law(ts.times, ts.mean, window)
            else:
                fit = scaling.fit_linear_form(args.form, ts.times, ts.mean, window)
            out = Path(args.out) if args.out and len(data) == 1 else (
                path.with_suffix(".fit.json"))
            fit.save(out)
            print(f"{path.name}: {fit.params} r2={fit.r2:.5f} -> {out}")
        return EXIT_OK
    if args.form == "collapse":
        curves = {}
        for path, ts in data:
            L = int(ts.meta["model"]["part"]["L"])
            curves[L] = (ts.times, ts.mean)
        fit = scaling.collapse_fit(
            curves,
            np.arange(args.alpha_min, args.alpha_max + 1e-9, args.alpha_step),
            np.arange(args.z_min, args.z_max + 1e-9, args.z_step))
        out = Path(args.out or "collapse.fit.json")
        fit.save(out)
        print(f"collapse over L={sorted(curves)}: {fit.params} -> {out}")
        return EXIT_OK
    if args.form == "lambda_vs_nu":
        series = {}
        for path, ts in data:
            nu = Fraction(ts.meta["sector"]["nu"])
            series[nu] = (ts.times, ts.mean)
        fit = scaling.lambda_vs_nu(series, window)
        out = Path(args.out or "lambda_vs_nu.fit.json")
        fit.save(out)
        print(f"lambda(nu) slope={fit.params['slope']:.4f} -> {out}")
        return EXIT_OK
    print(f"config error: unknown fit form {args.form!r}", file=sys.stderr)
    return EXIT_CONFIG


def _cmd_psapprox(args) -> int:
    exact, approx = scaling.psapprox(args.L, args.dl, args.nu)
    print(f"L={args.L} dl={args.dl} nu={args.nu}: "
          f"exact={exact:.6f} approx={approx:.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="u1qa", description=__doc__)
    ap.add_argument("--version", action="version", version=_version_string())
    sub = ap.add_subparsers(dest="command", required=True)

    for obs in ("entropy", "pfrac", "displacement", "density", "correlation", "qdecay"):
        p = sub.add_parser(obs, help=f"run the {obs} estimator from a manifest")
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", default="results")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=lambda a, o=obs: _cmd_run(a, o))

    p = sub.add_parser("oracle-check", help="cross-engine equivalence suite")
    p.add_argument("--t-max", type=int, default=10)
    p.add_argument("--realizations", type=int, default=2)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--p", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=_cmd_oracle_check)

    p = sub.add_parser("fit", help="apply scaling fits to existing CSVs")
    p.add_argument("--form", required=True,
                   choices=list(scaling.FORMS) + ["collapse", "lambda_vs_nu"])
    p.add_argument("--csv", required=True, help="CSV path or glob")
    p.add_argument("--window", type=float, nargs=2, default=[10.0, 1e18])
    p.add_argument("--out", default=None)
    p.add_argument("--alpha-min", type=float, default=0.1)
    p.add_argument("--alpha-max", type=float, default=0.5)
    p.add_argument("--alpha-step", type=float, default=0.01)
    p.add_argument("--z-min", type=float, default=1.2)
    p.add_argument("--z-max", type=float, default=3.2)
    p.add_argument("--z-step", type=float, default=0.05)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("psapprox", help="exact vs linearised corridor weight")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--dl", type=int, required=True)
    p.add_argument("--nu", type=float, required=True)
    p.set_defaults(func=_cmd_psapprox)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ManifestError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
