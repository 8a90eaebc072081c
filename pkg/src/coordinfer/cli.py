"""Command-line entry points: generate, diagnose, estimate, posterior,
experiment, report.

Flags mirror the config keys; ``experiment`` additionally accepts a JSON
``--config`` file whose entries override the flags.  The experiment seed is
mandatory (there is no wall-clock seeding anywhere).  Exit status is 0 on
full success and 2 when an experiment produced error rows.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .debias import one_step, two_step_zz
from .diagnostics import diagnose
from .errors import CoordinferError
from .experiment import (
    ExperimentConfig,
    PosteriorSettings,
    report,
    run_experiment,
)
from .metrics import distance_to_standard_normal
from .model import GeneratorSpec, generate, load_instance, save_instance
from .posterior import (
    ChainConfig,
    PosteriorConfig,
    run_chain,
    standardized_draws,
    summarize,
)

OUTPUT_DIR_ENV = "COORDINFER_OUTPUT_DIR"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _cmd_generate(args) -> int:
    spec = GeneratorSpec(
        n=args.n, p=args.p, s_star=args.s_star,
        beta_pattern=args.pattern, level=args.level,
        values=tuple(args.values) if args.values else None,
        design_kind=args.design, seed=args.seed,
    )
    instance = generate(spec)
    paths = save_instance(instance, args.out, stem=args.stem)
    _emit({"written": paths, "n": instance.n, "p": instance.p,
           "s_star": instance.s_star, "seed": instance.seed}, None)
    return 0


def _cmd_diagnose(args) -> int:
    instance = load_instance(args.instance, stem=args.stem)
    d = diagnose(instance, c1=args.c1)
    payload = {
        "lambda_n": d.lambda_n,
        "x1_norm": d.x1_norm,
        "assumption1_margin": d.assumption1_margin,
        "dim_ratio": d.dim_ratio,
        "c1": d.c1,
        "gamma_max": float(np.max(d.gamma)),
        "gamma_min": float(np.min(d.gamma)),
        "gamma": d.gamma,
    }
    _emit(payload, args.out)
    return 0


def _cmd_estimate(args) -> int:
    instance = load_instance(args.instance, stem=args.stem)
    if args.method == "zz":
        rep = two_step_zz(instance)
    else:
        rep = one_step(instance, eta=args.eta)
    payload = asdict(rep)
    if not args.full:
        payload.pop("first_stage")
    _emit(payload, args.out)
    return 0


def _cmd_posterior(args) -> int:
    instance = load_instance(args.instance, stem=args.stem)
    diag = diagnose(instance)
    config = PosteriorConfig(
        D=args.d,
        eta_n=args.eta_n,
        sigma_n_sq=args.sigma_n_sq,
        s_max=min(args.s_max, instance.p - 1),
        chain=ChainConfig(
            n_iter=args.burn_in + args.n_kept * args.thin,
            burn_in=args.burn_in, thin=args.thin, seed=args.seed,
        ),
    )
    chain = run_chain(instance, diag, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples_path = out_dir / "samples.jsonl"
    with samples_path.open("w") as fh:
        for s in chain.samples:
            fh.write(json.dumps({
                "S": list(s.S),
                "b_S": [float(v) for v in s.b_values],
                "b1_star": s.b1_star,
                "b1": s.b1,
                "log_target": s.log_target,
            }, sort_keys=True) + "\n")
    estimate = one_step(instance)
    summary = summarize(chain.samples, instance, diag, estimate, config)
    dist = distance_to_standard_normal(standardized_draws(chain.samples, instance, estimate))
    payload = {
        "eta_n": chain.eta_n,
        "sigma_n_sq": chain.sigma_n_sq,
        "acceptance": {k: list(v) for k, v in chain.acceptance.items()},
        "tau_n": summary.tau_n,
        "nu_mean": float(np.mean(summary.nu_n_draws)),
        "nu_max_abs": float(np.max(np.abs(summary.nu_n_draws))),
        "l1_contraction_mass": summary.l1_contraction_mass,
        "w1": dist.w1,
        "ks": dist.ks,
        "bl_upper": dist.bl_upper,
        "n_kept": dist.n_samples,
        "samples_file": str(samples_path),
    }
    _emit(payload, str(out_dir / "summary.json"))
    print(f"wrote {samples_path} and {out_dir / 'summary.json'}")
    return 0


def _parse_grid(items) -> tuple:
    grid = []
    for item in items:
        parts = [int(v) for v in item.replace(",", " ").split()]
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"grid point needs n,p,s_star: {item!r}")
        grid.append(tuple(parts))
    return tuple(grid)


def _cmd_experiment(args) -> int:
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text())

    def pick(key, flag_value):
        return overrides.get(key, flag_value)

    base_seed = pick("base_seed", args.seed)
    if base_seed is None:
        print("error: --seed (or base_seed in --config) is mandatory", file=sys.stderr)
        return 1
    output_dir = pick("output_dir", args.output_dir or os.environ.get(OUTPUT_DIR_ENV))
    if output_dir is None:
        print("error: no output dir (flag, config, or env)", file=sys.stderr)
        return 1
    grid = overrides.get("grid", _parse_grid(args.grid) if args.grid else None)
    if not grid:
        print("error: grid is required", file=sys.stderr)
        return 1
    posterior_kwargs = overrides.get("posterior", {})
    config = ExperimentConfig(
        grid=tuple(tuple(g) for g in grid),
        reps=int(pick("reps", args.reps)),
        base_seed=int(base_seed),
        output_dir=str(output_dir),
        methods=tuple(pick("methods", args.methods.split(",") if args.methods else ("zz", "one_step", "bayes"))),
        signal_level=float(pick("signal_level", args.signal_level)),
        c1=float(pick("c1", args.c1)),
        eta_multiple=float(pick("eta_multiple", args.eta_multiple)),
        l1_C=float(pick("l1_C", args.l1_c)),
        credible_level=float(pick("credible_level", args.credible_level)),
        posterior=PosteriorSettings(**posterior_kwargs),
        kappa_diagnostics=bool(pick("kappa_diagnostics", not args.no_kappa)),
        workers=int(pick("workers", args.workers)),
    )
    records = run_experiment(config)
    errors = [r for r in records if r.error is not None]
    print(f"{len(records)} records in {config.output_dir} ({len(errors)} error rows)")
    return 2 if errors else 0


def _cmd_report(args) -> int:
    out_dir = args.output_dir or os.environ.get(OUTPUT_DIR_ENV)
    if out_dir is None:
        print("error: no output dir (flag or env)", file=sys.stderr)
        return 1
    paths = report(out_dir)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coordinfer",
        description="De-biased single-coordinate inference for sparse linear regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic instance to disk")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--s-star", type=int, required=True)
    g.add_argument("--pattern", default="equal_magnitude",
                   choices=("fixed_values", "equal_magnitude", "decaying"))
    g.add_argument("--level", type=float, default=1.0)
    g.add_argument("--values", type=float, nargs="*", default=None)
    g.add_argument("--design", default="iid_standard_normal",
                   choices=("iid_standard_normal", "identity_scaled"))
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--stem", default="instance")
    g.set_defaults(func=_cmd_generate)

    d = sub.add_parser("diagnose", help="design diagnostics as JSON")
    d.add_argument("--instance", required=True, help="instance directory")
    d.add_argument("--stem", default="instance")
    d.add_argument("--c1", type=float, default=1.0)
    d.add_argument("--out", default=None)
    d.set_defaults(func=_cmd_diagnose)

    e = sub.add_parser("estimate", help="de-biased estimate of coordinate 1")
    e.add_argument("--instance", required=True)
    e.add_argument("--stem", default="instance")
    e.add_argument("--method", required=True, choices=("zz", "one-step"))
    e.add_argument("--eta", type=float, default=None)
    e.add_argument("--full", action="store_true", help="include the full coefficient vector")
    e.add_argument("--out", default=None)
    e.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("posterior", help="sample the posterior and summarize")
    p.add_argument("--instance", required=True)
    p.add_argument("--stem", default="instance")
    p.add_argument("--d", type=float, default=2.0)
    p.add_argument("--eta-n", type=float, default=None)
    p.add_argument("--sigma-n-sq", type=float, default=None)
    p.add_argument("--s-max", type=int, default=10)
    p.add_argument("--n-kept", type=int, default=2000)
    p.add_argument("--burn-in", type=int, default=1500)
    p.add_argument("--thin", type=int, default=2)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_posterior)

    x = sub.add_parser("experiment", help="run a replication grid")
    x.add_argument("--config", default=None, help="JSON config file; overrides flags")
    x.add_argument("--grid", action="append", default=None,
                   help="grid point 'n,p,s_star' (repeatable)")
    x.add_argument("--methods", default=None, help="comma list from zz,one_step,bayes")
    x.add_argument("--reps", type=int, default=1)
    x.add_argument("--seed", type=int, default=None, help="base seed (mandatory)")
    x.add_argument("--output-dir", default=None)
    x.add_argument("--signal-level", type=float, default=1.0)
    x.add_argument("--c1", type=float, default=1.0)
    x.add_argument("--eta-multiple", type=float, default=2.0)
    x.add_argument("--l1-c", type=float, default=8.0)
    x.add_argument("--credible-level", type=float, default=0.95)
    x.add_argument("--no-kappa", action="store_true")
    x.add_argument("--workers", type=int, default=1)
    x.set_defaults(func=_cmd_experiment)

    r = sub.add_parser("report", help="aggregate records into CSV tables")
    r.add_argument("--output-dir", default=None)
    r.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CoordinferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
