"""End-to-end study runner: generate, diagnose, estimate, sample, measure.

Every replication is a pure function of (config, grid point, rep index): its
seed derives from the base seed and those coordinates alone, so any record
can be regenerated bit-identically (wall time aside).  Records append to a
JSON-lines file as they complete, which makes long grids crash-resumable;
per-replication failures degrade to error rows instead of aborting the grid.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .debias import one_step, two_step_zz
from .diagnostics import KappaConfig, diagnose, verify_lemma4
from .errors import ConfigurationError, EmptyInputError
from .metrics import credible_interval, distance_to_standard_normal
from .model import GeneratorSpec, derive_stream, generate
from .posterior import (
    ChainConfig,
    PosteriorConfig,
    default_posterior_eta,
    run_chain,
    standardized_draws,
    summarize,
)
from . import debias

METHODS = ("zz", "one_step", "bayes")
RECORDS_FILE = "records.jsonl"
SUMMARY_FILE = "summary.csv"


@dataclass(frozen=True)
class PosteriorSettings:
    """Grid-independent posterior knobs; chain length is burn_in + n_kept*thin."""

    D: float = 2.0
    eta_multiple: float = 2.0
    sigma_n_sq: float | None = None   # None -> n per instance
    s_max: int = 10
    n_kept: int = 2_000
    burn_in: int = 1_500
    thin: int = 2
    move_probs: tuple[float, float, float, float] = (0.3, 0.3, 0.1, 0.3)


@dataclass(frozen=True)
class ExperimentConfig:
    grid: tuple[tuple[int, int, int], ...]
    reps: int
    base_seed: int
    output_dir: str
    methods: tuple[str, ...] = ("zz", "one_step", "bayes")
    signal_level: float = 1.0
    c1: float = 1.0
    eta_multiple: float = 2.0      # solver penalty level, times n*lambda_n
    l1_C: float = 8.0
    c3: float = 8.0
    credible_level: float = 0.95
    posterior: PosteriorSettings = field(default_factory=PosteriorSettings)
    kappa_diagnostics: bool = True
    kappa: KappaConfig = field(default_factory=KappaConfig)
    workers: int = 1

    def __post_init__(self):
        if not self.grid:
            raise ConfigurationError("grid must be nonempty")
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ConfigurationError(f"methods must be a nonempty subset of {METHODS}")
        if "bayes" in self.methods and self.posterior.n_kept < 100:
            raise ConfigurationError("bayes runs need n_kept >= 100")


_RECORD_FIELDS = [
    ("n", int), ("p", int), ("s_star", int), ("rep", int), ("seed", int),
    ("beta1_true", float), ("lambda_n", float), ("x1_norm", float),
    ("assumption1_margin", float), ("dim_ratio", float),
    ("zz_beta1_hat", float), ("zz_oracle_term", float), ("zz_bias_term", float),
    ("zz_remainder_scaled", float), ("zz_lo", float), ("zz_hi", float),
    ("zz_decomposition_gap", float), ("zz_iterations", int),
    ("onestep_beta1_hat", float), ("onestep_oracle_term", float),
    ("onestep_bias_term", float), ("onestep_remainder_scaled", float),
    ("onestep_lo", float), ("onestep_hi", float), ("onestep_decomposition_gap", float),
    ("onestep_l1_error", float), ("onestep_l1_holds", bool), ("onestep_cone_holds", bool),
    ("onestep_kkt_identity", float), ("onestep_converged", bool), ("onestep_iterations", int),
    ("posterior_eta_n", float), ("posterior_sigma_n_sq", float),
    ("nu_mean", float), ("nu_max_abs", float), ("tau_n", float), ("l1_mass", float),
    ("bayes_lo", float), ("bayes_hi", float), ("bayes_b1_mean", float),
    ("w1", float), ("ks", float), ("bl_upper", float), ("n_kept", int),
    ("wall_time", float), ("error", str),
]


@dataclass(eq=False)
class ExperimentRecord:
    """One replication's flattened results; unused method blocks stay None."""

    n: int
    p: int
    s_star: int
    rep: int
    seed: int
    beta1_true: float | None = None
    lambda_n: float | None = None
    x1_norm: float | None = None
    assumption1_margin: float | None = None
    dim_ratio: float | None = None
    zz_beta1_hat: float | None = None
    zz_oracle_term: float | None = None
    zz_bias_term: float | None = None
    zz_remainder_scaled: float | None = None
    zz_lo: float | None = None
    zz_hi: float | None = None
    zz_decomposition_gap: float | None = None
    zz_iterations: int | None = None
    onestep_beta1_hat: float | None = None
    onestep_oracle_term: float | None = None
    onestep_bias_term: float | None = None
    onestep_remainder_scaled: float | None = None
    onestep_lo: float | None = None
    onestep_hi: float | None = None
    onestep_decomposition_gap: float | None = None
    onestep_l1_error: float | None = None
    onestep_l1_holds: bool | None = None
    onestep_cone_holds: bool | None = None
    onestep_kkt_identity: float | None = None
    onestep_converged: bool | None = None
    onestep_iterations: int | None = None
    posterior_eta_n: float | None = None
    posterior_sigma_n_sq: float | None = None
    nu_mean: float | None = None
    nu_max_abs: float | None = None
    tau_n: float | None = None
    l1_mass: float | None = None
    bayes_lo: float | None = None
    bayes_hi: float | None = None
    bayes_b1_mean: float | None = None
    w1: float | None = None
    ks: float | None = None
    bl_upper: float | None = None
    n_kept: int | None = None
    wall_time: float | None = None
    error: str | None = None

    # aliases used by metrics.coverage_study (one-step interval is the
    # frequentist interval of record)
    @property
    def freq_lo(self):
        return self.onestep_lo

    @property
    def freq_hi(self):
        return self.onestep_hi

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, with_wall_time: bool = True) -> str:
        d = self.to_dict()
        if not with_wall_time:
            d.pop("wall_time")
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def record_seed(base_seed: int, n: int, p: int, s_star: int, rep: int) -> int:
    """Per-replication seed; a pure function of (base_seed, grid point, rep)."""
    stream = derive_stream(base_seed, f"rep:{n}x{p}x{s_star}", rep)
    return int(stream.integers(1 << 62))


def run_replication(config: ExperimentConfig, point: tuple[int, int, int], rep: int) -> ExperimentRecord:
    """Execute one replication of the full pipeline (raises on failure)."""
    t0 = time.perf_counter()
    n, p, s_star = point
    seed = record_seed(config.base_seed, n, p, s_star, rep)
    instance = generate(
        GeneratorSpec(
            n=n, p=p, s_star=s_star, beta_pattern="equal_magnitude",
            level=config.signal_level, seed=seed,
        )
    )
    diag = diagnose(instance, c1=config.c1)
    rec = ExperimentRecord(
        n=n, p=p, s_star=s_star, rep=rep, seed=seed,
        beta1_true=float(instance.beta_true[0]),
        lambda_n=diag.lambda_n,
        x1_norm=diag.x1_norm,
        assumption1_margin=diag.assumption1_margin,
        dim_ratio=diag.dim_ratio,
    )
    eta = config.eta_multiple * n * diag.lambda_n

    if "zz" in config.methods:
        zz = two_step_zz(instance)
        rec.zz_beta1_hat = zz.beta1_hat
        rec.zz_oracle_term = zz.oracle_term
        rec.zz_bias_term = zz.bias_term
        rec.zz_remainder_scaled = zz.remainder_scaled
        rec.zz_lo, rec.zz_hi = zz.interval_95
        rec.zz_decomposition_gap = zz.decomposition_gap
        rec.zz_iterations = zz.solver_iterations

    one = None
    if "one_step" in config.methods or "bayes" in config.methods:
        one = one_step(instance, eta=eta, l1_C=config.l1_C)
        rec.onestep_beta1_hat = one.beta1_hat
        rec.onestep_oracle_term = one.oracle_term
        rec.onestep_bias_term = one.bias_term
        rec.onestep_remainder_scaled = one.remainder_scaled
        rec.onestep_lo, rec.onestep_hi = one.interval_95
        rec.onestep_decomposition_gap = one.decomposition_gap
        rec.onestep_l1_error = one.l1_error
        rec.onestep_l1_holds = one.l1_holds
        rec.onestep_cone_holds = one.cone_holds
        rec.onestep_kkt_identity = debias.kkt_identity_check(one, instance)
        rec.onestep_converged = one.solver_converged
        rec.onestep_iterations = one.solver_iterations

    if "bayes" in config.methods:
        ps = config.posterior
        eta_n = default_posterior_eta(diag.W, n, p, multiple=ps.eta_multiple)
        pconfig = PosteriorConfig(
            D=ps.D,
            eta_n=eta_n,
            sigma_n_sq=ps.sigma_n_sq,
            s_max=min(ps.s_max, p - 1),
            chain=ChainConfig(
                n_iter=ps.burn_in + ps.n_kept * ps.thin,
                burn_in=ps.burn_in,
                thin=ps.thin,
                seed=seed,
            ),
            move_probs=ps.move_probs,
        )
        chain = run_chain(instance, diag, pconfig)
        summary = summarize(chain.samples, instance, diag, one, pconfig, c3=config.c3)
        b1_draws = np.array([s.b1 for s in chain.samples])
        lo, hi = credible_interval(b1_draws, config.credible_level)
        dist = distance_to_standard_normal(standardized_draws(chain.samples, instance, one))
        rec.posterior_eta_n = chain.eta_n
        rec.posterior_sigma_n_sq = chain.sigma_n_sq
        rec.nu_mean = float(np.mean(summary.nu_n_draws))
        rec.nu_max_abs = float(np.max(np.abs(summary.nu_n_draws)))
        rec.tau_n = summary.tau_n
        rec.l1_mass = summary.l1_contraction_mass
        rec.bayes_lo, rec.bayes_hi = lo, hi
        rec.bayes_b1_mean = float(np.mean(b1_draws))
        rec.w1 = dist.w1
        rec.ks = dist.ks
        rec.bl_upper = dist.bl_upper
        rec.n_kept = dist.n_samples

    rec.wall_time = time.perf_counter() - t0
    return rec


def _safe_replication(config, point, rep) -> ExperimentRecord:
    try:
        return run_replication(config, point, rep)
    except Exception as exc:  # degrade to an error row, never abort the grid
        n, p, s_star = point
        return ExperimentRecord(
            n=n, p=p, s_star=s_star, rep=rep,
            seed=record_seed(config.base_seed, n, p, s_star, rep),
            error=f"{type(exc).__name__}: {exc}",
        )


def _existing_keys(records_path: Path) -> set:
    done = set()
    if records_path.exists():
        with records_path.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                done.add((d["n"], d["p"], d["s_star"], d["rep"]))
    return done


def load_records(output_dir) -> list[ExperimentRecord]:
    """Read and canonically sort the records of a finished (or partial) run."""
    path = Path(output_dir) / RECORDS_FILE
    if not path.exists():
        raise EmptyInputError(f"no records file at {path}")
    records = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ExperimentRecord.from_dict(json.loads(line)))
    if not records:
        raise EmptyInputError(f"records file {path} is empty")
    records.sort(key=lambda r: (r.n, r.p, r.s_star, r.rep))
    return records


def run_experiment(config: ExperimentConfig) -> list[ExperimentRecord]:
    """Run every (grid point, rep) not already present in the output dir.

    Appends one JSON line per completed replication, then rewrites the
    summary CSV from the full record set.  Identical configs produce
    identical records byte for byte, wall-time fields aside.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / RECORDS_FILE
    # fail on unwritable output before any compute
    with records_path.open("a"):
        pass

    if config.kappa_diagnostics:
        for point in config.grid:
            _write_kappa_diagnostics(config, point, out)

    done = _existing_keys(records_path)
    tasks = [
        (point, rep)
        for point in config.grid
        for rep in range(config.reps)
        if (point[0], point[1], point[2], rep) not in done
    ]

    new_records: list[ExperimentRecord] = []
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {
                pool.submit(_safe_replication, config, point, rep): (point, rep)
                for point, rep in tasks
            }
            with records_path.open("a") as fh:
                for fut in as_completed(futures):
                    rec = fut.result()
                    fh.write(rec.to_json() + "\n")
                    fh.flush()
                    new_records.append(rec)
    else:
        with records_path.open("a") as fh:
            for point, rep in tasks:
                rec = _safe_replication(config, point, rep)
                fh.write(rec.to_json() + "\n")
                fh.flush()
                new_records.append(rec)

    records = load_records(out)
    _write_summary(records, config, out / SUMMARY_FILE)
    return records


def _write_kappa_diagnostics(config: ExperimentConfig, point, out: Path) -> None:
    n, p, s_star = point
    path = out / f"kappa_{n}x{p}x{s_star}.json"
    if path.exists():
        return
    seed = record_seed(config.base_seed, n, p, s_star, 0)
    instance = generate(
        GeneratorSpec(n=n, p=p, s_star=s_star, beta_pattern="equal_magnitude",
                      level=config.signal_level, seed=seed)
    )
    report = verify_lemma4(instance, config.kappa)
    path.write_text(json.dumps(asdict(report), indent=2, sort_keys=True))


def _quantile(vals, q):
    return float(np.quantile(np.asarray(vals, dtype=float), q)) if vals else None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _coverage_counts(recs, lo_name, hi_name):
    covered = [
        int(getattr(r, lo_name) <= r.beta1_true <= getattr(r, hi_name))
        for r in recs
        if getattr(r, lo_name) is not None and r.beta1_true is not None
    ]
    if not covered:
        return None, None
    widths = [
        getattr(r, hi_name) - getattr(r, lo_name)
        for r in recs
        if getattr(r, lo_name) is not None
    ]
    return sum(covered) / len(covered), float(np.mean(widths))


def _write_summary(records, config: ExperimentConfig, path: Path) -> None:
    """One aggregate row per grid point x method."""
    header = [
        "n", "p", "s_star", "method", "n_reps", "n_errors",
        "median_abs_remainder", "coverage", "avg_width",
        "median_w1", "median_ks", "l1_hold_rate", "mean_wall_time",
    ]
    rows = []
    for point in config.grid:
        n, p, s_star = point
        recs = [r for r in records if (r.n, r.p, r.s_star) == point]
        good = [r for r in recs if r.error is None]
        n_err = len(recs) - len(good)
        for method in config.methods:
            row = [n, p, s_star, method, len(recs), n_err]
            if method in ("zz", "one_step"):
                prefix = "zz" if method == "zz" else "onestep"
                rems = [
                    abs(getattr(r, f"{prefix}_remainder_scaled"))
                    for r in good
                    if getattr(r, f"{prefix}_remainder_scaled") is not None
                ]
                cov, width = _coverage_counts(good, f"{prefix}_lo", f"{prefix}_hi")
                row += [_quantile(rems, 0.5), cov, width, None, None]
                if method == "one_step":
                    holds = [r.onestep_l1_holds for r in good if r.onestep_l1_holds is not None]
                    row += [sum(holds) / len(holds) if holds else None]
                else:
                    row += [None]
            else:
                cov, width = _coverage_counts(good, "bayes_lo", "bayes_hi")
                w1s = [r.w1 for r in good if r.w1 is not None]
                kss = [r.ks for r in good if r.ks is not None]
                row += [None, cov, width, _quantile(w1s, 0.5), _quantile(kss, 0.5), None]
            times = [r.wall_time for r in recs if r.wall_time is not None]
            row += [float(np.mean(times)) if times else None]
            rows.append(row)
    _write_csv(path, header, rows)


def report(output_dir) -> dict[str, str]:
    """Aggregate a run's records into the four plot-ready CSV tables.

    (a) efficiency: quantiles of the scaled remainder by grid point and
    estimator; (b) normality: W1/KS/BL-bound by grid point; (c) coverage by
    grid point and method; (d) design diagnostics, merging per-grid kappa
    reports when the run produced them.
    """
    out = Path(output_dir)
    records = load_records(out)
    good = [r for r in records if r.error is None]
    points = sorted({(r.n, r.p, r.s_star) for r in records})
    paths = {}

    eff_rows = []
    for point in points:
        recs = [r for r in good if (r.n, r.p, r.s_star) == point]
        for method, prefix in (("zz", "zz"), ("one_step", "onestep")):
            rems = [
                getattr(r, f"{prefix}_remainder_scaled")
                for r in recs
                if getattr(r, f"{prefix}_remainder_scaled") is not None
            ]
            if not rems:
                continue
            eff_rows.append(
                list(point)
                + [method, len(rems), _quantile(rems, 0.25), _quantile(rems, 0.5),
                   _quantile(rems, 0.75), _quantile([abs(v) for v in rems], 0.5)]
            )
    p_eff = out / "efficiency.csv"
    _write_csv(p_eff, ["n", "p", "s_star", "method", "n_reps", "q25", "median", "q75",
                       "median_abs"], eff_rows)
    paths["efficiency"] = str(p_eff)

    norm_rows = []
    for point in points:
        recs = [r for r in good if (r.n, r.p, r.s_star) == point and r.w1 is not None]
        if not recs:
            continue
        norm_rows.append(
            list(point)
            + [len(recs), _quantile([r.w1 for r in recs], 0.5),
               _quantile([r.ks for r in recs], 0.5),
               _quantile([r.bl_upper for r in recs], 0.5),
               float(np.mean([r.n_kept for r in recs]))]
        )
    p_norm = out / "normality.csv"
    _write_csv(p_norm, ["n", "p", "s_star", "n_reps", "median_w1", "median_ks",
                        "median_bl_upper", "mean_n_kept"], norm_rows)
    paths["normality"] = str(p_norm)

    cov_rows = []
    for point in points:
        recs = [r for r in good if (r.n, r.p, r.s_star) == point]
        bayes_cov, bayes_width = _coverage_counts(recs, "bayes_lo", "bayes_hi")
        for method, prefix in (("zz", "zz"), ("one_step", "onestep")):
            cov, width = _coverage_counts(recs, f"{prefix}_lo", f"{prefix}_hi")
            if cov is None:
                continue
            cov_rows.append(
                list(point) + [method, 0.95, len(recs), cov, width, bayes_cov, bayes_width]
            )
    p_cov = out / "coverage.csv"
    _write_csv(p_cov, ["n", "p", "s_star", "method", "nominal", "n_reps",
                       "empirical_freq", "avg_width_freq", "empirical_bayes",
                       "avg_width_bayes"], cov_rows)
    paths["coverage"] = str(p_cov)

    diag_rows = []
    for point in points:
        n, p, s_star = point
        recs = [r for r in good if (r.n, r.p, r.s_star) == point]
        kappa = {}
        kappa_path = out / f"kappa_{n}x{p}x{s_star}.json"
        if kappa_path.exists():
            kappa = json.loads(kappa_path.read_text())
        margins = [r.assumption1_margin for r in recs if r.assumption1_margin is not None]
        diag_rows.append(
            list(point)
            + [
                recs[0].lambda_n if recs else None,
                recs[0].dim_ratio if recs else None,
                float(np.mean(margins)) if margins else None,
                float(np.max(margins)) if margins else None,
                kappa.get("kappa0_X"), kappa.get("certificate_X"),
                kappa.get("kappa0_W"), kappa.get("certificate_W"),
                kappa.get("rec_estimate"), kappa.get("lemma4_slack"),
                kappa.get("sparsity_level_k"),
            ]
        )
    p_diag = out / "diagnostics.csv"
    _write_csv(p_diag, ["n", "p", "s_star", "lambda_n", "dim_ratio", "mean_margin",
                        "max_margin", "kappa0_X", "certificate_X", "kappa0_W",
                        "certificate_W", "rec_estimate", "lemma4_slack", "k"], diag_rows)
    paths["diagnostics"] = str(p_diag)
    return paths
