"""Sparse Bayesian posterior for the target coefficient.

Construction
------------
The likelihood of ``Y ~ N(Xb, I)`` factorizes, after reparametrizing
``b1* = b1 + sum_i gamma_i b_i`` and projecting the nuisance design
orthogonal to the target column (``W = (I - H) X_{-1}``), into a term in
``b1*`` alone and a term in ``b_{-1}`` alone.  The prior makes the two
blocks independent:

- ``b1* ~ N(0, sigma_n^2)``, so its posterior is exactly Gaussian;
- ``b_{-1}`` gets a sparse hierarchical prior: model size ``s`` has mass
  proportional to ``exp(-D s log p)``, supports are uniform among full-rank
  size-``s`` submatrices of W, and coefficients have density proportional
  to ``exp(-eta_n |W_S b_S|)`` with its exact normalizing constant.

The nuisance block is sampled by Metropolis-Hastings over (support,
coefficients) with add / remove / swap / within-model moves; the target
block is then drawn exactly per retained sample, so the recorded marginal
of ``b1`` is the exact mixture the factorized posterior defines.  A small
quadrature routine computes the exact model posterior on tiny problems and
serves as the sampler's ground-truth oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from math import comb, log, pi, sqrt
from typing import Sequence

import numpy as np
from scipy.special import erfcx, gammaln, log_ndtr, logsumexp

from .debias import EstimateReport
from .diagnostics import DesignDiagnostics
from .errors import (
    ConfigurationError,
    DegenerateDesignError,
    SamplerStuckError,
    SupportInvalidError,
)
from .model import RegressionInstance, derive_stream

logger = logging.getLogger(__name__)

_RANK_RTOL = 1e-10
_LOG_2PI = log(2.0 * pi)
_warned_surrogate: set[tuple[int, int]] = set()


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 20_000
    burn_in: int = 2_000
    thin: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_iter <= self.burn_in:
            raise ConfigurationError("n_iter must exceed burn_in")
        if self.thin < 1:
            raise ConfigurationError("thin must be >= 1")


@dataclass(frozen=True)
class PosteriorConfig:
    """Prior hyperparameters and chain settings.

    ``eta_n=None`` resolves to ``2 n lambda_n`` divided by the mean column
    norm of W; ``sigma_n_sq=None`` resolves to ``n``.  Both resolved values
    are echoed on the chain result.  ``move_probs`` is (add, remove, swap,
    within) and must sum to 1.
    """

    D: float = 2.0
    eta_n: float | None = None
    sigma_n_sq: float | None = None
    s_max: int = 10
    chain: ChainConfig = field(default_factory=ChainConfig)
    move_probs: tuple[float, float, float, float] = (0.3, 0.3, 0.1, 0.3)
    z_budget: int = 2_000

    def __post_init__(self):
        if self.D <= 0:
            raise ConfigurationError("D must be positive")
        if self.eta_n is not None and not self.eta_n > 0:
            raise ConfigurationError("eta_n must be positive")
        if self.sigma_n_sq is not None and not self.sigma_n_sq > 0:
            raise ConfigurationError("sigma_n_sq must be positive")
        if self.s_max < 0:
            raise ConfigurationError("s_max must be nonnegative")
        mp = np.asarray(self.move_probs, dtype=float)
        if mp.shape != (4,) or np.any(mp < 0) or abs(mp.sum() - 1.0) > 1e-12:
            raise ConfigurationError("move_probs must be 4 nonnegative values summing to 1")


@dataclass(frozen=True, eq=False)
class PosteriorSample:
    """One retained draw: nuisance support and coefficients plus the target.

    ``S`` holds sorted 0-based indices into the nuisance block (index i is
    design column i+1).  ``b1`` satisfies ``b1 = b1_star - gamma_S . b_values``
    by construction.  ``log_target`` is the unnormalized log posterior of the
    nuisance state (the target block integrates out separately).
    """

    S: tuple[int, ...]
    b_values: np.ndarray
    b1_star: float
    b1: float
    log_target: float


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    """Reduction terms of the conditional target posterior plus l1 mass.

    ``nu_n_draws[k]`` is the conditional mean of the standardized target
    coordinate given sample k's nuisance block; ``tau_n`` its (sample-free)
    conditional standard deviation; ``l1_contraction_mass`` the posterior
    fraction outside the l1 ball of radius ``c3 * s_star * lambda_n`` around
    the truth (None without ground truth).
    """

    nu_n_draws: np.ndarray
    tau_n: float
    l1_contraction_mass: float | None
    sigma_n_sq: float
    c3: float


@dataclass(eq=False)
class AuditEntry:
    """Everything needed to recompute one proposal's acceptance ratio."""

    move: str
    S_from: tuple[int, ...]
    vals_from: np.ndarray
    S_to: tuple[int, ...]
    vals_to: np.ndarray
    j: int | None          # coordinate added / removed / swapped out
    l: int | None          # coordinate swapped in
    u_new: float | None    # proposed coefficient (add, swap)
    u_old: float | None    # displaced coefficient (remove, swap)
    within_scales: np.ndarray | None
    log_alpha: float
    accepted: bool


@dataclass(eq=False)
class ChainResult:
    """Samples plus resolved hyperparameters and sampler bookkeeping."""

    samples: list[PosteriorSample]
    eta_n: float
    sigma_n_sq: float
    acceptance: dict
    within_step: float
    audit: list[AuditEntry]
    seed: int


def b1star_posterior(instance: RegressionInstance, sigma_n_sq: float) -> tuple[float, float]:
    """Exact Gaussian posterior (mean, variance) of the reparametrized target.

    ``mean = sigma^2 X_1^T Y / (1 + |X_1|^2 sigma^2)`` and
    ``variance = sigma^2 / (1 + |X_1|^2 sigma^2)``.
    """
    if not sigma_n_sq > 0:
        raise ConfigurationError("sigma_n_sq must be positive")
    x1 = instance.X[:, 0]
    nsq = float(x1 @ x1)
    if nsq <= 0.0:
        raise DegenerateDesignError("target column X_1 is zero")
    denom = 1.0 + nsq * sigma_n_sq
    return (float(sigma_n_sq * (x1 @ instance.Y) / denom), float(sigma_n_sq / denom))


def default_posterior_eta(W: np.ndarray, n: int, p: int, multiple: float = 2.0) -> float:
    """``multiple * n * lambda_n`` normalized by the mean column norm of W."""
    scale = float(np.mean(np.linalg.norm(W, axis=0)))
    if scale <= 0.0:
        raise DegenerateDesignError("projected design W has zero scale")
    return float(multiple * n * np.sqrt(np.log(p) / n) / scale)


def resolve_hyperparameters(
    config: PosteriorConfig, instance: RegressionInstance, W: np.ndarray
) -> tuple[float, float]:
    """(eta_n, sigma_n_sq) with the documented defaults filled in."""
    eta = config.eta_n if config.eta_n is not None else default_posterior_eta(W, instance.n, instance.p)
    sigma = config.sigma_n_sq if config.sigma_n_sq is not None else float(instance.n)
    return eta, sigma


class _PriorContext:
    """Caches the support-dependent pieces of the nuisance prior."""

    def __init__(self, W: np.ndarray, p: int, config: PosteriorConfig, eta_n: float):
        self.W = W
        self.p = p
        self.m = W.shape[1]
        self.config = config
        self.eta = eta_n
        self.colnorm2 = np.einsum("ij,ij->j", W, W)
        sizes = np.arange(config.s_max + 1)
        self._pi_lognorm = float(logsumexp(-config.D * sizes * log(p)))
        self._logdet_cache: dict[tuple[int, ...], float] = {}
        self._model_count_cache: dict[int, float] = {}

    def log_size_mass(self, s: int) -> float:
        if s > self.config.s_max:
            return -np.inf
        return -self.config.D * s * log(self.p) - self._pi_lognorm

    def log_model_count(self, s: int) -> float:
        """log of the number of full-rank size-s supports (or the binomial
        surrogate when enumeration exceeds the budget)."""
        if s == 0:
            return 0.0
        cached = self._model_count_cache.get(s)
        if cached is not None:
            return cached
        total = comb(self.m, s)
        if total <= self.config.z_budget:
            count = 0
            for S in combinations(range(self.m), s):
                sv = np.linalg.svd(self.W[:, S], compute_uv=False)
                if sv[-1] > _RANK_RTOL * sv[0]:
                    count += 1
            if count == 0:
                out = -np.inf
            else:
                out = log(count)
        else:
            key = (self.m, s)
            if key not in _warned_surrogate:
                _warned_surrogate.add(key)
                logger.warning(
                    "model count C(%d, %d) exceeds enumeration budget; "
                    "using the binomial surrogate", self.m, s,
                )
            out = float(gammaln(self.m + 1) - gammaln(s + 1) - gammaln(self.m - s + 1))
        self._model_count_cache[s] = out
        return out

    def half_logdet(self, S: tuple[int, ...]) -> float:
        """(1/2) log det(W_S^T W_S); raises for rank-deficient supports."""
        cached = self._logdet_cache.get(S)
        if cached is not None:
            if np.isneginf(cached):
                raise SupportInvalidError(f"support {S} indexes a rank-deficient W_S")
            return cached
        sv = np.linalg.svd(self.W[:, list(S)], compute_uv=False)
        if sv[-1] <= _RANK_RTOL * sv[0] or sv[0] == 0.0:
            self._logdet_cache[S] = -np.inf
            raise SupportInvalidError(f"support {S} indexes a rank-deficient W_S")
        out = float(np.sum(np.log(sv)))
        self._logdet_cache[S] = out
        return out

    def log_prior(self, S: tuple[int, ...], vals: np.ndarray) -> float:
        s = len(S)
        lp = self.log_size_mass(s)
        if not np.isfinite(lp):
            return -np.inf
        lp -= self.log_model_count(s)
        if s:
            half_logdet = self.half_logdet(S)
            norm_ws = float(np.linalg.norm(self.W[:, list(S)] @ vals))
            lp += (
                s * log(self.eta)
                + gammaln(s / 2.0)
                - log(2.0)
                - (s / 2.0) * log(pi)
                - gammaln(s)
                + half_logdet
                - self.eta * norm_ws
            )
        return lp


def log_prior(
    S: Sequence[int], b_S: np.ndarray, config: PosteriorConfig, W: np.ndarray
) -> float:
    """Log prior density of a nuisance state (size mass + uniform support
    mass + coefficient density with its exact normalizing constant).

    Raises
    ------
    SupportInvalidError
        If ``W_S`` is rank deficient (the support lies outside the model class).
    """
    W = np.asarray(W, dtype=float)
    eta = (
        config.eta_n
        if config.eta_n is not None
        else default_posterior_eta(W, W.shape[0], W.shape[1] + 1)
    )
    ctx = _PriorContext(W, W.shape[1] + 1, config, eta)
    S = tuple(sorted(int(i) for i in S))
    vals = np.asarray(b_S, dtype=float)
    if len(S) != vals.shape[0]:
        raise ConfigurationError("b_S length must match support size")
    if len(S) > config.s_max:
        raise ConfigurationError(f"support size {len(S)} exceeds s_max={config.s_max}")
    out = ctx.log_prior(S, vals)
    return out


def _norm_logpdf(x: float, mu: float, sd: float) -> float:
    z = (x - mu) / sd
    return -0.5 * z * z - log(sd) - 0.5 * _LOG_2PI


# Column-selection proposal for add/swap moves: softmax over the conditional
# log likelihood gains z_j^2/2, mixed with a uniform floor so every candidate
# stays proposable and acceptance ratios stay bounded.
_UNIFORM_MIX = 0.1


def _selection_logprobs(t: np.ndarray, colnorm2: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """log q(j) over candidate columns given the correlation vector t = W^T r."""
    scores = 0.5 * t[candidates] ** 2 / colnorm2[candidates]
    scores -= scores.max()
    w = np.exp(scores)
    probs = (1.0 - _UNIFORM_MIX) * w / w.sum() + _UNIFORM_MIX / candidates.size
    return np.log(probs)


class _ChainState:
    __slots__ = ("S", "vals", "r", "t", "loglik", "logprior")

    def __init__(self, S, vals, r, t, loglik, logprior):
        self.S = S              # sorted tuple of nuisance indices
        self.vals = vals        # aligned coefficient array
        self.r = r              # residual Y0 - W_S vals
        self.t = t              # W^T r, kept in sync with r
        self.loglik = loglik
        self.logprior = logprior


def run_chain(
    instance: RegressionInstance,
    diagnostics: DesignDiagnostics,
    config: PosteriorConfig,
    audit_every: int = 0,
) -> ChainResult:
    """Metropolis-Hastings over the nuisance block, with the target block
    drawn exactly per retained sample.

    Moves: add (column selected from a softmax over conditional likelihood
    gains, coefficient from the conditional least-squares Gaussian), remove,
    swap, and a Gaussian random walk on the current coefficients whose step
    adapts toward 0.4 acceptance during burn-in only.  The chain is a pure
    function of ``config.chain.seed``.  ``audit_every=k`` logs every k-th
    proposal with enough detail for :func:`recompute_log_alpha` to rebuild
    its acceptance ratio from scratch.

    Raises
    ------
    SamplerStuckError
        After ``s_max`` consecutive rank-deficient proposals.
    """
    W = diagnostics.W
    m = W.shape[1]
    if config.s_max > m:
        raise ConfigurationError(f"s_max={config.s_max} exceeds nuisance dimension {m}")
    eta_n, sigma_n_sq = resolve_hyperparameters(config, instance, W)
    ctx = _PriorContext(W, instance.p, config, eta_n)
    valid_col = ctx.colnorm2 > 0.0
    n_valid = int(valid_col.sum())
    gram = W.T @ W  # dense; fine at desk scale

    x1 = instance.X[:, 0]
    nsq = float(x1 @ x1)
    if nsq <= 0.0:
        raise DegenerateDesignError("target column X_1 is zero")
    Y0 = instance.Y - x1 * float(x1 @ instance.Y) / nsq
    b1_mean, b1_var = b1star_posterior(instance, sigma_n_sq)
    b1_sd = sqrt(b1_var)
    gamma = diagnostics.gamma

    rng = derive_stream(config.chain.seed, "posterior-chain", 0)
    cc = config.chain
    move_cum = np.cumsum(config.move_probs)
    log_move = [log(q) if q > 0 else -np.inf for q in config.move_probs]
    all_cols = np.arange(m)

    def free_candidates(S_set):
        mask = valid_col.copy()
        if S_set:
            mask[list(S_set)] = False
        return all_cols[mask]

    state = _ChainState(
        S=(), vals=np.zeros(0), r=Y0.copy(), t=W.T @ Y0,
        loglik=-0.5 * float(Y0 @ Y0), logprior=ctx.log_prior((), np.zeros(0)),
    )
    within_logstep = 0.0
    within_tries = 0
    proposed = {"add": 0, "remove": 0, "swap": 0, "within": 0}
    accepted = {"add": 0, "remove": 0, "swap": 0, "within": 0}
    stuck = 0
    samples: list[PosteriorSample] = []
    audit: list[AuditEntry] = []

    for it in range(cc.n_iter):
        if it % 1000 == 999:
            state.r = Y0 - W[:, list(state.S)] @ state.vals if state.S else Y0.copy()
            state.t = W.T @ state.r
            state.loglik = -0.5 * float(state.r @ state.r)

        u_move = rng.random()
        move_idx = min(int(np.searchsorted(move_cum, u_move, side="right")), 3)
        move = ("add", "remove", "swap", "within")[move_idx]
        s_now = len(state.S)
        S_set = set(state.S)
        free = n_valid - s_now

        entry_kwargs = None
        proposal = None
        log_alpha = None

        if move == "add" and s_now < config.s_max and free > 0:
            cands = free_candidates(S_set)
            logq = _selection_logprobs(state.t, ctx.colnorm2, cands)
            pick = int(rng.choice(cands.size, p=np.exp(logq)))
            j = int(cands[pick])
            c2 = ctx.colnorm2[j]
            mu = float(state.t[j]) / c2
            sd = 1.0 / sqrt(c2)
            u = mu + sd * rng.standard_normal()
            S_new = tuple(sorted(state.S + (j,)))
            pos = S_new.index(j)
            vals_new = np.insert(state.vals, pos, u)
            try:
                logprior_new = ctx.log_prior(S_new, vals_new)
            except SupportInvalidError:
                logprior_new = None
            if logprior_new is None:
                stuck += 1
            else:
                stuck = 0
                r_new = state.r - W[:, j] * u
                t_new = state.t - gram[:, j] * u
                loglik_new = -0.5 * float(r_new @ r_new)
                log_fwd = log_move[0] + float(logq[pick]) + _norm_logpdf(u, mu, sd)
                log_rev = log_move[1] - log(s_now + 1)
                log_alpha = (loglik_new + logprior_new) - (state.loglik + state.logprior) + log_rev - log_fwd
                proposal = _ChainState(S_new, vals_new, r_new, t_new, loglik_new, logprior_new)
                entry_kwargs = dict(j=j, l=None, u_new=u, u_old=None, within_scales=None)

        elif move == "remove" and s_now > 0:
            idx = int(rng.integers(s_now))
            j = state.S[idx]
            u_old = float(state.vals[idx])
            S_new = state.S[:idx] + state.S[idx + 1:]
            vals_new = np.delete(state.vals, idx)
            logprior_new = ctx.log_prior(S_new, vals_new)
            stuck = 0
            r_new = state.r + W[:, j] * u_old
            t_new = state.t + gram[:, j] * u_old
            loglik_new = -0.5 * float(r_new @ r_new)
            c2 = ctx.colnorm2[j]
            mu_rev = float(t_new[j]) / c2
            sd = 1.0 / sqrt(c2)
            cands_rev = free_candidates(set(S_new))
            logq_rev = _selection_logprobs(t_new, ctx.colnorm2, cands_rev)
            sel_rev = float(logq_rev[int(np.searchsorted(cands_rev, j))])
            log_fwd = log_move[1] - log(s_now)
            log_rev = log_move[0] + sel_rev + _norm_logpdf(u_old, mu_rev, sd)
            log_alpha = (loglik_new + logprior_new) - (state.loglik + state.logprior) + log_rev - log_fwd
            proposal = _ChainState(S_new, vals_new, r_new, t_new, loglik_new, logprior_new)
            entry_kwargs = dict(j=j, l=None, u_new=None, u_old=u_old, within_scales=None)

        elif move == "swap" and s_now > 0 and free > 0:
            idx = int(rng.integers(s_now))
            j = state.S[idx]
            u_old = float(state.vals[idx])
            r_z = state.r + W[:, j] * u_old
            t_z = state.t + gram[:, j] * u_old
            S_mid = state.S[:idx] + state.S[idx + 1:]
            cands_z = free_candidates(set(S_mid))  # includes j itself
            logq_z = _selection_logprobs(t_z, ctx.colnorm2, cands_z)
            pick = int(rng.choice(cands_z.size, p=np.exp(logq_z)))
            l = int(cands_z[pick])
            c2_l = ctx.colnorm2[l]
            mu_l = float(t_z[l]) / c2_l
            sd_l = 1.0 / sqrt(c2_l)
            u = mu_l + sd_l * rng.standard_normal()
            vals_mid = np.delete(state.vals, idx)
            S_new = tuple(sorted(S_mid + (l,)))
            pos = S_new.index(l)
            vals_new = np.insert(vals_mid, pos, u)
            try:
                logprior_new = ctx.log_prior(S_new, vals_new)
            except SupportInvalidError:
                logprior_new = None
            if logprior_new is None:
                stuck += 1
            else:
                stuck = 0
                r_new = r_z - W[:, l] * u
                t_new = t_z - gram[:, l] * u
                loglik_new = -0.5 * float(r_new @ r_new)
                c2_j = ctx.colnorm2[j]
                mu_j = float(t_z[j]) / c2_j
                sd_j = 1.0 / sqrt(c2_j)
                sel_fwd = float(logq_z[pick])
                sel_rev = float(logq_z[int(np.searchsorted(cands_z, j))])
                log_fwd = sel_fwd + _norm_logpdf(u, mu_l, sd_l)
                log_rev = sel_rev + _norm_logpdf(u_old, mu_j, sd_j)
                log_alpha = (loglik_new + logprior_new) - (state.loglik + state.logprior) + log_rev - log_fwd
                proposal = _ChainState(S_new, vals_new, r_new, t_new, loglik_new, logprior_new)
                entry_kwargs = dict(j=j, l=l, u_new=u, u_old=u_old, within_scales=None)

        elif move == "within" and s_now > 0:
            idx_list = list(state.S)
            scales = np.exp(within_logstep) / np.sqrt(ctx.colnorm2[idx_list])
            step = scales * rng.standard_normal(s_now)
            vals_new = state.vals + step
            logprior_new = ctx.log_prior(state.S, vals_new)
            stuck = 0
            r_new = state.r - W[:, idx_list] @ step
            t_new = state.t - gram[:, idx_list] @ step
            loglik_new = -0.5 * float(r_new @ r_new)
            log_alpha = (loglik_new + logprior_new) - (state.loglik + state.logprior)
            proposal = _ChainState(state.S, vals_new, r_new, t_new, loglik_new, logprior_new)
            entry_kwargs = dict(j=None, l=None, u_new=None, u_old=None, within_scales=scales)

        if stuck >= max(config.s_max, 1):
            raise SamplerStuckError(
                "all recent support proposals were rank deficient",
                diagnostics={"iteration": it, "support": state.S, "consecutive": stuck},
            )

        if proposal is not None:
            proposed[move] += 1
            acc = log(rng.random()) < log_alpha if log_alpha < 0 else True
            if audit_every and it % audit_every == 0:
                audit.append(
                    AuditEntry(
                        move=move,
                        S_from=state.S,
                        vals_from=state.vals.copy(),
                        S_to=proposal.S,
                        vals_to=proposal.vals.copy(),
                        log_alpha=float(log_alpha),
                        accepted=bool(acc),
                        **entry_kwargs,
                    )
                )
            if acc:
                accepted[move] += 1
                state = proposal
            if move == "within" and it < cc.burn_in:
                within_tries += 1
                within_logstep += (float(acc) - 0.4) / max(20, within_tries) ** 0.6

        if it >= cc.burn_in and (it - cc.burn_in) % cc.thin == 0:
            b1s = b1_mean + b1_sd * rng.standard_normal()
            drift = float(gamma[list(state.S)] @ state.vals) if state.S else 0.0
            samples.append(
                PosteriorSample(
                    S=state.S,
                    b_values=state.vals.copy(),
                    b1_star=float(b1s),
                    b1=float(b1s - drift),
                    log_target=float(state.loglik + state.logprior),
                )
            )

    return ChainResult(
        samples=samples,
        eta_n=eta_n,
        sigma_n_sq=sigma_n_sq,
        acceptance={k: (proposed[k], accepted[k]) for k in proposed},
        within_step=float(np.exp(within_logstep)),
        audit=audit,
        seed=cc.seed,
    )


def recompute_log_alpha(
    entry: AuditEntry,
    instance: RegressionInstance,
    diagnostics: DesignDiagnostics,
    config: PosteriorConfig,
) -> float:
    """Rebuild an audited proposal's log acceptance ratio from scratch.

    Every target and proposal density is recomputed from the raw matrices,
    independent of the sampler's incremental bookkeeping; used to audit
    detailed balance.
    """
    W = diagnostics.W
    eta_n, _ = resolve_hyperparameters(config, instance, W)
    ctx = _PriorContext(W, instance.p, config, eta_n)
    x1 = instance.X[:, 0]
    Y0 = instance.Y - x1 * float(x1 @ instance.Y) / float(x1 @ x1)
    valid_col = ctx.colnorm2 > 0.0
    all_cols = np.arange(W.shape[1])

    def residual(S, vals):
        return Y0 - W[:, list(S)] @ vals if len(S) else Y0.copy()

    def log_target(S, vals):
        r = residual(S, vals)
        return -0.5 * float(r @ r) + ctx.log_prior(S, vals)

    def selection(S_base, r_base, j):
        mask = valid_col.copy()
        if S_base:
            mask[list(S_base)] = False
        cands = all_cols[mask]
        logq = _selection_logprobs(W.T @ r_base, ctx.colnorm2, cands)
        return float(logq[int(np.searchsorted(cands, j))])

    lt_from = log_target(entry.S_from, entry.vals_from)
    try:
        lt_to = log_target(entry.S_to, entry.vals_to)
    except SupportInvalidError:
        return -np.inf
    log_move = [log(q) if q > 0 else -np.inf for q in config.move_probs]
    r_from = residual(entry.S_from, entry.vals_from)

    if entry.move == "add":
        j = entry.j
        c2 = ctx.colnorm2[j]
        mu = float(W[:, j] @ r_from) / c2
        sd = 1.0 / sqrt(c2)
        log_fwd = log_move[0] + selection(entry.S_from, r_from, j) + _norm_logpdf(entry.u_new, mu, sd)
        log_rev = log_move[1] - log(len(entry.S_to))
    elif entry.move == "remove":
        j = entry.j
        c2 = ctx.colnorm2[j]
        r_to = residual(entry.S_to, entry.vals_to)
        mu_rev = float(W[:, j] @ r_to) / c2
        sd = 1.0 / sqrt(c2)
        log_fwd = log_move[1] - log(len(entry.S_from))
        log_rev = log_move[0] + selection(entry.S_to, r_to, j) + _norm_logpdf(entry.u_old, mu_rev, sd)
    elif entry.move == "swap":
        j, l = entry.j, entry.l
        idx = entry.S_from.index(j)
        S_mid = tuple(i for i in entry.S_from if i != j)
        r_z = r_from + W[:, j] * entry.vals_from[idx]
        mu_l = float(W[:, l] @ r_z) / ctx.colnorm2[l]
        mu_j = float(W[:, j] @ r_z) / ctx.colnorm2[j]
        log_fwd = selection(S_mid, r_z, l) + _norm_logpdf(entry.u_new, mu_l, 1.0 / sqrt(ctx.colnorm2[l]))
        log_rev = selection(S_mid, r_z, j) + _norm_logpdf(entry.u_old, mu_j, 1.0 / sqrt(ctx.colnorm2[j]))
    else:  # within: symmetric random walk
        log_fwd = log_rev = 0.0

    return float(lt_to - lt_from + log_rev - log_fwd)


def _log_radial_integral(mu: np.ndarray) -> np.ndarray:
    """log of ``I(mu) = integral_0^inf r exp(-r^2/2 + mu r) dr`` elementwise.

    ``I(mu) = 1 + mu sqrt(pi/2) erfcx(-mu/sqrt(2))``, switched to its leading
    asymptotic form for large positive mu where erfcx would overflow.
    """
    mu = np.asarray(mu, dtype=float)
    out = np.empty_like(mu)
    big = mu > 25.0
    out[big] = 0.5 * mu[big] ** 2 + np.log(mu[big]) + 0.5 * _LOG_2PI
    rest = ~big
    vals = 1.0 + mu[rest] * sqrt(pi / 2.0) * erfcx(-mu[rest] / sqrt(2.0))
    out[rest] = np.log(np.maximum(vals, 1e-300))
    return out


def _log_marginal(W_S: np.ndarray, Y0: np.ndarray, eta: float, quad_points: int) -> float:
    """log of ``integral exp(-|Y0 - W_S u|^2 / 2) f_S(u) du`` for |S| <= 2.

    Whitening by the QR factor of ``W_S`` cancels the determinant in the
    coefficient density's normalizer, leaving a 1-D Gaussian-kink integral
    (closed form via log_ndtr) for |S| = 1 and, for |S| = 2, a smooth
    periodic angular integral evaluated by trapezoid with doubling until it
    is stable to 1e-10.
    """
    k = W_S.shape[1]
    y0_sq = float(Y0 @ Y0)
    if k == 0:
        return -0.5 * y0_sq
    Q, _ = np.linalg.qr(W_S)
    c = Q.T @ Y0
    rho_sq = max(y0_sq - float(c @ c), 0.0)
    norm_const = (
        k * log(eta) + gammaln(k / 2.0) - log(2.0) - (k / 2.0) * log(pi) - gammaln(k)
    )
    if k == 1:
        cc = float(c[0])
        lp_plus = 0.5 * eta**2 - eta * cc + 0.5 * _LOG_2PI + log_ndtr(cc - eta)
        lp_minus = 0.5 * eta**2 + eta * cc + 0.5 * _LOG_2PI + log_ndtr(-cc - eta)
        log_j = float(logsumexp([lp_plus, lp_minus]))
    else:
        c_sq = float(c @ c)
        n_nodes = max(int(quad_points), 16)
        prev = None
        for _ in range(9):
            theta = np.linspace(0.0, 2.0 * pi, n_nodes, endpoint=False)
            mu = c[0] * np.cos(theta) + c[1] * np.sin(theta) - eta
            log_j = -0.5 * c_sq + log(2.0 * pi / n_nodes) + float(logsumexp(_log_radial_integral(mu)))
            if prev is not None and abs(log_j - prev) <= 1e-10 * max(1.0, abs(log_j)):
                break
            prev = log_j
            n_nodes *= 2
    return -0.5 * rho_sq + norm_const + log_j


def enumerate_posterior_exact(
    instance: RegressionInstance,
    diagnostics: DesignDiagnostics,
    config: PosteriorConfig,
    quad_points: int = 64,
) -> dict[tuple[int, ...], float]:
    """Exact posterior model probabilities by quadrature (tiny problems only).

    Ground-truth oracle for :func:`run_chain`: enumerates every full-rank
    support of size <= s_max, integrates the coefficient block out, and
    normalizes.  Refuses problems with more than 6 nuisance columns or
    s_max > 2 (quadrature dimension above 2).
    """
    W = diagnostics.W
    m = W.shape[1]
    if m > 6 or config.s_max > 2:
        raise ConfigurationError(
            "exact enumeration supports at most 6 nuisance columns and s_max <= 2"
        )
    eta_n, _ = resolve_hyperparameters(config, instance, W)
    ctx = _PriorContext(W, instance.p, config, eta_n)
    x1 = instance.X[:, 0]
    Y0 = instance.Y - x1 * float(x1 @ instance.Y) / float(x1 @ x1)

    log_weights: dict[tuple[int, ...], float] = {}
    for s in range(min(config.s_max, m) + 1):
        for S in combinations(range(m), s):
            if s:
                sv = np.linalg.svd(W[:, list(S)], compute_uv=False)
                if sv[-1] <= _RANK_RTOL * sv[0]:
                    continue
            lw = (
                ctx.log_size_mass(s)
                - ctx.log_model_count(s)
                + _log_marginal(W[:, list(S)], Y0, eta_n, quad_points)
            )
            log_weights[S] = lw
    keys = sorted(log_weights)
    lw = np.array([log_weights[k] for k in keys])
    probs = np.exp(lw - logsumexp(lw))
    return {k: float(v) for k, v in zip(keys, probs)}


def model_frequencies(samples: Sequence[PosteriorSample]) -> dict[tuple[int, ...], float]:
    """Empirical support frequencies of a sample sequence."""
    counts: dict[tuple[int, ...], int] = {}
    for s in samples:
        counts[s.S] = counts.get(s.S, 0) + 1
    total = max(len(samples), 1)
    return {k: v / total for k, v in sorted(counts.items())}


def total_variation(a: dict, b: dict) -> float:
    """Total variation distance between two probability tables."""
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def standardized_draws(
    samples: Sequence[PosteriorSample],
    instance: RegressionInstance,
    estimate: EstimateReport,
) -> np.ndarray:
    """``|X_1| (b1 - beta1_hat)`` per retained sample."""
    x1_norm = float(np.linalg.norm(instance.X[:, 0]))
    return x1_norm * (np.array([s.b1 for s in samples]) - estimate.beta1_hat)


def summarize(
    samples: Sequence[PosteriorSample],
    instance: RegressionInstance,
    diagnostics: DesignDiagnostics,
    estimate: EstimateReport,
    config: PosteriorConfig,
    c3: float = 8.0,
) -> PosteriorSummary:
    """Conditional-mean offsets, the closed-form conditional sd, and the
    posterior mass outside the l1 contraction ball (truth permitting)."""
    if not samples:
        raise ConfigurationError("summarize needs a nonempty sample sequence")
    _, sigma_n_sq = resolve_hyperparameters(config, instance, diagnostics.W)
    x1_norm = diagnostics.x1_norm
    nsq = x1_norm**2
    shrunk_mean = float(
        sigma_n_sq * (instance.X[:, 0] @ instance.Y) / (1.0 + nsq * sigma_n_sq)
    )
    gamma = diagnostics.gamma
    drifts = np.array(
        [float(gamma[list(s.S)] @ s.b_values) if s.S else 0.0 for s in samples]
    )
    nu = x1_norm * (shrunk_mean - drifts - estimate.beta1_hat)
    tau = sqrt(sigma_n_sq * nsq / (1.0 + sigma_n_sq * nsq))

    mass = None
    if instance.beta_true is not None:
        beta = instance.beta_true
        beta_rest = beta[1:]
        base_l1 = float(np.abs(beta_rest).sum())
        radius = c3 * instance.s_star * instance.lambda_n
        over = 0
        for s in samples:
            if s.S:
                idx = list(s.S)
                err_rest = base_l1 - float(np.abs(beta_rest[idx]).sum()) + float(
                    np.abs(s.b_values - beta_rest[idx]).sum()
                )
            else:
                err_rest = base_l1
            if abs(s.b1 - beta[0]) + err_rest > radius:
                over += 1
        mass = over / len(samples)
    return PosteriorSummary(
        nu_n_draws=nu,
        tau_n=float(tau),
        l1_contraction_mass=mass,
        sigma_n_sq=sigma_n_sq,
        c3=c3,
    )
