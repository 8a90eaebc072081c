"""De-biased estimators of the first coefficient, with their exact error
decomposition.

Both estimators profile out the nuisance coordinates with an l1 penalty and
then treat coordinate 0 by least squares:

- ``two_step_zz``: a fully penalized first-stage solve, followed by the
  closed-form regression of the partial residual on the target column;
- ``one_step``: a single solve that simply exempts coordinate 0 from the
  penalty, whose stationarity condition makes the profile step implicit.

When the truth is known, the estimation error splits algebraically into an
oracle term ``X_1^T eps / |X_1|^2`` and a bias term carried by the nuisance
estimation error; the split is exact (not asymptotic) whenever the profile
least-squares condition holds, which is what ``kkt_identity_check`` verifies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateDesignError, FirstStageError
from .model import RegressionInstance
from .solver import (
    PenaltySpec,
    SolverOptions,
    check_cone_condition,
    check_l1_control,
    default_eta,
    solve,
)

TWO_STEP = "two_step_zz"
ONE_STEP = "one_step"


@dataclass(eq=False)
class EstimateReport:
    """Point estimate of coordinate 0 plus its exact error decomposition.

    ``first_stage`` holds the full penalized coefficient vector backing the
    estimate (the stage-one solution for the two-step method, the one-step
    minimizer itself otherwise).  Decomposition fields are None when the
    instance carries no ground truth.
    """

    method: str
    beta1_hat: float
    first_stage: np.ndarray | None
    oracle_term: float | None
    bias_term: float | None
    remainder_scaled: float | None
    interval_95: tuple[float, float]
    decomposition_gap: float | None = None
    l1_error: float | None = None
    l1_holds: bool | None = None
    cone_holds: bool | None = None
    solver_converged: bool = True
    solver_iterations: int = 0


def _x1_norm_sq(instance: RegressionInstance) -> float:
    x1 = instance.X[:, 0]
    v = float(x1 @ x1)
    if v <= 0.0:
        raise DegenerateDesignError("target column X_1 is zero")
    return v


def _decomposition(instance, beta1_hat, rest_estimate):
    """Oracle term, bias term, scaled remainder, and the identity gap."""
    if instance.beta_true is None:
        return None, None, None, None
    X = instance.X
    x1 = X[:, 0]
    nsq = _x1_norm_sq(instance)
    eps = instance.Y - X @ instance.beta_true
    oracle = float(x1 @ eps / nsq)
    diff_rest = instance.beta_true[1:] - rest_estimate
    bias = float((x1 @ X[:, 1:]) @ diff_rest / nsq)
    remainder = float(np.sqrt(instance.n) * (beta1_hat - instance.beta_true[0] - oracle))
    gap = float(beta1_hat - instance.beta_true[0] - oracle - bias)
    return oracle, bias, remainder, gap


def _interval(beta1_hat: float, x1_norm: float, z: float) -> tuple[float, float]:
    half = z / x1_norm
    return (beta1_hat - half, beta1_hat + half)


def two_step_zz(
    instance: RegressionInstance,
    first_stage_penalty: PenaltySpec | None = None,
    opts: SolverOptions | None = None,
    z: float = 1.96,
) -> EstimateReport:
    """Two-step estimate: penalized first stage, then profile least squares.

    The first stage penalizes every coordinate with unit weight at level
    ``2 n lambda_n`` unless a penalty is supplied.  First-stage
    non-convergence raises :class:`FirstStageError` carrying the partial
    solver result.
    """
    nsq = _x1_norm_sq(instance)
    if first_stage_penalty is None:
        first_stage_penalty = PenaltySpec.lasso(instance.p, default_eta(instance.n, instance.p))
    stage1 = solve(instance, first_stage_penalty, opts)
    if not stage1.converged:
        raise FirstStageError("first-stage solve did not converge", partial=stage1)
    x1 = instance.X[:, 0]
    rest = instance.X[:, 1:]
    beta1_hat = float(x1 @ (instance.Y - rest @ stage1.b_hat[1:]) / nsq)
    oracle, bias, remainder, gap = _decomposition(instance, beta1_hat, stage1.b_hat[1:])
    return EstimateReport(
        method=TWO_STEP,
        beta1_hat=beta1_hat,
        first_stage=stage1.b_hat,
        oracle_term=oracle,
        bias_term=bias,
        remainder_scaled=remainder,
        interval_95=_interval(beta1_hat, np.sqrt(nsq), z),
        decomposition_gap=gap,
        solver_converged=stage1.converged,
        solver_iterations=stage1.iterations,
    )


def one_step(
    instance: RegressionInstance,
    eta: float | None = None,
    opts: SolverOptions | None = None,
    z: float = 1.96,
    l1_C: float = 8.0,
    cone_ratio: float = 1.0,
) -> EstimateReport:
    """One-step estimate: solve with coordinate 0 exempt from the penalty.

    Also records, when the truth is available, whether the full solution
    satisfies the l1 error bound at constant ``l1_C`` and whether the error
    vector lies in the sparse cone at ratio ``cone_ratio`` (target coordinate
    folded into the support when it is a null coordinate).
    """
    nsq = _x1_norm_sq(instance)
    if eta is None:
        eta = default_eta(instance.n, instance.p)
    if not eta > 0:
        raise ConfigurationError("eta must be positive")
    result = solve(instance, PenaltySpec.all_but_first(instance.p, eta), opts)
    beta1_hat = float(result.b_hat[0])
    oracle, bias, remainder, gap = _decomposition(instance, beta1_hat, result.b_hat[1:])
    l1_error = l1_holds = cone_holds = None
    if instance.beta_true is not None:
        holds, l1_error = check_l1_control(result, instance, l1_C)
        l1_holds = bool(holds)
        cone_holds = bool(
            check_cone_condition(
                result, instance, cone_ratio, include_first=instance.beta_true[0] == 0.0
            )
        )
    return EstimateReport(
        method=ONE_STEP,
        beta1_hat=beta1_hat,
        first_stage=result.b_hat,
        oracle_term=oracle,
        bias_term=bias,
        remainder_scaled=remainder,
        interval_95=_interval(beta1_hat, np.sqrt(nsq), z),
        decomposition_gap=gap,
        l1_error=l1_error,
        l1_holds=l1_holds,
        cone_holds=cone_holds,
        solver_converged=result.converged,
        solver_iterations=result.iterations,
    )


def kkt_identity_check(report: EstimateReport, instance: RegressionInstance) -> float:
    """Stationarity residual ``|X_1^T (Y - X b_hat)| / |X_1|`` of a one-step fit.

    Near zero certifies that coordinate 0 of the solution equals its profile
    least-squares value, which is exactly the step that makes the error
    decomposition an identity.
    """
    if report.method != ONE_STEP:
        raise ConfigurationError("kkt_identity_check applies to one-step reports")
    x1 = instance.X[:, 0]
    resid = instance.Y - instance.X @ report.first_stage
    return float(abs(x1 @ resid) / np.sqrt(_x1_norm_sq(instance)))
