"""Built-in exact-hat-algebra model: CES/Armington counterfactual equilibrium.

Given baseline flows, an elasticity and proportional trade-cost changes, the
solver finds proportional income changes y_i from the goods-market-clearing
fixed point

    y_i Y_i = sum_j  [ (tau_ij y_i)^(-eps) / sum_k lam_kj (tau_kj y_k)^(-eps) ]
              * lam_ij * E^cf_j ,        E^cf_j = y_j Y_j + (E_j - Y_j),

then recovers proportional share changes and welfare changes
W_i = (lam^cf_ii)^(-1/eps).  Trade deficits are held fixed in level across
equilibria (the convention that keeps the system exactly solvable for any
valid flow matrix; holding the deficit/income ratio fixed instead makes the
equations inconsistent whenever trade is unbalanced, and the two coincide on
balanced data).  Summing the equations shows any solution family is
one-dimensional; we pin it by holding world income fixed
(sum_i y_i Y_i = sum_i Y_i) each iteration.  With balanced trade the system
is homogeneous and the convention provably cancels in shares and welfare;
with deficits, the fixed deficit levels are denominated in baseline world
income, which is the standard practice this normalization encodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CounterfactualSpec, FlowMatrix, derive_aggregates
from .errors import DataError, InvalidElasticity, NoConvergence, ZeroDiagonal


@dataclass(frozen=True)
class SolverOptions:
    """Damped successive substitution on log y."""

    damping: float = 0.5
    tol: float = 1e-10       # sup-norm of the log fixed-point defect
    max_iter: int = 10_000

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise DataError("damping must be in (0, 1]")
        if self.tol <= 0 or self.max_iter < 1:
            raise DataError("tol must be > 0 and max_iter >= 1")


@dataclass(frozen=True)
class EquilibriumResult:
    y_prop: np.ndarray        # proportional income changes, normalized
    lambda_prop: np.ndarray   # proportional share changes lam^cf_ij
    welfare_prop: np.ndarray  # proportional welfare changes W_i
    residual: float           # sup-norm log defect at the solution
    iterations: int


def _share_changes(
    log_tau: np.ndarray, log_y: np.ndarray, shares: np.ndarray, epsilon: float
) -> np.ndarray:
    """lam^cf_ij for a candidate y, computed stably in logs."""
    logp = -epsilon * (log_tau + log_y[:, None])
    m = logp.max(axis=0)
    p = np.exp(logp - m[None, :])
    denom = (shares * p).sum(axis=0)
    return p / denom[None, :]


def _log_update(
    log_tau: np.ndarray,
    log_y: np.ndarray,
    shares: np.ndarray,
    income: np.ndarray,
    deficit: np.ndarray,
    epsilon: float,
) -> np.ndarray:
    """One substitution step, solved for y_i wherever it enters with its own
    exponent: y_i^(1+eps) = K_i(y).

    Isolating the own-income term is what keeps successive substitution
    stable for elasticities above one; the residual reported to callers is
    still the defect of the market-clearing equation, which is (1+eps)
    times the defect of this rearranged map in logs.
    """
    logp = -epsilon * (log_tau + log_y[:, None])
    m = logp.max(axis=0)
    denom = (shares * np.exp(logp - m[None, :])).sum(axis=0)
    # tau_ij^-eps / denom_j, with the same stabilizing shift in both parts.
    a = np.exp(-epsilon * log_tau - m[None, :]) / denom[None, :]
    exp_cf = np.exp(log_y) * income + deficit
    if np.any(exp_cf <= 0):
        raise NoConvergence(
            0, float("inf"), what="counterfactual solver (negative expenditure)"
        )
    k = (a * shares) @ exp_cf / income
    return np.log(k) / (1.0 + epsilon)


def solve_counterfactual(
    flows: FlowMatrix,
    cf_spec: CounterfactualSpec,
    epsilon: float,
    opts: SolverOptions = SolverOptions(),
) -> EquilibriumResult:
    """Solve the counterfactual income fixed point and derived changes.

    Parameters
    ----------
    flows : FlowMatrix
        Baseline flows; own flows must be positive (welfare is undefined for
        a zero own share).
    cf_spec : CounterfactualSpec
        Proportional cost changes, diagonal exactly 1.
    epsilon : float
        Trade elasticity, > 0.
    opts : SolverOptions
        Damping, tolerance and iteration cap.

    Raises
    ------
    InvalidElasticity, ZeroDiagonal, DataError, NoConvergence
    """
    if epsilon <= 0:
        raise InvalidElasticity(f"elasticity must be > 0, got {epsilon}")
    if flows.n != cf_spec.n:
        raise DataError("flow matrix and counterfactual spec sizes differ")
    tau = cf_spec.tau_prop
    if np.max(np.abs(np.diag(tau) - 1.0)) > 1e-12:
        raise DataError("own trade costs are fixed at 1; diagonal must be 1")

    agg = derive_aggregates(flows)
    if np.any(np.diag(agg.shares) <= 0):
        bad = [flows.labels[i] for i in np.flatnonzero(np.diag(agg.shares) <= 0)]
        raise ZeroDiagonal(f"zero own flow for {bad}")

    income = agg.income
    deficit = agg.expenditure - agg.income
    total_income = income.sum()
    log_tau = np.log(tau)
    n = flows.n

    log_y = np.zeros(n)
    defect = np.inf
    for iteration in range(1, opts.max_iter + 1):
        log_g = _log_update(log_tau, log_y, agg.shares, income, deficit, epsilon)
        defect = (1.0 + epsilon) * float(np.max(np.abs(log_g - log_y)))
        if defect <= opts.tol:
            break
        log_y = (1 - opts.damping) * log_y + opts.damping * log_g
        # Walras' Law leaves a one-dimensional solution family; hold world
        # income fixed to pin it.
        log_y -= np.log(np.exp(log_y) @ income / total_income)
    else:
        raise NoConvergence(opts.max_iter, defect, what="counterfactual solver")

    y = np.exp(log_y)
    y /= y @ income / total_income
    lam_cf = _share_changes(log_tau, np.log(y), agg.shares, epsilon)
    welfare = np.diag(lam_cf) ** (-1.0 / epsilon)

    cf_share_cols = (lam_cf * agg.shares).sum(axis=0)
    if np.max(np.abs(cf_share_cols - 1.0)) > 1e-8:
        raise NoConvergence(iteration, defect, what="share reconstruction")

    return EquilibriumResult(
        y_prop=y,
        lambda_prop=lam_cf,
        welfare_prop=welfare,
        residual=defect,
        iterations=iteration,
    )


def welfare_change_pct(result: EquilibriumResult) -> np.ndarray:
    """Percentage welfare changes 100 * (W_i - 1)."""
    return 100.0 * (result.welfare_prop - 1.0)


@dataclass(frozen=True)
class ArmingtonModel:
    """ModelFunction adapter: theta[0] is the trade elasticity, the outcome
    vector is the percentage welfare change of every location."""

    opts: SolverOptions = SolverOptions()

    def __call__(
        self, flows: FlowMatrix, theta: np.ndarray, cf_spec: CounterfactualSpec
    ) -> np.ndarray:
        epsilon = float(np.atleast_1d(theta)[0])
        result = solve_counterfactual(flows, cf_spec, epsilon, self.opts)
        return welfare_change_pct(result)
