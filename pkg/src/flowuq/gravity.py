"""Structural-parameter estimation from dyadic flows.

Two fits live here:

* ``fit_ppml`` -- Poisson pseudo-maximum-likelihood with origin and
  destination fixed effects, robust to zero flows.  The negated coefficient
  on log cost is the trade elasticity.  Its sampling variance accounts for
  dyadic dependence: score cross-products are summed over every ordered pair
  of dyads sharing at least one location (each dyad with itself and with its
  mirror included).
* ``fit_log_gravity`` -- least squares of log flows on log distance plus
  two-way fixed effects, restricted to positive flows.  This is the
  workhorse behind the empirical-Bayes prior means.

``sample_theta`` draws structural parameters from the normal (or log-normal,
for parameters known to be positive) sampling distribution of an estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DistanceMatrix, EstimatorResult, FlowMatrix
from .errors import (
    Collinear,
    DataError,
    InsufficientData,
    NoConvergence,
    NotPSD,
    Separation,
)

_FE_DIVERGENCE_BOUND = 30.0


def dyad_indices(n: int, include_diagonal: bool = False):
    """Row-major (origin, destination) index arrays for all dyads."""
    oidx, didx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    oidx, didx = oidx.ravel(), didx.ravel()
    if not include_diagonal:
        keep = oidx != didx
        oidx, didx = oidx[keep], didx[keep]
    return oidx, didx


def twoway_design(
    oidx: np.ndarray, didx: np.ndarray, n: int, extra: np.ndarray | None = None
) -> np.ndarray:
    """Design matrix [extra | origin dummies 2..n | destination dummies 1..n].

    The first origin fixed effect is normalized to zero; destination effects
    absorb the level.  The choice only shifts the fixed effects, never the
    slope coefficients, which is asserted in the tests.
    """
    m = oidx.shape[0]
    cols = 0 if extra is None else 1
    x = np.zeros((m, cols + (n - 1) + n))
    if extra is not None:
        x[:, 0] = extra
    rows = np.arange(m)
    has_orig = oidx > 0
    x[rows[has_orig], cols + oidx[has_orig] - 1] = 1.0
    x[rows, cols + (n - 1) + didx] = 1.0
    return x


def _split_fe(beta: np.ndarray, n: int, n_extra: int):
    fe_origin = np.concatenate([[0.0], beta[n_extra : n_extra + n - 1]])
    fe_dest = beta[n_extra + n - 1 : n_extra + 2 * n - 1]
    return fe_origin, fe_dest


def _check_collinear(x_extra: np.ndarray, fe_design: np.ndarray, what: str):
    coef, *_ = np.linalg.lstsq(fe_design, x_extra, rcond=None)
    resid = x_extra - fe_design @ coef
    scale = max(1.0, float(np.max(np.abs(x_extra))))
    if np.max(np.abs(resid)) < 1e-8 * scale:
        raise Collinear(f"{what} lies in the span of the fixed effects")


@dataclass(frozen=True)
class PpmlFit:
    """Converged PPML fit plus everything the variance estimators need."""

    epsilon_hat: float
    fe_origin: np.ndarray
    fe_dest: np.ndarray
    scores: np.ndarray            # per-dyad score contributions, m x k
    variance: float               # sampling variance of epsilon_hat
    variance_psd_projected: bool  # whether the dyadic meat needed projection
    mu_hat: np.ndarray            # fitted mean flows per dyad
    bread: np.ndarray             # inverse Hessian of the pseudo-likelihood
    oidx: np.ndarray
    didx: np.ndarray
    n: int
    deviance: float
    iterations: int


@dataclass(frozen=True)
class GravityFit:
    beta_hat: float
    fe_origin: np.ndarray
    fe_dest: np.ndarray
    residual_variance: float  # 1/N (maximum-likelihood) convention
    adj_r2: float
    mu: np.ndarray            # fitted log-means for all dyads, NaN diagonal
    n_obs: int


def _poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        ylogy = np.where(y > 0, y * np.log(np.where(y > 0, y / mu, 1.0)), 0.0)
    return float(2.0 * np.sum(ylogy - (y - mu)))


def fit_ppml(
    flows: FlowMatrix,
    log_costs: np.ndarray,
    include_diagonal: bool = False,
    variance_mode: str = "dyadic",
    dev_tol: float = 1e-12,
    max_iter: int = 200,
) -> PpmlFit:
    """Poisson pseudo-likelihood fit of flows on log costs with two-way FEs.

    Zeros in the flows are fine; that is the point of PPML.  The elasticity
    estimate is the negated coefficient on ``log_costs``.

    Raises
    ------
    Collinear
        When ``log_costs`` has no variation beyond the fixed effects.
    Separation
        When a fixed effect diverges (|FE| > 30) during iteration.
    NoConvergence
        When the iteration cap is hit or the first-order conditions fail.
    """
    n = flows.n
    log_costs = np.asarray(log_costs, dtype=float)
    if log_costs.shape != (n, n):
        raise DataError("log_costs must be n x n")
    oidx, didx = dyad_indices(n, include_diagonal)
    y = flows.values[oidx, didx]
    cost = log_costs[oidx, didx]
    if not np.all(np.isfinite(cost)):
        raise DataError("log_costs must be finite on included dyads")

    x = twoway_design(oidx, didx, n, extra=cost)
    _check_collinear(cost, x[:, 1:], "log cost")
    k = x.shape[1]

    # Standard GLM warm start: pull the mean toward the sample average.
    mu = 0.5 * (y + y.mean())
    eta = np.log(mu)
    dev = _poisson_deviance(y, mu)
    beta = None
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        w = np.sqrt(mu)
        z = eta + (y - mu) / mu
        beta_new, *_ = np.linalg.lstsq(x * w[:, None], z * w, rcond=None)
        if beta is None:
            beta_try, dev_try = beta_new, None
        else:
            step = 1.0
            while True:
                beta_try = beta + step * (beta_new - beta)
                dev_try = _poisson_deviance(
                    y, np.exp(np.clip(x @ beta_try, -700, 700))
                )
                if dev_try <= dev + dev_tol * max(1.0, abs(dev)) or step < 1e-8:
                    break
                step *= 0.5
        if np.max(np.abs(beta_try[1:])) > _FE_DIVERGENCE_BOUND:
            raise Separation(
                "a fixed effect exceeded "
                f"{_FE_DIVERGENCE_BOUND:g} during PPML iteration"
            )
        beta = beta_try
        eta = np.clip(x @ beta, -700, 700)
        mu = np.exp(eta)
        dev_new = _poisson_deviance(y, mu) if dev_try is None else dev_try
        if abs(dev - dev_new) < dev_tol * max(1.0, abs(dev)):
            dev = dev_new
            converged = True
            break
        dev = dev_new
    if not converged:
        raise NoConvergence(max_iter, abs(dev), what="PPML")

    scores = (y - mu)[:, None] * x
    foc = np.abs(scores.sum(axis=0)).max()
    if foc > 1e-8 * max(1.0, float(np.max(y))):
        raise NoConvergence(iteration, foc, what="PPML first-order conditions")

    hessian = x.T @ (mu[:, None] * x)
    bread = np.linalg.pinv(hessian)

    if variance_mode not in ("dyadic", "independent"):
        raise DataError(f"unknown variance mode {variance_mode!r}")
    var, projected = _sandwich_raw(
        scores, bread, oidx, didx, n, dyadic=variance_mode == "dyadic"
    )

    fe_origin, fe_dest = _split_fe(beta, n, 1)
    return PpmlFit(
        epsilon_hat=float(-beta[0]),
        fe_origin=fe_origin,
        fe_dest=fe_dest,
        scores=scores,
        variance=var,
        variance_psd_projected=projected,
        mu_hat=mu,
        bread=bread,
        oidx=oidx,
        didx=didx,
        n=n,
        deviance=dev,
        iterations=iteration,
    )


def _dyadic_meat(scores: np.ndarray, oidx: np.ndarray, didx: np.ndarray, n: int):
    """Sum of score cross-products over ordered dyad pairs sharing a location.

    Computed through per-location score sums: summing T_a T_a' over locations
    counts each sharing pair once per shared location, so pairs sharing two
    locations (a dyad with itself or with its mirror) are counted twice and
    corrected afterwards.
    """
    k = scores.shape[1]
    t = np.zeros((n, k))
    np.add.at(t, oidx, scores)
    off = oidx != didx
    np.add.at(t, didx[off], scores[off])
    meat = t.T @ t

    s_off = scores[off]
    meat -= s_off.T @ s_off
    pos = np.full((n, n), -1, dtype=int)
    pos[oidx, didx] = np.arange(scores.shape[0])
    mirror = pos[didx[off], oidx[off]]
    if np.any(mirror < 0):
        raise DataError("dyadic variance requires both directions of each dyad")
    meat -= s_off.T @ scores[mirror]
    return 0.5 * (meat + meat.T)


def _sandwich_raw(scores, bread, oidx, didx, n, dyadic: bool):
    """Sandwich variance of the elasticity coordinate.

    The pair-sum meat can be indefinite in finite samples; the variance of
    interest is a single quadratic form, so the projection onto the feasible
    (PSD) set reduces to clamping that scalar at zero.  Clamping the full
    matrix spectrum instead would systematically inflate the variance.
    """
    if dyadic:
        meat = _dyadic_meat(scores, oidx, didx, n)
    else:
        meat = scores.T @ scores
    var = float((bread @ meat @ bread)[0, 0])
    fired = var < 0.0
    return max(var, 0.0), fired


def dyadic_variance(fit: PpmlFit) -> float:
    """Dyadic-dependence-robust sampling variance of the elasticity."""
    return _sandwich_raw(
        fit.scores, fit.bread, fit.oidx, fit.didx, fit.n, dyadic=True
    )[0]


def independent_variance(fit: PpmlFit) -> float:
    """Heteroskedasticity-robust variance ignoring dyadic dependence.  Tends
    to understate uncertainty relative to the dyadic version."""
    return _sandwich_raw(
        fit.scores, fit.bread, fit.oidx, fit.didx, fit.n, dyadic=False
    )[0]


def fit_log_gravity(flows: FlowMatrix, distances: DistanceMatrix) -> GravityFit:
    """OLS of log flows on log distance with two-way FEs, positive flows only.

    Diagonal dyads are excluded (distance to self is ill-defined).  Every
    origin and destination must have at least one positive flow, otherwise
    its fixed effect -- needed to predict prior means on all dyads -- is not
    identified.
    """
    n = flows.n
    if distances.n != n:
        raise DataError("flow and distance matrices have different sizes")
    oidx, didx = dyad_indices(n, include_diagonal=False)
    f = flows.values[oidx, didx]
    keep = f > 0
    if not np.any(keep):
        raise InsufficientData("no positive off-diagonal flows")
    oidx, didx, f = oidx[keep], didx[keep], f[keep]
    for name, idx in (("origin", oidx), ("destination", didx)):
        missing = np.setdiff1d(np.arange(n), idx)
        if missing.size:
            labels = [flows.labels[i] for i in missing]
            raise InsufficientData(f"no positive flow for {name}s {labels}")

    log_dist = np.log(distances.values[oidx, didx])
    x = twoway_design(oidx, didx, n, extra=log_dist)
    _check_collinear(log_dist, x[:, 1:], "log distance")
    y = np.log(f)
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    n_obs = y.shape[0]
    ssr = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if tss == 0 else 1.0 - ssr / tss
    k = x.shape[1]
    adj_r2 = (
        1.0 - (1.0 - r2) * (n_obs - 1) / (n_obs - k) if n_obs > k else float("nan")
    )
    fe_origin, fe_dest = _split_fe(beta, n, 1)
    with np.errstate(divide="ignore"):
        log_dist_full = np.log(distances.values)
    mu = beta[0] * log_dist_full + fe_origin[:, None] + fe_dest[None, :]
    np.fill_diagonal(mu, np.nan)
    return GravityFit(
        beta_hat=float(beta[0]),
        fe_origin=fe_origin,
        fe_dest=fe_dest,
        residual_variance=ssr / n_obs,
        adj_r2=adj_r2,
        mu=mu,
        n_obs=n_obs,
    )


def _psd_factor(sigma: np.ndarray) -> np.ndarray:
    sigma = 0.5 * (sigma + sigma.T)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(sigma)
    scale = max(1.0, float(np.max(np.abs(vals))) if vals.size else 1.0)
    if vals.min() < -1e-10 * scale:
        raise NotPSD(
            f"covariance has eigenvalue {vals.min():.3e}; not PSD within 1e-10"
        )
    return vecs * np.sqrt(np.clip(vals, 0.0, None))[None, :]


def sample_theta(
    est: EstimatorResult, rng: np.random.Generator, positive: bool = False
) -> np.ndarray:
    """One draw from the sampling distribution of the estimate.

    Default is N(theta_hat, sigma_hat).  With ``positive=True`` the draw is
    log-normal, parameterized so its median is theta_hat (log-covariance from
    the delta method), for parameters known to be non-negative.
    """
    z = rng.standard_normal(est.dim)
    if not positive:
        return est.theta_hat + _psd_factor(est.sigma_hat) @ z
    if np.any(est.theta_hat <= 0):
        raise DataError("log-normal sampling requires a positive theta_hat")
    inv = 1.0 / est.theta_hat
    log_cov = est.sigma_hat * np.outer(inv, inv)
    return np.exp(np.log(est.theta_hat) + _psd_factor(log_cov) @ z)
