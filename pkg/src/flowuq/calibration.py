"""Spike-and-slab measurement-error model and its empirical-Bayes calibration.

The model for a dyad (i, j): the true flow is zero with probability p_ij,
otherwise log-normal around a gravity mean; an observed zero despite a
positive true flow occurs with probability b_ij, otherwise the observation
is the true flow times log-normal noise with variance sigma2_ij.  Conjugacy
gives a closed-form posterior for the true flow given the noisy one:

    observed zero:     spike at 0 w.p. p/(p + b(1-p)), else exp N(mu, s2)
    observed positive: exp N(w log f + (1-w) mu, (1/s2 + 1/sigma2)^-1),
                       w = s2/(s2 + sigma2).

Two calibration regimes fill in the parameters: a baseline regime that takes
the measurement-error variance from domain knowledge and fits the prior from
a single cross-section, and a mirror-panel regime that identifies everything
from two independent noisy reports per dyad and period.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .core import DistanceMatrix, FlowMatrix, _freeze
from .errors import (
    Collinear,
    DataError,
    InsufficientData,
    ParseError,
)
from .gravity import fit_log_gravity, twoway_design

VARIANCE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Parameter container


@dataclass(frozen=True)
class CalibratedParams:
    """Calibrated prior and measurement-error parameters, one set per dyad.

    ``mu`` is (n, n) in the baseline regime or (T, n, n) in the mirror-panel
    regime (slice with :meth:`for_period` before sampling).  Shrunk variance
    matrices, when present, take precedence in the posterior.
    """

    p: np.ndarray
    b: np.ndarray
    mu: np.ndarray
    s2: np.ndarray
    sigma2: np.ndarray
    s2_shrunk: np.ndarray | None = None
    sigma2_shrunk: np.ndarray | None = None
    mu_defined: np.ndarray | None = None
    me_observed: np.ndarray | None = None
    labels: tuple[str, ...] = ()
    periods: tuple[int, ...] | None = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        n = p.shape[0]
        for name in ("p", "b"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n, n):
                raise DataError(f"{name} must be {n}x{n}")
            if np.any((arr < 0) | (arr > 1)):
                raise DataError(f"{name} entries must be probabilities in [0, 1]")
            object.__setattr__(self, name, _freeze(arr))
        for name in ("s2", "sigma2", "s2_shrunk", "sigma2_shrunk"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (n, n):
                raise DataError(f"{name} must be {n}x{n}")
            if np.any(arr[np.isfinite(arr)] < 0):
                raise DataError(f"{name} must be non-negative")
            object.__setattr__(self, name, _freeze(arr))
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape[-2:] != (n, n) or mu.ndim not in (2, 3):
            raise DataError("mu must be (n, n) or (T, n, n)")
        if mu.ndim == 3:
            if self.periods is None or len(self.periods) != mu.shape[0]:
                raise DataError("per-period mu requires matching periods")
        object.__setattr__(self, "mu", _freeze(mu))
        if self.mu_defined is not None:
            object.__setattr__(
                self, "mu_defined", np.asarray(self.mu_defined, dtype=bool)
            )
        if self.me_observed is not None:
            object.__setattr__(
                self, "me_observed", np.asarray(self.me_observed, dtype=bool)
            )
        labels = tuple(self.labels) if self.labels else tuple(
            str(i) for i in range(n)
        )
        if len(labels) != n:
            raise DataError("label count does not match parameter matrices")
        object.__setattr__(self, "labels", labels)
        if self.periods is not None:
            object.__setattr__(self, "periods", tuple(int(t) for t in self.periods))

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def has_periods(self) -> bool:
        return self.mu.ndim == 3

    def for_period(self, period: int) -> "CalibratedParams":
        """Slice per-period prior means down to a single period."""
        if not self.has_periods:
            return self
        if self.periods is None or period not in self.periods:
            raise DataError(f"period {period} not in calibrated periods")
        t = self.periods.index(period)
        return replace(self, mu=self.mu[t], periods=None)

    def effective_s2(self) -> np.ndarray:
        return self.s2 if self.s2_shrunk is None else self.s2_shrunk

    def effective_sigma2(self) -> np.ndarray:
        return self.sigma2 if self.sigma2_shrunk is None else self.sigma2_shrunk


# ---------------------------------------------------------------------------
# Posterior sampling


def shrinkage_weight(s2: float, sigma2: float) -> float:
    """Weight on the observed log flow in the posterior mean.

    Both variances are floored at 1e-12 so the weight stays finite.
    """
    s2 = max(float(s2), VARIANCE_FLOOR)
    sigma2 = max(float(sigma2), VARIANCE_FLOOR)
    return s2 / (s2 + sigma2)


def posterior_log_variance(s2: float, sigma2: float) -> float:
    """Posterior variance of the log flow, (1/s2 + 1/sigma2)^-1."""
    s2 = max(float(s2), VARIANCE_FLOOR)
    sigma2 = max(float(sigma2), VARIANCE_FLOOR)
    return 1.0 / (1.0 / s2 + 1.0 / sigma2)


def spike_weight(p: float, b: float) -> float:
    """Posterior probability of a true zero given an observed zero.

    The degenerate case p = b = 0 (an observed zero the model says cannot
    happen) is resolved as a true zero: weight 1.
    """
    denom = p + b * (1.0 - p)
    return 1.0 if denom <= 0 else p / denom


def sample_flow_matrix(
    flows_obs: FlowMatrix, params: CalibratedParams, rng: np.random.Generator
) -> tuple[FlowMatrix, int]:
    """One posterior draw of the whole true flow matrix.

    Consumes exactly n*n standard normals followed by n*n uniforms from
    ``rng`` regardless of the data, so draw streams are reproducible.  Exact
    special cases (measurement-error variance exactly zero, spike draws)
    return the observed flow or zero verbatim, which is what lets
    no-measurement-error runs reproduce estimation-error-only runs bit for
    bit.  Returns the draw and the count of degenerate observed zeros
    (p = b = 0) that were resolved as true zeros.
    """
    if params.has_periods:
        raise DataError("slice per-period parameters with for_period() first")
    f = flows_obs.values
    n = flows_obs.n
    if params.n != n:
        raise DataError("parameter matrices do not match the flow matrix size")
    z = rng.standard_normal((n, n))
    u = rng.random((n, n))

    s2 = params.effective_s2()
    sigma2 = params.effective_sigma2()
    s2c = np.maximum(s2, VARIANCE_FLOOR)
    sigma2c = np.maximum(sigma2, VARIANCE_FLOOR)

    out = np.empty((n, n))
    pos = f > 0

    # Positive observations: conjugate log-normal update.
    w = s2c / (s2c + sigma2c)
    var = 1.0 / (1.0 / s2c + 1.0 / sigma2c)
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = np.where(pos, np.log(np.where(pos, f, 1.0)), 0.0)
    mean = w * logf + (1.0 - w) * params.mu
    exact_obs = pos & (sigma2 == 0)
    exact_prior = pos & (s2 == 0) & ~exact_obs
    generic = pos & ~exact_obs & ~exact_prior
    if np.any(generic & ~np.isfinite(params.mu)):
        raise DataError("posterior update needs a finite prior mean")
    out[generic] = np.exp(mean[generic] + np.sqrt(var[generic]) * z[generic])
    out[exact_obs] = f[exact_obs]
    out[exact_prior] = np.exp(params.mu[exact_prior])

    # Observed zeros: an exactly-measured zero is a true zero (the model has
    # no channel for a spurious one without reporting noise); otherwise draw
    # the spike-or-slab, counting the contradictory p = b = 0 entries.
    zero = ~pos
    hold = zero & (sigma2 == 0)
    denom = params.p + params.b * (1.0 - params.p)
    degenerate = zero & ~hold & (denom <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(denom > 0, params.p / np.where(denom > 0, denom, 1.0), 1.0)
    spike = zero & (hold | degenerate | (u < q))
    slab = zero & ~spike
    if np.any(slab & ~np.isfinite(params.mu)):
        raise DataError("slab draw needs a finite prior mean")
    out[spike] = 0.0
    out[slab] = np.exp(params.mu[slab] + np.sqrt(s2[slab]) * z[slab])

    return flows_obs.replace_values(out), int(np.count_nonzero(degenerate))


def posterior_draw(
    f_obs: float,
    p: float,
    b: float,
    mu: float,
    s2: float,
    sigma2: float,
    rng: np.random.Generator,
) -> float:
    """One posterior draw of a single true flow given its noisy observation."""
    if f_obs < 0:
        raise DataError("observed flows must be non-negative")
    z = float(rng.standard_normal())
    u = float(rng.random())
    if f_obs > 0:
        if sigma2 == 0:
            return float(f_obs)
        if s2 == 0:
            return float(np.exp(mu))
        if not np.isfinite(mu):
            raise DataError("posterior update needs a finite prior mean")
        w = shrinkage_weight(s2, sigma2)
        var = posterior_log_variance(s2, sigma2)
        return float(np.exp(w * np.log(f_obs) + (1.0 - w) * mu + np.sqrt(var) * z))
    if sigma2 == 0:
        return 0.0  # exactly measured zero
    if u < spike_weight(p, b):
        return 0.0
    if not np.isfinite(mu):
        raise DataError("slab draw needs a finite prior mean")
    return float(np.exp(mu + np.sqrt(s2) * z))


# ---------------------------------------------------------------------------
# Baseline calibration (measurement-error variance from domain knowledge)


def calibrate_baseline(
    flows_obs: FlowMatrix,
    distances: DistanceMatrix,
    sigma2_common: float,
    p,
    b,
) -> CalibratedParams:
    """Calibrate with a constant, externally supplied ME variance.

    The prior mean is the fitted two-way gravity regression on positive
    flows; the common prior variance is the residual variance less the ME
    variance, floored at zero.  Zero-flow probabilities p and b must be
    supplied (scalars broadcast).  Diagonal dyads are excluded from the fit
    and are held fixed under posterior sampling.
    """
    if sigma2_common < 0:
        raise DataError("measurement-error variance must be >= 0")
    n = flows_obs.n
    fit = fit_log_gravity(flows_obs, distances)
    s2_hat = max(fit.residual_variance - sigma2_common, 0.0)

    off = ~np.eye(n, dtype=bool)
    p_arr = np.where(off, np.broadcast_to(np.asarray(p, dtype=float), (n, n)), 0.0)
    b_arr = np.where(off, np.broadcast_to(np.asarray(b, dtype=float), (n, n)), 0.0)
    s2 = np.where(off, s2_hat, 0.0)
    sigma2 = np.where(off, sigma2_common, 0.0)
    return CalibratedParams(
        p=p_arr,
        b=b_arr,
        mu=fit.mu,
        s2=s2,
        sigma2=sigma2,
        mu_defined=off,
        labels=flows_obs.labels,
    )


# ---------------------------------------------------------------------------
# Mirror-panel calibration


@dataclass(frozen=True)
class MirrorPanel:
    """Two independent noisy reports of each off-diagonal dyad per period.

    Entries may be NaN (missing) until :func:`resolve_missing` is applied;
    the calibration estimators require a fully resolved panel.  Diagonal
    entries are ignored.
    """

    report1: np.ndarray  # (T, n, n)
    report2: np.ndarray  # (T, n, n)
    labels: tuple[str, ...]
    periods: tuple[int, ...]
    na_copied: int = 0
    na_zeroed: int = 0

    def __post_init__(self):
        r1 = np.asarray(self.report1, dtype=float)
        r2 = np.asarray(self.report2, dtype=float)
        if r1.ndim != 3 or r1.shape != r2.shape or r1.shape[1] != r1.shape[2]:
            raise DataError("reports must be matching (T, n, n) arrays")
        t, n, _ = r1.shape
        if t < 1:
            raise DataError("a mirror panel needs at least one period")
        if len(self.labels) != n or len(self.periods) != t:
            raise DataError("labels/periods do not match the report arrays")
        off = ~np.eye(n, dtype=bool)
        has_missing = False
        for name, arr in (("report1", r1), ("report2", r2)):
            vals = arr[:, off]
            if np.any(vals[~np.isnan(vals)] < 0):
                raise DataError(f"{name} contains negative flows")
            has_missing = has_missing or bool(np.any(np.isnan(vals)))
        both_pos = (r1 > 0) & (r2 > 0) & off[None, :, :]
        # A panel still carrying missing values is only checked once resolved.
        if not has_missing and not np.any(both_pos):
            raise DataError(
                "panel has no dyad-period with two positive reports; "
                "measurement-error variance is unidentified"
            )
        object.__setattr__(self, "report1", _freeze(r1))
        object.__setattr__(self, "report2", _freeze(r2))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "periods", tuple(int(x) for x in self.periods))

    @property
    def n(self) -> int:
        return self.report1.shape[1]

    @property
    def t(self) -> int:
        return self.report1.shape[0]

    @property
    def has_missing(self) -> bool:
        off = ~np.eye(self.n, dtype=bool)
        return bool(
            np.any(np.isnan(self.report1[:, off]))
            or np.any(np.isnan(self.report2[:, off]))
        )


def _require_resolved(panel: MirrorPanel):
    if panel.has_missing:
        raise DataError("panel has missing entries; apply resolve_missing first")


def resolve_missing(panel: MirrorPanel) -> MirrorPanel:
    """Apply the two-step missing-data rule.

    First, for dyads where one side is missing in every period while the
    other side is positive in every period, copy the positive side across.
    Then set all remaining missing entries to zero.
    """
    r1 = np.array(panel.report1)
    r2 = np.array(panel.report2)
    off = ~np.eye(panel.n, dtype=bool)
    copied = 0
    for a, other in ((r1, r2), (r2, r1)):
        all_na = np.all(np.isnan(a), axis=0) & off
        all_pos = np.all(~np.isnan(other) & (other > 0), axis=0)
        fix = all_na & all_pos
        if np.any(fix):
            copied += int(np.count_nonzero(fix)) * panel.t
            a[:, fix] = other[:, fix]
    zeroed = int(np.count_nonzero(np.isnan(r1[:, off]))) + int(
        np.count_nonzero(np.isnan(r2[:, off]))
    )
    r1 = np.nan_to_num(r1, nan=0.0)
    r2 = np.nan_to_num(r2, nan=0.0)
    return MirrorPanel(
        report1=r1,
        report2=r2,
        labels=panel.labels,
        periods=panel.periods,
        na_copied=copied,
        na_zeroed=zeroed,
    )


def estimate_zero_probs(panel: MirrorPanel) -> tuple[np.ndarray, np.ndarray]:
    """True-zero and spurious-zero probabilities per dyad.

    Uses the time frequencies of (two zeros, one zero, no zeros) per dyad.
    The interior closed form applies when all three frequencies are strictly
    inside (0, 1); the six boundary configurations get their own closed
    forms, including the no-double-zero case b = z1/(2 - z1).
    """
    _require_resolved(panel)
    r1, r2 = panel.report1, panel.report2
    t = panel.t
    c2 = ((r1 == 0) & (r2 == 0)).sum(axis=0)
    c0 = ((r1 > 0) & (r2 > 0)).sum(axis=0)
    c1 = t - c2 - c0
    z2, z1, z0 = c2 / t, c1 / t, c0 / t

    p = np.zeros((panel.n, panel.n))
    b = np.zeros((panel.n, panel.n))

    only_zeros = c2 == t
    only_one = c1 == t
    only_pos = c0 == t
    no_double_pos = (c0 == 0) & ~only_zeros & ~only_one
    no_single = (c1 == 0) & ~only_zeros & ~only_pos
    no_double_zero = (c2 == 0) & ~only_one & ~only_pos
    interior = (c2 > 0) & (c1 > 0) & (c0 > 0)

    p[only_zeros] = 1.0
    # only_one: p = 0, b = 0.5
    b[only_one] = 0.5
    # only_pos: p = b = 0 (already)
    p[no_double_pos] = z2[no_double_pos]
    b[no_double_pos] = z1[no_double_pos]
    p[no_single] = z2[no_single]
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(no_double_zero, z1 / (2.0 - z1), b)
        denom = z1 + 2.0 * z0
        p = np.where(
            interior, np.maximum(1.0 - denom**2 / (4.0 * np.where(z0 > 0, z0, 1.0)), 0.0), p
        )
        b = np.where(interior, z1 / np.where(denom > 0, denom, 1.0), b)

    diag = np.eye(panel.n, dtype=bool)
    p[diag] = 0.0
    b[diag] = 0.0
    return p, b


def estimate_me_variance(panel: MirrorPanel) -> tuple[np.ndarray, np.ndarray]:
    """Measurement-error variance per dyad from mirror discrepancies.

    The log difference of two positive reports is N(0, 2 sigma2), so half
    the mean squared log difference over double-positive periods estimates
    sigma2.  Dyads with no double-positive period get 0; the returned mask
    records which dyads were actually identified.
    """
    _require_resolved(panel)
    r1, r2 = panel.report1, panel.report2
    both = (r1 > 0) & (r2 > 0)
    counts = both.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(both, np.log(np.where(both, r1, 1.0)) - np.log(np.where(both, r2, 1.0)), 0.0)
    total = (d**2).sum(axis=0)
    sigma2 = np.where(counts > 0, 0.5 * total / np.maximum(counts, 1), 0.0)
    observed = counts > 0
    diag = np.eye(panel.n, dtype=bool)
    sigma2[diag] = 0.0
    observed = observed & ~diag
    return sigma2, observed


@dataclass(frozen=True)
class PriorMeans:
    """Per-period prior means plus the per-period gravity fit summaries."""

    mu: np.ndarray        # (T, n, n), NaN where undefined
    defined: np.ndarray   # (n, n): dyad has at least one positive period
    beta: np.ndarray      # (T,) log-distance coefficients
    adj_r2: np.ndarray    # (T,)


def _gravity_ols_subsample(log_f, oidx, didx, log_dist, n):
    """Within-period gravity OLS on whatever locations appear in the sample.

    Dummies are built only for origins/destinations present, so the fit is
    identified on its own sample even when some locations are absent that
    period.  Returns in-sample fitted values and summary stats.
    """
    origins = np.unique(oidx)
    dests = np.unique(didx)
    omap = {int(o): k for k, o in enumerate(origins)}
    dmap = {int(d): k for k, d in enumerate(dests)}
    m = log_f.shape[0]
    x = np.zeros((m, 1 + (len(origins) - 1) + len(dests)))
    x[:, 0] = log_dist
    rows = np.arange(m)
    ocol = np.array([omap[int(o)] for o in oidx])
    dcol = np.array([dmap[int(d)] for d in didx])
    keep = ocol > 0
    x[rows[keep], ocol[keep]] = 1.0
    x[rows, len(origins) + dcol] = 1.0
    resid_dist = log_dist - x[:, 1:] @ np.linalg.lstsq(x[:, 1:], log_dist, rcond=None)[0]
    if np.max(np.abs(resid_dist)) < 1e-8 * max(1.0, float(np.max(np.abs(log_dist)))):
        raise Collinear("log distance lies in the span of the fixed effects")
    beta, *_ = np.linalg.lstsq(x, log_f, rcond=None)
    fitted = x @ beta
    resid = log_f - fitted
    ssr = float(resid @ resid)
    tss = float(np.sum((log_f - log_f.mean()) ** 2))
    r2 = 1.0 if tss == 0 else 1.0 - ssr / tss
    k = x.shape[1]
    adj = 1.0 - (1.0 - r2) * (m - 1) / (m - k) if m > k else float("nan")
    return fitted, float(beta[0]), adj


def estimate_prior_means(
    panel: MirrorPanel, distances: DistanceMatrix
) -> PriorMeans:
    """Prior log-means from within-period gravity regressions.

    Positive dyad-periods get the within-period fitted value.  Zero
    dyad-periods are imputed with the across-period average of the dyad's
    fitted values over its positive periods.  Dyads never positive stay NaN
    and are flagged undefined (their posterior never needs a slab mean when
    the true-zero probability is one).
    """
    _require_resolved(panel)
    n, t = panel.n, panel.t
    if distances.n != n:
        raise DataError("distance matrix size does not match the panel")
    flows = panel.report1  # report 1 is the observed-flow convention
    off = ~np.eye(n, dtype=bool)
    mu = np.full((t, n, n), np.nan)
    beta = np.empty(t)
    adj = np.empty(t)
    for k in range(t):
        pos = (flows[k] > 0) & off
        if not np.any(pos):
            raise InsufficientData(
                f"period {panel.periods[k]} has no positive flows"
            )
        oidx, didx = np.nonzero(pos)
        log_f = np.log(flows[k][oidx, didx])
        log_d = np.log(distances.values[oidx, didx])
        fitted, beta[k], adj[k] = _gravity_ols_subsample(log_f, oidx, didx, log_d, n)
        mu[k][oidx, didx] = fitted

    pos_any = (flows > 0).any(axis=0) & off
    n_pos = (flows > 0).sum(axis=0)
    with np.errstate(invalid="ignore"):
        avg = np.nansum(np.where(flows > 0, mu, 0.0), axis=0) / np.maximum(n_pos, 1)
    for k in range(t):
        fill = pos_any & ~(flows[k] > 0)
        mu[k][fill] = avg[fill]
    return PriorMeans(mu=mu, defined=pos_any, beta=beta, adj_r2=adj)


def estimate_prior_variances(
    panel: MirrorPanel, mu: np.ndarray, sigma2: np.ndarray
) -> np.ndarray:
    """Prior variance per dyad: residual variance of positive log flows
    around the prior means, less the ME variance, floored at zero.

    Variances use the 1/N maximum-likelihood convention.
    """
    _require_resolved(panel)
    flows = panel.report1
    t, n = panel.t, panel.n
    if mu.shape != (t, n, n):
        raise DataError("mu must be the (T, n, n) prior-mean array")
    pos = flows > 0
    counts = pos.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        resid = np.where(pos, np.log(np.where(pos, flows, 1.0)) - mu, 0.0)
    mean_r = resid.sum(axis=0) / np.maximum(counts, 1)
    var = (resid**2).sum(axis=0) / np.maximum(counts, 1) - mean_r**2
    s2 = np.where(counts > 0, np.maximum(var - sigma2, 0.0), 0.0)
    s2[np.eye(n, dtype=bool)] = 0.0
    return s2


def _twoway_log_fit(values: np.ndarray, what: str) -> np.ndarray:
    """Fit log(values) = origin FE + destination FE and return exp(fitted)
    for every off-diagonal dyad."""
    n = values.shape[0]
    off = ~np.eye(n, dtype=bool)
    mask = off & np.isfinite(values) & (values > 0)
    oidx, didx = np.nonzero(mask)
    for role, idx in (("origin", oidx), ("destination", didx)):
        missing = np.setdiff1d(np.arange(n), idx)
        if missing.size:
            raise InsufficientData(
                f"no positive {what} estimate for {role} index {missing.tolist()}"
            )
    x = twoway_design(oidx, didx, n)
    y = np.log(values[oidx, didx])
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    fe_o = np.concatenate([[0.0], beta[: n - 1]])
    fe_d = beta[n - 1 :]
    fitted = np.exp(fe_o[:, None] + fe_d[None, :])
    fitted[~off] = 0.0
    return fitted


def shrink_variances(
    sigma2: np.ndarray, s2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Replace raw variance estimates by fitted values from two-way
    multiplicative fixed-effects models, log ves = k_i + k_j + error.

    Pools information across dyads sharing a reporter; zero estimates are
    excluded from the log regression but still receive a positive fitted
    value.  Raises InsufficientData when a location has no positive estimate
    in the required role.
    """
    return (
        _twoway_log_fit(np.asarray(sigma2, dtype=float), "ME variance"),
        _twoway_log_fit(np.asarray(s2, dtype=float), "prior variance"),
    )


def calibrate_mirror(
    panel: MirrorPanel, distances: DistanceMatrix, shrink: bool = True
) -> CalibratedParams:
    """Full mirror-panel calibration: zero probabilities, ME variances,
    per-period prior means and variances, and (optionally) variance
    shrinkage across reporters."""
    _require_resolved(panel)
    p, b = estimate_zero_probs(panel)
    sigma2, observed = estimate_me_variance(panel)
    means = estimate_prior_means(panel, distances)
    s2 = estimate_prior_variances(panel, means.mu, sigma2)
    sigma2_shrunk = s2_shrunk = None
    if shrink:
        sigma2_shrunk, s2_shrunk = shrink_variances(sigma2, s2)
    return CalibratedParams(
        p=p,
        b=b,
        mu=means.mu,
        s2=s2,
        sigma2=sigma2,
        s2_shrunk=s2_shrunk,
        sigma2_shrunk=sigma2_shrunk,
        mu_defined=means.defined,
        me_observed=observed,
        labels=panel.labels,
        periods=panel.periods,
    )


# ---------------------------------------------------------------------------
# Mirror CSV ingestion

_MIRROR_HEADER = ["origin", "destination", "year", "flow_report1", "flow_report2"]


def ingest_mirror_csv(path) -> MirrorPanel:
    """Read a mirror panel from CSV and apply the missing-data rule.

    Format: ``origin,destination,year,flow_report1,flow_report2``; an empty
    flow field is a missing value.  Dyad-periods absent from the file are
    missing as well (and therefore become zeros unless the copy rule fires).
    """
    rows = []
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _MIRROR_HEADER:
            raise ParseError(
                f"expected header {','.join(_MIRROR_HEADER)}", row=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ParseError(f"expected 5 fields, got {len(row)}", row=lineno)
            origin, dest = row[0].strip(), row[1].strip()
            try:
                year = int(row[2])
            except ValueError:
                raise ParseError(f"bad year {row[2]!r}", row=lineno) from None
            vals = []
            for cell in row[3:5]:
                cell = cell.strip()
                if cell == "":
                    vals.append(np.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"bad flow {cell!r}", row=lineno) from None
                if v < 0:
                    raise ParseError(f"negative flow {v}", row=lineno)
                vals.append(v)
            if origin == dest:
                raise ParseError("own flows do not belong in a mirror panel", row=lineno)
            rows.append((origin, dest, year, vals[0], vals[1], lineno))

    if not rows:
        raise ParseError("no data rows", row=2)
    labels = sorted({r[0] for r in rows} | {r[1] for r in rows})
    periods = sorted({r[2] for r in rows})
    lab_idx = {lab: i for i, lab in enumerate(labels)}
    per_idx = {t: k for k, t in enumerate(periods)}
    n, t = len(labels), len(periods)
    r1 = np.full((t, n, n), np.nan)
    r2 = np.full((t, n, n), np.nan)
    seen = set()
    for origin, dest, year, v1, v2, lineno in rows:
        key = (origin, dest, year)
        if key in seen:
            raise ParseError(f"duplicate dyad-period {key}", row=lineno)
        seen.add(key)
        r1[per_idx[year], lab_idx[origin], lab_idx[dest]] = v1
        r2[per_idx[year], lab_idx[origin], lab_idx[dest]] = v2

    panel = MirrorPanel(
        report1=r1, report2=r2, labels=tuple(labels), periods=tuple(periods)
    )
    return resolve_missing(panel)
