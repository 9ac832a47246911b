"""Fixed-effects logistic regression, likelihood-ratio tests and condition summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import gammaincc

from biasnet.errors import ContractError, NestingError

PARTITIONS = ("all", "matched_only", "nonmatched_only", "tie_trials_only")
METRICS = {"bias": "chose_motivated", "accuracy": "chose_correct"}
NESTING_SLACK = 1e-8


@dataclass
class RegressionFit:
    coefficients: np.ndarray
    log_likelihood: float
    converged: bool
    iterations: int
    gradient_norm: float
    deviance_path: list = field(default_factory=list)
    separation: bool = False
    diverging: list = field(default_factory=list)  # indices of runaway coefficients
    columns: Optional[list] = None

    @property
    def n_params(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class LrTestResult:
    chi_square: float
    df: int
    p_value: float

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def _loglik(X, y, beta):
    eta = X @ beta
    return float(np.dot(y, eta) - np.logaddexp(0.0, eta).sum())


def fit_logistic(design, outcomes, tol: float = 1e-10, max_iter: int = 100, columns=None) -> RegressionFit:
    """Maximum likelihood by iteratively reweighted least squares.

    Newton steps are halved until the deviance does not increase, so the
    deviance path is monotone. Complete separation shows up as coefficients
    running off while the fitted probabilities saturate; the fit is then
    returned with ``converged=False`` and ``separation=True``.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ContractError("design rows must match the number of outcomes")
    n, p = X.shape
    if p == 0 or np.linalg.matrix_rank(X) < p:
        raise ContractError("design matrix is rank deficient")
    beta = np.zeros(p)
    ll = _loglik(X, y, beta)
    path = [-2.0 * ll]
    grad_norm = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = 0.5 * (1.0 + np.tanh(0.5 * (X @ beta)))
        grad = X.T @ (y - mu)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            converged = True
            it -= 1
            break
        w = mu * (1.0 - mu)
        H = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        accepted = False
        for _ in range(60):
            cand = beta + t * step
            ll_new = _loglik(X, y, cand)
            if ll_new >= ll - 1e-12 * abs(ll):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        beta, ll = cand, ll_new
        path.append(-2.0 * ll)
    diverging = [int(i) for i in np.flatnonzero(np.abs(beta) > 15.0)]
    separation = bool(diverging)
    if separation:
        converged = False
    return RegressionFit(beta, ll, converged, it, grad_norm, path, separation, diverging, columns)


def likelihood_ratio_test(restricted: RegressionFit, unrestricted: RegressionFit, df: Optional[int] = None) -> LrTestResult:
    if df is None:
        df = unrestricted.n_params - restricted.n_params
    if df < 1:
        raise ContractError("degrees of freedom must be at least 1")
    diff = unrestricted.log_likelihood - restricted.log_likelihood
    if diff < -NESTING_SLACK:
        raise NestingError(f"restricted model fits better by {-diff:.3g} log-likelihood units")
    stat = max(0.0, 2.0 * diff)
    return LrTestResult(stat, int(df), chi2_sf(stat, df))


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution (regularised upper incomplete gamma)."""
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


# ---------------------------------------------------------------------------
# trace-level analyses

def _frame(trace) -> pd.DataFrame:
    return trace.rows if hasattr(trace, "rows") else trace


def partition_rows(trace, partition: str = "all", group_size: int = 8) -> pd.DataFrame:
    df = _frame(trace)
    if partition not in PARTITIONS:
        raise ContractError(f"unknown partition {partition!r}")
    if partition == "all":
        return df
    if partition == "tie_trials_only":
        k = pd.to_numeric(df["observed_k"], errors="coerce")
        return df[k == group_size / 2]
    matched = (df["stimulus_level"] * 2 > _total_dots(df)) == (df["motivated_color"] == "green")
    return df[matched] if partition == "matched_only" else df[~matched]


def _total_dots(df):
    return df.attrs.get("total_dots", 100)


def _proportion(x):
    n = len(x)
    v = float(np.mean(x)) if n else float("nan")
    se = math.sqrt(v * (1.0 - v) / n) if n else float("nan")
    return n, v, se


def condition_summaries(trace, partition: str = "all", by_wave: bool = True, group_size: int = 8) -> pd.DataFrame:
    """Bias and accuracy proportions per condition, pooled and per wave.

    Returns columns ``condition, wave, metric, n, value, se`` where ``wave``
    is ``"all"`` for pooled rows. An empty partition yields an empty frame
    with ``attrs["empty"] = True``.
    """
    df = partition_rows(trace, partition, group_size)
    cols = ["condition", "wave", "metric", "n", "value", "se"]
    if df.empty:
        out = pd.DataFrame(columns=cols)
        out.attrs["empty"] = True
        return out
    rows = []
    for cond in sorted(df["condition"].unique()):
        sub = df[df["condition"] == cond]
        groups = [("all", sub)]
        if by_wave:
            groups += [(str(w), g) for w, g in sub.groupby("wave", sort=True)]
        for wave, g in groups:
            for metric, col in METRICS.items():
                n, v, se = _proportion(g[col].to_numpy(dtype=float))
                rows.append((cond, wave, metric, n, v, se))
    out = pd.DataFrame(rows, columns=cols)
    out.attrs["empty"] = False
    return out


def condition_design(df: pd.DataFrame, merge: Sequence[str] = (), color_effect: bool = True,
                     replication_effects: bool = False):
    """Design matrix with an intercept, condition dummies, optional colour and replication dummies.

    Conditions listed in ``merge`` share one level. Replication dummies
    index the network number, which is shared by yoked conditions. The colour
    column is dropped when it is constant within every network.
    """
    cond = df["condition"].astype(str).to_numpy()
    if merge:
        label = "+".join(sorted(merge))
        cond = np.where(np.isin(cond, list(merge)), label, cond)
    levels = sorted(set(cond))
    cols, names = [np.ones(len(df))], ["intercept"]
    for lev in levels[1:]:
        cols.append((cond == lev).astype(float))
        names.append(f"condition[{lev}]")
    green = (df["motivated_color"] == "green").to_numpy(dtype=float)
    # a colour fixed within every network is absorbed by the replication dummies
    nested = replication_effects and bool((df.groupby("network")["motivated_color"].nunique() == 1).all())
    if color_effect and not nested:
        if 0 < green.sum() < len(green):
            cols.append(green)
            names.append("motivated_green")
    if replication_effects:
        reps = df["network"].astype(str).to_numpy()
        for lev in sorted(set(reps))[1:]:
            cols.append((reps == lev).astype(float))
            names.append(f"network[{lev}]")
    return np.column_stack(cols), names


def compare_conditions(trace, cond_a: str, cond_b: str, metric: str = "bias", partition: str = "all",
                       color_effect: bool = True, replication_effects: bool = False) -> LrTestResult:
    """LR test of separate versus pooled coding for two conditions."""
    df = partition_rows(trace, partition)
    df = df[df["condition"].isin([cond_a, cond_b])]
    if df["condition"].nunique() < 2:
        raise ContractError(f"need rows from both {cond_a} and {cond_b}")
    y = df[METRICS[metric]].to_numpy(dtype=float)
    Xu, nu = condition_design(df, (), color_effect, replication_effects)
    Xr, nr = condition_design(df, (cond_a, cond_b), color_effect, replication_effects)
    fu = fit_logistic(Xu, y, columns=nu)
    fr = fit_logistic(Xr, y, columns=nr)
    return likelihood_ratio_test(fr, fu, len(nu) - len(nr))


def condition_tests(trace, pairs: Iterable, metrics: Iterable[str] = ("bias", "accuracy"),
                    partition: str = "all", color_effect: bool = True,
                    replication_effects: bool = False) -> pd.DataFrame:
    """Pairwise LR tests laid out like a results table: one row per pair and metric."""
    rows = []
    df = _frame(trace)
    present = set(df["condition"].unique())
    for a, b in pairs:
        if a not in present or b not in present:
            continue
        for metric in metrics:
            r = compare_conditions(df, a, b, metric, partition, color_effect, replication_effects)
            rows.append((a, b, metric, r.chi_square, r.df, r.p_value, r.stars))
    return pd.DataFrame(rows, columns=["condition_a", "condition_b", "metric", "chi_square", "df", "p_value", "stars"])


def tie_trials(trace, conditions: Sequence[str] = ("social_motivated",), group_size: int = 8) -> pd.DataFrame:
    """Covariates for the priming regression on tie trials."""
    df = partition_rows(trace, "tie_trials_only", group_size)
    df = df[df["condition"].isin(conditions)]
    return pd.DataFrame({
        "chose_green": df["chose_green"].astype(float).to_numpy(),
        "bias_green": (df["motivated_color"] == "green").astype(float).to_numpy(),
        "majority_green": (df["presented_color"] == "green").astype(float).to_numpy(),
        "green_proportion": (df["stimulus_level"] / _total_dots(df)).astype(float).to_numpy(),
    })


PRIMING_COVARIATES = ("bias_green", "majority_green", "green_proportion")


def priming_regression(ties: pd.DataFrame) -> pd.DataFrame:
    """Logistic regression of choosing green on the tie-trial covariates.

    Each covariate gets a one-degree-of-freedom LR test against the model
    without it.
    """
    y = ties["chose_green"].to_numpy(dtype=float)
    covs = [c for c in PRIMING_COVARIATES if ties[c].nunique() > 1]
    X = np.column_stack([np.ones(len(ties))] + [ties[c].to_numpy(dtype=float) for c in covs])
    full = fit_logistic(X, y, columns=["intercept", *covs])
    rows = []
    for i, c in enumerate(covs, start=1):
        reduced = fit_logistic(np.delete(X, i, axis=1), y)
        r = likelihood_ratio_test(reduced, full, 1)
        rows.append((c, float(full.coefficients[i]), r.chi_square, r.p_value))
    return pd.DataFrame(rows, columns=["covariate", "coefficient", "chi_square", "p_value"])
