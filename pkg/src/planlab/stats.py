"""Trend tests, regressions, and learning-curve tables.

Implements only what the workbench's analyses need: the Mann-Kendall trend
test (tie-corrected, exact null for short tie-free series), a logistic
regression via iteratively reweighted least squares with Wald errors, a
pooled OLS with group dummies and group-by-trial interactions, and the
per-trial curve aggregation with 95% confidence intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import t as t_dist

from .env import TrialLog, classify_adaptive


class SeparationError(ValueError):
    """The logistic likelihood has no finite maximizer (perfect separation)."""


@dataclass(frozen=True)
class MannKendallResult:
    s: int
    var_s: float
    z: float
    p: float


def _mk_exact_p(n: int, s_obs: int) -> float:
    # distribution of S over all tie-free orderings, via the inversion-count
    # generating function prod_i (1 + x + ... + x^(i-1))
    coeffs = np.array([1.0])
    for i in range(1, n + 1):
        kernel = np.ones(i)
        coeffs = np.convolve(coeffs, kernel)
    coeffs /= coeffs.sum()
    m = n * (n - 1) // 2
    # j inversions -> S = m - 2j
    s_values = m - 2 * np.arange(len(coeffs))
    return float(coeffs[np.abs(s_values) >= abs(s_obs)].sum())


def mann_kendall(series: Sequence[float]) -> MannKendallResult:
    """Nonparametric monotone trend test.

    S sums the signs of all forward differences; the variance uses the tie
    correction, z the +/-1 continuity correction.  For n < 10 without ties
    the p-value is exact (permutation null), otherwise a two-sided normal
    approximation.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 observations")
    s = 0
    for i in range(n - 1):
        s += int(np.sign(x[i + 1 :] - x[i]).sum())
    _, counts = np.unique(x, return_counts=True)
    var_s = (n * (n - 1) * (2 * n + 5) - np.sum(counts * (counts - 1) * (2 * counts + 5))) / 18.0
    has_ties = np.any(counts > 1)
    if n < 10 and not has_ties:
        p = _mk_exact_p(n, s)
        z = 0.0 if var_s == 0 else (s - np.sign(s)) / np.sqrt(var_s)
        return MannKendallResult(s=s, var_s=float(var_s), z=float(z), p=p)
    if var_s <= 0:
        return MannKendallResult(s=s, var_s=0.0, z=0.0, p=1.0)
    if s > 0:
        z = (s - 1) / np.sqrt(var_s)
    elif s < 0:
        z = (s + 1) / np.sqrt(var_s)
    else:
        z = 0.0
    p = 2.0 * (1.0 - ndtr(abs(z)))
    return MannKendallResult(s=s, var_s=float(var_s), z=float(z), p=float(p))


@dataclass(frozen=True)
class RegressionTerm:
    name: str
    coef: float
    std_err: float
    stat: float  # z for logistic, t for OLS
    p: float
    ci_lo: float
    ci_hi: float


def logistic_regression(
    x: Sequence[float], y: Sequence[int], max_iter: int = 200, tol: float = 1e-8
) -> list[RegressionTerm]:
    """Intercept-plus-slope logistic fit by IRLS with Wald errors.

    Raises SeparationError when the data are perfectly separated (the MLE
    diverges) and ValueError when y is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    if np.all(y == y[0]):
        raise SeparationError("outcome is constant; no finite intercept exists")
    X = np.column_stack([np.ones_like(x), x])
    beta = np.zeros(2)
    for _ in range(max_iter):
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        grad = X.T @ (y - mu)
        if np.linalg.norm(grad) < tol:
            break
        w = mu * (1 - mu)
        if np.max(w) < 1e-12 or np.max(np.abs(beta)) > 40:
            raise SeparationError("IRLS diverged; data are (quasi-)separated")
        H = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise SeparationError("singular information matrix") from exc
        beta = beta + step
    else:
        if np.linalg.norm(X.T @ (y - (1 / (1 + np.exp(-X @ beta))))) >= 1e-4:
            raise SeparationError("IRLS failed to converge")
    mu = 1.0 / (1.0 + np.exp(-(X @ beta)))
    w = mu * (1 - mu)
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    se = np.sqrt(np.diag(cov))
    out = []
    for name, b, s in zip(("intercept", "trial"), beta, se):
        z = b / s if s > 0 else np.inf
        p = 2.0 * (1.0 - ndtr(abs(z)))
        out.append(
            RegressionTerm(name, float(b), float(s), float(z), float(p), float(b - 1.96 * s), float(b + 1.96 * s))
        )
    return out


def logistic_log_likelihood(x: Sequence[float], y: Sequence[int], beta: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    eta = beta[0] + beta[1] * x
    return float(np.sum(y * eta - np.log1p(np.exp(np.clip(eta, -700, 700)))))


def pooled_trend_regression(
    groups: Mapping[str, Sequence[float]], baseline: Optional[str] = None
) -> list[RegressionTerm]:
    """OLS of per-trial series on label dummies, trial, and interactions.

    Every series must have the same length; the baseline label absorbs the
    intercept and the bare trial slope.  This pooled fit stands in for a
    mixed-effects model and is labeled an approximation in the outputs.
    """
    labels = sorted(groups)
    if len(labels) < 2:
        raise ValueError("need at least two series")
    lengths = {len(groups[g]) for g in labels}
    if len(lengths) != 1:
        raise ValueError("all series must have equal trial counts")
    T = lengths.pop()
    if baseline is None:
        baseline = labels[0]
    if baseline not in labels:
        raise ValueError(f"baseline {baseline!r} not among labels")
    others = [g for g in labels if g != baseline]
    rows, y = [], []
    for g in labels:
        series = np.asarray(groups[g], dtype=float)
        for t in range(T):
            dummies = [1.0 if g == o else 0.0 for o in others]
            trial = float(t + 1)
            inter = [d * trial for d in dummies]
            rows.append([1.0, *dummies, trial, *inter])
            y.append(series[t])
    X = np.array(rows)
    y = np.array(y)
    names = (
        ["intercept"]
        + [f"{g}" for g in others]
        + ["trial"]
        + [f"{g}:trial" for g in others]
    )
    n, k = X.shape
    if np.linalg.matrix_rank(X) < k:
        raise ValueError("rank-deficient design")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = n - k
    sigma2 = float(resid @ resid) / dof if dof > 0 else np.nan
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    tcrit = t_dist.ppf(0.975, dof)
    out = []
    for name, b, s in zip(names, beta, se):
        tv = b / s if s > 0 else np.inf
        p = 2.0 * float(t_dist.sf(abs(tv), dof))
        out.append(RegressionTerm(name, float(b), float(s), float(tv), p, float(b - tcrit * s), float(b + tcrit * s)))
    return out


# ---------------------------------------------------------------------------
# Learning-curve tables


def proportion_ci(p_hat: float, n: int) -> tuple[float, float]:
    """Normal-approximation 95% interval, clipped into [0, 1]."""
    if n == 0:
        return (0.0, 1.0)
    half = 1.96 * np.sqrt(p_hat * (1 - p_hat) / n)
    return (max(0.0, p_hat - half), min(1.0, p_hat + half))


def examined_all_nodes_first_trial(logs: Sequence[TrialLog]) -> bool:
    first = min(logs, key=lambda lg: lg.trial_index)
    return len(first.clicks) == 12


def curves(
    logs_by_participant: Mapping[str, Sequence[TrialLog]],
    grouping: Optional[Mapping[str, str]] = None,
) -> list[dict]:
    """Per-trial mean score and adaptive proportion with 95% CIs.

    `grouping` optionally maps participant id to a group label; rows are then
    emitted per (group, trial) with a pooled "all" group always included.
    """
    if not logs_by_participant:
        raise ValueError("no participants")
    membership: dict[str, list[str]] = {}
    for pid in logs_by_participant:
        membership.setdefault("all", []).append(pid)
        if grouping is not None:
            membership.setdefault(str(grouping.get(pid, "ungrouped")), []).append(pid)
    out = []
    for group in sorted(membership):
        pids = membership[group]
        n_trials = max(len(logs_by_participant[p]) for p in pids)
        for t in range(n_trials):
            scores, flags = [], []
            for p in pids:
                logs = logs_by_participant[p]
                if t < len(logs):
                    scores.append(logs[t].score)
                    flags.append(classify_adaptive(logs[t]))
            scores = np.asarray(scores, dtype=float)
            n = len(scores)
            mean = float(scores.mean())
            half = 1.96 * float(scores.std(ddof=1)) / np.sqrt(n) if n > 1 else 0.0
            prop = float(np.mean(flags))
            lo, hi = proportion_ci(prop, n)
            out.append(
                {
                    "group": group,
                    "trial": t + 1,
                    "n": n,
                    "mean_score": mean,
                    "score_ci_lo": mean - half,
                    "score_ci_hi": mean + half,
                    "adaptive_prop": prop,
                    "prop_ci_lo": lo,
                    "prop_ci_hi": hi,
                }
            )
    return out
