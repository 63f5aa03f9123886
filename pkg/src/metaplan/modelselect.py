"""Model comparison and behavioral statistics.

Information criteria, random-effects model selection over a cohort,
family-level selection, evidence-strength classification, and the trend
and proportion tests used to characterize who is learning what.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import digamma, gammaln, logsumexp, xlogy
from scipy.stats import chi2 as chi2_dist
from scipy.stats import norm

DELTA_BIC_THRESHOLD = 3.2


def bic(loglik: float, k: int, n_obs: int) -> float:
    """k * ln(n_obs) - 2 * loglik."""
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    return float(k * np.log(n_obs) - 2.0 * loglik)


def log_evidence_from_bic(bic_value: float) -> float:
    return -0.5 * bic_value


def delta_bic_class(bic_a: float, bic_b: float,
                    threshold: float = DELTA_BIC_THRESHOLD) -> str:
    """Which of two models the BIC difference substantially favors.

    Returns "a", "b", or "inconclusive"; a difference must exceed the
    threshold before either side counts as substantial evidence.
    """
    delta = bic_a - bic_b
    if delta > threshold:
        return "b"
    if delta < -threshold:
        return "a"
    return "inconclusive"


# ---------------------------------------------------------------------------
# Random-effects model selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BmsResult:
    """Posterior over model frequencies in a cohort.

    ``r`` is the expected frequency of each model, ``phi`` the probability
    that each model is the most frequent one (Monte Carlo), ``pxp`` the
    same protected by the omnibus probability ``bor`` that all models are
    equally frequent.
    """

    alpha: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    pxp: np.ndarray
    bor: float
    mc_samples: int
    iterations: int
    converged: bool


def _dirichlet_log_norm(alpha: np.ndarray) -> float:
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum())


def rfx_bms(evidence: np.ndarray, mc_samples: int = 100_000, seed: int = 0,
            alpha0: float = 1.0, max_iter: int = 500,
            tol: float = 1e-6) -> BmsResult:
    """Variational random-effects selection from per-subject log evidences.

    ``evidence`` is an N x K matrix (rows subjects, columns models) of log
    evidences, typically -BIC/2. Each subject is assigned a posterior over
    which model generated them; the population model frequencies get a
    Dirichlet posterior starting from a uniform prior.
    """
    L = np.asarray(evidence, dtype=float)
    if L.ndim != 2 or L.shape[0] < 1 or L.shape[1] < 2:
        raise ValueError("evidence must be an N x K matrix with K >= 2")
    if not np.all(np.isfinite(L)):
        raise ValueError("evidence entries must be finite")
    n, k = L.shape

    alpha = np.full(k, float(alpha0))
    g = np.full((n, k), 1.0 / k)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        u = L + digamma(alpha) - digamma(alpha.sum())
        g = np.exp(u - logsumexp(u, axis=1, keepdims=True))
        new_alpha = alpha0 + g.sum(axis=0)
        delta = np.max(np.abs(new_alpha - alpha))
        alpha = new_alpha
        if delta < tol:
            converged = True
            break

    r = alpha / alpha.sum()
    rng = np.random.default_rng(seed)
    draws = rng.dirichlet(alpha, size=mc_samples)
    phi = np.bincount(np.argmax(draws, axis=1), minlength=k) / float(mc_samples)

    # Omnibus comparison against the null that every model is equally
    # frequent, used to protect the exceedance probabilities.
    e_ln_r = digamma(alpha) - digamma(alpha.sum())
    f1 = float((g * (L + e_ln_r)).sum() - xlogy(g, g).sum())
    f1 += _dirichlet_log_norm(np.full(k, float(alpha0))) + float(
        ((alpha0 - 1.0) * e_ln_r).sum())
    f1 -= _dirichlet_log_norm(alpha) + float(((alpha - 1.0) * e_ln_r).sum())
    f0 = float((logsumexp(L, axis=1) - np.log(k)).sum())
    bor = float(1.0 / (1.0 + np.exp(np.clip(f1 - f0, -700, 700))))
    pxp = phi * (1.0 - bor) + bor / k

    return BmsResult(alpha=alpha, r=r, phi=phi, pxp=pxp, bor=bor,
                     mc_samples=mc_samples, iterations=iterations,
                     converged=converged)


def family_evidence(evidence: np.ndarray,
                    partition: Mapping[str, Sequence[int]]) -> np.ndarray:
    """Per-subject family log evidence: log-mean-exp over member models.

    The mean (rather than sum) gives every family equal prior mass
    regardless of how many members it has.
    """
    L = np.asarray(evidence, dtype=float)
    k = L.shape[1]
    seen: list[int] = []
    cols = []
    for name, members in partition.items():
        idx = list(members)
        if not idx:
            raise ValueError(f"family '{name}' is empty")
        seen.extend(idx)
        cols.append(logsumexp(L[:, idx], axis=1) - np.log(len(idx)))
    if sorted(seen) != list(range(k)):
        raise ValueError("partition must cover every model exactly once")
    return np.column_stack(cols)


def family_bms(evidence: np.ndarray, partition: Mapping[str, Sequence[int]],
               mc_samples: int = 100_000, seed: int = 0) -> BmsResult:
    """Random-effects selection over families of models."""
    return rfx_bms(family_evidence(evidence, partition), mc_samples, seed)


# ---------------------------------------------------------------------------
# Trend and proportion tests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrendResult:
    s: int
    var_s: float
    z: float
    p: float
    direction: str  # "increasing" | "decreasing" | "none"


def mann_kendall(x: Sequence[float]) -> TrendResult:
    """Nonparametric monotone-trend test with tie-corrected variance."""
    v = np.asarray(x, dtype=float)
    n = v.size
    if n < 3:
        raise ValueError("need at least 3 observations")
    diffs = np.sign(v[None, :] - v[:, None])
    s = int(np.triu(diffs, k=1).sum())

    _, counts = np.unique(v, return_counts=True)
    ties = counts[counts > 1]
    var_s = (n * (n - 1) * (2 * n + 5)
             - np.sum(ties * (ties - 1) * (2 * ties + 5))) / 18.0

    if s > 0:
        z = (s - 1) / np.sqrt(var_s)
    elif s < 0:
        z = (s + 1) / np.sqrt(var_s)
    else:
        z = 0.0
    p = float(min(1.0, 2.0 * norm.sf(abs(z))))
    direction = "increasing" if s > 0 else "decreasing" if s < 0 else "none"
    return TrendResult(s=s, var_s=float(var_s), z=float(z), p=p,
                       direction=direction)


def chi_square_proportions(table: Sequence[Sequence[float]]) -> tuple[float, int, float]:
    """Pearson chi-square test of independence on a contingency table."""
    t = np.asarray(table, dtype=float)
    if t.ndim != 2 or np.any(t < 0):
        raise ValueError("table must be a 2-D array of nonnegative counts")
    rows = t.sum(axis=1)
    cols = t.sum(axis=0)
    if np.any(rows <= 0) or np.any(cols <= 0):
        raise ValueError("degenerate table: zero row or column sum")
    expected = np.outer(rows, cols) / t.sum()
    chi2 = float(((t - expected) ** 2 / expected).sum())
    df = (t.shape[0] - 1) * (t.shape[1] - 1)
    p = float(chi2_dist.sf(chi2, df)) if df > 0 else 1.0
    return chi2, df, p


def classify_learner(record, condition: str) -> bool:
    """Did this participant's planning change over the session?

    Reward-structure conditions (exp2) look for any significant monotone
    trend in per-trial click counts; strategy-discovery conditions (exp1)
    flag any change in the first-click strategy label across trials.
    """
    trials = record.trials
    if condition.startswith("exp2-"):
        clicks = [len(t.clicks) for t in trials]
        if len(clicks) < 3:
            return False
        return mann_kendall(clicks).p < 0.05
    if condition.startswith("exp1-"):
        from .simlab import classify_strategy
        labels = []
        for t in trials:
            first = t.clicks[0] if t.clicks else None
            labels.append(classify_strategy(first, condition, record.spec))
        return len(set(labels)) > 1
    raise ValueError(f"unknown condition '{condition}'")
