"""Base strategy-learning mechanisms.

Four mechanisms share the softmax-over-linear-values surface where one
applies: a policy-gradient learner (REINFORCE with an ADAM step), a
Bayesian value learner (conjugate linear regression with generalized
Thompson-sampling action selection), a mental-habit policy over click
frequency counts, and a non-learning fixed-weight softmax.

Policies over computations are returned as ``(actions, probs)`` pairs where
``actions`` lists computation ids (TERMINATE first, then unrevealed nodes
ascending) and ``probs`` is the matching probability vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import TERMINATE, BeliefState, valid_computations
from .features import ClickHistory, FeatureRegistry, compute_features, feature_matrix

CREDIT_RETURN = "return"        # each step weighted by its discounted return-to-go
CREDIT_IMMEDIATE = "immediate"  # each step weighted by its own immediate reward


def softmax_policy(values: Sequence[float], tau: float) -> np.ndarray:
    """P(i) proportional to exp(values[i] / tau)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty value set")
    z = v / tau
    z = z - z.max()
    p = np.exp(z)
    return p / p.sum()


# ---------------------------------------------------------------------------
# Policy-gradient learner
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim))

    def ascend(self, grad: np.ndarray, rate: float) -> np.ndarray:
        """Bias-corrected ascent increment; mutates the accumulator."""
        self.step += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.step)
        vhat = self.v / (1 - self.beta2 ** self.step)
        return rate * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class ReinforceParams:
    alpha: float
    gamma: float
    tau: float
    credit: str = CREDIT_RETURN

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.credit not in (CREDIT_RETURN, CREDIT_IMMEDIATE):
            raise ValueError(f"unknown credit mode '{self.credit}'")


@dataclass
class ReinforceState:
    w: np.ndarray
    adam: AdamState

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, spread: float = 0.1) -> "ReinforceState":
        return cls(rng.normal(0.0, spread, size=dim), AdamState.zeros(dim))


def linear_policy(belief: BeliefState, w: np.ndarray, tau: float,
                  registry: FeatureRegistry) -> tuple[list[int], np.ndarray]:
    """Softmax over w·f(b, c) for every valid computation."""
    actions = valid_computations(belief)
    F = feature_matrix(belief, actions, None, registry)
    return actions, softmax_policy(F @ w, tau)


def grad_log_softmax(F: np.ndarray, probs: np.ndarray, chosen: int, tau: float,
                     w_rows: np.ndarray | None = None) -> np.ndarray:
    """Gradient of ln softmax w.r.t. the weights of a linear value family.

    Rows whose score does not depend on the weights (e.g. a termination
    value pinned to the best-path value) are flagged off in ``w_rows`` and
    contribute nothing.
    """
    X = F if w_rows is None else F * np.asarray(w_rows, dtype=float)[:, None]
    return (X[chosen] - probs @ X) / tau


def reinforce_grad_logpi(belief: BeliefState, c: int, w: np.ndarray, tau: float,
                         registry: FeatureRegistry) -> np.ndarray:
    """(1/tau) * (f(b,c) - E_pi[f]) for the plain softmax policy."""
    actions = valid_computations(belief)
    F = feature_matrix(belief, actions, None, registry)
    probs = softmax_policy(F @ w, tau)
    return grad_log_softmax(F, probs, actions.index(c), tau)


def step_coefficients(rewards: Sequence[float], gamma: float, credit: str) -> np.ndarray:
    """Per-step gradient coefficients.

    ``immediate`` weights step t by gamma^(t-1) * r_t. ``return`` weights it
    by gamma^(t-1) * G_t with G_t the discounted return-to-go, which is what
    lets a computation collect credit for the payoff it later enables.
    """
    r = np.asarray(rewards, dtype=float)
    n = r.size
    disc = gamma ** np.arange(n)
    if credit == CREDIT_IMMEDIATE:
        return disc * r
    if credit == CREDIT_RETURN:
        g = np.empty(n)
        acc = 0.0
        for t in range(n - 1, -1, -1):
            acc = r[t] + gamma * acc
            g[t] = acc
        return disc * g
    raise ValueError(f"unknown credit mode '{credit}'")


def reinforce_raw_gradient(trace: Sequence[tuple[BeliefState, int, float]],
                           gamma: float, tau: float, w: np.ndarray,
                           registry: FeatureRegistry,
                           credit: str = CREDIT_RETURN) -> np.ndarray:
    """Summed per-step score-function gradient for one trial under fixed w."""
    coeffs = step_coefficients([r for _, _, r in trace], gamma, credit)
    g = np.zeros_like(w)
    for coeff, (b, c, _) in zip(coeffs, trace):
        g += coeff * reinforce_grad_logpi(b, c, w, tau, registry)
    return g


def reinforce_trial_update(trace: Sequence[tuple[BeliefState, int, float]],
                           params: ReinforceParams, state: ReinforceState,
                           registry: FeatureRegistry) -> ReinforceState:
    """One end-of-trial weight update: raw gradient through the ADAM accumulator."""
    g = reinforce_raw_gradient(trace, params.gamma, params.tau, state.w, registry,
                               credit=params.credit)
    inc = state.adam.ascend(g, params.alpha)
    return ReinforceState(state.w + inc, state.adam)


# ---------------------------------------------------------------------------
# Bayesian value learner
# ---------------------------------------------------------------------------

@dataclass
class LvocParams:
    prior_mean: float = 0.0      # scalar, replicated across feature dimensions
    prior_var: float = 1.0
    n_samples: int = 1
    obs_noise_var: float = 1.0   # fixed, not fitted

    def __post_init__(self):
        if self.prior_var <= 0 or self.obs_noise_var <= 0:
            raise ValueError("variances must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


@dataclass
class LvocState:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_prior(cls, params: LvocParams, dim: int) -> "LvocState":
        return cls(np.full(dim, float(params.prior_mean)),
                   np.eye(dim) * float(params.prior_var))

    def chol(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            jitter = 1e-10 * np.eye(len(self.mean))
            return np.linalg.cholesky(self.cov + jitter)

    def sample_mean_weights(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Average of n posterior draws (generalized Thompson sampling)."""
        L = self.chol()
        z = rng.standard_normal((n, len(self.mean)))
        return self.mean + (z @ L.T).mean(axis=0)


@dataclass(frozen=True)
class MetaExperience:
    """One planning decision with its bootstrapped value target."""

    belief: BeliefState
    computation: int
    q_hat: float


def lvoc_update_row(state: LvocState, x: np.ndarray, target: float,
                    noise_var: float) -> LvocState:
    """Conjugate rank-one regression update on one (features, target) pair."""
    sx = state.cov @ x
    denom = noise_var + float(x @ sx)
    mean = state.mean + sx * (target - float(x @ state.mean)) / denom
    cov = state.cov - np.outer(sx, sx) / denom
    cov = (cov + cov.T) / 2.0
    return LvocState(mean, cov)


def lvoc_learn(e: MetaExperience, state: LvocState, params: LvocParams,
               registry: FeatureRegistry) -> LvocState:
    x = compute_features(e.belief, e.computation, None, registry)
    return lvoc_update_row(state, x, e.q_hat, params.obs_noise_var)


def lvoc_choice_probs(state: LvocState, F: np.ndarray, n_samples: int,
                      rng: np.random.Generator, replays: int = 64,
                      fixed_scores: dict[int, float] | None = None,
                      ) -> np.ndarray:
    """Monte Carlo estimate of per-action selection frequencies.

    Each replay scores actions with an averaged-posterior-draw weight vector
    (the mean of n draws from N(mu, Sigma) is one draw from
    N(mu, Sigma / n)) and picks the argmax; ``fixed_scores`` pins the given
    rows to weight-independent values.
    """
    L = state.chol()
    z = rng.standard_normal((replays, len(state.mean)))
    W = state.mean + (z @ L.T) / np.sqrt(n_samples)
    # Row-wise reduction instead of a BLAS matmul: identical feature rows
    # must score bitwise-equal so ties resolve to the lowest action id.
    scores = (W[:, None, :] * F[None, :, :]).sum(axis=2)
    if fixed_scores:
        for i, v in fixed_scores.items():
            scores[:, i] = v
    picks = np.argmax(scores, axis=1)
    counts = np.bincount(picks, minlength=F.shape[0])
    return counts / float(replays)


def lvoc_select(belief: BeliefState, state: LvocState, params: LvocParams,
                registry: FeatureRegistry, rng: np.random.Generator,
                clicks_only: bool = False,
                terminate_value: float | None = None) -> tuple[int, dict[int, float]]:
    """Draw n weight vectors, average them, and take the best-scoring computation.

    Exact ties break toward the lowest computation id (TERMINATE, then
    ascending node ids). Returns the choice and the per-computation scores.
    """
    actions = valid_computations(belief)
    if clicks_only:
        actions = actions[1:]
        if not actions:
            raise ValueError("no clicks available for a clicks-only selection")
    F = feature_matrix(belief, actions, None, registry)
    w = state.sample_mean_weights(params.n_samples, rng)
    # Same reduction as lvoc_choice_probs: keeps identical rows exactly tied.
    values = (F * w).sum(axis=1)
    if terminate_value is not None and not clicks_only:
        values[0] = terminate_value
    pick = int(np.argmax(values))
    return actions[pick], {a: float(v) for a, v in zip(actions, values)}


# ---------------------------------------------------------------------------
# Habit and non-learning policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HabitWeights:
    same_node: float
    same_branch: float
    same_level: float
    terminate_bias: float


def habit_policy(belief: BeliefState, history: ClickHistory, weights: HabitWeights,
                 tau: float) -> tuple[list[int], np.ndarray]:
    """Softmax over weighted click-frequency counts, with a termination bias."""
    spec = belief.spec
    actions = valid_computations(belief)
    values = np.empty(len(actions))
    values[0] = weights.terminate_bias
    for i, c in enumerate(actions[1:], start=1):
        values[i] = (weights.same_node * history.count_node(c)
                     + weights.same_branch * history.count_branch(spec.branch_of[c])
                     + weights.same_level * history.count_level(spec.depth_of[c]))
    return actions, softmax_policy(values, tau)


def nonlearning_policy(belief: BeliefState, w: np.ndarray, tau: float,
                       registry: FeatureRegistry) -> tuple[list[int], np.ndarray]:
    """Fixed-weight softmax; identical beliefs always yield identical policies."""
    return linear_policy(belief, w, tau, registry)


# ---------------------------------------------------------------------------
# State snapshots
# ---------------------------------------------------------------------------

def learner_state_to_json(state) -> dict:
    if isinstance(state, ReinforceState):
        return {"schema": "learner-state@1", "kind": "reinforce",
                "w": [float(x) for x in state.w],
                "adam": {"m": [float(x) for x in state.adam.m],
                         "v": [float(x) for x in state.adam.v],
                         "step": state.adam.step}}
    if isinstance(state, LvocState):
        return {"schema": "learner-state@1", "kind": "lvoc",
                "mean": [float(x) for x in state.mean],
                "cov": [[float(x) for x in row] for row in state.cov]}
    raise TypeError(f"cannot snapshot {type(state).__name__}")


def learner_state_from_json(d: dict):
    if d.get("schema") != "learner-state@1":
        raise ValueError("not a learner-state snapshot")
    if d["kind"] == "reinforce":
        adam = AdamState(np.array(d["adam"]["m"]), np.array(d["adam"]["v"]),
                         step=int(d["adam"]["step"]))
        return ReinforceState(np.array(d["w"]), adam)
    if d["kind"] == "lvoc":
        return LvocState(np.array(d["mean"]), np.array(d["cov"]))
    raise ValueError(f"unknown learner kind '{d['kind']}'")
