"""Model space for metacognitive strategy learning.

A model is a base learner (reinforce, lvoc, habit, nonlearning) plus
optional mechanism flags: a first-stage stopping rule that decides
*whether* to keep planning before the value policy decides *where*,
pseudo-rewards that densify the learning signal, and a termination score
pinned to the current best-path value instead of a learned one.

Everything here is shared by live simulation and likelihood evaluation:
both paths build a :class:`DecisionContext` per choice point and call
:func:`choice_probabilities`, so fitted probabilities and simulated
behavior can never drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import TERMINATE, BeliefState, best_path_value, pseudo_reward, valid_computations
from .features import ClickHistory, FeatureRegistry, feature_matrix
from .learners import (
    CREDIT_RETURN,
    LvocParams,
    LvocState,
    ReinforceState,
    grad_log_softmax,
    lvoc_choice_probs,
    lvoc_update_row,
    softmax_policy,
    step_coefficients,
)

BASES = ("reinforce", "lvoc", "habit", "nonlearning")
STAGE1_RULES = ("fixed", "decreasing", "past")
EXTENDABLE_BASES = ("reinforce", "lvoc")

_S1_TAGS = {"fixed": "s1fix", "decreasing": "s1dec", "past": "s1past"}
_S1_FROM_TAG = {v: k for k, v in _S1_TAGS.items()}

LVOC_PROB_REPLAYS = 64

# Nodes and weights for E[f(M)] with M ~ N(m, s^2), reused every call.
_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(33)
_GH_WEIGHTS = _GH_WEIGHTS / np.sqrt(np.pi)


def tempered_sigmoid(x: float, tau: float) -> float:
    """Logistic squash of x / tau, stable for large magnitudes."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    z = x / tau
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return float(e / (1.0 + e))


# ---------------------------------------------------------------------------
# Stopping rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreMemory:
    """Running record of past trial scores, for aspiration-based stopping."""

    total: float = 0.0
    count: int = 0

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    def record(self, score: float) -> "ScoreMemory":
        return ScoreMemory(self.total + score, self.count + 1)


def stop_probability(rule: str, theta: dict, mm: float, n_clicks: int,
                     v_min: float, v_max: float, memory: ScoreMemory) -> float:
    """Probability of ending deliberation before the value stage runs.

    ``mm`` is the expected payoff of acting on the current belief. The
    ``fixed`` rule compares its position in [v_min, v_max] against a
    constant aspiration level, ``decreasing`` lets the aspiration decay
    with the number of clicks already spent, and ``past`` compares against
    a noisy recollection of earlier trial scores. The ``past`` probability
    is the exact marginal over that recollection (Gauss-Hermite), so the
    same number serves sampling and likelihoods.
    """
    tau = theta["s1_tau"]
    if rule == "fixed":
        span = v_max - v_min
        if span <= 0:
            raise ValueError("fixed rule needs v_max > v_min to normalize")
        frac = (mm - v_min) / span
        return tempered_sigmoid(frac - theta["s1_eta"], tau)
    if rule == "decreasing":
        aspiration = np.exp(theta["s1_a"]) - np.exp(theta["s1_b"]) * n_clicks
        return tempered_sigmoid(mm - aspiration, tau)
    if rule == "past":
        sd = theta["s1_eta"] / np.sqrt(memory.count + 1)
        ms = memory.mean + np.sqrt(2.0) * sd * _GH_NODES
        vals = 1.0 / (1.0 + np.exp(-np.clip((mm - ms) / tau, -700, 700)))
        return float(_GH_WEIGHTS @ vals)
    raise ValueError(f"unknown stopping rule '{rule}'")


# ---------------------------------------------------------------------------
# Model configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    """One cell of the model grid.

    ``stage1`` names an explicit stopping rule (reinforce/lvoc only);
    ``pseudo_rewards`` augments click rewards during learning without
    touching behavior; ``td_terminal`` pins the termination score to the
    best-path value and is incompatible with a stage-one rule, which
    already owns that decision.
    """

    base: str
    stage1: str | None = None
    pseudo_rewards: bool = False
    td_terminal: bool = False
    registry: str = "default@1"

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base '{self.base}'")
        if self.stage1 is not None and self.stage1 not in STAGE1_RULES:
            raise ValueError(f"unknown stopping rule '{self.stage1}'")
        if self.base not in EXTENDABLE_BASES:
            if self.stage1 or self.pseudo_rewards or self.td_terminal:
                raise ValueError(f"base '{self.base}' takes no mechanism flags")
        if self.stage1 is not None and self.td_terminal:
            raise ValueError("a stopping rule and a pinned terminal score are exclusive")

    @property
    def model_id(self) -> str:
        parts = [self.base]
        if self.stage1:
            parts.append(_S1_TAGS[self.stage1])
        if self.pseudo_rewards:
            parts.append("pr")
        if self.td_terminal:
            parts.append("td")
        return "-".join(parts)


def parse_model_id(model_id: str) -> ModelConfig:
    parts = model_id.split("-")
    base, flags = parts[0], parts[1:]
    stage1 = None
    pr = td = False
    for flag in flags:
        if flag in _S1_FROM_TAG and stage1 is None:
            stage1 = _S1_FROM_TAG[flag]
        elif flag == "pr" and not pr:
            pr = True
        elif flag == "td" and not td:
            td = True
        else:
            raise ValueError(f"bad model id '{model_id}'")
    return ModelConfig(base, stage1, pr, td)


def build_grid() -> tuple[ModelConfig, ...]:
    """Every model the workbench fits, in a stable order."""
    grid: list[ModelConfig] = []
    for base in EXTENDABLE_BASES:
        for pr in (False, True):
            for td in (False, True):
                grid.append(ModelConfig(base, None, pr, td))
        for rule in STAGE1_RULES:
            for pr in (False, True):
                grid.append(ModelConfig(base, rule, pr, False))
    grid.append(ModelConfig("habit"))
    grid.append(ModelConfig("nonlearning"))
    return tuple(grid)


def required_params(cfg: ModelConfig, registry: FeatureRegistry) -> tuple[str, ...]:
    """Names of the free parameters a config is fit over."""
    if cfg.base == "reinforce":
        names = ["alpha", "gamma", "tau"]
    elif cfg.base == "lvoc":
        names = ["mu_prior", "sigma_prior", "n_samples"]
    elif cfg.base == "habit":
        names = ["w_same_node", "w_same_branch", "w_same_level",
                 "terminate_bias", "tau"]
    else:
        names = [f"w{i}" for i in range(registry.dim)] + ["tau"]
    if cfg.stage1 == "fixed" or cfg.stage1 == "past":
        names += ["s1_eta", "s1_tau"]
    elif cfg.stage1 == "decreasing":
        names += ["s1_a", "s1_b", "s1_tau"]
    return tuple(names)


def grid_manifest(registry: FeatureRegistry) -> dict:
    models = []
    for cfg in build_grid():
        models.append({
            "id": cfg.model_id,
            "base": cfg.base,
            "stage1": cfg.stage1,
            "pseudo_rewards": cfg.pseudo_rewards,
            "td_terminal": cfg.td_terminal,
            "registry": registry.id,
            "params": list(required_params(cfg, registry)),
        })
    return {"schema": "grid@1", "registry": registry.id, "models": models}


# ---------------------------------------------------------------------------
# Decision contexts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecisionContext:
    """Everything parameter-independent about one choice point.

    ``F`` holds feature rows computed against the real click history;
    ``F0`` is the same matrix with the habit columns zeroed, which is what
    the value learners consume. Cached replay tables store these directly
    so refitting never recomputes features.
    """

    actions: tuple[int, ...]
    F: np.ndarray
    F0: np.ndarray
    mm: float
    n_clicks: int
    v_min: float
    v_max: float


@dataclass(frozen=True)
class Decision:
    """A decision context plus what happened there."""

    ctx: DecisionContext
    chosen: int          # index into ctx.actions
    reward: float
    pr: float = 0.0

    @property
    def computation(self) -> int:
        return self.ctx.actions[self.chosen]


def decision_context(belief: BeliefState, history: ClickHistory,
                     registry: FeatureRegistry) -> DecisionContext:
    actions = tuple(valid_computations(belief))
    F = feature_matrix(belief, list(actions), history, registry)
    F0 = F.copy()
    habit_cols = list(registry.habit_indices)
    if habit_cols:
        F0[:, habit_cols] = 0.0
    return DecisionContext(
        actions=actions, F=F, F0=F0,
        mm=best_path_value(belief),
        n_clicks=belief.n_clicks,
        v_min=belief.spec.v_min, v_max=belief.spec.v_max,
    )


def effective_reward(cfg: ModelConfig, dec: Decision) -> float:
    return dec.reward + dec.pr if cfg.pseudo_rewards else dec.reward


# ---------------------------------------------------------------------------
# Choice probabilities (one code path for fitting and simulation)
# ---------------------------------------------------------------------------

def _compose_stage1(p_stop: float, click_probs: np.ndarray) -> np.ndarray:
    return np.concatenate(([p_stop], (1.0 - p_stop) * click_probs))


def choice_probabilities(cfg: ModelConfig, theta: dict, ctx: DecisionContext,
                         state: ReinforceState | LvocState | None,
                         memory: ScoreMemory, registry: FeatureRegistry,
                         rng: np.random.Generator | None = None,
                         replays: int = LVOC_PROB_REPLAYS) -> np.ndarray:
    """Probability of each action in ``ctx.actions`` under the model.

    ``rng`` is only consumed by the lvoc bases, whose policy is defined by
    posterior sampling and therefore estimated by Monte Carlo replay.
    """
    n = len(ctx.actions)
    if n == 1:
        return np.ones(1)

    if cfg.base == "habit":
        cols = [registry.index_of("habit_same_node"),
                registry.index_of("habit_same_branch"),
                registry.index_of("habit_same_level")]
        w3 = np.array([theta["w_same_node"], theta["w_same_branch"],
                       theta["w_same_level"]])
        z = (ctx.F[:, cols] * w3).sum(axis=1)
        z[0] = theta["terminate_bias"]
        return softmax_policy(z, theta["tau"])

    if cfg.base == "nonlearning":
        w = np.array([theta[f"w{i}"] for i in range(registry.dim)])
        values = (ctx.F0 * w).sum(axis=1)
        return softmax_policy(values, theta["tau"])

    if cfg.base == "reinforce":
        values = (ctx.F0 * state.w).sum(axis=1)
        if cfg.stage1 is not None:
            p_stop = stop_probability(cfg.stage1, theta, ctx.mm, ctx.n_clicks,
                                      ctx.v_min, ctx.v_max, memory)
            return _compose_stage1(p_stop, softmax_policy(values[1:], theta["tau"]))
        if cfg.td_terminal:
            values = values.copy()
            values[0] = ctx.mm
        return softmax_policy(values, theta["tau"])

    # lvoc
    if rng is None:
        raise ValueError("lvoc probabilities need a generator")
    n_samples = int(theta["n_samples"])
    if cfg.stage1 is not None:
        p_stop = stop_probability(cfg.stage1, theta, ctx.mm, ctx.n_clicks,
                                  ctx.v_min, ctx.v_max, memory)
        click_probs = lvoc_choice_probs(state, ctx.F0[1:], n_samples, rng,
                                        replays=replays)
        return _compose_stage1(p_stop, click_probs)
    fixed = {0: ctx.mm} if cfg.td_terminal else None
    return lvoc_choice_probs(state, ctx.F0, n_samples, rng, replays=replays,
                             fixed_scores=fixed)


# ---------------------------------------------------------------------------
# Learning updates
# ---------------------------------------------------------------------------

def reinforce_decision_gradient(cfg: ModelConfig, theta: dict, w: np.ndarray,
                                dec: Decision) -> np.ndarray:
    """Gradient of ln P(chosen action) w.r.t. the policy weights.

    Under a stopping rule the stop/continue split does not involve the
    weights, so a termination step contributes nothing and a click step
    differentiates the click-only softmax. A pinned terminal score makes
    row zero weight-independent.
    """
    ctx = dec.ctx
    tau = theta["tau"]
    if cfg.stage1 is not None:
        if dec.chosen == 0 or len(ctx.actions) == 1:
            return np.zeros_like(w)
        Fc = ctx.F0[1:]
        probs = softmax_policy((Fc * w).sum(axis=1), tau)
        return grad_log_softmax(Fc, probs, dec.chosen - 1, tau)
    values = (ctx.F0 * w).sum(axis=1)
    w_rows = None
    if cfg.td_terminal:
        values = values.copy()
        values[0] = ctx.mm
        w_rows = np.ones(len(ctx.actions))
        w_rows[0] = 0.0
    probs = softmax_policy(values, tau)
    return grad_log_softmax(ctx.F0, probs, dec.chosen, tau, w_rows=w_rows)


def update_reinforce(cfg: ModelConfig, theta: dict, state: ReinforceState,
                     decisions: Sequence[Decision]) -> ReinforceState:
    """End-of-trial policy update from the trial's decision records."""
    rewards = [effective_reward(cfg, d) for d in decisions]
    coeffs = step_coefficients(rewards, theta["gamma"], CREDIT_RETURN)
    g = np.zeros_like(state.w)
    for coeff, dec in zip(coeffs, decisions):
        if coeff != 0.0:
            g += coeff * reinforce_decision_gradient(cfg, theta, state.w, dec)
    inc = state.adam.ascend(g, theta["alpha"])
    return ReinforceState(state.w + inc, state.adam)


def lvoc_bootstrap_value(cfg: ModelConfig, theta: dict, state: LvocState,
                         next_ctx: DecisionContext,
                         rng: np.random.Generator) -> float:
    """Mean-weight value of a fresh posterior-sampled pick at the next state.

    Respects the config: with a stopping rule the pick is click-only (the
    best-path value stands in when no clicks remain), and a pinned
    terminal score competes at its pinned value.
    """
    F = next_ctx.F0
    if cfg.stage1 is not None:
        if len(next_ctx.actions) == 1:
            return next_ctx.mm
        F = F[1:]
    w_bar = state.sample_mean_weights(int(theta["n_samples"]), rng)
    scores = (F * w_bar).sum(axis=1)
    if cfg.stage1 is None and cfg.td_terminal:
        scores = scores.copy()
        scores[0] = next_ctx.mm
    pick = int(np.argmax(scores))
    if cfg.stage1 is None and cfg.td_terminal and pick == 0:
        return next_ctx.mm
    return float(F[pick] @ state.mean)


def update_lvoc(cfg: ModelConfig, theta: dict, state: LvocState, dec: Decision,
                next_ctx: DecisionContext | None,
                rng: np.random.Generator) -> LvocState:
    """Per-step conjugate update from one decision record.

    Termination experiences train the terminal row only for the plain
    value learner; a stopping rule owns that choice and a pinned terminal
    score leaves nothing to learn there.
    """
    noise = LvocParams().obs_noise_var
    if dec.chosen == 0:
        if cfg.stage1 is not None or cfg.td_terminal:
            return state
        return lvoc_update_row(state, dec.ctx.F0[0], dec.reward, noise)
    if next_ctx is None:
        raise ValueError("a click decision needs the next decision context")
    target = effective_reward(cfg, dec) + lvoc_bootstrap_value(cfg, theta, state,
                                                               next_ctx, rng)
    return lvoc_update_row(state, dec.ctx.F0[dec.chosen], target, noise)


def init_learner_state(cfg: ModelConfig, theta: dict, registry: FeatureRegistry,
                       rng: np.random.Generator) -> ReinforceState | LvocState | None:
    if cfg.base == "reinforce":
        return ReinforceState.init(registry.dim, rng)
    if cfg.base == "lvoc":
        params = LvocParams(prior_mean=theta["mu_prior"],
                            prior_var=theta["sigma_prior"],
                            n_samples=int(theta["n_samples"]))
        return LvocState.from_prior(params, registry.dim)
    return None


# ---------------------------------------------------------------------------
# Live stepping
# ---------------------------------------------------------------------------

@dataclass
class AgentState:
    """Everything one agent carries between decisions and trials."""

    learner: ReinforceState | LvocState | None
    history: ClickHistory
    memory: ScoreMemory

    @classmethod
    def fresh(cls, cfg: ModelConfig, theta: dict, registry: FeatureRegistry,
              rng: np.random.Generator) -> "AgentState":
        return cls(init_learner_state(cfg, theta, registry, rng),
                   ClickHistory.fresh(), ScoreMemory())


def effective_meta_reward(cfg: ModelConfig, r_meta: float, b_t: BeliefState,
                          b_next: BeliefState | None = None) -> float:
    """Learning signal for one step: the raw reward, plus the plan-improvement
    bonus on click steps when the config asks for it. Recorded task scores
    always use the raw reward."""
    if (not cfg.pseudo_rewards or b_next is None
            or b_next.n_clicks == b_t.n_clicks):
        return r_meta
    return r_meta + pseudo_reward(b_t, b_next)


def meta_step(cfg: ModelConfig, theta: dict, state: AgentState,
              belief: BeliefState, registry: FeatureRegistry,
              rng: np.random.Generator) -> tuple[int, float, DecisionContext]:
    """Sample the next computation and report its log-probability.

    The probability composes both stages (stop/continue, then the value
    policy), so exponentiating over all computations sums to one. The
    returned context lets the caller build a :class:`Decision` without
    recomputing features.
    """
    ctx = decision_context(belief, state.history, registry)
    probs = choice_probabilities(cfg, theta, ctx, state.learner, state.memory,
                                 registry, rng)
    pick = int(rng.choice(len(ctx.actions), p=probs))
    return ctx.actions[pick], float(np.log(probs[pick])), ctx
