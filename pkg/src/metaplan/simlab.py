"""Forward simulation of agents, strategy labeling, and learning curves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import (
    TERMINATE,
    BeliefState,
    GroundTruth,
    TrialSpec,
    build_trial_spec,
    greedy_path,
    pseudo_reward,
    sample_ground_truth,
    transition,
)
from .features import FeatureRegistry, default_registry, habit_count_update
from .fitkit import ParticipantRecord, TrialRecord, record_to_json_dict
from .metacontrol import (
    AgentState,
    Decision,
    ModelConfig,
    decision_context,
    meta_step,
    update_lvoc,
    update_reinforce,
)

ADAPTIVE = "adaptive"
NON_ADAPTIVE = "non-adaptive"

# Generating parameters for synthetic cohorts, per model base.
DEFAULT_SIM_PARAMS: dict[str, dict[str, float | int]] = {
    "reinforce": {"alpha": 0.05, "gamma": 0.95, "tau": 120.0},
    "lvoc": {"mu_prior": 0.0, "sigma_prior": 5.0, "n_samples": 8},
    "habit": {"w_same_node": 0.5, "w_same_branch": 0.0, "w_same_level": 0.0,
              "terminate_bias": 2.5, "tau": 1.0},
    "nonlearning": {"tau": 1.0,
                    **{f"w{i}": 0.0 for i in range(default_registry().dim)}},
}


def classify_strategy(first_click: int | None, condition: str,
                      spec: TrialSpec | None = None) -> str:
    """Label a trial's opening move as adaptive or not for its condition.

    Each environment family rewards starting the inspection at a
    particular depth; a trial with no clicks at all is non-adaptive by
    convention.
    """
    if first_click is None:
        return NON_ADAPTIVE
    if spec is None:
        spec = build_trial_spec(condition)
    depth = spec.depth_of[first_click]
    if condition == "exp1-far":
        good = depth == spec.max_depth
    elif condition == "exp1-near":
        good = depth == 1
    elif condition == "exp1-bestfirst":
        good = depth in (1, 2)
    else:
        raise ValueError(f"no first-click rule for condition {condition!r}")
    return ADAPTIVE if good else NON_ADAPTIVE


@dataclass(frozen=True)
class SimTrace:
    """One simulated session, ingestible exactly like a participant record."""

    record: ParticipantRecord
    model: str
    labels: tuple[str, ...]
    decision_logps: tuple[tuple[float, ...], ...]

    @property
    def agent(self) -> str:
        return self.record.participant

    @property
    def condition(self) -> str:
        return self.record.condition

    @property
    def scores(self) -> tuple[float, ...]:
        return tuple(t.score for t in self.record.trials)

    @property
    def n_clicks(self) -> tuple[int, ...]:
        return tuple(len(t.clicks) for t in self.record.trials)

    @property
    def first_clicks(self) -> tuple[int | None, ...]:
        return tuple(t.clicks[0] if t.clicks else None for t in self.record.trials)

    def to_json_dict(self) -> dict:
        d = record_to_json_dict(self.record)
        d["model"] = self.model
        d["labels"] = list(self.labels)
        d["n_clicks"] = list(self.n_clicks)
        d["first_clicks"] = list(self.first_clicks)
        return d


def _run_trial(cfg: ModelConfig, theta: dict, spec: TrialSpec,
               truth: GroundTruth, agent: AgentState,
               registry: FeatureRegistry,
               rng: np.random.Generator) -> tuple[TrialRecord, tuple[float, ...]]:
    """Play one trial in place, mutating the agent's learner/history/memory."""
    b = BeliefState(spec, {})
    decisions: list[Decision] = []
    clicks: list[int] = []
    logps: list[float] = []
    pending: Decision | None = None
    total = 0.0
    while True:
        if pending is not None:
            # the previous click learns from this context before the agent acts
            ctx_now = decision_context(b, agent.history, registry)
            agent.learner = update_lvoc(cfg, theta, agent.learner, pending,
                                        ctx_now, rng)
            pending = None
        comp, logp, ctx = meta_step(cfg, theta, agent, b, registry, rng)
        logps.append(logp)
        chosen = ctx.actions.index(comp)
        b_next, r = transition(b, comp, truth)
        total += r
        if comp == TERMINATE:
            dec = Decision(ctx, chosen, r, 0.0)
            decisions.append(dec)
            if cfg.base == "lvoc":
                agent.learner = update_lvoc(cfg, theta, agent.learner, dec,
                                            None, rng)
            break
        dec = Decision(ctx, chosen, r, pseudo_reward(b, b_next))
        decisions.append(dec)
        if cfg.base == "lvoc":
            pending = dec
        agent.history = habit_count_update(agent.history, spec, comp)
        clicks.append(comp)
        b = b_next
    if cfg.base == "reinforce":
        agent.learner = update_reinforce(cfg, theta, agent.learner, decisions)
    agent.memory = agent.memory.record(total)
    trial = TrialRecord(truth, tuple(clicks) + (TERMINATE,), total,
                        greedy_path(b))
    return trial, tuple(logps)


def simulate_agent(config: ModelConfig, params: dict, condition: str,
                   n_trials: int, seed: int,
                   registry: FeatureRegistry | None = None,
                   agent_id: str | None = None) -> SimTrace:
    """Play a full session with fresh sampled environments each trial.

    Learner weights, habit counts, and the running score memory all carry
    across trials, so behavior can drift within the session; the result is
    a deterministic function of (config, params, condition, n_trials, seed).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    registry = registry or default_registry()
    spec = build_trial_spec(condition)
    rng = np.random.default_rng(seed)
    agent = AgentState.fresh(config, params, registry, rng)
    trials: list[TrialRecord] = []
    labels: list[str] = []
    logps: list[tuple[float, ...]] = []
    for _ in range(n_trials):
        truth = sample_ground_truth(spec, rng)
        trial, tl = _run_trial(config, params, spec, truth, agent, registry, rng)
        trials.append(trial)
        logps.append(tl)
        first = trial.clicks[0] if trial.clicks else None
        if condition.startswith("exp1-"):
            labels.append(classify_strategy(first, condition, spec))
        else:
            labels.append(NON_ADAPTIVE if first is None else ADAPTIVE)
    rec = ParticipantRecord(agent_id or f"sim-{config.model_id}-{seed}",
                            condition, spec, tuple(trials))
    return SimTrace(rec, config.model_id, tuple(labels), tuple(logps))


def cohort_seeds(seed: int, n_agents: int) -> list[int]:
    """Independent per-agent seeds derived from one master seed."""
    ss = np.random.SeedSequence(seed)
    return [int(child.generate_state(1, np.uint32)[0]) for child in ss.spawn(n_agents)]


def simulate_cohort(config: ModelConfig, params: dict, condition: str,
                    n_agents: int, n_trials: int, seed: int,
                    registry: FeatureRegistry | None = None) -> list[SimTrace]:
    """Simulate independent agents; each has its own derived seed."""
    registry = registry or default_registry()
    traces = []
    for i, agent_seed in enumerate(cohort_seeds(seed, n_agents)):
        traces.append(simulate_agent(config, params, condition, n_trials,
                                     agent_seed, registry,
                                     agent_id=f"sim-{config.model_id}-a{i:03d}"))
    return traces


# ---------------------------------------------------------------------------
# Learning curves
# ---------------------------------------------------------------------------

MEASURES = ("score", "clicks", "adaptive")


@dataclass(frozen=True)
class CurveSet:
    """Per-trial mean and percentile band of one measure across agents."""

    condition: str | None
    model: str | None
    measure: str
    mean: tuple[float, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n_agents: int

    @property
    def n_trials(self) -> int:
        return len(self.mean)


def _measure_matrix(traces: Sequence[SimTrace], measure: str) -> np.ndarray:
    rows = []
    for t in traces:
        if measure == "score":
            rows.append(list(t.scores))
        elif measure == "clicks":
            rows.append([float(n) for n in t.n_clicks])
        elif measure == "adaptive":
            rows.append([1.0 if lab == ADAPTIVE else 0.0 for lab in t.labels])
        else:
            raise ValueError(f"unknown measure {measure!r}")
    return np.asarray(rows, dtype=float)


def _common(values: list) -> str | None:
    return values[0] if len(set(values)) == 1 else None


def aggregate_curves(traces: Sequence[SimTrace], measure: str,
                     band: tuple[float, float] = (10.0, 90.0)) -> CurveSet:
    """Fold a cohort into a per-trial mean curve with a percentile band."""
    if not traces:
        raise ValueError("no traces to aggregate")
    counts = {len(t.record.trials) for t in traces}
    if len(counts) != 1:
        raise ValueError(f"misaligned trial counts: {sorted(counts)}")
    M = _measure_matrix(traces, measure)
    lo, hi = np.percentile(M, band, axis=0)
    return CurveSet(_common([t.condition for t in traces]),
                    _common([t.model for t in traces]),
                    measure,
                    tuple(float(x) for x in M.mean(axis=0)),
                    tuple(float(x) for x in lo),
                    tuple(float(x) for x in hi),
                    len(traces))


def curves_to_csv(curves: Sequence[CurveSet]) -> str:
    """Plot-ready CSV: one row per (condition, model, measure, trial)."""
    lines = ["condition,model,measure,trial,mean,lo,hi"]
    for c in curves:
        for i in range(c.n_trials):
            lines.append(",".join([
                c.condition or "", c.model or "", c.measure, str(i + 1),
                repr(c.mean[i]), repr(c.lo[i]), repr(c.hi[i]),
            ]))
    return "\n".join(lines) + "\n"
