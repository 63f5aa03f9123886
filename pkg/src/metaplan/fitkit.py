"""Participant records, teacher-forced likelihoods, and parameter fitting.

A record is replayed decision by decision: the model states the
probability of the participant's next computation, then is advanced with
the participant's actual experience. Feature matrices and pseudo-rewards
are parameter-independent, so they are precomputed once per participant
into a replay table that every likelihood evaluation reuses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .env import (
    TERMINATE,
    BeliefState,
    GroundTruth,
    InvalidComputationError,
    TrialSpec,
    build_trial_spec,
    transition,
    pseudo_reward,
    validate_ground_truth,
)
from .features import ClickHistory, FeatureRegistry, default_registry, habit_count_update
from .ioutil import canonical_json, read_jsonl
from .metacontrol import (
    Decision,
    ModelConfig,
    ScoreMemory,
    choice_probabilities,
    decision_context,
    init_learner_state,
    required_params,
    update_lvoc,
    update_reinforce,
)
from .modelselect import bic

PROB_FLOOR = 1e-6
DEFAULT_BUDGET = 200
SCORE_TOLERANCE = 1e-6


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialRecord:
    """One played trial: what was revealed, in what order, and the payoff."""

    truth: GroundTruth
    computations: tuple[int, ...]  # ordered, ends with TERMINATE
    score: float
    path: tuple[int, ...] | None = None  # committed path; greedy if omitted

    @property
    def clicks(self) -> tuple[int, ...]:
        return self.computations[:-1]


@dataclass(frozen=True)
class ParticipantRecord:
    participant: str
    condition: str | None
    spec: TrialSpec
    trials: tuple[TrialRecord, ...]

    @property
    def n_obs(self) -> int:
        return sum(len(t.computations) for t in self.trials)


def _trial_to_json(t: TrialRecord) -> dict:
    d = {"truth": t.truth.to_json_dict(),
         "computations": list(t.computations),
         "score": t.score}
    if t.path is not None:
        d["path"] = list(t.path)
    return d


def record_to_json_dict(rec: ParticipantRecord, inline_spec: bool = True) -> dict:
    d = {"participant": rec.participant,
         "condition": rec.condition,
         "trials": [_trial_to_json(t) for t in rec.trials]}
    if inline_spec:
        d["spec"] = rec.spec.to_json_dict()
    return d


def validate_record(rec: ParticipantRecord) -> ParticipantRecord:
    """Replay every trial and verify structure, clicks, and score bookkeeping."""
    if not rec.participant:
        raise ValueError("empty participant id")
    if not rec.trials:
        raise ValueError("record has no trials")
    spec = rec.spec
    for ti, trial in enumerate(rec.trials):
        where = f"trial {ti}"
        validate_ground_truth(spec, trial.truth)
        comps = trial.computations
        if not comps or comps[-1] != TERMINATE:
            raise ValueError(f"{where}: computations must end with terminate (0)")
        if TERMINATE in comps[:-1]:
            raise ValueError(f"{where}: terminate may only appear last")
        b = BeliefState(spec, {})
        total = 0.0
        for si, c in enumerate(comps[:-1]):
            try:
                b, r = transition(b, c, trial.truth)
            except InvalidComputationError as e:
                raise ValueError(f"{where}, step {si}: {e}") from None
            total += r
        if trial.path is not None:
            if not spec.is_path(trial.path):
                raise ValueError(f"{where}: committed path is not a root-to-leaf path")
            total += sum(trial.truth.rewards[v] for v in trial.path)
        else:
            _, r_term = transition(b, TERMINATE, trial.truth)
            total += r_term
        if abs(total - trial.score) > SCORE_TOLERANCE:
            raise ValueError(f"{where}: score {trial.score} does not match "
                             f"replayed return {total}")
    return rec


# ---------------------------------------------------------------------------
# JSONL ingest / write
# ---------------------------------------------------------------------------

def _parse_trial(obj: dict, where: str) -> TrialRecord:
    try:
        truth = GroundTruth.from_json_dict(obj["truth"])
        comps = tuple(int(c) for c in obj["computations"])
        score = float(obj["score"])
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"{where}: malformed trial ({e})") from None
    path = tuple(int(v) for v in obj["path"]) if obj.get("path") is not None else None
    return TrialRecord(truth, comps, score, path)


def parse_record(obj: dict, shared_spec: TrialSpec | None = None) -> ParticipantRecord:
    """Build and validate one ParticipantRecord from its wire object."""
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    participant = obj.get("participant")
    if not isinstance(participant, str) or not participant:
        raise ValueError("missing or empty 'participant'")
    condition = obj.get("condition")
    if "spec" in obj and obj["spec"] is not None:
        spec = TrialSpec.from_json_dict(obj["spec"])
    elif shared_spec is not None:
        spec = shared_spec
    elif condition:
        spec = build_trial_spec(condition)
    else:
        raise ValueError("record needs an inline 'spec' or a 'condition'")
    trials_obj = obj.get("trials")
    if not isinstance(trials_obj, list):
        raise ValueError("missing 'trials' list")
    trials = tuple(_parse_trial(t, f"trial {i}") for i, t in enumerate(trials_obj))
    return validate_record(ParticipantRecord(participant, condition, spec, trials))


def ingest_records(path: str | Path) -> list[ParticipantRecord]:
    """Read the canonical JSONL log: optional header line, one participant per line.

    Every invariant is checked; violations raise with the offending line
    number, trial, and step.
    """
    records: list[ParticipantRecord] = []
    shared_spec: TrialSpec | None = None
    first = True
    for line_no, obj in read_jsonl(path):
        if first and isinstance(obj, dict) and obj.get("schema") == "records@1":
            if obj.get("spec") is not None:
                shared_spec = TrialSpec.from_json_dict(obj["spec"])
            first = False
            continue
        first = False
        try:
            records.append(parse_record(obj, shared_spec))
        except ValueError as e:
            raise ValueError(f"line {line_no}: {e}") from None
    return records


def write_records(path: str | Path, records: Sequence[ParticipantRecord]):
    """Write the canonical JSONL format (header line + one record per line)."""
    lines = [canonical_json({"schema": "records@1", "spec": None})]
    for rec in records:
        lines.append(canonical_json(record_to_json_dict(rec)))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Replay tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplayTrial:
    decisions: tuple[Decision, ...]
    trial_return: float


@dataclass(frozen=True)
class ReplayTable:
    participant: str
    condition: str | None
    trials: tuple[ReplayTrial, ...]

    @property
    def n_obs(self) -> int:
        return sum(len(t.decisions) for t in self.trials)


def build_replay_table(rec: ParticipantRecord,
                       registry: FeatureRegistry | None = None) -> ReplayTable:
    """Precompute every parameter-independent quantity of a record.

    Feature matrices, terminate values, pseudo-rewards, and experienced
    rewards depend only on the data, so likelihood evaluations over a
    parameter search reuse this table untouched.
    """
    registry = registry or default_registry()
    spec = rec.spec
    trials = []
    h = ClickHistory.fresh()  # habit counts persist across the whole session
    for trial in rec.trials:
        b = BeliefState(spec, {})
        decisions = []
        for c in trial.clicks:
            ctx = decision_context(b, h, registry)
            b_next, r = transition(b, c, trial.truth)
            decisions.append(Decision(ctx, ctx.actions.index(c), r,
                                      pseudo_reward(b, b_next)))
            h = habit_count_update(h, spec, c)
            b = b_next
        ctx = decision_context(b, h, registry)
        # the experienced terminal payoff honors the committed path
        r_term = trial.score + spec.click_cost * len(trial.clicks)
        decisions.append(Decision(ctx, 0, r_term, 0.0))
        trials.append(ReplayTrial(tuple(decisions), trial.score))
    return ReplayTable(rec.participant, rec.condition, tuple(trials))


# ---------------------------------------------------------------------------
# Likelihood
# ---------------------------------------------------------------------------

def sequence_loglik(cfg: ModelConfig, theta: dict, record: ParticipantRecord,
                    seed: int, registry: FeatureRegistry | None = None,
                    table: ReplayTable | None = None,
                    floor: float = PROB_FLOOR) -> tuple[float, int]:
    """Teacher-forced log-likelihood of a participant's click sequences.

    At every decision the model states the probability of the observed
    computation (floored at ``floor``), then learns from the observed
    experience. The seed fixes all internal sampling (weight
    initialization, posterior replays), making the result a deterministic
    function of (config, params, record, seed).
    """
    registry = registry or default_registry()
    if table is None:
        table = build_replay_table(record, registry)
    rng = np.random.default_rng(seed)
    state = init_learner_state(cfg, theta, registry, rng)
    memory = ScoreMemory()
    total = 0.0
    for trial in table.trials:
        decs = trial.decisions
        for i, dec in enumerate(decs):
            probs = choice_probabilities(cfg, theta, dec.ctx, state, memory,
                                         registry, rng)
            total += math.log(max(float(probs[dec.chosen]), floor))
            if cfg.base == "lvoc":
                nxt = decs[i + 1].ctx if i + 1 < len(decs) else None
                state = update_lvoc(cfg, theta, state, dec, nxt, rng)
        if cfg.base == "reinforce":
            state = update_reinforce(cfg, theta, state, decs)
        memory = memory.record(trial.trial_return)
    return total, table.n_obs


# ---------------------------------------------------------------------------
# Parameter space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamSpec:
    name: str
    lo: float
    hi: float
    integer: bool = False


_BOUNDS = {
    "alpha": (1e-4, 1.0),
    "gamma": (0.0, 1.0),
    "tau": (1e-3, 200.0),
    "mu_prior": (-10.0, 10.0),
    "sigma_prior": (1e-3, 100.0),
    "n_samples": (1, 32),
    "w_same_node": (-10.0, 10.0),
    "w_same_branch": (-10.0, 10.0),
    "w_same_level": (-10.0, 10.0),
    "terminate_bias": (-10.0, 10.0),
    "s1_tau": (1e-3, 100.0),
    "s1_a": (-5.0, 5.0),
    "s1_b": (-5.0, 5.0),
}

_DEFAULTS = {
    "alpha": 0.05, "gamma": 0.9, "tau": 1.0,
    "mu_prior": 0.0, "sigma_prior": 1.0, "n_samples": 1,
    "w_same_node": 0.5, "w_same_branch": 0.25, "w_same_level": 0.25,
    "terminate_bias": 0.0,
    "s1_tau": 1.0, "s1_a": 0.0, "s1_b": 0.0,
}


def param_space(cfg: ModelConfig,
                registry: FeatureRegistry | None = None) -> tuple[ParamSpec, ...]:
    """Box bounds for every free parameter of a config, in canonical order.

    The aspiration parameter of the fixed rule lives on the normalized
    value scale ([0, 1]); for the past-performance rule it scales the
    recollection noise in raw score units.
    """
    registry = registry or default_registry()
    specs = []
    for name in required_params(cfg, registry):
        if name == "s1_eta":
            hi = 1.0 if cfg.stage1 == "fixed" else 100.0
            specs.append(ParamSpec(name, 0.0, hi))
        elif name.startswith("w") and name[1:].isdigit():
            specs.append(ParamSpec(name, -10.0, 10.0))
        else:
            lo, hi = _BOUNDS[name]
            specs.append(ParamSpec(name, float(lo), float(hi),
                                   integer=(name == "n_samples")))
    return tuple(specs)


def default_params(cfg: ModelConfig,
                   registry: FeatureRegistry | None = None) -> dict:
    registry = registry or default_registry()
    theta = {}
    for name in required_params(cfg, registry):
        if name == "s1_eta":
            theta[name] = 0.5 if cfg.stage1 == "fixed" else 1.0
        elif name.startswith("w") and name[1:].isdigit():
            theta[name] = 0.0
        else:
            theta[name] = _DEFAULTS[name]
    return theta


def clip_params(theta: dict, space: Sequence[ParamSpec]) -> dict:
    out = {}
    for p in space:
        v = min(max(float(theta[p.name]), p.lo), p.hi)
        out[p.name] = int(round(v)) if p.integer else v
    return out


# ---------------------------------------------------------------------------
# Derivative-free search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchResult:
    best_theta: dict
    best_value: float
    best_seed: int
    trace: tuple[float, ...]  # best-so-far after each evaluation


def _sample_uniform(space, rng) -> dict:
    theta = {}
    for p in space:
        if p.integer:
            theta[p.name] = int(rng.integers(int(p.lo), int(p.hi) + 1))
        else:
            theta[p.name] = float(rng.uniform(p.lo, p.hi))
    return theta


def _sample_around(center: dict, space, rng, width: float) -> dict:
    theta = {}
    for p in space:
        scale = (p.hi - p.lo) * width
        theta[p.name] = center[p.name] + rng.normal(0.0, scale)
    return clip_params(theta, space)


def smbo_maximize(objective: Callable[[dict, int], float],
                  space: Sequence[ParamSpec], budget: int = DEFAULT_BUDGET,
                  seed: int = 0) -> SearchResult:
    """Seeded sequential search over a box: uniform exploration, then
    progressively tighter Gaussian proposals around the incumbent (with a
    25% uniform restart mix). Each evaluation gets its own derived seed;
    the best-so-far trace is monotone by construction.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    root = np.random.SeedSequence(seed)
    children = root.spawn(budget + 1)
    rng = np.random.default_rng(children[0])
    eval_seeds = [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children[1:]]

    n_init = min(budget, max(8, budget // 4))
    best_theta: dict | None = None
    best_value = -np.inf
    best_seed = eval_seeds[0]
    trace = []
    for i in range(budget):
        if i < n_init or best_theta is None:
            theta = _sample_uniform(space, rng)
        elif rng.uniform() < 0.25:
            theta = _sample_uniform(space, rng)
        else:
            frac = (i - n_init) / max(1, budget - 1 - n_init)
            width = 0.25 * (0.02 / 0.25) ** frac
            theta = _sample_around(best_theta, space, rng, width)
        value = objective(theta, eval_seeds[i])
        if value > best_value:
            best_value = value
            best_theta = theta
            best_seed = eval_seeds[i]
        trace.append(best_value)
    return SearchResult(best_theta, best_value, best_seed, tuple(trace))


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    participant: str
    model_id: str
    params: dict
    loglik: float
    n_obs: int
    k: int
    bic: float
    budget: int
    seed: int
    eval_seed: int
    floor: float = PROB_FLOOR

    def to_json_dict(self) -> dict:
        return {"schema": "fitresult@1", "participant": self.participant,
                "model": self.model_id, "params": self.params,
                "loglik": self.loglik, "n_obs": self.n_obs, "k": self.k,
                "bic": self.bic, "budget": self.budget, "seed": self.seed,
                "eval_seed": self.eval_seed, "floor": self.floor}

    @classmethod
    def from_json_dict(cls, d: dict) -> "FitResult":
        if d.get("schema") != "fitresult@1":
            raise ValueError("not a fit result object")
        return cls(d["participant"], d["model"], dict(d["params"]),
                   float(d["loglik"]), int(d["n_obs"]), int(d["k"]),
                   float(d["bic"]), int(d["budget"]), int(d["seed"]),
                   int(d["eval_seed"]), float(d.get("floor", PROB_FLOOR)))


def fit_key(participant: str, model_id: str, budget: int, seed: int) -> str:
    return f"{participant}|{model_id}|b{budget}|s{seed}"


def fit_participant(cfg: ModelConfig, record: ParticipantRecord,
                    budget: int = DEFAULT_BUDGET, seed: int = 0,
                    registry: FeatureRegistry | None = None) -> FitResult:
    """Maximum-likelihood parameters for one (participant, model) pair."""
    registry = registry or default_registry()
    table = build_replay_table(record, registry)
    space = param_space(cfg, registry)

    def objective(theta: dict, eval_seed: int) -> float:
        ll, _ = sequence_loglik(cfg, theta, record, eval_seed,
                                registry=registry, table=table)
        return ll

    res = smbo_maximize(objective, space, budget=budget, seed=seed)
    k = len(space)
    n_obs = table.n_obs
    return FitResult(participant=record.participant, model_id=cfg.model_id,
                     params=res.best_theta, loglik=res.best_value,
                     n_obs=n_obs, k=k, bic=bic(res.best_value, k, n_obs),
                     budget=budget, seed=seed, eval_seed=res.best_seed)
