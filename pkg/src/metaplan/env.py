"""Click-to-reveal planning task and its meta-level decision process.

A trial presents a tree of hidden rewards. The agent can pay a fixed cost
to reveal any node's value (a planning computation), or stop and walk the
root-to-leaf path that looks best under what it currently knows. A belief
state is simply the set of revealed values; everything unrevealed is
summarized by its known discrete reward distribution, so all expectations
here are exact finite sums.

Computations are encoded as ints: a positive node id means "reveal that
node", and ``TERMINATE`` (0, the root id, which is never clickable) means
"stop planning and act".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

TERMINATE = 0

_TABLE_PATH = Path(__file__).with_name("conditions.json")


class InvalidComputationError(ValueError):
    """Click on a revealed node, the root, or an unknown node id."""


@dataclass(frozen=True)
class Distribution:
    """Finite discrete distribution given by support points and probabilities."""

    support: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probs) or not self.support:
            raise ValueError("support and probs must be equal-length and non-empty")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probs must be non-negative and sum to 1")

    @classmethod
    def uniform(cls, support: Sequence[float]) -> "Distribution":
        n = len(support)
        return cls(tuple(float(v) for v in support), tuple(1.0 / n for _ in range(n)))

    @cached_property
    def mean(self) -> float:
        return float(sum(v * p for v, p in zip(self.support, self.probs)))

    @cached_property
    def variance(self) -> float:
        m = self.mean
        return float(sum(p * (v - m) ** 2 for v, p in zip(self.support, self.probs)))

    @property
    def vmin(self) -> float:
        return min(self.support)

    @property
    def vmax(self) -> float:
        return max(self.support)

    def to_json_dict(self) -> dict:
        return {"support": list(self.support), "probs": list(self.probs)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Distribution":
        return cls(tuple(float(v) for v in d["support"]), tuple(float(p) for p in d["probs"]))


@dataclass(frozen=True)
class Node:
    id: int
    depth: int
    parent: int | None


class TrialSpec:
    """Immutable description of one planning trial.

    The tree is rooted at node 0, which carries no reward; every other node
    has a reward distribution. ``click_cost`` is charged per reveal. Paths
    are root-to-leaf sequences of non-root node ids, kept in lexicographic
    order so that ties always break toward the lowest-numbered path.
    """

    def __init__(self, nodes: Sequence[Node], reward_dists: Mapping[int, Distribution],
                 click_cost: float, condition: str | None = None, seed: int | None = None):
        self.nodes = tuple(nodes)
        self.reward_dists = {int(k): v for k, v in reward_dists.items()}
        self.click_cost = float(click_cost)
        self.condition = condition
        self.seed = seed
        self._validate()

        by_id = {n.id: n for n in self.nodes}
        self.depth_of = {n.id: n.depth for n in self.nodes}
        self.parent_of = {n.id: n.parent for n in self.nodes}
        children: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            if n.parent is not None:
                children[n.parent].append(n.id)
        self.children = {k: tuple(sorted(v)) for k, v in children.items()}

        # Root-to-leaf paths by DFS in id order; resulting list is lexicographic.
        paths: list[tuple[int, ...]] = []

        def walk(nid: int, acc: list[int]):
            if not self.children[nid]:
                paths.append(tuple(acc))
                return
            for ch in self.children[nid]:
                walk(ch, acc + [ch])

        walk(0, [])
        self.paths = tuple(paths)
        self._path_index = {p: i for i, p in enumerate(self.paths)}

        # Which paths pass through each node, and each node's depth-1 ancestor.
        through: dict[int, list[int]] = {n.id: [] for n in self.nodes if n.id != 0}
        for i, p in enumerate(self.paths):
            for v in p:
                through[v].append(i)
        self.paths_through = {k: tuple(v) for k, v in through.items()}
        branch: dict[int, int] = {}
        for n in self.nodes:
            if n.id == 0:
                continue
            v = n.id
            while by_id[v].depth > 1:
                v = by_id[v].parent  # type: ignore[assignment]
            branch[n.id] = v
        self.branch_of = branch
        self.max_depth = max(n.depth for n in self.nodes)

        self.v_min = min(sum(self.reward_dists[v].vmin for v in p) for p in self.paths)
        self.v_max = max(sum(self.reward_dists[v].vmax for v in p) for p in self.paths)

    def _validate(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        by_id = {n.id: n for n in self.nodes}
        roots = [n for n in self.nodes if n.parent is None]
        if len(roots) != 1 or roots[0].id != 0 or roots[0].depth != 0:
            raise ValueError("tree must have exactly one root with id 0 and depth 0")
        for n in self.nodes:
            if n.id == 0:
                continue
            if n.id < 0:
                raise ValueError(f"non-root node ids must be positive, got {n.id}")
            if n.parent not in by_id:
                raise ValueError(f"node {n.id} has unknown parent {n.parent}")
            if n.depth != by_id[n.parent].depth + 1:
                raise ValueError(f"node {n.id} depth is not parent depth + 1")
            if n.id not in self.reward_dists:
                raise ValueError(f"node {n.id} has no reward distribution")
        extra = set(self.reward_dists) - {n.id for n in self.nodes if n.id != 0}
        if extra:
            raise ValueError(f"reward distributions for unknown nodes {sorted(extra)}")
        if self.click_cost < 0:
            raise ValueError("click_cost must be non-negative")

    @cached_property
    def non_root_ids(self) -> tuple[int, ...]:
        return tuple(sorted(n.id for n in self.nodes if n.id != 0))

    def is_path(self, path: Sequence[int]) -> bool:
        return tuple(path) in self._path_index

    def path_index(self, path: Sequence[int]) -> int:
        try:
            return self._path_index[tuple(path)]
        except KeyError:
            raise ValueError(f"{tuple(path)} is not a root-to-leaf path") from None

    def to_json_dict(self) -> dict:
        d = {
            "schema": "trialspec@1",
            "click_cost": self.click_cost,
            "nodes": [{"id": n.id, "depth": n.depth, "parent": n.parent} for n in self.nodes],
            "reward_dists": {str(k): self.reward_dists[k].to_json_dict()
                             for k in sorted(self.reward_dists)},
        }
        if self.condition is not None:
            d["condition"] = self.condition
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrialSpec":
        nodes = [Node(int(n["id"]), int(n["depth"]),
                      None if n["parent"] is None else int(n["parent"]))
                 for n in d["nodes"]]
        dists = {int(k): Distribution.from_json_dict(v) for k, v in d["reward_dists"].items()}
        return cls(nodes, dists, float(d["click_cost"]),
                   condition=d.get("condition"), seed=d.get("seed"))


@dataclass(frozen=True)
class GroundTruth:
    """One realized reward per non-root node."""

    rewards: Mapping[int, float]

    def to_json_dict(self) -> dict:
        return {"schema": "groundtruth@1",
                "rewards": {str(k): float(self.rewards[k]) for k in sorted(self.rewards)}}

    @classmethod
    def from_json_dict(cls, d: dict) -> "GroundTruth":
        return cls({int(k): float(v) for k, v in d["rewards"].items()})


def validate_ground_truth(spec: TrialSpec, truth: GroundTruth):
    """Raise ValueError unless truth covers every non-root node with in-support values."""
    for v in spec.non_root_ids:
        if v not in truth.rewards:
            raise ValueError(f"ground truth missing node {v}")
        if truth.rewards[v] not in spec.reward_dists[v].support:
            raise ValueError(f"ground truth value {truth.rewards[v]} for node {v} "
                             f"is outside its support")
    extra = set(truth.rewards) - set(spec.non_root_ids)
    if extra:
        raise ValueError(f"ground truth has values for unknown nodes {sorted(extra)}")


@dataclass(frozen=True)
class BeliefState:
    """Revealed values so far. Unrevealed nodes keep their prior distribution."""

    spec: TrialSpec
    revealed: Mapping[int, float] = field(default_factory=dict)

    @property
    def n_clicks(self) -> int:
        return len(self.revealed)

    @cached_property
    def path_epvs(self) -> np.ndarray:
        """Expected value of every path under this belief (exact sums)."""
        out = np.empty(len(self.spec.paths))
        for i, p in enumerate(self.spec.paths):
            out[i] = sum(self.revealed.get(v, self.spec.reward_dists[v].mean) for v in p)
        return out

    def is_revealed(self, node: int) -> bool:
        return node in self.revealed


def valid_computations(belief: BeliefState) -> list[int]:
    """TERMINATE first, then every unrevealed non-root node id, ascending."""
    return [TERMINATE] + [v for v in belief.spec.non_root_ids if v not in belief.revealed]


def _check_click(belief: BeliefState, c: int):
    if c == TERMINATE:
        return
    if c not in belief.spec.depth_of:
        raise InvalidComputationError(f"unknown node id {c}")
    if c == 0 or belief.spec.depth_of[c] == 0:
        raise InvalidComputationError("the root cannot be clicked")
    if c in belief.revealed:
        raise InvalidComputationError(f"node {c} is already revealed")


def expected_path_value(belief: BeliefState, path: Sequence[int]) -> float:
    """Exact expected return of walking ``path``: revealed values plus prior means."""
    i = belief.spec.path_index(path)
    return float(belief.path_epvs[i])


def best_path_value(belief: BeliefState) -> float:
    """Largest expected path value under the current belief."""
    return float(belief.path_epvs.max())


def greedy_path(belief: BeliefState) -> tuple[int, ...]:
    """The best-looking path; exact ties break toward the lexicographically first."""
    return belief.spec.paths[int(np.argmax(belief.path_epvs))]


def transition(belief: BeliefState, c: int, truth: GroundTruth) -> tuple[BeliefState, float]:
    """Apply one computation.

    Clicking reveals the node's true value and costs ``click_cost``.
    TERMINATE leaves the belief unchanged and returns the realized return of
    the greedy path under the current belief.
    """
    if c == TERMINATE:
        path = greedy_path(belief)
        return belief, float(sum(truth.rewards[v] for v in path))
    _check_click(belief, c)
    revealed = dict(belief.revealed)
    revealed[c] = float(truth.rewards[c])
    return BeliefState(belief.spec, revealed), -belief.spec.click_cost


def pseudo_reward(b_t: BeliefState, b_next: BeliefState) -> float:
    """Improvement of the post-click greedy plan over the pre-click plan.

    Both plans are valued under the *new* belief, so the quantity is
    non-negative: the new greedy path is by definition at least as good as
    the old one when both are judged with the new information.
    """
    if b_t.spec is not b_next.spec:
        raise ValueError("beliefs belong to different trial specs")
    new = set(b_next.revealed) - set(b_t.revealed)
    if len(new) != 1 or set(b_t.revealed) - set(b_next.revealed):
        raise ValueError("b_next must extend b_t by exactly one revealed node")
    before = greedy_path(b_t)
    after = greedy_path(b_next)
    return expected_path_value(b_next, after) - expected_path_value(b_next, before)


# ---------------------------------------------------------------------------
# Condition environments
# ---------------------------------------------------------------------------

def load_condition_table(path: str | Path | None = None) -> dict:
    with open(path or _TABLE_PATH) as f:
        table = json.load(f)
    for key in ("tree_branching", "conditions"):
        if key not in table:
            raise ValueError(f"condition table missing '{key}'")
    return table


def condition_ids(table: dict | None = None) -> list[str]:
    table = table or load_condition_table()
    return sorted(table["conditions"])


def _build_nodes(branching: Sequence[int]) -> list[Node]:
    nodes = [Node(0, 0, None)]
    next_id = 1

    def grow(parent: int, depth: int):
        nonlocal next_id
        if depth > len(branching):
            return
        for _ in range(branching[depth - 1]):
            nid = next_id
            next_id += 1
            nodes.append(Node(nid, depth, parent))
            grow(nid, depth + 1)

    grow(0, 1)
    return nodes


def build_trial_spec(condition: str, table: dict | None = None,
                     seed: int | None = None) -> TrialSpec:
    """Deterministic TrialSpec for a named condition (structure carries no randomness)."""
    table = table or load_condition_table()
    try:
        cond = table["conditions"][condition]
    except KeyError:
        raise ValueError(f"unknown condition '{condition}'; know {condition_ids(table)}") from None
    nodes = _build_nodes(table["tree_branching"])
    dists = {n.id: Distribution.uniform(cond["depth_supports"][str(n.depth)])
             for n in nodes if n.id != 0}
    return TrialSpec(nodes, dists, cond["click_cost"], condition=condition, seed=seed)


def sample_ground_truth(spec: TrialSpec, rng: np.random.Generator) -> GroundTruth:
    rewards = {}
    for v in spec.non_root_ids:
        d = spec.reward_dists[v]
        rewards[v] = float(rng.choice(d.support, p=d.probs))
    return GroundTruth(rewards)


def make_condition_env(condition: str, seed: int,
                       table: dict | None = None) -> tuple[TrialSpec, GroundTruth]:
    """Build the condition's spec and a ground truth that is deterministic in the seed.

    The condition's index is folded into the stream so equal seeds in
    different conditions still draw different truths.
    """
    table = table or load_condition_table()
    spec = build_trial_spec(condition, table, seed=seed)
    idx = condition_ids(table).index(condition)
    rng = np.random.default_rng(np.random.SeedSequence([idx, int(seed)]))
    return spec, sample_ground_truth(spec, rng)
