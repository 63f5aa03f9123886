"""Feature vectors over (belief, computation) pairs and click-history counts.

Features are evaluated raw, on their natural scales; no normalization is
applied. State-level features (intercept, click count) are constant across
the computations available in a belief, node-level features are 0 for
TERMINATE, and the three habit counts read from a ClickHistory that
accumulates across every click of a session, within and across trials.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .env import TERMINATE, BeliefState, InvalidComputationError, TrialSpec, valid_computations


@dataclass(frozen=True)
class ClickHistory:
    """Cumulative click counts keyed by node id, branch (depth-1 ancestor id),
    and depth level."""

    node_counts: Mapping[int, int] = field(default_factory=dict)
    branch_counts: Mapping[int, int] = field(default_factory=dict)
    level_counts: Mapping[int, int] = field(default_factory=dict)

    @classmethod
    def fresh(cls) -> "ClickHistory":
        return cls({}, {}, {})

    def count_node(self, node: int) -> int:
        return self.node_counts.get(node, 0)

    def count_branch(self, branch: int) -> int:
        return self.branch_counts.get(branch, 0)

    def count_level(self, level: int) -> int:
        return self.level_counts.get(level, 0)

    def to_json_dict(self) -> dict:
        return {"node_counts": {str(k): v for k, v in sorted(self.node_counts.items())},
                "branch_counts": {str(k): v for k, v in sorted(self.branch_counts.items())},
                "level_counts": {str(k): v for k, v in sorted(self.level_counts.items())}}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ClickHistory":
        return cls({int(k): int(v) for k, v in d["node_counts"].items()},
                   {int(k): int(v) for k, v in d["branch_counts"].items()},
                   {int(k): int(v) for k, v in d["level_counts"].items()})


def habit_count_update(h: ClickHistory, spec: TrialSpec, c: int) -> ClickHistory:
    """Increment the node/branch/level counters for a click; TERMINATE is a no-op."""
    if c == TERMINATE:
        return h
    if c not in spec.branch_of:
        raise InvalidComputationError(f"unknown node id {c}")
    node = dict(h.node_counts)
    branch = dict(h.branch_counts)
    level = dict(h.level_counts)
    node[c] = node.get(c, 0) + 1
    br = spec.branch_of[c]
    branch[br] = branch.get(br, 0) + 1
    lv = spec.depth_of[c]
    level[lv] = level.get(lv, 0) + 1
    return ClickHistory(node, branch, level)


class _Ctx:
    """Evaluation context for one (belief, computation); caches per-belief stats."""

    __slots__ = ("belief", "spec", "c", "history", "_path_max", "_path_min")

    def __init__(self, belief: BeliefState, history: ClickHistory):
        self.belief = belief
        self.spec = belief.spec
        self.history = history
        self.c = TERMINATE
        self._path_max = None
        self._path_min = None

    @property
    def path_max(self) -> np.ndarray:
        if self._path_max is None:
            rv = self.belief.revealed
            self._path_max = np.array(
                [sum(rv.get(v, self.spec.reward_dists[v].vmax) for v in p)
                 for p in self.spec.paths])
        return self._path_max

    @property
    def path_min(self) -> np.ndarray:
        if self._path_min is None:
            rv = self.belief.revealed
            self._path_min = np.array(
                [sum(rv.get(v, self.spec.reward_dists[v].vmin) for v in p)
                 for p in self.spec.paths])
        return self._path_min

    def best_epv_through(self, node: int) -> float:
        idx = self.spec.paths_through[node]
        return float(max(self.belief.path_epvs[i] for i in idx))


def _f_intercept(ctx, reg):
    return 1.0


def _f_is_terminate(ctx, reg):
    return 1.0 if ctx.c == TERMINATE else 0.0


def _f_click_cost(ctx, reg):
    return ctx.spec.click_cost if ctx.c != TERMINATE else 0.0


def _f_depth(ctx, reg):
    return float(ctx.spec.depth_of[ctx.c]) if ctx.c != TERMINATE else 0.0


def _f_is_depth_one(ctx, reg):
    return 1.0 if ctx.c != TERMINATE and ctx.spec.depth_of[ctx.c] == 1 else 0.0


def _f_is_max_depth(ctx, reg):
    return 1.0 if ctx.c != TERMINATE and ctx.spec.depth_of[ctx.c] == ctx.spec.max_depth else 0.0


def _f_node_variance(ctx, reg):
    return ctx.spec.reward_dists[ctx.c].variance if ctx.c != TERMINATE else 0.0


def _f_best_path_epv_through(ctx, reg):
    return ctx.best_epv_through(ctx.c) if ctx.c != TERMINATE else 0.0


def _f_max_path_through(ctx, reg):
    if ctx.c == TERMINATE:
        return 0.0
    return float(max(ctx.path_max[i] for i in ctx.spec.paths_through[ctx.c]))


def _f_min_path_through(ctx, reg):
    if ctx.c == TERMINATE:
        return 0.0
    return float(min(ctx.path_min[i] for i in ctx.spec.paths_through[ctx.c]))


def _f_prune(ctx, reg):
    if ctx.c == TERMINATE:
        return 0.0
    return 1.0 if ctx.best_epv_through(ctx.c) < reg.prune_threshold else 0.0


def _f_parent_revealed(ctx, reg):
    if ctx.c == TERMINATE:
        return 0.0
    parent = ctx.spec.parent_of[ctx.c]
    return 1.0 if parent == 0 or parent in ctx.belief.revealed else 0.0


def _f_n_clicks(ctx, reg):
    return float(ctx.belief.n_clicks)


def _f_habit_same_node(ctx, reg):
    return float(ctx.history.count_node(ctx.c)) if ctx.c != TERMINATE else 0.0


def _f_habit_same_branch(ctx, reg):
    if ctx.c == TERMINATE:
        return 0.0
    return float(ctx.history.count_branch(ctx.spec.branch_of[ctx.c]))


def _f_habit_same_level(ctx, reg):
    if ctx.c == TERMINATE:
        return 0.0
    return float(ctx.history.count_level(ctx.spec.depth_of[ctx.c]))


_DEFAULT_FEATURES: tuple[tuple[str, Callable], ...] = (
    ("intercept", _f_intercept),
    ("is_terminate", _f_is_terminate),
    ("click_cost", _f_click_cost),
    ("depth", _f_depth),
    ("is_depth_one", _f_is_depth_one),
    ("is_max_depth", _f_is_max_depth),
    ("node_variance", _f_node_variance),
    ("best_path_epv_through", _f_best_path_epv_through),
    ("max_path_through", _f_max_path_through),
    ("min_path_through", _f_min_path_through),
    ("prune_indicator", _f_prune),
    ("parent_revealed", _f_parent_revealed),
    ("n_clicks", _f_n_clicks),
    ("habit_same_node", _f_habit_same_node),
    ("habit_same_branch", _f_habit_same_branch),
    ("habit_same_level", _f_habit_same_level),
)


class FeatureRegistry:
    """Ordered, named feature set. Fit results are only comparable within one
    registry name@version."""

    def __init__(self, name: str, version: int,
                 features: Sequence[tuple[str, Callable]], prune_threshold: float = 0.0):
        self.name = name
        self.version = int(version)
        self.feature_names = tuple(n for n, _ in features)
        self._fns = tuple(f for _, f in features)
        self.prune_threshold = float(prune_threshold)
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("duplicate feature names")

    @property
    def id(self) -> str:
        return f"{self.name}@{self.version}"

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    def index_of(self, name: str) -> int:
        return self.feature_names.index(name)

    @property
    def habit_indices(self) -> tuple[int, ...]:
        return tuple(i for i, n in enumerate(self.feature_names) if n.startswith("habit_"))

    def manifest(self) -> dict:
        return {"schema": "registry@1", "name": self.name, "version": self.version,
                "prune_threshold": self.prune_threshold,
                "features": list(self.feature_names)}


def default_registry(prune_threshold: float = 0.0) -> FeatureRegistry:
    return FeatureRegistry("default", 1, _DEFAULT_FEATURES, prune_threshold)


def get_registry(registry_id: str) -> FeatureRegistry:
    if registry_id == "default@1":
        return default_registry()
    raise ValueError(f"unknown feature registry '{registry_id}'")


def compute_features(belief: BeliefState, c: int, history: ClickHistory | None,
                     registry: FeatureRegistry) -> np.ndarray:
    """Feature vector for one computation; raises for computations invalid in ``belief``."""
    if c != TERMINATE and (c in belief.revealed or c not in belief.spec.branch_of):
        raise InvalidComputationError(f"computation {c} is not valid in this belief")
    ctx = _Ctx(belief, history or ClickHistory.fresh())
    ctx.c = c
    return np.array([fn(ctx, registry) for fn in registry._fns])


def feature_matrix(belief: BeliefState, actions: Sequence[int],
                   history: ClickHistory | None,
                   registry: FeatureRegistry) -> np.ndarray:
    """Rows of features for each action, sharing one per-belief cache."""
    ctx = _Ctx(belief, history or ClickHistory.fresh())
    out = np.empty((len(actions), registry.dim))
    valid = set(valid_computations(belief))
    for i, c in enumerate(actions):
        if c not in valid:
            raise InvalidComputationError(f"computation {c} is not valid in this belief")
        ctx.c = c
        for j, fn in enumerate(registry._fns):
            out[i, j] = fn(ctx, registry)
    return out
