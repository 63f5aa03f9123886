"""Tests for the model grid, stopping rules, and shared decision pipeline."""

import numpy as np
import pytest
from scipy.special import expit, logsumexp

from metaplan.env import (
    TERMINATE,
    BeliefState,
    GroundTruth,
    best_path_value,
    transition,
    valid_computations,
)
from metaplan.features import ClickHistory, default_registry, feature_matrix, habit_count_update
from metaplan.learners import (
    LvocParams,
    LvocState,
    ReinforceState,
    habit_policy,
    linear_policy,
    lvoc_choice_probs,
    softmax_policy,
)
from metaplan.metacontrol import (
    AgentState,
    Decision,
    DecisionContext,
    ModelConfig,
    ScoreMemory,
    build_grid,
    choice_probabilities,
    decision_context,
    effective_meta_reward,
    effective_reward,
    grid_manifest,
    init_learner_state,
    lvoc_bootstrap_value,
    meta_step,
    parse_model_id,
    reinforce_decision_gradient,
    required_params,
    stop_probability,
    tempered_sigmoid,
    update_lvoc,
    update_reinforce,
)

from test_env import chain_spec, two_leaf_spec

REG = default_registry()


# ---------------------------------------------------------------------------
# Stopping rules
# ---------------------------------------------------------------------------

def test_tempered_sigmoid_matches_expit():
    for x in (-3.0, -0.5, 0.0, 1.7, 9.0):
        for tau in (0.25, 1.0, 4.0):
            assert tempered_sigmoid(x, tau) == pytest.approx(expit(x / tau), abs=1e-12)
    assert tempered_sigmoid(0.0, 1.0) == pytest.approx(0.5)
    assert tempered_sigmoid(1e9, 1.0) == pytest.approx(1.0)
    assert tempered_sigmoid(-1e9, 1.0) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        tempered_sigmoid(1.0, 0.0)


def test_score_memory_running_mean():
    m = ScoreMemory()
    assert m.mean == 0.0 and m.count == 0
    m = m.record(4.0).record(-1.0)
    assert m.count == 2
    assert m.mean == pytest.approx(1.5)


def test_fixed_rule_crosses_half_at_aspiration():
    theta = {"s1_eta": 0.25, "s1_tau": 1.0}
    mem = ScoreMemory()
    # frac = (mm + 10) / 20 equals eta exactly at mm = -5
    p = stop_probability("fixed", theta, -5.0, 0, -10.0, 10.0, mem)
    assert p == pytest.approx(0.5)
    p0 = stop_probability("fixed", theta, 0.0, 0, -10.0, 10.0, mem)
    assert p0 == pytest.approx(expit(0.5 - 0.25))
    scan = [stop_probability("fixed", theta, mm, 0, -10.0, 10.0, mem)
            for mm in np.linspace(-10, 10, 21)]
    assert all(b > a for a, b in zip(scan, scan[1:]))


def test_decreasing_rule_relaxes_with_clicks():
    theta = {"s1_a": np.log(2.0), "s1_b": 0.0, "s1_tau": 2.0}
    mem = ScoreMemory()
    # aspiration = 2 - n_clicks, so mm = 0 sits 1 below it after one click
    p1 = stop_probability("decreasing", theta, 0.0, 1, -10.0, 10.0, mem)
    assert p1 == pytest.approx(expit(-0.5))
    ps = [stop_probability("decreasing", theta, 0.0, n, -10.0, 10.0, mem)
          for n in range(6)]
    assert all(b > a for a, b in zip(ps, ps[1:]))
    assert stop_probability("decreasing", theta, 2.0, 0, -10, 10, mem) == pytest.approx(0.5)


def test_past_rule_marginal_matches_monte_carlo():
    theta = {"s1_eta": 2.0, "s1_tau": 1.5}
    mem = ScoreMemory().record(0.0).record(1.0).record(2.0)  # mean 1, count 3
    p = stop_probability("past", theta, 0.4, 0, -10.0, 10.0, mem)
    rng = np.random.default_rng(7)
    draws = rng.normal(mem.mean, 2.0 / np.sqrt(4), size=2_000_000)
    mc = expit((0.4 - draws) / 1.5).mean()
    assert p == pytest.approx(mc, abs=2e-3)


def test_past_rule_noise_free_reduces_to_sigmoid():
    theta = {"s1_eta": 0.0, "s1_tau": 0.5}
    mem = ScoreMemory().record(3.0)
    p = stop_probability("past", theta, 4.0, 0, -10.0, 10.0, mem)
    assert p == pytest.approx(expit((4.0 - 3.0) / 0.5), abs=1e-12)


def test_unknown_rule_rejected():
    with pytest.raises(ValueError):
        stop_probability("sometimes", {"s1_tau": 1.0}, 0, 0, -1, 1, ScoreMemory())


# ---------------------------------------------------------------------------
# Configs and the grid
# ---------------------------------------------------------------------------

def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig("qlearning")
    with pytest.raises(ValueError):
        ModelConfig("habit", pseudo_rewards=True)
    with pytest.raises(ValueError):
        ModelConfig("nonlearning", stage1="fixed")
    with pytest.raises(ValueError):
        ModelConfig("reinforce", stage1="fixed", td_terminal=True)
    with pytest.raises(ValueError):
        ModelConfig("lvoc", stage1="always")


def test_model_ids_round_trip():
    for cfg in build_grid():
        assert parse_model_id(cfg.model_id) == cfg
    assert ModelConfig("reinforce", "fixed", True, False).model_id == "reinforce-s1fix-pr"
    assert ModelConfig("lvoc", None, True, True).model_id == "lvoc-pr-td"
    for bad in ("foo", "habit-pr", "reinforce-td-td", "reinforce-s1fix-s1dec"):
        with pytest.raises(ValueError):
            parse_model_id(bad)


def test_grid_contents():
    grid = build_grid()
    ids = [cfg.model_id for cfg in grid]
    assert len(grid) == 22
    assert len(set(ids)) == 22
    for expected in ("reinforce", "reinforce-pr-td", "reinforce-s1past-pr",
                     "lvoc", "lvoc-s1dec", "habit", "nonlearning"):
        assert expected in ids
    assert sum(cfg.base == "reinforce" for cfg in grid) == 10
    assert sum(cfg.base == "lvoc" for cfg in grid) == 10


def test_required_params_counts():
    assert len(required_params(ModelConfig("reinforce"), REG)) == 3
    assert len(required_params(ModelConfig("lvoc"), REG)) == 3
    assert len(required_params(ModelConfig("habit"), REG)) == 5
    assert len(required_params(ModelConfig("nonlearning"), REG)) == REG.dim + 1
    assert required_params(ModelConfig("reinforce", "fixed"), REG)[-2:] == ("s1_eta", "s1_tau")
    assert len(required_params(ModelConfig("lvoc", "decreasing"), REG)) == 6
    assert len(required_params(ModelConfig("reinforce", "past"), REG)) == 5


def test_grid_manifest_lists_every_model():
    man = grid_manifest(REG)
    assert man["schema"] == "grid@1"
    assert man["registry"] == REG.id
    assert len(man["models"]) == 22
    by_id = {m["id"]: m for m in man["models"]}
    assert by_id["lvoc-s1fix"]["params"] == ["mu_prior", "sigma_prior", "n_samples",
                                             "s1_eta", "s1_tau"]


# ---------------------------------------------------------------------------
# Decision contexts
# ---------------------------------------------------------------------------

def test_decision_context_layout():
    spec = chain_spec()
    b = BeliefState(spec, {1: 2.0})
    h = habit_count_update(ClickHistory.fresh(), spec, 1)
    ctx = decision_context(b, h, REG)
    assert ctx.actions == tuple(valid_computations(b))
    assert ctx.actions[0] == TERMINATE
    assert ctx.mm == pytest.approx(best_path_value(b))
    assert ctx.n_clicks == 1
    assert ctx.v_min == spec.v_min and ctx.v_max == spec.v_max
    cols = list(REG.habit_indices)
    assert np.all(ctx.F0[:, cols] == 0.0)
    # the real-history matrix remembers the click on node 1
    i1 = ctx.actions.index(2)  # node 2 shares node 1's branch
    assert ctx.F[i1, REG.index_of("habit_same_branch")] == 1.0
    other = ctx.F0.copy()
    other[:, cols] = ctx.F[:, cols]
    np.testing.assert_array_equal(other, ctx.F)


def test_effective_reward_uses_flag():
    ctx = decision_context(BeliefState(two_leaf_spec(), {}), ClickHistory.fresh(), REG)
    dec = Decision(ctx, chosen=1, reward=-1.0, pr=2.5)
    assert effective_reward(ModelConfig("reinforce"), dec) == -1.0
    assert effective_reward(ModelConfig("reinforce", pseudo_rewards=True), dec) == 1.5


# ---------------------------------------------------------------------------
# Choice probabilities
# ---------------------------------------------------------------------------

def _ctx(spec, revealed=None, history=None):
    b = BeliefState(spec, revealed or {})
    return decision_context(b, history or ClickHistory.fresh(), REG), b


def test_single_action_is_certain_for_every_base():
    spec = two_leaf_spec()
    b = BeliefState(spec, {1: 3.0, 2: -4.0})
    ctx = decision_context(b, ClickHistory.fresh(), REG)
    assert ctx.actions == (TERMINATE,)
    rng = np.random.default_rng(0)
    for cfg in build_grid():
        theta = {name: 0.5 for name in required_params(cfg, REG)}
        theta["n_samples"] = 2
        state = init_learner_state(cfg, theta, REG, np.random.default_rng(1))
        probs = choice_probabilities(cfg, theta, ctx, state, ScoreMemory(), REG, rng)
        np.testing.assert_array_equal(probs, [1.0])


def test_habit_probabilities_match_direct_policy():
    spec = two_leaf_spec()
    h = ClickHistory.fresh()
    for c in (1, 1, 2):
        h = habit_count_update(h, spec, c)
    ctx, b = _ctx(spec, history=h)
    theta = {"w_same_node": 0.7, "w_same_branch": 0.2, "w_same_level": -0.1,
             "terminate_bias": 0.4, "tau": 1.3}
    probs = choice_probabilities(ModelConfig("habit"), theta, ctx, None,
                                 ScoreMemory(), REG)
    from metaplan.learners import HabitWeights
    actions, direct = habit_policy(b, h, HabitWeights(0.7, 0.2, -0.1, 0.4), tau=1.3)
    assert list(ctx.actions) == actions
    np.testing.assert_allclose(probs, direct, atol=1e-12)


def test_nonlearning_probabilities_match_linear_policy():
    ctx, b = _ctx(two_leaf_spec())
    rng = np.random.default_rng(3)
    w = rng.normal(size=REG.dim)
    theta = {f"w{i}": w[i] for i in range(REG.dim)}
    theta["tau"] = 0.8
    probs = choice_probabilities(ModelConfig("nonlearning"), theta, ctx, None,
                                 ScoreMemory(), REG)
    actions, direct = linear_policy(b, w, 0.8, REG)
    np.testing.assert_allclose(probs, direct, atol=1e-12)


def test_reinforce_plain_and_pinned_terminal():
    ctx, b = _ctx(two_leaf_spec(), revealed={1: 6.0})
    rng = np.random.default_rng(4)
    state = ReinforceState.init(REG.dim, rng)
    theta = {"alpha": 0.1, "gamma": 1.0, "tau": 2.0}
    plain = choice_probabilities(ModelConfig("reinforce"), theta, ctx, state,
                                 ScoreMemory(), REG)
    _, direct = linear_policy(b, state.w, 2.0, REG)
    np.testing.assert_allclose(plain, direct, atol=1e-12)

    pinned = choice_probabilities(ModelConfig("reinforce", td_terminal=True),
                                  theta, ctx, state, ScoreMemory(), REG)
    values = ctx.F0 @ state.w
    values[0] = ctx.mm
    np.testing.assert_allclose(pinned, softmax_policy(values, 2.0), atol=1e-12)


def test_reinforce_stage1_composition_by_hand():
    ctx, _ = _ctx(two_leaf_spec())
    state = ReinforceState(np.zeros(REG.dim), None)
    theta = {"alpha": 0.1, "gamma": 1.0, "tau": 1.0, "s1_eta": 0.25, "s1_tau": 1.0}
    probs = choice_probabilities(ModelConfig("reinforce", "fixed"), theta, ctx,
                                 state, ScoreMemory(), REG)
    # mm = 0 in the middle of [-10, 10], so frac = 0.5 and p = expit(0.25);
    # zero weights split the rest evenly over the two clicks
    p = expit(0.25)
    np.testing.assert_allclose(probs, [p, (1 - p) / 2, (1 - p) / 2], atol=1e-12)
    assert probs.sum() == pytest.approx(1.0)


def test_lvoc_pinned_terminal_dominates_when_mm_is_huge():
    ctx, _ = _ctx(two_leaf_spec())
    huge = DecisionContext(ctx.actions, ctx.F, ctx.F0, 1e6, ctx.n_clicks,
                           ctx.v_min, ctx.v_max)
    theta = {"mu_prior": 0.0, "sigma_prior": 1.0, "n_samples": 2}
    state = init_learner_state(ModelConfig("lvoc"), theta, REG, np.random.default_rng(0))
    probs = choice_probabilities(ModelConfig("lvoc", td_terminal=True), theta,
                                 huge, state, ScoreMemory(), REG,
                                 np.random.default_rng(5))
    assert probs[0] == pytest.approx(1.0)


def test_lvoc_stage1_composes_stop_mass_with_click_replay():
    ctx, _ = _ctx(two_leaf_spec())
    theta = {"mu_prior": 0.0, "sigma_prior": 1.0, "n_samples": 2,
             "s1_eta": 0.25, "s1_tau": 1.0}
    cfg = ModelConfig("lvoc", "fixed")
    state = init_learner_state(cfg, theta, REG, np.random.default_rng(0))
    probs = choice_probabilities(cfg, theta, ctx, state, ScoreMemory(), REG,
                                 np.random.default_rng(6), replays=512)
    p = expit(0.25)
    assert probs[0] == pytest.approx(p, abs=1e-12)
    clicks = lvoc_choice_probs(state, ctx.F0[1:], 2, np.random.default_rng(6),
                               replays=512)
    np.testing.assert_allclose(probs[1:], (1 - p) * clicks, atol=1e-12)


def test_lvoc_without_generator_rejected():
    ctx, _ = _ctx(two_leaf_spec())
    theta = {"mu_prior": 0.0, "sigma_prior": 1.0, "n_samples": 1}
    state = init_learner_state(ModelConfig("lvoc"), theta, REG, np.random.default_rng(0))
    with pytest.raises(ValueError):
        choice_probabilities(ModelConfig("lvoc"), theta, ctx, state,
                             ScoreMemory(), REG, rng=None)


# ---------------------------------------------------------------------------
# Gradients under the mechanism flags
# ---------------------------------------------------------------------------

def _fd_grad(fn, w, h=1e-6):
    g = np.zeros_like(w)
    for i in range(w.size):
        up, dn = w.copy(), w.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (fn(up) - fn(dn)) / (2 * h)
    return g


def test_pinned_terminal_gradient_matches_finite_differences():
    ctx, _ = _ctx(two_leaf_spec(), revealed={1: 2.0})
    rng = np.random.default_rng(8)
    w = rng.normal(size=REG.dim)
    theta = {"alpha": 0.1, "gamma": 1.0, "tau": 1.7}
    cfg = ModelConfig("reinforce", td_terminal=True)
    for chosen in range(len(ctx.actions)):
        dec = Decision(ctx, chosen=chosen, reward=0.0)

        def logpi(wv, chosen=chosen):
            values = ctx.F0 @ wv
            values[0] = ctx.mm
            z = values / 1.7
            return z[chosen] - logsumexp(z)

        np.testing.assert_allclose(reinforce_decision_gradient(cfg, theta, w, dec),
                                   _fd_grad(logpi, w), atol=1e-6)


def test_stage1_gradient_is_click_only_and_zero_for_stops():
    ctx, _ = _ctx(two_leaf_spec())
    rng = np.random.default_rng(9)
    w = rng.normal(size=REG.dim)
    theta = {"alpha": 0.1, "gamma": 1.0, "tau": 0.9,
             "s1_eta": 0.3, "s1_tau": 1.0}
    cfg = ModelConfig("reinforce", "fixed")
    stop = Decision(ctx, chosen=0, reward=0.0)
    np.testing.assert_array_equal(reinforce_decision_gradient(cfg, theta, w, stop),
                                  np.zeros(REG.dim))

    p_stop = stop_probability("fixed", theta, ctx.mm, 0, ctx.v_min, ctx.v_max,
                              ScoreMemory())
    for chosen in (1, 2):
        dec = Decision(ctx, chosen=chosen, reward=-1.0)

        def logpi(wv, chosen=chosen):
            z = (ctx.F0[1:] @ wv) / 0.9
            return np.log(1 - p_stop) + z[chosen - 1] - logsumexp(z)

        np.testing.assert_allclose(reinforce_decision_gradient(cfg, theta, w, dec),
                                   _fd_grad(logpi, w), atol=1e-6)


def test_update_reinforce_composes_coefficients_gradients_and_adam():
    spec = two_leaf_spec()
    truth = GroundTruth({1: -10.0, 2: 10.0})
    b0 = BeliefState(spec, {})
    ctx0 = decision_context(b0, ClickHistory.fresh(), REG)
    b1, r_click = transition(b0, 2, truth)
    ctx1 = decision_context(b1, ClickHistory.fresh(), REG)
    _, r_term = transition(b1, TERMINATE, truth)
    decs = [Decision(ctx0, chosen=ctx0.actions.index(2), reward=r_click),
            Decision(ctx1, chosen=0, reward=r_term)]
    theta = {"alpha": 0.05, "gamma": 0.8, "tau": 1.3}
    cfg = ModelConfig("reinforce")
    from metaplan.learners import CREDIT_RETURN, AdamState, step_coefficients
    rng = np.random.default_rng(17)
    w0 = rng.normal(size=REG.dim)
    state = ReinforceState(w0.copy(), AdamState.zeros(REG.dim))
    new = update_reinforce(cfg, theta, state, decs)

    coeffs = step_coefficients([r_click, r_term], 0.8, CREDIT_RETURN)
    g = sum(c * reinforce_decision_gradient(cfg, theta, w0, d)
            for c, d in zip(coeffs, decs))
    mirror = AdamState.zeros(REG.dim)
    inc = mirror.ascend(g, 0.05)
    np.testing.assert_allclose(new.w, w0 + inc, atol=1e-12)


def test_update_reinforce_zero_rewards_keep_weights():
    ctx, _ = _ctx(two_leaf_spec())
    decs = [Decision(ctx, chosen=1, reward=0.0), Decision(ctx, chosen=0, reward=0.0)]
    theta = {"alpha": 0.1, "gamma": 0.9, "tau": 1.0}
    from metaplan.learners import AdamState
    state = ReinforceState(np.full(REG.dim, 0.2), AdamState.zeros(REG.dim))
    new = update_reinforce(ModelConfig("reinforce"), theta, state, decs)
    np.testing.assert_array_equal(new.w, state.w)


# ---------------------------------------------------------------------------
# Value-learner updates under the flags
# ---------------------------------------------------------------------------

def test_lvoc_terminal_experience_only_learned_by_plain_config():
    ctx, _ = _ctx(two_leaf_spec(), revealed={1: 5.0})
    theta = {"mu_prior": 0.0, "sigma_prior": 2.0, "n_samples": 1,
             "s1_eta": 0.2, "s1_tau": 1.0}
    dec = Decision(ctx, chosen=0, reward=ctx.mm)
    rng = np.random.default_rng(11)
    s0 = LvocState.from_prior(LvocParams(0.0, 2.0, 1), REG.dim)
    plain = update_lvoc(ModelConfig("lvoc"), theta, s0, dec, None, rng)
    assert not np.allclose(plain.mean, s0.mean)
    for cfg in (ModelConfig("lvoc", "fixed"), ModelConfig("lvoc", td_terminal=True)):
        same = update_lvoc(cfg, theta, s0, dec, None, np.random.default_rng(11))
        np.testing.assert_array_equal(same.mean, s0.mean)
        np.testing.assert_array_equal(same.cov, s0.cov)


def test_lvoc_click_update_targets_reward_plus_bootstrap():
    spec = two_leaf_spec()
    b0 = BeliefState(spec, {})
    ctx0 = decision_context(b0, ClickHistory.fresh(), REG)
    b1 = BeliefState(spec, {1: 4.0})
    ctx1 = decision_context(b1, ClickHistory.fresh(), REG)
    theta = {"mu_prior": 0.5, "sigma_prior": 2.0, "n_samples": 3}
    s0 = LvocState.from_prior(LvocParams(0.5, 2.0, 3), REG.dim)
    dec = Decision(ctx0, chosen=1, reward=-1.0, pr=0.8)
    cfg = ModelConfig("lvoc", pseudo_rewards=True)
    boot = lvoc_bootstrap_value(cfg, theta, s0, ctx1, np.random.default_rng(21))
    out = update_lvoc(cfg, theta, s0, dec, ctx1, np.random.default_rng(21))
    from metaplan.learners import lvoc_update_row
    want = lvoc_update_row(s0, ctx0.F0[1], (-1.0 + 0.8) + boot, 1.0)
    np.testing.assert_allclose(out.mean, want.mean, atol=1e-12)
    np.testing.assert_allclose(out.cov, want.cov, atol=1e-12)


def test_lvoc_bootstrap_respects_flags():
    spec = two_leaf_spec()
    done = BeliefState(spec, {1: 3.0, 2: -6.0})
    ctx_done = decision_context(done, ClickHistory.fresh(), REG)
    theta = {"mu_prior": 0.0, "sigma_prior": 1.0, "n_samples": 1,
             "s1_eta": 0.2, "s1_tau": 1.0}
    s0 = LvocState.from_prior(LvocParams(0.0, 1.0, 1), REG.dim)
    v = lvoc_bootstrap_value(ModelConfig("lvoc", "fixed"), theta, s0, ctx_done,
                             np.random.default_rng(2))
    assert v == pytest.approx(ctx_done.mm)

    ctx, _ = _ctx(spec)
    big = DecisionContext(ctx.actions, ctx.F, ctx.F0, 1e7, ctx.n_clicks,
                          ctx.v_min, ctx.v_max)
    v_td = lvoc_bootstrap_value(ModelConfig("lvoc", td_terminal=True), theta,
                                s0, big, np.random.default_rng(2))
    assert v_td == pytest.approx(1e7)


def test_fixed_rule_rejects_degenerate_range():
    with pytest.raises(ValueError):
        stop_probability("fixed", {"s1_eta": 0.5, "s1_tau": 1.0}, 0.0, 0,
                         3.0, 3.0, ScoreMemory())


def test_effective_meta_reward_flag_and_identity():
    spec = two_leaf_spec()
    b0 = BeliefState(spec, {})
    truth = GroundTruth({1: -10.0, 2: 10.0})
    b1, r = transition(b0, 2, truth)
    plain = ModelConfig("reinforce")
    pr_cfg = ModelConfig("reinforce", pseudo_rewards=True)
    assert effective_meta_reward(plain, r, b0, b1) == r
    # revealing +10 switches the greedy plan from the unrevealed tie to node 2
    assert effective_meta_reward(pr_cfg, r, b0, b1) == pytest.approx(r + 10.0)
    assert effective_meta_reward(pr_cfg, 5.0, b1, b1) == 5.0
    assert effective_meta_reward(pr_cfg, 5.0, b1) == 5.0


def test_meta_step_two_stage_composition():
    spec = two_leaf_spec()
    b = BeliefState(spec, {})
    theta = {"alpha": 0.1, "gamma": 1.0, "tau": 1.0, "s1_eta": 0.25, "s1_tau": 1.0}
    cfg = ModelConfig("reinforce", "fixed")
    state = AgentState(ReinforceState(np.zeros(REG.dim), None),
                       ClickHistory.fresh(), ScoreMemory())
    p = expit(0.25)
    want = {TERMINATE: p, 1: (1 - p) / 2, 2: (1 - p) / 2}
    rng = np.random.default_rng(31)
    counts = {TERMINATE: 0, 1: 0, 2: 0}
    for _ in range(4000):
        c, logp, ctx = meta_step(cfg, theta, state, b, REG, rng)
        counts[c] += 1
        assert np.exp(logp) == pytest.approx(want[c], abs=1e-12)
        assert ctx.actions == (TERMINATE, 1, 2)
    for c, n in counts.items():
        assert n / 4000 == pytest.approx(want[c], abs=0.03)


def test_meta_step_forced_stop_has_log_probability_zero():
    spec = two_leaf_spec()
    b = BeliefState(spec, {1: 1.0, 2: 2.0})
    theta = {"alpha": 0.1, "gamma": 1.0, "tau": 1.0}
    state = AgentState(ReinforceState(np.zeros(REG.dim), None),
                       ClickHistory.fresh(), ScoreMemory())
    c, logp, _ = meta_step(ModelConfig("reinforce"), theta, state, b, REG,
                           np.random.default_rng(0))
    assert c == TERMINATE
    assert logp == 0.0


def test_init_learner_state_kinds():
    rng = np.random.default_rng(1)
    assert init_learner_state(ModelConfig("habit"), {}, REG, rng) is None
    assert init_learner_state(ModelConfig("nonlearning"), {}, REG, rng) is None
    r = init_learner_state(ModelConfig("reinforce"), {"alpha": 0.1}, REG, rng)
    assert isinstance(r, ReinforceState) and r.w.shape == (REG.dim,)
    theta = {"mu_prior": 1.5, "sigma_prior": 3.0, "n_samples": 2}
    v = init_learner_state(ModelConfig("lvoc"), theta, REG, rng)
    assert isinstance(v, LvocState)
    np.testing.assert_allclose(v.mean, 1.5)
    np.testing.assert_allclose(np.diag(v.cov), 3.0)
