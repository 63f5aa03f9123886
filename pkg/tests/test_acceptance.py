"""Workbench acceptance gate.

Numeric oracles for the learner updates and statistics, whole-pipeline
model recovery, qualitative trend directions from simulated cohorts,
byte-determinism of the command-line verbs, and the live collection
round trip. Each check pins its tolerance and its time budget.
"""

import json
import math
import threading
import time
import urllib.error
import urllib.request
from functools import lru_cache

import numpy as np
import pytest

from metaplan.cli import main
from metaplan.env import (
    TERMINATE,
    BeliefState,
    GroundTruth,
    build_trial_spec,
    greedy_path,
    pseudo_reward,
    sample_ground_truth,
    transition,
    valid_computations,
)
from metaplan.features import default_registry, feature_matrix
from metaplan.fitkit import (
    PROB_FLOOR,
    ParticipantRecord,
    TrialRecord,
    fit_participant,
    ingest_records,
    sequence_loglik,
)
from metaplan.learners import (
    LvocParams,
    LvocState,
    MetaExperience,
    lvoc_learn,
    reinforce_grad_logpi,
    softmax_policy,
)
from metaplan.metacontrol import ModelConfig, ScoreMemory, parse_model_id, stop_probability, tempered_sigmoid
from metaplan.modelselect import bic, family_bms, family_evidence, mann_kendall, rfx_bms
from metaplan.simlab import DEFAULT_SIM_PARAMS, aggregate_curves, simulate_cohort

from test_env import two_leaf_spec

REG = default_registry()
FAR = build_trial_spec("exp1-far")
MASTER_SEED = 12


def random_belief(rng, spec=FAR, max_clicks=12):
    truth = sample_ground_truth(spec, rng)
    b = BeliefState(spec, {})
    for _ in range(int(rng.integers(0, max_clicks))):
        clicks = [c for c in valid_computations(b) if c != TERMINATE]
        if not clicks:
            break
        b, _ = transition(b, int(rng.choice(clicks)), truth)
    return b, truth


# ---------------------------------------------------------------------------
# learner oracles
# ---------------------------------------------------------------------------

def test_policy_gradient_matches_central_differences():
    def logpi(b, c, w, tau):
        acts = valid_computations(b)
        F = feature_matrix(b, acts, None, REG)
        return math.log(softmax_policy(F @ w, tau)[acts.index(c)])

    rng = np.random.default_rng(0)
    start = time.time()
    for _ in range(100):
        b, _ = random_belief(rng)
        acts = valid_computations(b)
        F = feature_matrix(b, acts, None, REG)
        tau = float(rng.uniform(1.0, 5.0))
        w = rng.normal(0.0, 1.0, REG.dim)
        scale = float(np.abs(F @ w).max())
        if scale > 5.0 * tau:
            w *= 5.0 * tau / scale  # keep the softmax off the saturated cliff
        c = int(rng.choice(acts))
        g = reinforce_grad_logpi(b, c, w, tau, REG)

        # Per-dimension steps sized by the feature column magnitude keep the
        # cubic truncation term of the central difference uniformly small.
        col = np.maximum(np.abs(F).max(axis=0), 1.0)
        fd = np.empty_like(g)
        for k in range(REG.dim):
            h = 1e-5 * tau / col[k]
            e = np.zeros(REG.dim)
            e[k] = h
            fd[k] = (logpi(b, c, w + e, tau) - logpi(b, c, w - e, tau)) / (2 * h)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-5
    assert time.time() - start < 10.0


def test_bayesian_learner_matches_batch_posterior():
    lowvar = build_trial_spec("exp2-lowcost-lowvariance")
    rng = np.random.default_rng(1)
    start = time.time()
    for _ in range(50):
        params = LvocParams(prior_mean=float(rng.normal(0.0, 1.0)),
                            prior_var=float(rng.uniform(0.5, 2.0)) ** 2,
                            n_samples=1,
                            obs_noise_var=float(rng.uniform(0.5, 2.0)) ** 2)
        state = LvocState.from_prior(params, REG.dim)
        rows, targets = [], []
        for _ in range(int(rng.integers(5, 20))):
            b, _ = random_belief(rng, lowvar)
            acts = valid_computations(b)
            c = int(rng.choice(acts))
            y = float(rng.normal(0.0, 5.0))
            rows.append(feature_matrix(b, [c], None, REG)[0])
            targets.append(y)
            state = lvoc_learn(MetaExperience(b, c, y), state, params, REG)

        X = np.asarray(rows)
        y = np.asarray(targets)
        lam0 = np.eye(REG.dim) / params.prior_var
        lam = lam0 + X.T @ X / params.obs_noise_var
        mean = np.linalg.solve(lam, lam0 @ np.full(REG.dim, params.prior_mean)
                               + X.T @ y / params.obs_noise_var)
        cov = np.linalg.inv(lam)
        assert np.abs(state.mean - mean).max() < 1e-8
        assert np.abs(state.cov - cov).max() < 1e-8
    assert time.time() - start < 10.0


def test_pseudo_reward_nonnegative_zero_stable_and_tiebreak():
    rng = np.random.default_rng(2)
    start = time.time()
    unchanged = 0
    for _ in range(10_000):
        b, truth = random_belief(rng, max_clicks=11)
        clicks = [c for c in valid_computations(b) if c != TERMINATE]
        c = int(rng.choice(clicks))
        b_next, _ = transition(b, c, truth)
        pr = pseudo_reward(b, b_next)
        assert pr >= 0.0
        if greedy_path(b) == greedy_path(b_next):
            unchanged += 1
            assert pr == 0.0
    assert unchanged > 100  # the zero branch is actually exercised

    # Tied leaves break toward the lower id, so revealing +10 on the other
    # leaf swings the plan and is worth exactly +10.
    spec = two_leaf_spec()
    b0 = BeliefState(spec, {})
    assert greedy_path(b0) == (1,)
    b1, _ = transition(b0, 2, GroundTruth({1: -10.0, 2: 10.0}))
    assert greedy_path(b1) == (2,)
    assert pseudo_reward(b0, b1) == 10.0
    assert time.time() - start < 10.0


def test_likelihoods_match_hand_enumerated_softmax_products():
    spec = two_leaf_spec()

    def trial(truth, clicks):
        gt = GroundTruth({k: float(v) for k, v in truth.items()})
        b = BeliefState(spec, {})
        total = 0.0
        for c in clicks:
            b, r = transition(b, c, gt)
            total += r
        _, r_term = transition(b, TERMINATE, gt)
        return TrialRecord(gt, tuple(clicks) + (TERMINATE,), total + r_term)

    rec = ParticipantRecord("oracle", None, spec, (
        trial({1: -10, 2: 10}, (2,)),
        trial({1: 10, 2: -10}, (1, 2)),
    ))

    rng = np.random.default_rng(12)
    w = rng.normal(0.0, 0.15, size=REG.dim)
    theta = {f"w{i}": float(w[i]) for i in range(REG.dim)}
    theta["tau"] = 1.7
    ll, _ = sequence_loglik(ModelConfig("nonlearning"), theta, rec, seed=0)
    want = 0.0
    for t in rec.trials:
        b = BeliefState(spec, {})
        for c in t.computations:
            acts = valid_computations(b)
            F = feature_matrix(b, acts, None, REG)
            z = F @ w / theta["tau"]
            p = np.exp(z - z.max())
            p /= p.sum()
            assert p[acts.index(c)] > PROB_FLOOR
            want += math.log(p[acts.index(c)])
            if c != TERMINATE:
                b, _ = transition(b, c, t.truth)
    assert ll == pytest.approx(want, abs=1e-9)

    theta_h = {"w_same_node": 1.0, "w_same_branch": 0.5, "w_same_level": 0.25,
               "terminate_bias": 0.3, "tau": 1.2}
    rec_h = ParticipantRecord("oracle-h", None, spec, (
        trial({1: -10, 2: 10}, (1,)),
        trial({1: 10, 2: -10}, (1, 2)),
    ))
    ll_h, n_obs = sequence_loglik(ModelConfig("habit"), theta_h, rec_h, seed=0)
    assert n_obs == 5

    def sm(zs, idx):
        z = np.asarray(zs, dtype=float) / theta_h["tau"]
        p = np.exp(z - z.max())
        return math.log(p[idx] / p.sum())

    want_h = 0.0
    want_h += sm([0.3, 0.0, 0.0], 1)    # fresh history, clicked node 1
    want_h += sm([0.3, 0.25], 0)        # node 2 shares only the level; stop
    want_h += sm([0.3, 1.75, 0.25], 1)  # counts persist into trial 2
    want_h += sm([0.3, 0.5], 1)         # node 2 level count now 2; clicked
    want_h += 0.0                       # forced terminate
    assert ll_h == pytest.approx(want_h, abs=1e-9)


def test_stopping_rules_pin_half_and_rise_with_act_value():
    for tau in (0.1, 1.0, 7.0, 140.0):
        assert tempered_sigmoid(0.0, tau) == 0.5

    memory = ScoreMemory().record(12.0).record(-4.0)
    span = FAR.v_max - FAR.v_min
    for eta in (0.1, 0.5, 0.9):
        mm = FAR.v_min + eta * span
        p = stop_probability("fixed", {"s1_eta": eta, "s1_tau": 0.3}, mm, 2,
                             FAR.v_min, FAR.v_max, memory)
        assert p == pytest.approx(0.5, abs=1e-12)

    grid = np.linspace(FAR.v_min, FAR.v_max, 61)
    thetas = {"fixed": {"s1_eta": 0.4, "s1_tau": 0.2},
              "decreasing": {"s1_a": 2.0, "s1_b": 0.5, "s1_tau": 5.0},
              "past": {"s1_eta": 8.0, "s1_tau": 5.0}}
    for rule, theta in thetas.items():
        ps = [stop_probability(rule, theta, float(mm), 3, FAR.v_min,
                               FAR.v_max, memory) for mm in grid]
        assert all(b > a for a, b in zip(ps, ps[1:])), rule


# ---------------------------------------------------------------------------
# statistics oracles
# ---------------------------------------------------------------------------

def test_statistics_oracles_pin_known_values():
    assert mann_kendall([1, 3, 2, 4]).s == 4

    rng = np.random.default_rng(3)
    for n in (3, 5, 10, 17):
        up = np.cumsum(rng.uniform(0.1, 1.0, n))
        assert mann_kendall(up).s == n * (n - 1) // 2
        assert mann_kendall(up[::-1]).s == -(n * (n - 1) // 2)

    assert bic(-100.0, 3, 50) == pytest.approx(3 * math.log(50) + 200.0)
    assert bic(-10.0, 0, 5) == pytest.approx(20.0)
    assert bic(0.0, 2, 1) == pytest.approx(0.0)

    # Identical evidence columns must split the population evenly.
    L = np.tile(rng.normal(0.0, 1.0, (20, 1)), (1, 2))
    res = rfx_bms(L, mc_samples=20_000, seed=0)
    assert res.r == pytest.approx([0.5, 0.5], abs=1e-12)

    # A singleton partition is a relabeling: identical posteriors.
    L3 = rng.normal(0.0, 2.0, (15, 3))
    singles = {"a": [0], "b": [1], "c": [2]}
    assert np.array_equal(family_evidence(L3, singles), L3)
    fam = family_bms(L3, singles, mc_samples=30_000, seed=9)
    mod = rfx_bms(L3, mc_samples=30_000, seed=9)
    assert np.array_equal(fam.r, mod.r) and np.array_equal(fam.phi, mod.phi)

    # Best-model probabilities are Monte Carlo; two seeds agree closely.
    sep = np.column_stack([np.zeros(12), np.full(12, -0.4), np.full(12, -0.8)])
    phi_a = rfx_bms(sep, mc_samples=100_000, seed=1).phi
    phi_b = rfx_bms(sep, mc_samples=100_000, seed=2).phi
    assert np.abs(phi_a - phi_b).max() <= 0.02


# ---------------------------------------------------------------------------
# recovery and qualitative phenomena
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def reinforce_cohort(condition: str):
    return tuple(simulate_cohort(parse_model_id("reinforce"),
                                 DEFAULT_SIM_PARAMS["reinforce"], condition,
                                 30, 35, MASTER_SEED))


def test_family_selection_recovers_the_generating_mechanism():
    models = ("reinforce", "habit", "nonlearning")
    start = time.time()
    for true_model in ("reinforce", "habit"):
        if true_model == "reinforce":
            traces = reinforce_cohort("exp1-far")
        else:
            traces = simulate_cohort(parse_model_id("habit"),
                                     DEFAULT_SIM_PARAMS["habit"],
                                     "exp1-far", 30, 35, MASTER_SEED)
        evidence = np.empty((len(traces), len(models)))
        for i, tr in enumerate(traces):
            for j, mid in enumerate(models):
                res = fit_participant(parse_model_id(mid), tr.record,
                                      budget=100, seed=0)
                evidence[i, j] = -res.bic / 2.0
        fam = family_bms(evidence, {m: [j] for j, m in enumerate(models)},
                         seed=0)
        k = models.index(true_model)
        assert int(fam.r.argmax()) == k
        assert fam.phi[k] > 0.9
    assert time.time() - start < 1800.0


def test_reinforce_cohorts_show_the_expected_trend_directions():
    checks = [("exp1-far", "adaptive", 1),
              ("exp1-far", "score", 1),
              ("exp2-lowcost-highvariance", "clicks", 1),
              ("exp2-highcost-lowvariance", "clicks", -1)]
    for condition, measure, sign in checks:
        curve = aggregate_curves(reinforce_cohort(condition), measure).mean
        res = mann_kendall(curve)
        assert res.s * sign > 0, (condition, measure, res)
        assert res.p < 0.05, (condition, measure, res)


# ---------------------------------------------------------------------------
# command determinism and the collection round trip
# ---------------------------------------------------------------------------

def test_every_command_reruns_to_identical_bytes(tmp_path):
    def rerun(args, names):
        outs = []
        for sub in ("x", "y"):
            out = tmp_path / sub / args[0]
            assert main([str(a) for a in args + ["--out", out]]) == 0
            outs.append(out)
        for name in names:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        return outs[0]

    rerun(["gen-env", "--condition", "exp1-far", "--count", 2, "--seed", 4],
          ["exp1-far-00004.json", "exp1-far-00005.json"])

    for sub in ("x", "y"):
        gout = tmp_path / sub / "grid.json"
        assert main(["grid", "--out", str(gout)]) == 0
    assert ((tmp_path / "x" / "grid.json").read_bytes()
            == (tmp_path / "y" / "grid.json").read_bytes())

    sim = rerun(["simulate", "--model", "habit", "--condition", "exp1-far",
                 "--agents", 2, "--trials", 3, "--seed", 6],
                ["traces.jsonl", "curves.csv"])

    traces = sim / "traces.jsonl"
    fit = rerun(["fit", "--records", traces, "--models", "nonlearning,habit",
                 "--budget", 5, "--seed", 0],
                ["fits.jsonl", "bic.csv"])
    rerun(["select", "--bic", fit / "bic.csv", "--seed", 0],
          ["select_report.json"])
    rerun(["analyze", "--traces", traces], ["trends.csv"])


def test_played_web_session_round_trips_into_a_fit(tmp_path):
    from metaplan.serve import build_server

    records = tmp_path / "sessions.jsonl"
    server = build_server(0, records)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    traffic = []

    def get(path):
        with urllib.request.urlopen(base + path) as r:
            body = r.read()
        traffic.append(body)
        return json.loads(body)

    try:
        doc = get("/api/session?condition=exp1-far&count=5&seed=77")
        sid = doc["session"]
        spec = build_trial_spec("exp1-far")
        plan = [(), (3,), (1, 5), (3, 4, 9), (12,)]
        asked = set()
        trials = []
        for i, clicks in enumerate(plan):
            values = {}
            for c in clicks:
                values[c] = get(f"/api/reveal?session={sid}&trial={i}"
                                f"&node={c}")["value"]
                asked.add((i, c))
            path = spec.paths[0]
            total = -doc["click_cost"] * len(clicks)
            for v in path:
                total += get(f"/api/reveal?session={sid}&trial={i}"
                             f"&node={v}")["value"]
                asked.add((i, v))
            trials.append({"computations": list(clicks) + [0],
                           "path": list(path), "score": total})

        # Hidden values only ever travel in reveal responses that were
        # explicitly requested; the session document names no rewards.
        session_doc = json.loads(traffic[0])
        assert "truth" not in json.dumps(session_doc)
        assert all('"rewards"' not in t.decode() for t in traffic)
        revealed = set()
        for body in traffic[1:]:
            obj = json.loads(body)
            assert set(obj) == {"schema", "trial", "node", "value"}
            revealed.add((obj["trial"], obj["node"]))
        assert revealed == asked

        payload = {"schema": "upload@1", "session": sid,
                   "participant": "web-acceptance", "trials": trials}
        req = urllib.request.Request(base + "/api/upload",
                                     data=json.dumps(payload).encode(),
                                     headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req) as r:
            assert json.loads(r.read())["ok"] is True
    finally:
        server.shutdown()
        server.server_close()

    recs = ingest_records(records)
    assert len(recs) == 1 and len(recs[0].trials) == 5
    assert recs[0].trials[0].computations == (0,)
    res = fit_participant(parse_model_id("reinforce"), recs[0],
                          budget=20, seed=0)
    assert math.isfinite(res.bic) and res.loglik <= 0.0
