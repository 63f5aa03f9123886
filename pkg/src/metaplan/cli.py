"""Command-line entry point: environment generation, record ingest, model
fitting, selection reports, simulation, trend analysis, and the local
collection service.

Every command writes deterministic bytes for identical inputs and seeds:
JSON is canonical (sorted keys, no whitespace), floats in CSVs use repr,
and whole files go through atomic writes. Fit results append to a JSONL
journal keyed by (participant, model, budget, seed) so an interrupted run
resumes where it left off.

The default output root is the current directory, overridable with the
METAPLAN_OUT environment variable or per-command --out.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .env import condition_ids, load_condition_table, make_condition_env
from .features import default_registry
from .fitkit import (DEFAULT_BUDGET, FitResult, ParticipantRecord, default_params,
                     fit_key, fit_participant, ingest_records, parse_record,
                     record_to_json_dict)
from .ioutil import append_jsonl_atomic, canonical_json, read_jsonl, write_text_atomic
from .metacontrol import build_grid, grid_manifest, parse_model_id
from .modelselect import (DELTA_BIC_THRESHOLD, delta_bic_class, family_bms,
                          mann_kendall, rfx_bms)
from .simlab import (DEFAULT_SIM_PARAMS, MEASURES, aggregate_curves,
                     classify_strategy, curves_to_csv, simulate_cohort)

OUT_ENV_VAR = "METAPLAN_OUT"


def _out_root(arg: str | None) -> Path:
    root = Path(arg or os.environ.get(OUT_ENV_VAR) or ".")
    root.mkdir(parents=True, exist_ok=True)
    return root


@dataclass(frozen=True)
class RunConfig:
    """Validated inputs for a batch command."""

    records: Path
    out: Path
    budget: int
    seed: int
    jobs: int
    model_ids: tuple[str, ...]

    def validate(self) -> "RunConfig":
        if not self.records.exists():
            raise FileNotFoundError(f"records file not found: {self.records}")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        known = {cfg.model_id for cfg in build_grid()}
        for mid in self.model_ids:
            parse_model_id(mid)
            if mid not in known:
                raise ValueError(f"model '{mid}' is not in the grid")
        return self


# ---------------------------------------------------------------------------
# gen-env / grid / ingest
# ---------------------------------------------------------------------------

def cmd_gen_env(args) -> int:
    table = load_condition_table(args.conditions) if args.conditions else None
    if args.condition not in condition_ids(table):
        raise SystemExit(f"unknown condition '{args.condition}'")
    out = _out_root(args.out)
    for i in range(args.count):
        seed = args.seed + i
        spec, truth = make_condition_env(args.condition, seed, table)
        doc = {"schema": "trial@1", "condition": args.condition, "seed": seed,
               "spec": spec.to_json_dict(), "truth": truth.to_json_dict()}
        write_text_atomic(out / f"{args.condition}-{seed:05d}.json",
                          canonical_json(doc) + "\n")
    print(f"wrote {args.count} trial files to {out}")
    return 0


def cmd_grid(args) -> int:
    text = canonical_json(grid_manifest(default_registry())) + "\n"
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_text_atomic(path, text)
        print(f"wrote grid manifest to {path}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_ingest(args) -> int:
    records = ingest_records(args.records)
    for rec in records:
        print(f"{rec.participant}\t{rec.condition or '-'}\t"
              f"{len(rec.trials)} trials\t{rec.n_obs} decisions")
    print(f"ok: {len(records)} records")
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _fit_job(record_dict: dict, model_id: str, budget: int, seed: int) -> dict:
    # Worker takes plain dicts so a process pool never pickles live objects.
    rec = parse_record(record_dict)
    cfg = parse_model_id(model_id)
    return fit_participant(cfg, rec, budget=budget, seed=seed).to_json_dict()


def _load_fit_journal(path: Path) -> dict[str, dict]:
    done = {}
    if path.exists():
        for _, obj in read_jsonl(path):
            res = FitResult.from_json_dict(obj)
            done[fit_key(res.participant, res.model_id, res.budget, res.seed)] = obj
    return done


def _bic_csv(records: list[ParticipantRecord], model_ids: tuple[str, ...],
             done: dict[str, dict], budget: int, seed: int) -> str:
    lines = ["participant," + ",".join(model_ids)]
    for rec in records:
        cells = []
        for mid in model_ids:
            obj = done.get(fit_key(rec.participant, mid, budget, seed))
            cells.append(repr(float(obj["bic"])) if obj else "")
        lines.append(rec.participant + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    if args.models is None:
        model_ids = tuple(cfg.model_id for cfg in build_grid())
    else:
        model_ids = tuple(m for m in args.models.split(",") if m)
    run = RunConfig(Path(args.records), _out_root(args.out), args.budget,
                    args.seed, args.jobs, model_ids).validate()

    records = ingest_records(run.records)
    journal = run.out / "fits.jsonl"
    done = _load_fit_journal(journal)

    jobs = []
    for rec in records:
        for mid in run.model_ids:
            key = fit_key(rec.participant, mid, run.budget, run.seed)
            if key not in done:
                jobs.append((rec, mid))
    n_total = len(records) * len(run.model_ids)
    print(f"jobs: {n_total} total, {n_total - len(jobs)} already done, "
          f"{len(jobs)} to run")

    if jobs:
        if run.jobs > 1:
            with ProcessPoolExecutor(max_workers=run.jobs) as pool:
                futures = [pool.submit(_fit_job, record_to_json_dict(rec), mid,
                                       run.budget, run.seed)
                           for rec, mid in jobs]
                # Results append in submission order so the journal's byte
                # layout does not depend on scheduling.
                for fut in futures:
                    obj = fut.result()
                    append_jsonl_atomic(journal, obj)
                    done[fit_key(obj["participant"], obj["model"],
                                 obj["budget"], obj["seed"])] = obj
        else:
            for rec, mid in jobs:
                obj = _fit_job(record_to_json_dict(rec), mid, run.budget,
                               run.seed)
                append_jsonl_atomic(journal, obj)
                done[fit_key(obj["participant"], obj["model"],
                             obj["budget"], obj["seed"])] = obj

    if run.model_ids:
        write_text_atomic(run.out / "bic.csv",
                          _bic_csv(records, run.model_ids, done,
                                   run.budget, run.seed))
    print(f"fit journal: {journal}")
    return 0


# ---------------------------------------------------------------------------
# select
# ---------------------------------------------------------------------------

def _read_bic_csv(path: Path) -> tuple[list[str], list[str], list[list[float]], list[tuple[str, str]]]:
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise SystemExit(f"empty BIC table: {path}")
    header = lines[0].split(",")
    if header[0] != "participant" or len(header) < 2:
        raise SystemExit("BIC table header must be 'participant,<model>,...'")
    models = header[1:]
    participants, rows, holes = [], [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        participants.append(cells[0])
        row = []
        for mid, cell in zip(models, cells[1:]):
            if cell == "":
                holes.append((cells[0], mid))
                row.append(float("nan"))
            else:
                row.append(float(cell))
        rows.append(row)
    return participants, models, rows, holes


def _bms_table(result, names: list[str]) -> dict:
    return {"names": names,
            "r": [float(v) for v in result.r],
            "phi": [float(v) for v in result.phi],
            "pxp": [float(v) for v in result.pxp],
            "bor": float(result.bor)}


def _print_table(title: str, table: dict):
    print(title)
    print(f"  {'name':<24}{'r':>10}{'phi':>10}{'pxp':>10}")
    for i, name in enumerate(table["names"]):
        print(f"  {name:<24}{table['r'][i]:>10.4f}"
              f"{table['phi'][i]:>10.4f}{table['pxp'][i]:>10.4f}")


def cmd_select(args) -> int:
    import numpy as np

    path = Path(args.bic)
    if not path.exists():
        raise SystemExit(f"BIC table not found: {path}")
    participants, models, rows, holes = _read_bic_csv(path)
    if holes:
        for p, m in holes:
            print(f"hole: participant {p}, model {m}", file=sys.stderr)
        raise SystemExit(f"incomplete BIC table: {len(holes)} missing cells")

    bics = np.asarray(rows, dtype=float)
    evidence = -bics / 2.0

    if len(models) == 1:
        model_table = {"names": models, "r": [1.0], "phi": [1.0],
                       "pxp": [1.0], "bor": 1.0}
    else:
        model_table = _bms_table(
            rfx_bms(evidence, seed=args.seed), models)

    families: dict[str, list[int]] = {}
    for j, mid in enumerate(models):
        families.setdefault(parse_model_id(mid).base, []).append(j)
    fam_names = list(families)
    if len(fam_names) == 1:
        fam_table = {"names": fam_names, "r": [1.0], "phi": [1.0],
                     "pxp": [1.0], "bor": 1.0}
    else:
        fam_table = _bms_table(
            family_bms(evidence, families, seed=args.seed), fam_names)

    # Pseudo-reward evidence counts: per participant, the best member of
    # each pr/no-pr pair family, classified by the BIC difference.
    pr_cols = [j for j, m in enumerate(models) if parse_model_id(m).pseudo_rewards]
    plain_cols = [j for j, m in enumerate(models)
                  if _pr_counterpart(m) in models and not parse_model_id(m).pseudo_rewards]
    pr_counts = None
    if pr_cols and plain_cols:
        counts = {"with_pr": 0, "without_pr": 0, "inconclusive": 0}
        for i in range(len(participants)):
            best_pr = float(bics[i, pr_cols].min())
            best_plain = float(bics[i, plain_cols].min())
            verdict = delta_bic_class(best_pr, best_plain, args.threshold)
            if verdict == "a":
                counts["with_pr"] += 1
            elif verdict == "b":
                counts["without_pr"] += 1
            else:
                counts["inconclusive"] += 1
        pr_counts = counts

    report = {"schema": "select@1", "n_participants": len(participants),
              "models": model_table, "family_members": {k: [models[j] for j in v]
                                                        for k, v in families.items()},
              "families": fam_table, "pseudo_reward_counts": pr_counts,
              "delta_bic_threshold": args.threshold}
    out = _out_root(args.out)
    write_text_atomic(out / "select_report.json", canonical_json(report) + "\n")

    _print_table("models:", model_table)
    _print_table("families:", fam_table)
    if pr_counts:
        print(f"pseudo-reward evidence: {pr_counts['with_pr']} with, "
              f"{pr_counts['without_pr']} without, "
              f"{pr_counts['inconclusive']} inconclusive")
    else:
        print("pseudo-reward evidence: no paired models in table")
    print(f"report: {out / 'select_report.json'}")
    return 0


def _pr_counterpart(model_id: str) -> str:
    cfg = parse_model_id(model_id)
    from .metacontrol import ModelConfig
    try:
        other = ModelConfig(cfg.base, cfg.stage1, not cfg.pseudo_rewards,
                            cfg.td_terminal)
    except ValueError:
        return ""
    return other.model_id


# ---------------------------------------------------------------------------
# simulate / analyze
# ---------------------------------------------------------------------------

def _sim_params(cfg, overrides: list[str]) -> dict:
    params = dict(default_params(cfg))
    params.update(DEFAULT_SIM_PARAMS.get(cfg.base, {}))
    for item in overrides:
        if "=" not in item:
            raise SystemExit(f"bad --param '{item}', expected name=value")
        name, _, value = item.partition("=")
        params[name] = int(value) if name == "n_samples" else float(value)
    return params


def cmd_simulate(args) -> int:
    cfg = parse_model_id(args.model)
    if args.condition not in condition_ids():
        raise SystemExit(f"unknown condition '{args.condition}'")
    params = _sim_params(cfg, args.param or [])
    out = _out_root(args.out)

    if args.agents == 0:
        write_text_atomic(out / "traces.jsonl", "")
        write_text_atomic(out / "curves.csv",
                          "condition,model,measure,trial,mean,lo,hi\n")
        print("no agents requested; wrote empty trace and curve files")
        return 0

    traces = simulate_cohort(cfg, params, args.condition, args.agents,
                             args.trials, args.seed)
    lines = [canonical_json(t.to_json_dict()) for t in traces]
    write_text_atomic(out / "traces.jsonl", "\n".join(lines) + "\n")
    curves = [aggregate_curves(traces, m) for m in MEASURES]
    write_text_atomic(out / "curves.csv", curves_to_csv(curves))
    print(f"simulated {args.agents} agents x {args.trials} trials "
          f"({cfg.model_id}, {args.condition}) -> {out}")
    return 0


def _trace_measures(obj: dict, line: int) -> tuple[str, str, dict[str, list[float]]]:
    condition = obj.get("condition") or ""
    model = obj.get("model", "data")
    trials = obj.get("trials")
    if not trials:
        raise SystemExit(f"line {line}: record has no trials")
    scores = [float(t["score"]) for t in trials]
    clicks = [float(len(t["computations"]) - 1) for t in trials]
    if "labels" in obj:
        labels = list(obj["labels"])
    else:
        labels = []
        for t in trials:
            comps = t["computations"]
            first = comps[0] if len(comps) > 1 else None
            if condition.startswith("exp1"):
                labels.append(classify_strategy(first, condition))
            else:
                labels.append("adaptive" if first is not None else "non-adaptive")
    adaptive = [1.0 if lb == "adaptive" else 0.0 for lb in labels]
    return condition, model, {"score": scores, "clicks": clicks,
                              "adaptive": adaptive}


def cmd_analyze(args) -> int:
    import numpy as np

    path = Path(args.traces)
    if not path.exists():
        raise SystemExit(f"trace file not found: {path}")
    groups: dict[tuple[str, str], list[dict[str, list[float]]]] = {}
    for line, obj in read_jsonl(path):
        condition, model, measures = _trace_measures(obj, line)
        groups.setdefault((condition, model), []).append(measures)

    rows = []
    for (condition, model), members in sorted(groups.items()):
        n_trials = len(members[0]["score"])
        for m in members:
            if len(m["score"]) != n_trials:
                raise SystemExit(f"group {condition}/{model}: "
                                 "misaligned trial counts")
        for measure in MEASURES:
            mat = np.asarray([m[measure] for m in members], dtype=float)
            curve = mat.mean(axis=0)
            res = mann_kendall(curve)
            rows.append((condition, model, measure, len(members), res))

    lines = ["condition,model,measure,n_agents,s,z,p,direction"]
    for condition, model, measure, n, res in rows:
        lines.append(",".join([condition, model, measure, str(n), str(res.s),
                               repr(res.z), repr(res.p), res.direction]))
        print(f"{condition} {model} {measure}: S={res.s} p={res.p:.4g} "
              f"{res.direction}")
    out = _out_root(args.out)
    write_text_atomic(out / "trends.csv", "\n".join(lines) + "\n")
    print(f"trend table: {out / 'trends.csv'}")
    return 0


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

def cmd_serve(args) -> int:
    from .serve import build_server

    table = load_condition_table(args.conditions) if args.conditions else None
    server = build_server(args.port, Path(args.records),
                          bundle=Path(args.bundle) if args.bundle else None,
                          table=table)
    host, port = server.server_address[:2]
    print(f"collection service on http://{host}:{port}/ "
          f"(records -> {args.records})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metaplan",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-env", help="write trial spec + ground truth files")
    g.add_argument("--condition", required=True)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--conditions", help="alternate condition table JSON")
    g.add_argument("--out")
    g.set_defaults(fn=cmd_gen_env)

    g = sub.add_parser("grid", help="print or write the model grid manifest")
    g.add_argument("--out")
    g.set_defaults(fn=cmd_grid)

    g = sub.add_parser("ingest", help="validate a records file and summarize")
    g.add_argument("records")
    g.set_defaults(fn=cmd_ingest)

    g = sub.add_parser("fit", help="fit models to every record (resumable)")
    g.add_argument("--records", required=True)
    g.add_argument("--models", help="comma-separated model ids (default: all)")
    g.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--out")
    g.set_defaults(fn=cmd_fit)

    g = sub.add_parser("select", help="model and family selection report")
    g.add_argument("--bic", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threshold", type=float, default=DELTA_BIC_THRESHOLD)
    g.add_argument("--out")
    g.set_defaults(fn=cmd_select)

    g = sub.add_parser("simulate", help="run a simulated cohort")
    g.add_argument("--model", required=True)
    g.add_argument("--condition", required=True)
    g.add_argument("--agents", type=int, default=30)
    g.add_argument("--trials", type=int, default=35)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--param", action="append", metavar="NAME=VALUE")
    g.add_argument("--out")
    g.set_defaults(fn=cmd_simulate)

    g = sub.add_parser("analyze", help="trend tests over traces or records")
    g.add_argument("--traces", required=True)
    g.add_argument("--out")
    g.set_defaults(fn=cmd_analyze)

    g = sub.add_parser("serve", help="host the web task and collect sessions")
    g.add_argument("--port", type=int, default=8710)
    g.add_argument("--records", default="sessions.jsonl")
    g.add_argument("--bundle", help="static bundle directory")
    g.add_argument("--conditions", help="alternate condition table JSON")
    g.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
