"""Command-line pipeline: generate, simulate, train, evaluate, inspect, serve.

Every subcommand writes into an append-only output directory together with
the resolved configuration that produced it. Exit codes: 0 success, 1 usage,
2 data error, 3 numerical failure; errors go to stderr as single-line JSON.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import autodiff as ad
from .behaviors import (GeneratorConfig, UnknownBehaviorError, export_jsonl,
                        generate_database, import_jsonl)
from .config import ConfigError, fresh_path, load_config, write_resolved
from .evaluation import (CriteriaReport, DegenerateSpaceError, ExperimentPlan,
                         build_seed_cell, evaluate_cell, neighbors,
                         plackett_luce_rank, run_direct_comparison,
                         run_noise_robustness, run_weighting_ablation)
from .exploration import (SessionLogError, export_session_log,
                          ingest_session_log, sample_user, simulate_population)
from .features import (DEFAULT_ALPHA, DEFAULT_BETA, DivergenceError,
                       FeatureSpace, Hyper, margin_violation_rate,
                       train_feature_space)
from .reward import SamplerConfig

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_ERRORS = (FileNotFoundError, FileExistsError, UnknownBehaviorError,
               SessionLogError, ConfigError, json.JSONDecodeError, ValueError,
               KeyError)
NUMERIC_ERRORS = (DivergenceError, ad.NonFiniteError, ad.ShapeError,
                  FloatingPointError)


def _fail(code: int, kind: str, message: str):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NUMERIC_ERRORS as e:
            _fail(EXIT_NUMERIC, type(e).__name__, str(e))
        except DegenerateSpaceError as e:
            _fail(EXIT_NUMERIC, type(e).__name__, str(e))
        except DATA_ERRORS as e:
            _fail(EXIT_DATA, type(e).__name__, str(e))
    return wrapper


class JsonErrorGroup(click.Group):
    """Map click usage errors to exit 1 with a single-line JSON message."""

    def main(self, *args, **kwargs):
        try:
            return super().main(*args, standalone_mode=False, **kwargs)
        except click.exceptions.Abort:
            _fail(EXIT_USAGE, "Abort", "aborted")
        except click.exceptions.ClickException as e:
            _fail(EXIT_USAGE, type(e).__name__, e.format_message())


def config_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="YAML config file.")(fn)
    fn = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                      help="Override a config key (dotted path).")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), default=None,
                      help="Output directory (default: under the output root).")(fn)
    return fn


def resolve(config_path, sets, out_dir, default_subdir):
    cfg = load_config(config_path, tuple(sets))
    out = Path(out_dir) if out_dir else Path(cfg["output_root"]) / default_subdir
    return cfg, out


def load_db(db_path: Path):
    """Read a database file plus the resolved config written next to it."""
    db_path = Path(db_path)
    cfg_path = db_path.parent / "config.resolved.json"
    gen_cfg = None
    if cfg_path.exists():
        with open(cfg_path) as f:
            stored = json.load(f)
        gen_cfg = GeneratorConfig(seed=stored["seed"],
                                  **{k: v for k, v in stored["db"].items()
                                     if k != "modality"})
    return import_jsonl(db_path, config=gen_cfg)


def db_generator_config(cfg: dict) -> GeneratorConfig:
    fields = {k: v for k, v in cfg["db"].items() if k != "modality"}
    return GeneratorConfig(seed=cfg["seed"], **fields)


@click.group(cls=JsonErrorGroup)
def main():
    """Behavior feature learning and preference elicitation pipeline."""


@main.command("gen-db")
@click.option("--modality", default=None)
@click.option("--n", type=int, default=None)
@click.option("--seed", type=int, default=None)
@config_options
@handle_errors
def gen_db(modality, n, seed, config_path, sets, out_dir):
    """Generate a synthetic behavior database as JSON lines."""
    cfg, out = resolve(config_path, sets, out_dir, "db")
    if modality:
        cfg["db"]["modality"] = modality
    if n is not None:
        cfg["db"]["n"] = n
    if seed is not None:
        cfg["seed"] = seed
    db = generate_database(cfg["db"]["modality"], config=db_generator_config(cfg))
    path = fresh_path(out, "db.jsonl")
    export_jsonl(db, path, with_ground_truth=True)
    write_resolved(cfg, out)
    click.echo(json.dumps({"db": str(path), "n": db.config.n,
                           "modality": cfg["db"]["modality"]}))


@main.command()
@click.option("--db", "db_path", type=click.Path(), required=True)
@click.option("--users", type=int, default=None)
@click.option("--pages", type=int, default=None)
@config_options
@handle_errors
def simulate(db_path, users, pages, config_path, sets, out_dir):
    """Simulate a user population: session logs plus ranking records."""
    cfg, out = resolve(config_path, sets, out_dir, "simulate")
    sim = cfg["simulate"]
    if users is not None:
        sim["users"] = users
    if pages is not None:
        sim["pages"] = pages
    db = load_db(db_path)
    _, pooled = simulate_population(
        db, sim["users"], sim["pages"], sim["page_size"], base_seed=cfg["seed"],
        explore_temp=sim["explore_temp"], explore_frac=sim["explore_frac"],
        rank_temp=sim["rank_temp"])
    log_path = fresh_path(out, "sessions.jsonl")
    export_session_log(pooled, log_path)

    # rankings from uniformly sampled queries, scored by each user's utility
    rank_path = fresh_path(out, "rankings.jsonl")
    with open(rank_path, "w") as f:
        for u in range(sim["users"]):
            user = sample_user(db.config.k, db.config.utility_dims,
                               seed=cfg["seed"] * 100003 + u,
                               rank_temp=sim["rank_temp"])
            rng = np.random.default_rng([cfg["seed"], 271, u])
            for t in range(sim["rankings_per_user"]):
                query = [int(i) for i in
                         rng.choice(db.config.n, size=sim["query_size"], replace=False)]
                utilities = user.utility(db.latent_matrix(query))
                sigma = plackett_luce_rank(utilities, sim["rank_temp"], rng)
                f.write(json.dumps({"query": query, "sigma": sigma,
                                    "is_super": False, "user": u}) + "\n")
    write_resolved(cfg, out)
    click.echo(json.dumps({"sessions": str(log_path), "rankings": str(rank_path),
                           "pages": len(pooled)}))


def _train_hyper(cfg: dict, modality: str, alpha, beta, weighting) -> Hyper:
    t = cfg["train"]
    return Hyper(
        alpha=alpha if alpha is not None else (t["alpha"] or DEFAULT_ALPHA[modality]),
        beta=beta if beta is not None else (t["beta"] or DEFAULT_BETA[modality]),
        lr=t["lr"], batch=t["batch"], epochs=t["epochs"],
        weighting=weighting or t["weighting"])


@main.command()
@click.option("--db", "db_path", type=click.Path(), required=True)
@click.option("--sessions", "sessions_path", type=click.Path(), required=True)
@click.option("--objective", default=None)
@click.option("--dim", type=int, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--weighting", default=None)
@config_options
@handle_errors
def train(db_path, sessions_path, objective, dim, alpha, beta, weighting,
          config_path, sets, out_dir):
    """Train a feature space on a session log and save its checkpoint."""
    cfg, out = resolve(config_path, sets, out_dir, "train")
    db = load_db(db_path)
    pages = ingest_session_log(sessions_path, db=db)
    modality = cfg["db"]["modality"]
    obj = objective or cfg["train"]["objective"]
    d = dim or cfg["train"]["dim"]
    hyper = _train_hyper(cfg, modality, alpha, beta, weighting)
    aux_view = None
    if obj == "pretrained":
        aux_cfg = GeneratorConfig(**{**asdict(db.config), "seed": cfg["seed"] + 7777})
        aux_view = generate_database(modality, config=aux_cfg).payload_view()
    space, report = train_feature_space(
        obj, db.payload_view(), pages, hyper, d, seed=cfg["seed"],
        hidden_dims=list(cfg["train"]["hidden_dims"]), aux_view=aux_view,
        provenance={"modality": modality, "db": str(db_path)})
    ckpt = fresh_path(out, f"{obj}_dim{d}.ckpt.json")
    meta = out / f"{obj}_dim{d}.meta.json"
    space.save(ckpt, meta)
    write_resolved(cfg, out)
    click.echo(json.dumps({
        "checkpoint": str(ckpt), "meta": str(meta), "objective": obj, "dim": d,
        "final_loss": report.epochs[-1]["total"] if report.epochs else None,
        "margin_violation_rate": report.margin_violation_rate,
    }))


@main.command()
@click.option("--db", "db_path", type=click.Path(), required=True)
@click.option("--sessions", "sessions_path", type=click.Path(), required=True)
@click.option("--param", type=click.Choice(["alpha", "beta", "dim", "lr"]), required=True)
@click.option("--values", required=True, help="Comma-separated values to sweep.")
@click.option("--objective", default=None)
@config_options
@handle_errors
def sweep(db_path, sessions_path, param, values, objective, config_path, sets, out_dir):
    """Train one checkpoint per parameter value and tabulate validation loss."""
    cfg, out = resolve(config_path, sets, out_dir, "sweep")
    db = load_db(db_path)
    pages = ingest_session_log(sessions_path, db=db)
    modality = cfg["db"]["modality"]
    obj = objective or cfg["train"]["objective"]
    parsed = [int(v) if param == "dim" else float(v) for v in values.split(",")]
    rows = []
    for v in parsed:
        hyper = _train_hyper(cfg, modality, None, None, None)
        d = cfg["train"]["dim"]
        if param == "alpha":
            hyper.alpha = v
        elif param == "beta":
            hyper.beta = v
        elif param == "lr":
            hyper.lr = v
        else:
            d = v
        space, report = train_feature_space(
            obj, db.payload_view(), pages, hyper, d, seed=cfg["seed"],
            hidden_dims=list(cfg["train"]["hidden_dims"]))
        tag = f"{obj}_{param}{v}"
        space.save(fresh_path(out, f"{tag}.ckpt.json"), out / f"{tag}.meta.json")
        rows.append({
            "param": param, "value": v, "objective": obj, "dim": d,
            "final_loss": report.epochs[-1]["total"] if report.epochs else None,
            "margin_violation_rate": margin_violation_rate(
                space, pages, db.payload_view(), hyper.alpha, seed=cfg["seed"]),
        })
    table = fresh_path(out, "sweep.csv")
    with open(table, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    write_resolved(cfg, out)
    click.echo(json.dumps({"table": str(table), "cells": len(rows)}))


CRITERIA_CHOICES = ("completeness", "simplicity", "minimality", "explainability",
                    "noise", "weighting", "direct")


def plan_from_config(cfg: dict) -> ExperimentPlan:
    ev, sim = cfg["evaluate"], cfg["simulate"]
    return ExperimentPlan(
        modality=cfg["db"]["modality"],
        objectives=list(ev["objectives"]), dims=list(ev["dims"]),
        split=ev["split"], seeds=list(ev["seeds"]),
        train_pop=ev["train_pop"], eval_pop=ev["eval_pop"],
        rankings_per_user=sim["rankings_per_user"], query_size=sim["query_size"],
        pages_per_user=sim["pages"], page_size=sim["page_size"],
        explore_temp=sim["explore_temp"], explore_frac=sim["explore_frac"],
        rank_temp=sim["rank_temp"],
        db=db_generator_config(cfg),
        epochs=cfg["train"]["epochs"], batch=cfg["train"]["batch"],
        lr=cfg["train"]["lr"], weighting=cfg["train"]["weighting"],
        reward_hidden=list(cfg["reward"]["hidden_dims"]),
        reward_epochs=cfg["reward"]["epochs"], reward_batch=cfg["reward"]["batch"],
        sampler=SamplerConfig(**cfg["sampler"]),
        noise_trials=ev["noise_trials"])


@main.command()
@click.option("--criteria", default="completeness,simplicity,minimality,explainability")
@config_options
@handle_errors
def evaluate(criteria, config_path, sets, out_dir):
    """Run the evaluation battery; write CSV, JSON summary, and figures."""
    from . import plots

    cfg, out = resolve(config_path, sets, out_dir, "evaluate")
    wanted = [c.strip() for c in criteria.split(",") if c.strip()]
    bad = [c for c in wanted if c not in CRITERIA_CHOICES]
    if bad:
        raise ConfigError(f"unknown criteria: {', '.join(bad)}")
    plan = plan_from_config(cfg)
    out.mkdir(parents=True, exist_ok=True)
    modality = plan.modality
    summary: dict = {"criteria": wanted, "config_hash": plan.config_hash()}

    core = [c for c in wanted if c in ("completeness", "simplicity", "minimality",
                                       "explainability")]
    if core:
        crit = set()
        if "completeness" in core:
            crit.add("completeness")
        if "simplicity" in core or "minimality" in core:
            crit.add("alignment")
        if "explainability" in core:
            crit.add("explainability")
        report = CriteriaReport()
        for seed in plan.seeds:
            for dim in plan.dims:
                cell = build_seed_cell(plan, seed, dim)
                report.rows.extend(evaluate_cell(plan, cell, tuple(sorted(crit))))
        report.to_csv(fresh_path(out, "criteria.csv"))
        report.to_json(fresh_path(out, "criteria.json"))
        if "completeness" in crit:
            plots.completeness_bars(report.rows, out, modality)
        if "alignment" in crit:
            plots.alignment_bars(report.rows, out, modality)
        if "explainability" in crit:
            plots.explainability_bars(report.rows, out, modality)
        summary["aggregates"] = report.aggregates()

    if "noise" in wanted:
        rows = run_noise_robustness(plan, eps_list=tuple(cfg["evaluate"]["eps"]))
        plots.noise_robustness_figure(rows, out, modality)
        summary["noise_rows"] = len(rows)
    if "weighting" in wanted:
        ablation = run_weighting_ablation(plan)
        with open(fresh_path(out, "weighting_ablation.json"), "w") as f:
            json.dump(ablation, f, indent=2)
        summary["weighting_win_counts"] = ablation["win_counts"]
    if "direct" in wanted:
        rows = run_direct_comparison(plan)
        plots.direct_reward_figure(rows, out, modality)
        summary["direct_rows"] = len(rows)

    with open(fresh_path(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)
    write_resolved(cfg, out)
    click.echo(json.dumps({"out": str(out), "criteria": wanted}))


@main.command("neighbors")
@click.option("--db", "db_path", type=click.Path(), required=True)
@click.option("--space", "space_prefix", type=click.Path(), required=True,
              help="Checkpoint prefix (expects PREFIX.ckpt.json and PREFIX.meta.json).")
@click.option("--id", "behavior_id", type=int, required=True)
@click.option("--k", type=int, default=5)
@handle_errors
def neighbors_cmd(db_path, space_prefix, behavior_id, k):
    """Show the nearest database behaviors under a trained feature space."""
    db = load_db(db_path)
    space = FeatureSpace.load(f"{space_prefix}.ckpt.json", f"{space_prefix}.meta.json")
    if not 0 <= behavior_id < db.config.n:
        raise UnknownBehaviorError(behavior_id)
    rows = neighbors(space, db, behavior_id, k)
    click.echo("behavior_id\tcosine_similarity")
    for i, s in rows:
        click.echo(f"{i}\t{s:.6f}")


@main.command("plot-data")
@click.option("--report", "report_path", type=click.Path(exists=True), required=True,
              help="criteria.json produced by `evaluate`.")
@config_options
@handle_errors
def plot_data(report_path, config_path, sets, out_dir):
    """Re-emit per-figure CSVs and figures from a stored criteria report."""
    from . import plots

    cfg, out = resolve(config_path, sets, out_dir, "plot-data")
    with open(report_path) as f:
        doc = json.load(f)
    rows = doc["rows"]
    out.mkdir(parents=True, exist_ok=True)
    modality = rows[0]["modality"] if rows else cfg["db"]["modality"]
    emitted = []
    if any("tpa" in r for r in rows):
        plots.completeness_bars(rows, out, modality)
        emitted.append("completeness_bars")
    if any("auc_alignment" in r for r in rows):
        plots.alignment_bars(rows, out, modality)
        emitted.append("alignment_auc_bars")
    if any("explainability_cosine" in r for r in rows):
        plots.explainability_bars(rows, out, modality)
        emitted.append("explainability_bars")
    click.echo(json.dumps({"out": str(out), "figures": emitted}))


@main.command()
@click.option("--port", type=int, default=None)
@click.option("--host", default=None)
@config_options
@handle_errors
def serve(port, host, config_path, sets, out_dir):
    """Serve the HTTP session API."""
    import uvicorn

    from .service import create_app

    cfg, _ = resolve(config_path, sets, out_dir, "serve")
    db = generate_database(cfg["db"]["modality"], config=db_generator_config(cfg))
    app = create_app(db, config=cfg)
    uvicorn.run(app, host=host or cfg["serve"]["host"],
                port=port or cfg["serve"]["port"], log_level="warning")


if __name__ == "__main__":
    main()
