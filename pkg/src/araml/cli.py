"""Experiment runner: config loading, dataset ingestion, dispatch, reports.

Usage:
    araml run CONFIG.yaml [--out DIR] [--seed N] [--n-samples N]
                          [--n-repetitions N] [--workers N]
    araml compare RUN_A RUN_B [--tolerance X]

Configs are YAML documents with a mandatory ``kind`` (acra | tmdp |
templates | gradattack), a mandatory ``seed`` and a per-kind parameter
block; see configs/ in the repository for annotated examples.  All
randomness flows from the single seed through named substreams, so
reruns are byte-identical on the metrics outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import acra, gradattack, templates, tmdp
from .errors import AramlError, DataError, NumericError, UsageError
from .reports import (
    RunReport,
    Timer,
    compare_report,
    render_bar_figure,
    render_line_figure,
    write_metrics_csv,
    write_trace,
)
from .rng import SeededRng

__all__ = ["load_spambase", "load_config", "run", "main"]

SPAMBASE_COLUMNS = 58  # 57 attributes + 0/1 label


def load_spambase(path) -> tuple:
    """Load the published Spambase file: 57 numeric attributes + label.

    Continuous attributes are binarized at zero (word present iff its
    frequency is positive); labels map 1 -> + and 0 -> -.  Returns (X, y)
    with X an (n, 57) 0/1 array.
    """
    path = Path(path)
    rows = []
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != SPAMBASE_COLUMNS:
                raise DataError(
                    f"{path}:{lineno}: expected {SPAMBASE_COLUMNS} fields, "
                    f"got {len(fields)}"
                )
            try:
                values = [float(f) for f in fields]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            label = int(values[-1])
            if label not in (0, 1):
                raise DataError(f"{path}:{lineno}: label must be 0 or 1")
            rows.append([1 if v > 0 else 0 for v in values[:-1]])
            labels.append(label)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.int8), np.array(labels, dtype=int)


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    with open(path) as fh:
        config = yaml.safe_load(fh)
    if not isinstance(config, dict):
        raise UsageError(f"{path}: config must be a mapping")
    kind = config.get("kind")
    if kind not in ("acra", "tmdp", "templates", "gradattack"):
        raise UsageError(f"{path}: unknown or missing experiment kind {kind!r}")
    if "seed" not in config:
        raise UsageError(f"{path}: seed is mandatory (no wall-clock default)")
    # referenced files must exist at load time
    block = config.get(kind, {})
    for key in ("data", "game_file"):
        if key in block and not Path(block[key]).exists():
            raise UsageError(f"{path}: referenced file {block[key]!r} does not exist")
    return config


# ---------------------------------------------------------------------------
# Per-kind harnesses


def _acra_dataset(block: dict, rng: SeededRng) -> tuple:
    if "data" in block:
        return load_spambase(block["data"])
    synth = block.get("synthetic", {})
    return acra.make_synthetic_spam(
        n=int(synth.get("n", 2000)),
        rng=rng.substream("synthetic-data"),
        n_spam_words=int(synth.get("n_spam_words", 8)),
        n_good_words=int(synth.get("n_good_words", 8)),
        n_noise=int(synth.get("n_noise", 8)),
        prior_pos=float(synth.get("prior_pos", 0.4)),
    )


def _run_acra(config: dict, rng: SeededRng, out: Path, report: RunReport):
    block = config.get("acra", {})
    X, y = _acra_dataset(block, rng)
    util = acra.UtilityMatrix(np.array(block.get("utility",
                                                 [[1.0, 0.0], [-5.0, 1.0]])))
    jparams = block.get("judgement", {})
    judgement = acra.AttackerJudgement(
        insertion_cost=float(jparams.get("insertion_cost", 0.1)),
        concentration=float(jparams.get("concentration", 10.0)),
    )
    common = dict(
        X=X, y=y, util=util, judgement=judgement,
        n_repetitions=int(block.get("n_repetitions", 100)),
        test_fraction=float(block.get("test_fraction", 0.3)),
        n_samples=int(block.get("n_samples", 10_000)),
        smoothing=float(block.get("smoothing", 1.0)),
        good_words_k=int(block.get("good_words_k", 10)),
        n_workers=int(block.get("n_workers", 1)),
        rng=rng.substream("evaluate"),
    )
    cells = block.get("models", ["nb_plain", "nb_tainted", "acra"])
    row_names = {"nb_plain": ("nb", False), "nb_tainted": ("nb", True),
                 "acra": ("acra", True)}
    rows = []
    for cell in cells:
        if cell not in row_names:
            raise UsageError(f"unknown acra model cell {cell!r}")
        model_kind, attack = row_names[cell]
        acra_reps = int(block.get("acra_repetitions", common["n_repetitions"]))
        params = dict(common)
        if model_kind == "acra":
            params["n_repetitions"] = acra_reps
        record = acra.evaluate(model_kind=model_kind, attack=attack, **params)
        summary = record.summary()
        summary["cell"] = cell
        rows.append(summary)
    ordered = [
        {k: r[k] for k in ("cell", "model_kind", "attack", "n_repetitions",
                           "accuracy_mean", "accuracy_std", "fpr_mean",
                           "fpr_std", "fnr_mean", "fnr_std", "n_resampled")}
        for r in rows
    ]
    report.metrics = ordered
    report.add_artifact(write_metrics_csv(out / "metrics.csv", ordered), "metrics")
    fig = render_bar_figure(
        out / "figures" / "metrics.png",
        labels=[r["cell"] for r in ordered],
        series={m: [r[f"{m}_mean"] for r in ordered]
                for m in ("accuracy", "fpr", "fnr")},
        errors={m: [r[f"{m}_std"] for r in ordered]
                for m in ("accuracy", "fpr", "fnr")},
        title="Classifier performance under 1-good-word attacks",
        ylabel="rate",
    )
    report.add_artifact(fig, "figure")


def _make_tmdp_agent(spec: dict, env: tmdp.BimatrixEnv, side: str,
                     hyper: dict):
    n_states = env.n_states
    if side == "row":
        n_own, n_opp = env.n_row_actions, env.n_col_actions
        own_payoff, opp_payoff = env.u_row, env.u_col
    else:
        n_own, n_opp = env.n_col_actions, env.n_row_actions
        own_payoff, opp_payoff = env.u_col.T, env.u_row.T

    alpha = tmdp.inverse_time(float(hyper.get("alpha", 0.1)),
                              float(hyper.get("alpha_scale", 1000.0)))
    epsilon = tmdp.decaying(float(hyper.get("epsilon", 0.1)),
                            float(hyper.get("epsilon_end", 0.01)),
                            int(hyper.get("epsilon_horizon", 5000)))
    gamma = float(hyper.get("gamma", 0.96))

    kind = spec.get("kind", "independent")
    if kind == "independent":
        return tmdp.IndependentQLearner(n_states, n_own, alpha, epsilon, gamma)
    if kind == "fixed":
        return tmdp.FixedPolicyAgent(int(spec.get("action", 0)))
    if kind == "opponent_aware":
        model_kind = spec.get("opponent_model", "frequency")
        if model_kind == "frequency":
            model = tmdp.FrequencyModel(n_states, n_opp,
                                        prior=float(spec.get("prior", 1.0)))
        elif model_kind == "level_k":
            model = tmdp.LevelKModel(
                n_states, n_own, n_opp,
                opp_reward=lambda s, d, a: opp_payoff[d, a],
                k=int(spec.get("k", 1)),
                gamma=gamma,
                temperature=float(spec.get("temperature", 1.0)),
                own_reward=lambda s, d, a: own_payoff[d, a],
            )
        elif model_kind == "mixture":
            components = [tmdp.FrequencyModel(n_states, n_opp, prior=p)
                          for p in spec.get("priors", [0.5, 2.0])]
            model = tmdp.MixtureModel(components)
        else:
            raise UsageError(f"unknown opponent model {model_kind!r}")
        return tmdp.OpponentAwareQLearner(n_states, n_own, n_opp, model,
                                          alpha, epsilon, gamma)
    raise UsageError(f"unknown agent kind {kind!r}")


def _run_tmdp(config: dict, rng: SeededRng, out: Path, report: RunReport):
    block = config.get("tmdp", {})
    game = block.get("game", "chicken")
    if game == "chicken":
        env = tmdp.chicken_env()
    else:
        env = tmdp.BimatrixEnv(
            u_row=np.array(game["u_row"], dtype=float),
            u_col=np.array(game["u_col"], dtype=float),
            memory=game.get("memory", "none"),
        )
    hyper = block.get("hyper", {})
    n_iterations = int(block.get("n_iterations", 10_000))
    seeds = block.get("seeds", [0])
    window = int(block.get("rolling_window", 100))

    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    rows = []
    rolling = {}
    for seed_idx in seeds:
        agent_row = _make_tmdp_agent(block.get("agents", {}).get("row", {}),
                                     env, "row", hyper)
        agent_col = _make_tmdp_agent(block.get("agents", {}).get("col", {}),
                                     env, "col", hyper)
        traj = tmdp.run_iterated_game(
            env, agent_row, agent_col, n_iterations,
            rng.substream("game", int(seed_idx)),
        )
        trace = write_trace(
            trace_dir / f"run_{seed_idx}.csv",
            {
                "action_row": traj.actions_row,
                "action_col": traj.actions_col,
                "reward_row": traj.rewards_row,
                "reward_col": traj.rewards_col,
            },
        )
        report.add_artifact(trace, "trace")
        tail_row, tail_col = traj.tail_mean(0.1)
        rows.append({
            "seed": int(seed_idx),
            "tail_mean_row": tail_row,
            "tail_mean_col": tail_col,
            "mean_row": float(traj.rewards_row.mean()),
            "mean_col": float(traj.rewards_col.mean()),
        })
        roll_row, roll_col = traj.rolling_mean(window)
        rolling[f"row (seed {seed_idx})"] = roll_row
        rolling[f"col (seed {seed_idx})"] = roll_col

    report.metrics = rows
    report.add_artifact(write_metrics_csv(out / "metrics.csv", rows), "metrics")
    fig = render_line_figure(
        out / "figures" / "rewards.png", rolling,
        title=f"Rolling mean rewards (window {window})",
        xlabel="iteration", ylabel="reward",
    )
    report.add_artifact(fig, "figure")


def _run_templates(config: dict, rng: SeededRng, out: Path, report: RunReport):
    block = config.get("templates", {})
    if "game_file" in block:
        game = templates.load_game(block["game_file"])
    elif block.get("game") == "chicken":
        game = templates.SimultaneousGame.chicken()
    else:
        raise UsageError("templates config needs game_file or game: chicken")
    n_samples = int(block.get("n_samples", 10_000))
    rows = []
    p_attack_series = {}

    solvers = block.get("solvers", ["pure_nash"])
    for solver in solvers:
        if solver == "pure_nash":
            ne = templates.enumerate_pure_nash(game)
            rows.append({
                "solver": "pure_nash",
                "result": ";".join(f"({d},{a})" for d, a in sorted(ne)),
            })
        elif solver == "sequential_nash":
            d_star, best = templates.solve_sequential_nash(game)
            rows.append({
                "solver": "sequential_nash",
                "result": f"d*={d_star};" + ";".join(
                    f"a({d})={best[d]}" for d in game.d_actions),
            })
        elif solver == "sequential_ara":
            judgement = templates.RandomJudgement.point_mass(
                templates.SequentialDraw.from_game(game)
            )
            d_star, p_attack = templates.solve_sequential_ara(
                game, judgement, n_samples, rng.substream("sequential_ara")
            )
            rows.append({"solver": "sequential_ara", "result": f"d*={d_star}"})
            for d, dist in p_attack.items():
                p_attack_series[f"p(a|{d})"] = dist.probs
        elif solver == "simultaneous_ara":
            level = int(block.get("level", 1))
            hierarchy = _default_hierarchy(game, level)
            d_star, belief = templates.solve_simultaneous_ara(
                game, hierarchy, n_samples, rng.substream("simultaneous_ara")
            )
            rows.append({
                "solver": f"simultaneous_ara_k{level}",
                "result": f"d*={d_star};belief="
                + ";".join(f"{a}:{belief.prob(a):.4f}" for a in game.a_actions),
            })
        else:
            raise UsageError(f"unknown templates solver {solver!r}")

    report.metrics = rows
    report.add_artifact(write_metrics_csv(out / "metrics.csv", rows), "metrics")
    if p_attack_series:
        fig = render_bar_figure(
            out / "figures" / "p_attack.png",
            labels=list(game.a_actions),
            series={k: list(v) for k, v in p_attack_series.items()},
            title="Simulated attack distributions",
            ylabel="probability",
        )
        report.add_artifact(fig, "figure")


def _default_hierarchy(game, level: int) -> templates.LevelKPolicy:
    """Point-mass judgements at the game's own payoffs, uniform level-0."""
    if not game.is_bimatrix:
        raise UsageError("default hierarchy requires a bimatrix game")
    judgements = {}
    for j in range(1, level + 1):
        if (level - j) % 2 == 0:  # attacker level: own actions are columns
            draw = game.u_a_payoff.T
        else:
            draw = game.u_d_payoff
        judgements[j] = templates.RandomJudgement.point_mass(draw)
    base_actions = game.a_actions if level % 2 == 0 else game.d_actions
    return templates.LevelKPolicy(
        level=level,
        base_prior=templates.DiscreteDistribution.uniform(base_actions),
        judgements=judgements,
    )


def _run_gradattack(config: dict, rng: SeededRng, out: Path, report: RunReport):
    block = config.get("gradattack", {})
    data = block.get("dataset", {})
    X, y = gradattack.make_margin_dataset(
        n=int(data.get("n", 500)),
        dim=int(data.get("dim", 5)),
        margin=float(data.get("margin", 1.0)),
        rng=rng.substream("dataset"),
    )
    bspec = block.get("budget", {})
    budget = gradattack.PerturbationBudget(
        norm=bspec.get("norm", "linf"),
        epsilon=float(bspec.get("epsilon", 0.25)),
        steps=int(bspec.get("steps", 10)),
    )
    epochs = int(block.get("epochs", 100))
    lr = float(block.get("learning_rate", 0.5))

    standard = gradattack.train_logistic(X, y, epochs, lr, rng.substream("std"))
    robust = gradattack.adversarial_training(
        X, y, budget, epochs, lr, rng.substream("adv")
    )
    rows = []
    for name, model in (("standard", standard), ("adversarial", robust)):
        rows.append({
            "model": name,
            "clean_accuracy": gradattack.accuracy(model, X, y),
            "robust_accuracy": gradattack.robust_accuracy(model, X, y, budget),
        })
    report.metrics = rows
    report.add_artifact(write_metrics_csv(out / "metrics.csv", rows), "metrics")

    # per-instance attack record for the standard model
    X_adv = gradattack.attack_batch(standard, X, y, budget)
    clean_losses = [gradattack.loss_and_gradient(standard, xi, int(yi))[0]
                    for xi, yi in zip(X, y)]
    adv_losses = [gradattack.loss_and_gradient(standard, xi, int(yi))[0]
                  for xi, yi in zip(X_adv, y)]
    if budget.norm == "linf":
        norms = np.abs(X_adv - X).max(axis=1)
    else:
        norms = np.linalg.norm(X_adv - X, axis=1)
    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    trace = write_trace(
        trace_dir / "attacks.csv",
        {"clean_loss": clean_losses, "adversarial_loss": adv_losses,
         "perturbation_norm": norms},
    )
    report.add_artifact(trace, "trace")
    fig = render_bar_figure(
        out / "figures" / "robustness.png",
        labels=[r["model"] for r in rows],
        series={"clean": [r["clean_accuracy"] for r in rows],
                "under attack": [r["robust_accuracy"] for r in rows]},
        title=f"Accuracy under PGD ({budget.norm}, eps={budget.epsilon})",
        ylabel="accuracy",
    )
    report.add_artifact(fig, "figure")


_HARNESSES = {
    "acra": _run_acra,
    "tmdp": _run_tmdp,
    "templates": _run_templates,
    "gradattack": _run_gradattack,
}


def run(config: dict, out_dir=None) -> RunReport:
    """Dispatch a resolved config to its harness and write the report."""
    kind = config["kind"]
    out = Path(out_dir or config.get("output_dir", "runs") or "runs")
    out.mkdir(parents=True, exist_ok=True)
    (out / "figures").mkdir(exist_ok=True)
    rng = SeededRng(int(config["seed"]))
    report = RunReport(kind=kind, config=config)
    with Timer() as timer:
        _HARNESSES[kind](config, rng, out, report)
    report.duration_seconds = timer.seconds
    report.add_artifact(report.save(out), "report")
    return report


# ---------------------------------------------------------------------------
# Entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="araml",
        description="Adversarial risk analysis experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", help="YAML experiment config")
    run_p.add_argument("--out", help="output directory (overrides config)")
    run_p.add_argument("--seed", type=int, help="override the config seed")
    run_p.add_argument("--n-samples", type=int, help="override MC sample count")
    run_p.add_argument("--n-repetitions", type=int,
                       help="override hold-out repetitions")
    run_p.add_argument("--workers", type=int, help="override worker count")

    cmp_p = sub.add_parser("compare", help="diff two run reports")
    cmp_p.add_argument("report_a")
    cmp_p.add_argument("report_b")
    cmp_p.add_argument("--tolerance", type=float, default=0.0)
    return parser


def _apply_overrides(config: dict, args) -> dict:
    if args.seed is not None:
        config["seed"] = args.seed
    block = config.setdefault(config["kind"], {})
    if args.n_samples is not None:
        block["n_samples"] = args.n_samples
    if args.n_repetitions is not None:
        block["n_repetitions"] = args.n_repetitions
    if args.workers is not None:
        block["n_workers"] = args.workers
    return config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = _apply_overrides(load_config(args.config), args)
            report = run(config, out_dir=args.out)
            print(f"report written to {report.artifacts[-1]['path']}")
            for row in report.metrics:
                print(", ".join(f"{k}={v}" for k, v in row.items()))
            return 0
        if args.command == "compare":
            result = compare_report(
                RunReport.load(args.report_a),
                RunReport.load(args.report_b),
                tolerance=args.tolerance,
            )
            for entry in result["flagged"]:
                print(f"FLAGGED: {entry}")
            print(f"{len(result['deltas'])} metric deltas, "
                  f"{len(result['flagged'])} beyond tolerance "
                  f"{result['tolerance']}")
            return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except AramlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
