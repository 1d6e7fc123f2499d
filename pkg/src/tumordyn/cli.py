"""Command-line pipeline: fit, train, forecast, and recover per subject.

Subcommands:

    interpolate   fit the sigmoid interpolant and write its samples/plot
    gompertz      solve the fixed-parameter Gompertz baseline
    train-node    train the neural ODE on the interpolated series
    train-ude     train the Gompertz-structured UDE
    forecast      run the train-fraction forecast suite
    recover       sparse symbolic recovery from saved model checkpoints
    run-all       everything above for every configured subject, plus
                  aggregate tables

Common flags: --config <yaml>, --subject <id>, --out <dir>, --seed <int>,
--data <csv>. Artifacts land in <out>/subject_<id>/; `run-all` adds
<out>/table_results.csv and <out>/forecast_summary.csv. Every SVG plot has
a CSV twin carrying the same numbers. Exit code is 0 only if every stage
succeeded.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio, models, symrec
from .forecast import forecast_suite, write_cell_csv, write_suite_csv
from .config import RunConfig, load_config
from .odeint import GompertzParams, Trajectory, write_trajectory_csv
from .svgplot import PlotStyle, emit_plot

__all__ = ["run_subject", "run_all", "main", "emit_plot"]

_CURVE_SAMPLES = 101  # dense grid for plotted curves


@dataclass
class _SubjectContext:
    subject_id: int
    series: dataio.TumorSeries
    norm_map: dataio.NormalizationMap
    sigmoid: dataio.SigmoidFit
    data: list[tuple[float, float]]  # normalized (tau, v) collocation points
    out_dir: Path


def _prepare_subject(config: RunConfig, subject_id: int) -> _SubjectContext:
    series = dataio.load_series(config.data_path, subject_id)
    norm_map = dataio.make_norm_map(series)
    sigmoid = dataio.fit_sigmoid(series, norm_map)
    samples = dataio.sample_interpolant(sigmoid, config.n_collocation)
    data = [(tau, float(norm_map.normalize_v(v))) for tau, v in samples]
    out_dir = Path(config.out_dir) / f"subject_{subject_id}"
    out_dir.mkdir(parents=True, exist_ok=True)
    return _SubjectContext(subject_id, series, norm_map, sigmoid, data, out_dir)


def _physical_targets(ctx: _SubjectContext):
    taus = np.array([t for t, _ in ctx.data])
    volumes = ctx.norm_map.denormalize_v(np.array([v for _, v in ctx.data]))
    return taus, volumes


# --- stages -------------------------------------------------------------


def stage_interpolate(config: RunConfig, ctx: _SubjectContext) -> dict:
    dataio.write_interpolant_csv(ctx.sigmoid, config.n_collocation, ctx.norm_map, ctx.out_dir / "interpolant.csv")
    dense = dataio.sample_interpolant(ctx.sigmoid, _CURVE_SAMPLES)
    times = [float(ctx.norm_map.denormalize_t(t)) for t, _ in dense]
    emit_plot(
        ctx.out_dir / "interpolant.svg",
        times,
        [("sigmoid interpolant", [v for _, v in dense])],
        PlotStyle("Tumor volume interpolation", "time [days]", "volume [mm^3]"),
        scatter=("measured", ctx.series.times, ctx.series.volumes),
    )
    s = ctx.sigmoid
    return {"A": s.A, "B": s.B, "k": s.k, "tau0": s.tau0, "sse": s.sse}


def stage_gompertz(config: RunConfig, ctx: _SubjectContext) -> dict:
    params = GompertzParams(config.gompertz_a, config.gompertz_K)
    model = models.GompertzModel(params)
    v0 = float(ctx.sigmoid.value(0.0))
    t_min, t_max = ctx.norm_map.t_min, ctx.norm_map.t_max
    traj = models.solve(model, v0, (t_min, t_max), config.solver_steps)
    write_trajectory_csv(traj, ctx.out_dir / "gompertz.csv")

    taus, target_volumes = _physical_targets(ctx)
    predicted = np.interp(ctx.norm_map.denormalize_t(taus), traj.times, traj.states)
    mse_physical = float(np.mean((predicted - target_volumes) ** 2))
    mse_normalized = mse_physical / ctx.norm_map.v_scale**2

    emit_plot(
        ctx.out_dir / "gompertz.svg",
        list(ctx.norm_map.denormalize_t(taus)),
        [
            ("Gompertz model", list(predicted)),
            ("interpolated target", list(target_volumes)),
        ],
        PlotStyle("Gompertz baseline", "time [days]", "volume [mm^3]"),
    )
    return {
        "a": params.a,
        "K": params.K,
        "loss_normalized": mse_normalized,
        "loss_physical": mse_physical,
        "clamp_events": traj.clamp_events,
    }


def _train_stage(config: RunConfig, ctx: _SubjectContext, variant: str):
    train_config = config.node_config() if variant == "neural_ode" else config.ude_config()
    model, report = models.train(
        variant, ctx.data, train_config, physical_scale=ctx.norm_map.v_scale**2
    )
    models.write_report_csv(report, ctx.out_dir / f"{variant}_fit.csv")
    models.save_model(model, ctx.out_dir / f"{variant}.ckpt.json", seed=config.seed)

    traj = models.solve(model, ctx.data[0][1], (0.0, 1.0), config.solver_steps)
    physical = Trajectory(
        ctx.norm_map.denormalize_t(traj.times), ctx.norm_map.denormalize_v(traj.states)
    )
    write_trajectory_csv(physical, ctx.out_dir / f"{variant}_traj.csv")

    taus, target_volumes = _physical_targets(ctx)
    predicted = np.interp(taus, traj.times, ctx.norm_map.denormalize_v(traj.states))
    label = "Neural ODE" if variant == "neural_ode" else "UDE"
    emit_plot(
        ctx.out_dir / f"{variant}.svg",
        list(ctx.norm_map.denormalize_t(taus)),
        [(label, list(predicted)), ("interpolated target", list(target_volumes))],
        PlotStyle(f"{label} fit", "time [days]", "volume [mm^3]"),
    )
    chunk = {
        "initial_loss": report.initial_loss,
        "final_loss": report.final_loss,
        "best_loss": report.best_loss,
        "best_epoch": report.best_epoch,
        "initial_loss_physical": report.initial_loss_physical,
        "final_loss_physical": report.final_loss_physical,
        "best_loss_physical": report.best_loss_physical,
        "epochs": len(report.loss_history),
    }
    return model, chunk


def stage_forecast(config: RunConfig, ctx: _SubjectContext) -> list[dict]:
    configs = {"neural_ode": config.node_config(), "ude": config.ude_config()}

    def write_cell_artifacts(variant, fraction, result):
        pct = int(round(fraction * 100))
        write_cell_csv(result, ctx.data, ctx.out_dir / f"forecast_{variant}_{pct}.csv")
        taus, target_volumes = _physical_targets(ctx)
        predicted = ctx.norm_map.denormalize_v(
            np.interp(taus, result.trajectory.times, result.trajectory.states)
        )
        emit_plot(
            ctx.out_dir / f"forecast_{variant}_{pct}.svg",
            list(ctx.norm_map.denormalize_t(taus)),
            [("forecast", list(predicted)), ("interpolated target", list(target_volumes))],
            PlotStyle(
                f"{variant} forecast, {pct}% training window",
                "time [days]",
                "volume [mm^3]",
                split_x=float(ctx.norm_map.denormalize_t(fraction)),
            ),
        )

    rows = forecast_suite(
        ctx.data,
        ["neural_ode", "ude"],
        config.fractions,
        configs,
        n_collocation=config.n_collocation,
        on_cell=write_cell_artifacts,
    )
    write_suite_csv(rows, ctx.subject_id, ctx.out_dir / "forecast.csv")
    return [
        {
            "variant": r.variant,
            "fraction": r.fraction,
            "train_loss": r.train_loss,
            "test_mse": r.test_mse,
            "error": r.error,
        }
        for r in rows
    ]


def stage_recover(config: RunConfig, ctx: _SubjectContext, variant: str, model) -> dict:
    basis = symrec.BasisSet(config.basis_K(ctx.subject_id))
    fit, expression = symrec.recover(
        model,
        ctx.norm_map,
        basis,
        v0=ctx.data[0][1],
        n_samples=config.recover_n_samples,
        lam=config.recover_lambda,
        sig_figs=config.sig_figs,
        solver_steps=config.solver_steps,
    )
    symrec.write_fit_csv(fit, ctx.out_dir / f"recovered_{variant}.csv")
    print(f"[subject {ctx.subject_id}] {variant}: {expression}")
    return {
        "expression": expression,
        "beta": [float(b) for b in fit.beta],
        "active_set": list(fit.active_set),
        "lambda": fit.lam,
        "residual_norm": fit.residual_norm,
        "K": basis.K,
    }


# --- orchestration -------------------------------------------------------


def run_subject(config: RunConfig, subject_id: int) -> dict:
    """Execute the full pipeline for one subject and write its report.

    Stage failures are recorded in the summary and later independent
    stages still run; an unknown subject raises before any work happens.
    Returns the summary dict (also written to summary.json; stage wall
    times go to timings.json so the summary stays run-to-run identical).
    """
    ctx = _prepare_subject(config, subject_id)
    summary: dict = {"subject": subject_id, "errors": []}
    timings: dict = {}

    def stage(name: str, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:  # noqa: BLE001 - stage isolation is the contract
            summary["errors"].append({"stage": name, "error": f"{type(exc).__name__}: {exc}"})
            result = None
        timings[name] = time.perf_counter() - start
        return result

    summary["sigmoid"] = stage("interpolate", lambda: stage_interpolate(config, ctx))
    summary["gompertz"] = stage("gompertz", lambda: stage_gompertz(config, ctx))

    trained: dict[str, models.DynamicsModel] = {}

    def train_and_keep(variant):
        model, chunk = _train_stage(config, ctx, variant)
        trained[variant] = model
        return chunk

    summary["neural_ode"] = stage("train-node", lambda: train_and_keep("neural_ode"))
    summary["ude"] = stage("train-ude", lambda: train_and_keep("ude"))
    summary["forecast"] = stage("forecast", lambda: stage_forecast(config, ctx))

    summary["recovered"] = {}
    for variant in ("neural_ode", "ude"):
        if variant in trained:
            summary["recovered"][variant] = stage(
                f"recover-{variant}",
                lambda v=variant: stage_recover(config, ctx, v, trained[v]),
            )
        else:
            summary["errors"].append(
                {"stage": f"recover-{variant}", "error": f"skipped: {variant} training failed"}
            )
            summary["recovered"][variant] = None

    with open(ctx.out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    with open(ctx.out_dir / "timings.json", "w", encoding="utf-8") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
    return summary


def run_all(config: RunConfig) -> list[dict]:
    """run_subject for every configured subject, plus aggregate tables."""
    out_root = Path(config.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    summaries = []
    for sid in config.subjects:
        try:
            summaries.append(run_subject(config, sid))
        except Exception as exc:  # noqa: BLE001 - subject isolation
            summaries.append(
                {"subject": sid, "errors": [{"stage": "prepare", "error": f"{type(exc).__name__}: {exc}"}]}
            )

    import csv as _csv

    with open(out_root / "table_results.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["subject", "node_loss", "ude_loss", "node_expression", "ude_expression"])
        for s in summaries:
            node = s.get("neural_ode") or {}
            ude = s.get("ude") or {}
            rec = s.get("recovered") or {}
            writer.writerow(
                [
                    s["subject"],
                    repr(node.get("best_loss")) if node else "",
                    repr(ude.get("best_loss")) if ude else "",
                    (rec.get("neural_ode") or {}).get("expression", ""),
                    (rec.get("ude") or {}).get("expression", ""),
                ]
            )

    pcts = [int(round(f * 100)) for f in config.fractions]
    with open(out_root / "forecast_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        header = ["subject", "K"]
        for variant in ("neural_ode", "ude"):
            header += [f"{variant}_{pct}" for pct in pcts]
        writer.writerow(header)
        for s in summaries:
            row = [s["subject"], repr(config.basis_K(s["subject"]))]
            cells = {
                (r["variant"], int(round(r["fraction"] * 100))): r["test_mse"]
                for r in (s.get("forecast") or [])
            }
            for variant in ("neural_ode", "ude"):
                for pct in pcts:
                    value = cells.get((variant, pct))
                    row.append("" if value is None else repr(value))
            writer.writerow(row)
    return summaries


# --- entry point ---------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tumordyn", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("interpolate", "gompertz", "train-node", "train-ude", "forecast", "recover", "run-all"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="YAML run configuration")
        p.add_argument("--subject", type=int, default=None, help="subject id")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="PRNG seed")
        p.add_argument("--data", type=str, default=None, help="input CSV path")
    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.data is not None:
        overrides["data_path"] = args.data
    if args.subject is not None:
        overrides["subjects"] = (args.subject,)
    return load_config(args.config, **overrides)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    config = _config_from_args(args)
    command = args.command

    try:
        if command == "run-all":
            summaries = run_all(config)
            failures = [
                (s["subject"], e["stage"], e["error"]) for s in summaries for e in s["errors"]
            ]
            for sid, stage_name, err in failures:
                print(f"[subject {sid} / {stage_name}] {err}", file=sys.stderr)
            return 1 if failures else 0

        subject_id = args.subject if args.subject is not None else config.subjects[0]
        ctx = _prepare_subject(config, subject_id)
        if command == "interpolate":
            stage_interpolate(config, ctx)
        elif command == "gompertz":
            stage_gompertz(config, ctx)
        elif command == "train-node":
            _train_stage(config, ctx, "neural_ode")
        elif command == "train-ude":
            _train_stage(config, ctx, "ude")
        elif command == "forecast":
            rows = stage_forecast(config, ctx)
            errs = [r for r in rows if r["error"] is not None]
            for r in errs:
                print(f"[{command} / {r['variant']}@{r['fraction']}] {r['error']}", file=sys.stderr)
            if errs:
                return 1
        elif command == "recover":
            for variant in ("neural_ode", "ude"):
                ckpt = ctx.out_dir / f"{variant}.ckpt.json"
                if not ckpt.exists():
                    print(
                        f"[{command}] missing checkpoint {ckpt}; run train-node/train-ude first",
                        file=sys.stderr,
                    )
                    return 1
                stage_recover(config, ctx, variant, models.load_model(ckpt))
        return 0
    except Exception as exc:  # noqa: BLE001 - single place that maps errors to exit codes
        print(f"[{command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
