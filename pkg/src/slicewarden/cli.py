"""Command-line entry point wiring simulation, features, datasets, training,
classification and the contamination sweep."""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .autoencoder import TrainConfig, TrainingError
from .baseline import DEFAULT_ALPHA, BaselineDetector, ThresholdConfig
from .datasets import (
    DatasetSpec,
    PoolBudget,
    assemble_test,
    assemble_training,
    pca_project,
    read_dataset,
    separability_silhouette,
    simulate_pools,
    write_dataset,
)
from .detector import DetectorError, load_detector, save_detector, train_detector
from .evaluate import run_sweep, score, write_report
from .features import (
    FeatureError,
    compute_window_features,
    read_feature_csv,
    write_feature_csv,
)
from .kmeans import ClusteringError, KMeansConfig
from .manifest import ManifestTimer, ensure_fresh, sha256_file
from .oracles import run_selfcheck
from .sim import ConfigError, NetworkConfig, simulate_scenario
from .events import read_trace, write_trace

log = logging.getLogger("slicewarden")

_USER_ERRORS = (ConfigError, FeatureError, ClusteringError, DetectorError, TrainingError, FileExistsError, FileNotFoundError, ValueError)


class _JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        return json.dumps(
            {"level": record.levelname.lower(), "logger": record.name, "message": record.getMessage()},
            sort_keys=True,
        )


def _setup_logging(quiet: bool, json_logs: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if json_logs else logging.Formatter("%(levelname)s %(message)s"))
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, handlers=[handler], force=True)


def _config_file_value(ctx: click.Context, command: str, name: str):
    cfg = ctx.obj.get("config_file") or {}
    section = cfg.get(command, {})
    return section.get(name)


def _resolve(ctx: click.Context, command: str, **params):
    """Apply precedence: explicit flag > config file > click default."""
    resolved = {}
    for name, value in params.items():
        source = ctx.get_parameter_source(name)
        if source is not None and source.name == "COMMANDLINE":
            resolved[name] = value
            continue
        from_file = _config_file_value(ctx, command, name)
        resolved[name] = value if from_file is None else from_file
    return resolved


def _fail(message: str) -> None:
    click.echo(json.dumps({"error": message}), err=True)
    sys.exit(1)


@click.group()
@click.version_option(version=__version__)
@click.option("--seed", type=int, default=0, show_default=True, help="Global default seed.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON config file with per-command defaults.")
@click.option("--quiet", is_flag=True, help="Log warnings and errors only.")
@click.option("--json-logs", is_flag=True, help="Emit logs as JSON lines.")
@click.pass_context
def main(ctx: click.Context, seed: int, config_path: str | None, quiet: bool, json_logs: bool) -> None:
    """Slice-mobility attack emulation and PU-learning detection toolkit."""
    _setup_logging(quiet, json_logs)
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["config_file"] = json.loads(Path(config_path).read_text()) if config_path else {}


def _network_config(p: dict) -> NetworkConfig:
    return NetworkConfig(
        num_slices=p["slices"],
        num_ues=p["ues"],
        num_compromised=p["compromised"],
        emulation_duration=p["duration"],
        attack_start=p["attack_start"],
    )


@main.command()
@click.option("--scenario", type=click.Choice(["benign", "rsa", "tsa"]), required=True)
@click.option("--seed", type=int, default=None, help="Run seed (falls back to the global --seed).")
@click.option("--out", type=click.Path(), required=True)
@click.option("--duration", type=float, default=7200.0, show_default=True)
@click.option("--attack-start", type=float, default=3600.0, show_default=True)
@click.option("--ues", type=int, default=92, show_default=True)
@click.option("--compromised", type=int, default=28, show_default=True)
@click.option("--slices", type=int, default=4, show_default=True)
@click.pass_context
def simulate(ctx: click.Context, **params) -> None:
    """Run one emulation and write the event trace as JSON lines."""
    p = _resolve(ctx, "simulate", **params)
    seed = p["seed"] if p["seed"] is not None else ctx.obj["seed"]
    try:
        config = _network_config(p)
        ensure_fresh(p["out"])
        timer = ManifestTimer("simulate", {**asdict(config), "scenario": p["scenario"]}, {"run": seed})
        trace = simulate_scenario(p["scenario"], config, seed)
        digest = write_trace(trace, p["out"])
        timer.add_output(p["out"], digest)
        timer.write(p["out"])
        log.info("wrote %s events to %s", len(trace.events), p["out"])
    except _USER_ERRORS as exc:
        _fail(str(exc))


@main.command()
@click.option("--trace", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--window", type=float, default=1.0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def features(ctx: click.Context, **params) -> None:
    """Extract the 17 per-window features from a trace into CSV."""
    p = _resolve(ctx, "features", **params)
    try:
        ensure_fresh(p["out"])
        timer = ManifestTimer("features", {"window": p["window"]})
        timer.add_input(p["trace"])
        matrix = compute_window_features(read_trace(p["trace"]), p["window"])
        digest = write_feature_csv(matrix, p["out"])
        timer.add_output(p["out"], digest)
        timer.write(p["out"])
        log.info("wrote %s feature rows to %s", len(matrix), p["out"])
    except _USER_ERRORS as exc:
        _fail(str(exc))


@main.group()
def dataset() -> None:
    """Build and inspect contamination datasets."""


@dataset.command("build")
@click.option("--contamination", type=float, required=True)
@click.option("--total", type=int, default=8000, show_default=True)
@click.option("--labeled", "labeled_fraction", type=float, default=0.10, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--window", type=float, default=1.0, show_default=True)
@click.option("--run-duration", type=float, default=1200.0, show_default=True, help="Per-run emulation length for pool generation.")
@click.option("--run-attack-start", type=float, default=600.0, show_default=True)
@click.pass_context
def dataset_build(ctx: click.Context, **params) -> None:
    """Simulate pools and assemble one contaminated training dataset."""
    p = _resolve(ctx, "dataset", **params)
    seed = p["seed"] if p["seed"] is not None else ctx.obj["seed"]
    try:
        spec = DatasetSpec(
            total_records=p["total"],
            contamination=p["contamination"],
            labeled_positive_fraction=p["labeled_fraction"],
            seed=seed,
        )
        spec.validate()
        ensure_fresh(p["out"])
        sim_config = NetworkConfig(emulation_duration=p["run_duration"], attack_start=p["run_attack_start"])
        n_benign, n_rsa, n_tsa, _ = spec.counts()
        timer = ManifestTimer(
            "dataset build",
            {"spec": spec.to_json_obj(), "sim_config": asdict(sim_config), "window": p["window"]},
            {"dataset": seed},
        )
        pools = simulate_pools(PoolBudget(n_benign, n_rsa, n_tsa), seed, "train", sim_config, p["window"])
        ds = assemble_training(pools["benign"], pools["rsa"], pools["tsa"], spec)
        csv_digest, meta_digest = write_dataset(ds, p["out"])
        timer.add_output(p["out"], csv_digest)
        timer.add_output(Path(p["out"]).with_suffix(".meta.json"), meta_digest)
        timer.write(p["out"])
        log.info("wrote %s rows (%s benign / %s rsa / %s tsa) to %s", len(ds), n_benign, n_rsa, n_tsa, p["out"])
    except _USER_ERRORS as exc:
        _fail(str(exc))


def _run_pca(in_path: str, out_path: str) -> None:
    ensure_fresh(out_path)
    timer = ManifestTimer("pca", {"dims": 2})
    timer.add_input(in_path)
    ds = read_dataset(in_path)
    coords, ratios = pca_project(ds.features, dims=2)
    silhouette = separability_silhouette(coords, ds.truth)
    out = Path(out_path)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("pc1,pc2,truth\n")
        for i in range(len(ds)):
            fh.write(f"{coords[i, 0]!r},{coords[i, 1]!r},{ds.truth[i]}\n")
    sidecar = out.with_suffix(".pca.json")
    sidecar.write_text(
        json.dumps(
            {"explained_variance_ratios": ratios.tolist(), "silhouette": silhouette},
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    timer.add_output(out)
    timer.add_output(sidecar)
    timer.write(out)
    log.info("top-2 explained variance %.3f, silhouette %.3f", float(ratios.sum()), silhouette)


@dataset.command("pca")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True)
def dataset_pca(in_path: str, out: str) -> None:
    """Project a dataset to 2-D principal components (scatter export)."""
    try:
        _run_pca(in_path, out)
    except _USER_ERRORS as exc:
        _fail(str(exc))


@main.command()
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True)
def pca(in_path: str, out: str) -> None:
    """Alias for `dataset pca`."""
    try:
        _run_pca(in_path, out)
    except _USER_ERRORS as exc:
        _fail(str(exc))


@main.command()
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True, help="Training dataset CSV.")
@click.option("--out", type=click.Path(), required=True, help="Detector bundle path (JSON).")
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--kfold-audit", is_flag=True, help="Also report k-fold validation losses.")
@click.pass_context
def train(ctx: click.Context, **params) -> None:
    """Train the PU detector (and baseline calibration) on a dataset."""
    p = _resolve(ctx, "train", **params)
    seed = p["seed"] if p["seed"] is not None else ctx.obj["seed"]
    try:
        ensure_fresh(p["out"])
        train_cfg = TrainConfig(seed=seed, max_epochs=p["epochs"])
        timer = ManifestTimer("train", {"train_config": asdict(train_cfg)}, {"train": seed})
        timer.add_input(p["data"])
        ds = read_dataset(p["data"])
        detectors = train_detector(ds, train_config=train_cfg)
        digest = save_detector(detectors, p["out"], extra_meta={"training_data": sha256_file(p["data"])})
        timer.add_output(p["out"], digest)
        timer.write(p["out"])
        hist = detectors.pul.model.history
        log.info(
            "trained %s epochs (best val %.6f), calibrated alpha %.6f",
            hist.get("epochs_run"), hist.get("best_val_loss"), detectors.baseline_alpha_calibrated,
        )
        if p["kfold_audit"]:
            from .autoencoder import kfold_validation
            from .features import apply_normalizer, variance_threshold_select, windowize, fit_normalizer

            normalized = apply_normalizer(ds.features, fit_normalizer(ds.features))
            selected = normalized[:, variance_threshold_select(normalized)]
            losses = kfold_validation(windowize(selected, 1), None, train_cfg)
            click.echo(json.dumps({"kfold_val_losses": losses}))
    except _USER_ERRORS as exc:
        _fail(str(exc))


def _classify_common(model_path: str, data_path: str, out_path: str, verdicts, truth) -> None:
    ensure_fresh(out_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("verdict,truth\n")
        for v, t in zip(verdicts, truth):
            fh.write(f"{v},{t}\n")
    metrics_obj = None
    if any(t in ("benign", "attack") for t in truth):
        m = score(verdicts, truth)
        metrics_obj = {
            "precision": m.precision,
            "recall": m.recall,
            "f1": m.f1,
            "confusion": asdict(m.confusion),
            "degenerate": list(m.degenerate),
        }
        click.echo(json.dumps(metrics_obj, sort_keys=True))


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def classify(ctx: click.Context, model_path: str, data: str, out: str) -> None:
    """Classify dataset rows with the PU detector."""
    try:
        detector, _ = load_detector(model_path)
        ds = read_dataset(data)
        timer = ManifestTimer("classify", {})
        timer.add_input(model_path)
        timer.add_input(data)
        verdicts = detector.predict(ds.features)
        _classify_common(model_path, data, out, verdicts, ds.truth)
        timer.add_output(out)
        timer.write(out)
    except _USER_ERRORS as exc:
        _fail(str(exc))


@main.group()
def baseline() -> None:
    """Reconstruction-error threshold baseline."""


@baseline.command("classify")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@click.option("--calibrate", is_flag=True, help="Use the alpha calibrated at training time instead of --alpha.")
def baseline_classify(model_path: str, data: str, out: str, alpha: float, calibrate: bool) -> None:
    """Classify dataset rows by reconstruction-error threshold."""
    try:
        detector, alpha_cal = load_detector(model_path)
        ds = read_dataset(data)
        timer = ManifestTimer("baseline classify", {"alpha": alpha, "calibrate": calibrate})
        timer.add_input(model_path)
        timer.add_input(data)
        base = BaselineDetector(detector, ThresholdConfig(alpha=alpha), alpha_cal)
        verdicts = base.predict(ds.features, use_calibrated=calibrate)
        _classify_common(model_path, data, out, verdicts, ds.truth)
        timer.add_output(out)
        timer.write(out)
    except _USER_ERRORS as exc:
        _fail(str(exc))


@main.command()
@click.option("--levels", default="0.1,0.2,0.3,0.4", show_default=True)
@click.option("--total", type=int, default=8000, show_default=True)
@click.option("--test-total", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--num-seeds", type=int, default=3, show_default=True)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
def sweep(ctx: click.Context, **params) -> None:
    """Contamination sweep: train and score both detectors per level and seed."""
    p = _resolve(ctx, "sweep", **params)
    base_seed = p["seed"] if p["seed"] is not None else ctx.obj["seed"]
    try:
        levels = [float(x) for x in str(p["levels"]).split(",") if x]
        seeds = [base_seed + i for i in range(p["num_seeds"])]
        out_dir = Path(p["out_dir"])
        ensure_fresh(out_dir / "report.json")
        ensure_fresh(out_dir / "report.csv")
        train_cfg = TrainConfig(max_epochs=p["epochs"])
        timer = ManifestTimer(
            "sweep",
            {"levels": levels, "total": p["total"], "test_total": p["test_total"], "epochs": p["epochs"]},
            {"masters": seeds},
        )
        report = run_sweep(
            levels=levels,
            total=p["total"],
            test_total=p["test_total"],
            seeds=seeds,
            train_config=train_cfg,
        )
        digests = write_report(report, out_dir)
        for name, digest in digests.items():
            timer.add_output(out_dir / name, digest)
        timer.write(out_dir / "report.json")
        for row in report["aggregate"]:
            log.info(
                "level %.0f%% %s on %s: f1 %.4f",
                row["level"] * 100, row["detector"], row["test_set"], row["f1"],
            )
    except _USER_ERRORS as exc:
        _fail(str(exc))


@main.command()
@click.option("--seed", type=int, default=None)
@click.pass_context
def selfcheck(ctx: click.Context, seed: int | None) -> None:
    """Run the built-in oracle suites (feature counters, gradients, k-means)."""
    seed = seed if seed is not None else ctx.obj["seed"]
    results = run_selfcheck(seed)
    ok = all(r["passed"] for r in results.values())
    click.echo(json.dumps(results, sort_keys=True, indent=2, default=float))
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
