"""Command-line entry point wiring all modules together.

Subcommands: ``mix`` (build stimulus pools), ``simulate`` (synthetic
judgments over a pool), ``analyze`` (aggregation / flagging / consistency /
entropy reports), ``fit`` (boundary curves), ``train`` and ``compare``
(desk-scale harness), ``serve`` (HTTP service), ``export`` (per-session
records).

Every command writes a ``manifest.json`` beside its outputs recording the
command, a digest of its configuration, input file digests, and output
paths. Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 missing
input, 4 config/schema version mismatch.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .boundaryfit import export_boundary_fits, fit_all_pairs, import_boundary_fits
from .elicitservice import (
    ElicitationService,
    build_pool,
    build_procedural_pool,
    create_app,
)
from .elicitservice.pool import StimulusPool
from .hmixdata import (
    JudgmentStore,
    LabelFrequencyTable,
    aggregate_relabelings,
    confidence_by_extremity,
    entropy_bucket_analysis,
    export_hmix,
    flag_high_relabel,
    import_hmix,
    repeat_consistency,
)
from .labelpolicy import PolicyKind, SmoothingSpec
from .simulate import simulate_inference_judgments
from .traineval import (
    DEFAULT_EPSILON,
    EvalSet,
    MixMode,
    TrainConfig,
    TrainData,
    annotation_counts,
    flatten_images,
    load_cifar10_batch,
    make_dataset,
    run_comparison,
    train_single,
)

EXIT_FAILURE = 1
EXIT_MISSING_INPUT = 3
EXIT_SCHEMA_MISMATCH = 4

CONFIG_VERSION = 1


class MissingInputError(click.ClickException):
    exit_code = EXIT_MISSING_INPUT


class SchemaMismatchError(click.ClickException):
    exit_code = EXIT_SCHEMA_MISMATCH


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _require_file(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"input not found: {p}")
    return p


def write_manifest(
    out_dir: Path,
    command: str,
    config: dict,
    inputs: dict[str, Path],
    outputs: list[Path],
    seeds: list[int] | None = None,
) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "manifest_version": 1,
        "tool_version": __version__,
        "command": command,
        "config_sha256": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        "config": config,
        "seeds": seeds or [],
        "inputs": {
            name: {"path": str(p), "sha256": _sha256(p) if p.is_file() else None}
            for name, p in inputs.items()
        },
        "outputs": [str(p) for p in outputs],
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_config_file(path: str | Path) -> dict:
    p = _require_file(path)
    try:
        config = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise click.ClickException(f"{p}: invalid JSON: {exc}") from None
    version = config.get("config_version")
    if version != CONFIG_VERSION:
        raise SchemaMismatchError(
            f"{p}: config_version {version!r} unsupported (expected {CONFIG_VERSION})"
        )
    return config


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Human-in-the-loop mixing toolkit."""


# -- mix ---------------------------------------------------------------------


@main.command("mix")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option(
    "--source",
    type=click.Choice(["procedural", "cifar10"]),
    default="procedural",
    show_default=True,
)
@click.option("--cifar-batch", "cifar_batches", multiple=True, type=click.Path(path_type=Path))
@click.option("--per-class", default=6, show_default=True, help="endpoint images per class")
@click.option("--pairings", default=2, show_default=True, help="image pairings per class pair")
@click.option("--inference-per-pair", default=2, show_default=True)
@click.option("--enrich-midpoint", is_flag=True, help="midpoint-enriched coefficient sampling")
@click.option("--seed", default=0, show_default=True)
def cmd_mix(out_dir, source, cifar_batches, per_class, pairings, inference_per_pair, enrich_midpoint, seed):
    """Generate a stimulus pool (endpoints, pairs, inference mixes)."""
    rng = np.random.default_rng(seed)
    inputs: dict[str, Path] = {}
    if source == "procedural":
        pool = build_procedural_pool(
            rng,
            per_class=per_class,
            pairings_per_class_pair=pairings,
            inference_per_pair=inference_per_pair,
            enrich_midpoint=enrich_midpoint,
        )
    else:
        if not cifar_batches:
            raise MissingInputError("--source cifar10 needs at least one --cifar-batch file")
        images_by_class: dict[int, list[np.ndarray]] = {}
        for batch_path in cifar_batches:
            inputs[batch_path.name] = _require_file(batch_path)
            images, labels = load_cifar10_batch(batch_path)
            for img, label in zip(images, labels):
                bucket = images_by_class.setdefault(int(label), [])
                if len(bucket) < per_class:
                    bucket.append(img)
        names = tuple(f"class-{k}" for k in range(10))
        pool = build_pool(
            images_by_class,
            names,
            rng,
            pairings_per_class_pair=pairings,
            inference_per_pair=inference_per_pair,
            enrich_midpoint=enrich_midpoint,
        )
    pool.save(out_dir)
    write_manifest(
        out_dir,
        "mix",
        {
            "source": source,
            "per_class": per_class,
            "pairings": pairings,
            "inference_per_pair": inference_per_pair,
            "enrich_midpoint": enrich_midpoint,
            "seed": seed,
        },
        inputs,
        [out_dir / "pool.json", out_dir / "endpoints.npz"],
        seeds=[seed],
    )
    click.echo(
        f"pool written to {out_dir}: {len(pool.endpoints)} endpoints, "
        f"{len(pool.pairs)} pairs, {len(pool.inference_stimuli)} inference stimuli"
    )


# -- simulate ------------------------------------------------------------------


@main.command("simulate")
@click.option("--pool", "pool_dir", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_file", required=True, type=click.Path(path_type=Path))
@click.option("--judgments-per-stimulus", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_simulate(pool_dir, out_file, judgments_per_stimulus, seed):
    """Write synthetic inference judgments over every pool stimulus."""
    _require_file(Path(pool_dir) / "pool.json")
    pool = StimulusPool.load(pool_dir)
    rng = np.random.default_rng(seed)
    judgments = simulate_inference_judgments(
        pool.all_inference_stimuli(), rng, judgments_per_stimulus=judgments_per_stimulus
    )
    export_hmix(judgments, out_file)
    write_manifest(
        Path(out_file).parent,
        "simulate",
        {"judgments_per_stimulus": judgments_per_stimulus, "seed": seed},
        {"pool": Path(pool_dir) / "pool.json"},
        [Path(out_file)],
        seeds=[seed],
    )
    click.echo(f"{len(judgments)} simulated judgments written to {out_file}")


# -- analyze -------------------------------------------------------------------


def _stats_row(stats) -> dict:
    return {k: getattr(stats, k) for k in (
        "lambda_f", "n", "mean", "median", "p25", "p75",
        "confidence_mean", "confidence_sd", "n_confidence",
    )}


@main.command("analyze")
@click.option("--store", "store_file", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--freq", "freq_file", type=click.Path(path_type=Path))
@click.option("--threshold", default=0.15, show_default=True)
@click.option("--central", type=click.Choice(["mean", "median"]), default="mean", show_default=True)
@click.option("--entropy-hi", default=0.5, show_default=True)
@click.option("--entropy-lo", default=0.1, show_default=True)
@click.option("--plots", is_flag=True, help="also render plots from the emitted tables")
def cmd_analyze(store_file, out_dir, freq_file, threshold, central, entropy_hi, entropy_lo, plots):
    """Aggregate a judgment file into report tables (and optional plots)."""
    store = import_hmix(_require_file(store_file))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []

    def emit(name: str, payload) -> Path:
        path = out_dir / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        outputs.append(path)
        return path

    curves_global = aggregate_relabelings(store, "global")
    emit(
        "aggregate_global.json",
        [
            {"group": None, "points": [_stats_row(p) for p in c.points], "omitted": list(c.omitted)}
            for c in curves_global
        ],
    )
    curves_pairs = aggregate_relabelings(store, "class_pair")
    emit(
        "aggregate_pairs.json",
        [
            {"group": list(c.group), "points": [_stats_row(p) for p in c.points], "omitted": list(c.omitted)}
            for c in curves_pairs
        ],
    )
    extremity = confidence_by_extremity(store)
    emit(
        "confidence_by_extremity.json",
        [
            {
                "folded_lambda": r.folded_lambda,
                "n": r.n,
                "confidence_mean": r.confidence_mean,
                "confidence_sd": r.confidence_sd,
            }
            for r in extremity
        ],
    )
    flags = flag_high_relabel(store, threshold=threshold, central=central)
    emit(
        "high_relabel.json",
        {
            "threshold": flags.threshold,
            "central": flags.central,
            "per_interface": flags.per_interface,
            "across_interfaces": flags.across_interfaces,
        },
    )
    consistency = repeat_consistency(store)
    emit(
        "repeat_consistency.json",
        {
            kind.value: {
                "n": s.n,
                "median_lambda_diff": s.median_lambda_diff,
                "median_confidence_diff": s.median_confidence_diff,
            }
            for kind, s in consistency.items()
        },
    )
    inputs = {"store": Path(store_file)}
    if freq_file is not None:
        table = LabelFrequencyTable.load(_require_file(freq_file))
        report = entropy_bucket_analysis(store, table, hi=entropy_hi, lo=entropy_lo)
        emit(
            "entropy_buckets.json",
            {
                "hi": report.hi,
                "lo": report.lo,
                "buckets": {
                    name: {
                        "n": b.n,
                        "mean_confidence": b.mean_confidence,
                        "mean_abs_relabel": b.mean_abs_relabel,
                    }
                    for name, b in report.buckets.items()
                },
                "skipped": list(report.skipped),
            },
        )
        inputs["freq"] = Path(freq_file)
    if plots:
        outputs.extend(_render_plots(out_dir))
    write_manifest(
        out_dir,
        "analyze",
        {
            "threshold": threshold,
            "central": central,
            "entropy_hi": entropy_hi,
            "entropy_lo": entropy_lo,
            "plots": plots,
        },
        inputs,
        outputs,
    )
    click.echo(f"analysis tables written to {out_dir}")


def _render_plots(out_dir: Path) -> list[Path]:
    # Plots are strictly derived from the table files just written.
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    global_path = out_dir / "aggregate_global.json"
    curves = json.loads(global_path.read_text())
    if curves and curves[0]["points"]:
        points = curves[0]["points"]
        lams = [p["lambda_f"] for p in points]
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(lams, [p["median"] for p in points], "o-", label="median relabeling")
        ax.fill_between(
            lams,
            [p["p25"] for p in points],
            [p["p75"] for p in points],
            alpha=0.25,
            label="25th-75th pct",
        )
        ax.plot([0, 1], [0, 1], "r--", label="identity")
        ax.set_xlabel("generating coefficient")
        ax.set_ylabel("relabeled coefficient")
        ax.legend()
        fig.tight_layout()
        path = out_dir / "aggregate_global.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    extremity_path = out_dir / "confidence_by_extremity.json"
    rows = json.loads(extremity_path.read_text())
    if rows:
        fig, ax = plt.subplots(figsize=(5, 4))
        xs = [r["folded_lambda"] for r in rows]
        ys = [r["confidence_mean"] for r in rows]
        errs = [r["confidence_sd"] or 0.0 for r in rows]
        ax.errorbar(xs, ys, yerr=errs, fmt="o-")
        ax.set_xlabel("folded coefficient min(lambda, 1 - lambda)")
        ax.set_ylabel("mean reported confidence")
        fig.tight_layout()
        path = out_dir / "confidence_by_extremity.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


# -- fit -----------------------------------------------------------------------


@main.command("fit")
@click.option("--store", "store_file", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_file", required=True, type=click.Path(path_type=Path))
@click.option("--min-points", default=4, show_default=True)
@click.option("--use-medians", is_flag=True, help="fit per-coefficient medians instead of raw points")
def cmd_fit(store_file, out_file, min_points, use_medians):
    """Fit per-class-pair boundary curves from inference judgments."""
    store = import_hmix(_require_file(store_file))
    report = fit_all_pairs(store, min_points=min_points, use_medians=use_medians)
    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    export_boundary_fits(report.fits, out_file)
    write_manifest(
        out_file.parent,
        "fit",
        {"min_points": min_points, "use_medians": use_medians},
        {"store": Path(store_file)},
        [out_file],
    )
    click.echo(
        f"{len(report.fits)} pair fits written to {out_file} "
        f"({len(report.insufficient)} pairs with insufficient data, "
        f"{len(report.non_monotone_pairs)} non-monotone)"
    )


# -- train / compare -------------------------------------------------------------


def _dataset_from_config(config: dict):
    ds = config.get("dataset", {})
    kind = ds.get("kind", "procedural")
    if kind != "procedural":
        raise SchemaMismatchError(f"unsupported dataset kind {kind!r}")
    seed = int(ds.get("seed", 7))
    n_train = int(ds.get("n_train", 1500))
    n_eval = int(ds.get("n_eval", 600))
    rng = np.random.default_rng(seed)
    train_images, train_labels = make_dataset(n_train, rng)
    eval_images, eval_labels = make_dataset(n_eval, rng)
    _, eval_soft = annotation_counts(eval_labels, rng)
    eval_set = EvalSet(inputs=flatten_images(eval_images), soft_targets=eval_soft)
    return train_images, train_labels, eval_set


def _train_config_from(config: dict, policy: str) -> TrainConfig:
    smoothing = None
    if config.get("smoothing"):
        smoothing = SmoothingSpec(
            a=float(config["smoothing"].get("a", 50.0)),
            b=float(config["smoothing"].get("b", 0.0001)),
            num_classes=int(config["smoothing"].get("num_classes", 10)),
        )
    return TrainConfig(
        policy=PolicyKind(policy),
        epochs=int(config.get("epochs", 25)),
        batch_size=int(config.get("batch_size", 64)),
        learning_rate=float(config.get("learning_rate", 0.05)),
        momentum=float(config.get("momentum", 0.9)),
        seeds=tuple(config.get("seeds", [0, 1, 2, 3, 4])),
        mode=MixMode(config.get("mode", "finite-augmenting-set")),
        hidden=tuple(config.get("hidden", [64, 64])),
        smoothing=smoothing,
        central=config.get("central", "mean"),
    )


def _train_data_from(config: dict, train_images, train_labels) -> TrainData:
    stimuli = []
    judgments_by_stimulus: dict[str, list] = {}
    fits = None
    if config.get("pool"):
        pool = StimulusPool.load(_require_file(Path(config["pool"]) / "pool.json").parent)
        stimuli = pool.all_inference_stimuli()
    if config.get("judgments"):
        store = import_hmix(_require_file(config["judgments"]))
        for record in store:
            judgments_by_stimulus.setdefault(record.stimulus.stimulus_id, []).append(record)
    if config.get("fits"):
        fits = import_boundary_fits(_require_file(config["fits"]))
    return TrainData(
        base_inputs=flatten_images(train_images),
        base_labels=train_labels,
        num_classes=10,
        stimuli=stimuli,
        judgments_by_stimulus=judgments_by_stimulus,
        fits=fits,
    )


@main.command("train")
@click.option("--config", "config_file", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def cmd_train(config_file, out_dir):
    """Train one policy (the first in the config) and save per-seed models."""
    config = load_config_file(config_file)
    policies = config.get("policies") or [config.get("policy", "mixup")]
    train_images, train_labels, eval_set = _dataset_from_config(config)
    data = _train_data_from(config, train_images, train_labels)
    tc = _train_config_from(config, policies[0])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for seed in tc.seeds:
        model, history = train_single(tc, data, seed)
        path = out_dir / f"model_seed{seed}.npz"
        np.savez(
            path,
            **{f"w{i}": w for i, w in enumerate(model.weights)},
            **{f"b{i}": b for i, b in enumerate(model.biases)},
            epoch_losses=np.array(history.epoch_losses),
        )
        outputs.append(path)
    write_manifest(out_dir, "train", config, {"config": Path(config_file)}, outputs, seeds=list(tc.seeds))
    click.echo(f"{len(tc.seeds)} trained models written to {out_dir}")


@main.command("compare")
@click.option("--config", "config_file", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def cmd_compare(config_file, out_dir):
    """Train every configured policy and tabulate CE / FGSM / calibration."""
    config = load_config_file(config_file)
    policies = config.get("policies", ["no-aug", "mixup"])
    train_images, train_labels, eval_set = _dataset_from_config(config)
    data = _train_data_from(config, train_images, train_labels)
    configs = [_train_config_from(config, p) for p in policies]
    out_dir = Path(out_dir)
    report_path = out_dir / "report.json"
    report = run_comparison(
        configs,
        data,
        eval_set,
        epsilon=float(config.get("epsilon", DEFAULT_EPSILON)),
        bins=int(config.get("bins", 15)),
        report_path=report_path,
    )
    write_manifest(
        out_dir,
        "compare",
        config,
        {"config": Path(config_file)},
        [report_path],
        seeds=list(configs[0].seeds) if configs else [],
    )
    for row in report.rows:
        click.echo(
            f"{row.policy:26s} CE {row.ce.mean:.4f}  FGSM% {row.fgsm_err.mean:6.2f}  "
            f"Calib(RMS) {row.calib_rms.mean:.4f}  ECE {row.calib_ece.mean:.4f}"
        )
    for policy, error in report.failures:
        click.echo(f"{policy}: FAILED ({error})", err=True)
    click.echo(f"report written to {report_path}")


# -- serve / export ---------------------------------------------------------------


@main.command("serve")
@click.option("--pool", "pool_dir", required=True, type=click.Path(path_type=Path))
@click.option("--store", "store_file", required=True, type=click.Path(path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(path_type=Path), help="built UI bundle directory")
@click.option("--seed", default=None, type=int, help="seed session scheduling (testing)")
def cmd_serve(pool_dir, store_file, host, port, ui_dir, seed):
    """Run the elicitation HTTP service."""
    import uvicorn

    _require_file(Path(pool_dir) / "pool.json")
    pool = StimulusPool.load(pool_dir)
    store = JudgmentStore(store_file)
    rng = np.random.default_rng(seed) if seed is not None else None
    service = ElicitationService(pool, store, rng=rng)
    app = create_app(service, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


@main.command("export")
@click.option("--store", "store_file", required=True, type=click.Path(path_type=Path))
@click.option("--session", "session_id", required=True)
@click.option("--out", "out_file", required=True, type=click.Path(path_type=Path))
def cmd_export(store_file, session_id, out_file):
    """Extract one session's records from a store file."""
    store = import_hmix(_require_file(store_file))
    records = store.for_session(session_id)
    if not records:
        raise click.ClickException(f"no records for session {session_id!r}")
    export_hmix(records, out_file)
    write_manifest(
        Path(out_file).parent,
        "export",
        {"session": session_id},
        {"store": Path(store_file)},
        [Path(out_file)],
    )
    click.echo(f"{len(records)} records written to {out_file}")


if __name__ == "__main__":
    main()
