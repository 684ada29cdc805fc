"""
Ablation grid: the separately trained baseline, mutual learning with growing shares of unpaired data and
the number of diffusion steps. Every cell is trained and evaluated once per seed.
"""
import logging
import os
from collections import namedtuple

from mvsd.constants import GRIFFIN_LIM_ITERATIONS
from mvsd.enums import OptimizerEnum, PredictorEnum, SplitEnum, TaskEnum
from mvsd.libraries.checkpoints import load_encoder
from mvsd.libraries.dataset import load_manifest, manifest_path
from mvsd.libraries.evaluation import EvalConfig, evaluate_vam, mean_std
from mvsd.libraries.plots import plot_ablation
from mvsd.libraries.reports import write_csv
from mvsd.libraries.trainer import TrainConfig, build_converters, train

logger = logging.getLogger(__name__)

AblationConfig = namedtuple(
    "AblationConfig",
    "seeds, epochs, batch_size, learning_rate, base_channels, ladder, unpaired_warmup, cycle_steps, "
    "n_sampling_runs, split, griffin_lim_iterations",
)
AblationConfig.__new__.__defaults__ = (
    (0, 1, 2),
    8,
    8,
    1e-4,
    8,
    (4, 4, 2),
    None,
    1,
    1,
    SplitEnum.TEST,
    GRIFFIN_LIM_ITERATIONS,
)

Cell = namedtuple("Cell", "name, diffusion_steps, use_mutual, use_unpaired, unpaired_fraction")

# Full MVSD sits at 25% unpaired data and T=50; the T sweep reuses it, so six cells remain.
CELLS = [
    Cell("vsd", 50, False, False, 0.0),
    Cell("mvsd_unpaired_0", 50, True, False, 0.0),
    Cell("mvsd_unpaired_12.5", 50, True, True, 0.125),
    Cell("mvsd_full", 50, True, True, 0.25),
    Cell("mvsd_full_t10", 10, True, True, 0.25),
    Cell("mvsd_full_t250", 250, True, True, 0.25),
]

SUMMARY_METRICS = ["val_l_d", "val_cycle", "stft_distance", "rte", "rtf"]

AblationResult = namedtuple("AblationResult", "runs, summary, runs_csv, summary_csv, charts")


def train_config_for(cell: Cell, cfg: AblationConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        unpaired_warmup=cfg.unpaired_warmup,
        diffusion_steps=cell.diffusion_steps,
        seed=seed,
        base_channels=cfg.base_channels,
        ladder=tuple(cfg.ladder),
        optimizer=OptimizerEnum.ADAM,
        use_mutual=cell.use_mutual,
        use_unpaired=cell.use_unpaired,
        unpaired_fraction=cell.unpaired_fraction,
        cycle_steps=cfg.cycle_steps,
    )


def run_cell(cell: Cell, seed: int, cfg: AblationConfig, manifest, encoder_path, out_dir, device, workers):
    cell_dir = os.path.join(out_dir, cell.name, f"seed_{seed}")
    os.makedirs(cell_dir, exist_ok=True)
    train_cfg = train_config_for(cell, cfg, seed)
    encoder = load_encoder(encoder_path).to(device)
    f, g = build_converters(train_cfg, encoder, device)
    result = train(f, g, encoder, manifest, train_cfg, cell_dir, device=device, workers=workers)

    report = evaluate_vam(
        EvalConfig(
            checkpoint=result.checkpoints[-1],
            manifest=manifest_path(manifest.root),
            split=cfg.split,
            n_sampling_runs=cfg.n_sampling_runs,
            seed=seed,
            griffin_lim_iterations=cfg.griffin_lim_iterations,
            predictor=PredictorEnum.MODEL,
            task=TaskEnum.VAM,
            workers=workers,
        ),
        device,
    )
    last = result.validation[-1] if result.validation else {}
    return {
        "cell": cell.name,
        "seed": seed,
        "diffusion_steps": cell.diffusion_steps,
        "use_mutual": cell.use_mutual,
        "use_unpaired": cell.use_unpaired,
        "unpaired_fraction": cell.unpaired_fraction,
        "val_l_d": last.get("val_l_d"),
        "val_cycle": last.get("val_cycle"),
        "stft_distance": report.aggregate.get("stft_distance"),
        "rte": report.aggregate.get("rte"),
        "rtf": report.rtf,
        "checkpoint": result.checkpoints[-1],
    }


def summarize(runs):
    summary = []
    for cell in CELLS:
        rows = [row for row in runs if row["cell"] == cell.name]
        if not rows:
            continue
        entry = {"cell": cell.name, "seeds": len(rows), **cell._asdict()}
        entry.pop("name")
        for metric in SUMMARY_METRICS:
            entry[f"{metric}_mean"], entry[f"{metric}_std"] = mean_std([row[metric] for row in rows])
        summary.append(entry)
    return summary


def ablation_suite(cfg: AblationConfig, manifest, encoder_path, out_dir, device="cpu", workers=1) -> AblationResult:
    """Trains and evaluates every cell for every seed; writes per-run and per-cell CSVs plus charts."""
    manifest = load_manifest(manifest) if isinstance(manifest, str) else manifest
    os.makedirs(out_dir, exist_ok=True)
    runs = []
    for cell in CELLS:
        for seed in cfg.seeds:
            logger.info("Ablation cell %s, seed %s", cell.name, seed)
            runs.append(run_cell(cell, seed, cfg, manifest, encoder_path, out_dir, device, workers))

    summary = summarize(runs)
    runs_csv = os.path.join(out_dir, "ablation_runs.csv")
    summary_csv = os.path.join(out_dir, "ablation.csv")
    write_csv(runs_csv, runs)
    write_csv(summary_csv, summary)
    charts = [
        plot_ablation(summary, os.path.join(out_dir, f"ablation_{metric}.png"), metric)
        for metric in ("val_cycle", "stft_distance", "rtf")
    ]
    return AblationResult(runs, summary, runs_csv, summary_csv, charts)
