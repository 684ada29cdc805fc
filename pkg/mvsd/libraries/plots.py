import logging

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from mvsd.constants import HOP_SIZE  # noqa: E402
from mvsd.libraries.spectral import MelSpec  # noqa: E402

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["l_d", "l_m", "l_sty", "l_total"]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    logger.info("Saved plot %s", path)
    return path


def plot_spectrogram(mel: MelSpec, path, title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    grid = np.asarray(mel.grid)
    seconds = grid.shape[1] * HOP_SIZE / mel.sample_rate
    extent = (0, seconds, 0, grid.shape[0])
    image = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis", vmin=-1, vmax=1, extent=extent)
    fig.colorbar(image, ax=ax, label="normalized log-mel")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Mel band")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_loss_curves(rows, path, validation=None):
    """Losses per step from loss_log rows; validation rows sit at the last step of their epoch."""
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = [row["step"] for row in rows]
    for column in LOSS_COLUMNS:
        ax.plot(steps, [row[column] for row in rows], label=column)

    if validation:
        last_step = {}
        for row in rows:
            last_step[row["epoch"]] = row["step"]
        points = [
            (last_step[row["epoch"]], row["val_cycle"])
            for row in validation
            if row.get("val_cycle") is not None and row["epoch"] in last_step
        ]
        if points:
            ax.plot(*zip(*points), "o--", label="validation cycle")

    ax.set_xlabel("Step")
    ax.set_ylabel("Loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_ablation(summary, path, metric="val_cycle"):
    """Bar per ablation cell with the seed standard deviation as error bar."""
    fig, ax = plt.subplots(figsize=(8, 4))
    names = [row["cell"] for row in summary]
    means = [row[f"{metric}_mean"] if row.get(f"{metric}_mean") is not None else np.nan for row in summary]
    stds = [row.get(f"{metric}_std") or 0.0 for row in summary]
    ax.bar(range(len(names)), means, yerr=stds, capsize=4, color="tab:blue")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel(metric)
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, path)
