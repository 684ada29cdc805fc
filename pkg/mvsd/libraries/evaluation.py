"""
Scores converters on a manifest split: VAM (against the reverberant recording), dereverberation (against
the clean source) and the scene-swap conditioning check.

Evaluation only reads the checkpoint and the dataset; reports are written by the caller.
"""
import logging
import math
import os
import time
from collections import namedtuple

import numpy as np
import torch
from django.utils import timezone
from scipy import stats

from mvsd.constants import GRIFFIN_LIM_ITERATIONS
from mvsd.enums import PredictorEnum, SplitEnum, TaskEnum
from mvsd.libraries.acoustics import (
    DecayMeasurementError,
    ItemMetrics,
    build_metric_report,
    estimate_rt60,
    log_spectral_distance,
    rte,
    stft_distance,
)
from mvsd.libraries.checkpoints import checkpoint_digest, load_converters
from mvsd.libraries.dataset import (
    clean_path,
    dataset_checksum,
    in_split,
    load_clean,
    load_manifest,
    load_reverb,
    reverb_path,
    scene_path,
)
from mvsd.libraries.diffusion import sample
from mvsd.libraries.helpers import derive_seed, ordered_map
from mvsd.libraries.networks import encode_scene, images_to_tensor
from mvsd.libraries.scenes import load_scene_png
from mvsd.libraries.spectral import MelSpec, Waveform, analysis_window_length, vocode, waveform_to_melspec

logger = logging.getLogger(__name__)

MAX_SAMPLING_RUNS = 10

EvalConfig = namedtuple(
    "EvalConfig",
    "checkpoint, manifest, split, n_sampling_runs, steps, seed, griffin_lim_iterations, predictor, task, workers",
)
EvalConfig.__new__.__defaults__ = (
    None,
    None,
    SplitEnum.TEST,
    3,
    None,
    0,
    GRIFFIN_LIM_ITERATIONS,
    PredictorEnum.MODEL,
    TaskEnum.VAM,
    1,
)

RunReport = namedtuple(
    "RunReport",
    "task, predictor, items, aggregate, rtf, config, checkpoint_digest, dataset_checksum, started_at, "
    "finished_at, skipped, metric_failures, metric_report",
)
# metric_report is the per-item stft_distance / rte summary; the swap task has none
RunReport.__new__.__defaults__ = (None,)

# source and target are waveforms; scene_emb is None when no checkpoint is loaded
Job = namedtuple("Job", "index, item_id, source, target, scene_emb, target_rt60")

# Per-item results over all sampling runs. `second` holds RTE values for VAM and LSD values for dereverb.
ItemScore = namedtuple("ItemScore", "distances, second, rt60s, failures, generation_seconds, audio_seconds")


class EvaluationError(ValueError):
    pass


class Predictor:
    """Maps (source mel, scene embedding, target mel, seed) to a predicted mel."""

    def __init__(self, kind, converter=None, schedule=None, steps=None):
        if kind not in PredictorEnum.as_list():
            raise EvaluationError(f"unknown predictor {kind}")
        if kind == PredictorEnum.MODEL and converter is None:
            raise EvaluationError("the model predictor needs a converter checkpoint")
        self.kind = kind
        self.converter = converter
        self.schedule = schedule
        self.steps = steps

    def __call__(self, source: MelSpec, scene_emb, target: MelSpec, seed: int) -> MelSpec:
        if self.kind == PredictorEnum.ORACLE:
            return target
        if self.kind == PredictorEnum.ZERO:
            return MelSpec(np.full(np.shape(source.grid), -1.0), source.sample_rate)
        if self.kind == PredictorEnum.IDENTITY:
            return source

        device = next(self.converter.parameters()).device
        grid = torch.from_numpy(np.asarray(source.grid, dtype=np.float32))[None, None]
        out = sample(self.converter, scene_emb[None].to(device), grid.to(device), self.schedule, seed, self.steps)
        return MelSpec(out[0, 0].cpu().double().numpy(), source.sample_rate)


def window(w: Waveform) -> Waveform:
    """The part of a waveform the 128-frame spectrogram covers."""
    return Waveform(np.asarray(w.samples)[: analysis_window_length()], w.sample_rate)


def mean_std(values):
    values = [value for value in values if value is not None]
    if not values:
        return None, None
    return math.fsum(values) / len(values), float(np.std(values))


def _load(cfg: EvalConfig, device):
    if not 1 <= cfg.n_sampling_runs <= MAX_SAMPLING_RUNS:
        raise EvaluationError(f"n_sampling_runs must be in [1, {MAX_SAMPLING_RUNS}], got {cfg.n_sampling_runs}")
    manifest = load_manifest(cfg.manifest)
    if cfg.split not in manifest.splits:
        raise EvaluationError(f"split {cfg.split} is not in the manifest")
    if cfg.predictor == PredictorEnum.MODEL and not cfg.checkpoint:
        raise EvaluationError("a checkpoint is required to evaluate the model predictor")
    loaded = load_converters(cfg.checkpoint, device) if cfg.checkpoint else None
    return manifest, loaded


def scene_embeddings(loaded, manifest, scene_ids):
    if loaded is None or not scene_ids:
        return [None] * len(scene_ids)
    images = images_to_tensor(np.stack([load_scene_png(scene_path(manifest.root, i)) for i in scene_ids]))
    with torch.no_grad():
        embeddings = loaded.encoder(images.to(next(loaded.encoder.parameters()).device))
    return list(embeddings.cpu())


def _paired_jobs(manifest, split, loaded, task):
    """Jobs for the paired items of `split`, plus the ids skipped because their audio is missing."""
    jobs = []
    skipped = []
    items = in_split(manifest.paired, split)
    embeddings = scene_embeddings(loaded, manifest, [item.scene_id for item in items])
    for index, (item, scene_emb) in enumerate(zip(items, embeddings)):
        paths = [clean_path(manifest.root, item.clean_id), reverb_path(manifest.root, item.reverb_id)]
        missing = [path for path in paths if not os.path.exists(path)]
        if missing:
            logger.warning("Skipping %s, ground truth missing: %s", item.scene_id, ", ".join(missing))
            skipped.append(item.scene_id)
            continue
        clean, reverb = load_clean(manifest, item.clean_id), load_reverb(manifest, item.reverb_id)
        source, target = (clean, reverb) if task == TaskEnum.VAM else (reverb, clean)
        jobs.append(Job(index, item.scene_id, source, target, scene_emb, item.params.rt60))
    return jobs, skipped


def _generate(predictor, cfg: EvalConfig, index, run, source: MelSpec, scene_emb, target: MelSpec):
    """One seeded generation plus vocoding; returns the windowed waveform and the seconds it took."""
    seed = derive_seed(cfg.seed, index, run)
    started = time.perf_counter()
    mel = predictor(source, scene_emb, target, seed)
    waveform = window(vocode(mel, cfg.griffin_lim_iterations, seed))
    return waveform, time.perf_counter() - started


def score_item(predictor, cfg: EvalConfig, task, job: Job) -> ItemScore:
    source, target_mel = waveform_to_melspec(job.source), waveform_to_melspec(job.target)
    target = window(job.target)
    distances, second, rt60s = [], [], []
    failures = 0
    generation = audio = 0.0
    for run in range(cfg.n_sampling_runs):
        waveform, seconds = _generate(predictor, cfg, job.index, run, source, job.scene_emb, target_mel)
        generation += seconds
        audio += len(waveform.samples) / waveform.sample_rate
        distances.append(stft_distance(waveform, target))
        if task == TaskEnum.DEREVERB:
            second.append(log_spectral_distance(waveform, target))
            continue
        try:
            second.append(rte(waveform, target))
            rt60s.append(estimate_rt60(waveform))
        except DecayMeasurementError as error:
            logger.warning("RT60 of %s run %s failed: %s", job.item_id, run, error)
            failures += 1
    return ItemScore(distances, second, rt60s, failures, generation, audio)


def rt60_spearman(rows):
    pairs = [(row["rt60_pred"], row["rt60_target"]) for row in rows if row.get("rt60_pred") is not None]
    if len(pairs) < 3:
        return None
    correlation = stats.spearmanr([p for p, _ in pairs], [t for _, t in pairs]).correlation
    return None if np.isnan(correlation) else float(correlation)


def _report(cfg, task, rows, aggregate, scores, started_at, manifest, skipped, metric_report=None) -> RunReport:
    generation = math.fsum(score.generation_seconds for score in scores)
    audio = math.fsum(score.audio_seconds for score in scores)
    return RunReport(
        task=task,
        predictor=cfg.predictor,
        items=rows,
        aggregate=aggregate,
        rtf=generation / audio if audio > 0 else None,
        config={**cfg._asdict(), "task": task},
        checkpoint_digest=checkpoint_digest(cfg.checkpoint) if cfg.checkpoint else None,
        dataset_checksum=dataset_checksum(manifest.root),
        started_at=started_at,
        finished_at=timezone.now().isoformat(),
        skipped=skipped,
        metric_failures=sum(score.failures for score in scores),
        metric_report=metric_report,
    )


def _evaluate_paired(cfg: EvalConfig, task, device) -> RunReport:
    started_at = timezone.now().isoformat()
    manifest, loaded = _load(cfg, device)
    converter = None
    if loaded is not None:
        converter = loaded.reverberator if task == TaskEnum.VAM else loaded.dereverberator
    predictor = Predictor(cfg.predictor, converter, loaded and loaded.schedule, cfg.steps)
    jobs, skipped = _paired_jobs(manifest, cfg.split, loaded, task)
    logger.info("Evaluating %s with the %s predictor on %s %s items", task, cfg.predictor, len(jobs), cfg.split)

    scores = ordered_map(lambda job: score_item(predictor, cfg, task, job), jobs, cfg.workers)

    rows = []
    metrics = []
    for job, score in zip(jobs, scores):
        distance, distance_std = mean_std(score.distances)
        second, second_std = mean_std(score.second)
        row = {"item_id": job.item_id, "runs": cfg.n_sampling_runs, "stft_distance": distance}
        row["stft_distance_std"] = distance_std
        if task == TaskEnum.DEREVERB:
            row.update(lsd=second, lsd_std=second_std)
            metrics.append(ItemMetrics(job.item_id, distance, None))
        else:
            rt60_pred, _ = mean_std(score.rt60s)
            row.update(rte=second, rte_std=second_std, rt60_pred=rt60_pred, rt60_target=job.target_rt60)
            row["rte_failures"] = score.failures
            metrics.append(ItemMetrics(job.item_id, distance, second))
        rows.append(row)

    summary = build_metric_report(metrics)
    aggregate = {"items": len(rows), "stft_distance": summary.stft_distance}
    if task == TaskEnum.DEREVERB:
        aggregate["lsd"], _ = mean_std([row["lsd"] for row in rows])
    else:
        aggregate.update(rte=summary.rte, rte_failures=summary.rte_failures, rt60_spearman=rt60_spearman(rows))
    logger.info("Finished %s evaluation: %s", task, aggregate)
    # dereverberation has no RTE, so only VAM reports carry the metric summary
    metric_report = summary if task == TaskEnum.VAM else None
    return _report(cfg, task, rows, aggregate, scores, started_at, manifest, skipped, metric_report)


def evaluate_vam(cfg: EvalConfig, device="cpu") -> RunReport:
    """Reverberator outputs against the reverberant ground truth: stft_distance and RTE."""
    return _evaluate_paired(cfg, TaskEnum.VAM, device)


def evaluate_dereverb(cfg: EvalConfig, device="cpu") -> RunReport:
    """Dereverberator outputs against the clean ground truth: stft_distance and log-spectral distance."""
    return _evaluate_paired(cfg, TaskEnum.DEREVERB, device)


def swap_scenes(manifest, split):
    """The lowest and highest rt60 scenes of a split's paired items."""
    items = sorted(in_split(manifest.paired, split), key=lambda item: item.params.rt60)
    if len(items) < 2 or items[0].params.rt60 == items[-1].params.rt60:
        raise EvaluationError(f"the {split} split needs two scenes with different rt60 for a swap")
    return items[0], items[-1]


def evaluate_scene_swap(cfg: EvalConfig, device="cpu") -> RunReport:
    """
    Reverberates every clean source of the split under the lowest and the highest rt60 scene. A model
    that uses its conditioning yields a longer measured decay under the livelier scene.
    """
    if cfg.predictor != PredictorEnum.MODEL:
        raise EvaluationError("the scene swap only makes sense for the model predictor")
    started_at = timezone.now().isoformat()
    manifest, loaded = _load(cfg, device)
    low, high = swap_scenes(manifest, cfg.split)
    low_emb, high_emb = scene_embeddings(loaded, manifest, [low.scene_id, high.scene_id])
    predictor = Predictor(cfg.predictor, loaded.reverberator, loaded.schedule, cfg.steps)
    jobs, skipped = _paired_jobs(manifest, cfg.split, loaded, TaskEnum.VAM)
    logger.info("Scene swap between %s and %s on %s items", low.scene_id, high.scene_id, len(jobs))

    def swap(job: Job):
        source = waveform_to_melspec(job.source)
        measured = {}
        failures = 0
        generation = audio = 0.0
        for label, scene_emb in (("low", low_emb), ("high", high_emb)):
            estimates = []
            for run in range(cfg.n_sampling_runs):
                waveform, seconds = _generate(predictor, cfg, job.index, run, source, scene_emb, source)
                generation += seconds
                audio += len(waveform.samples) / waveform.sample_rate
                try:
                    estimates.append(estimate_rt60(waveform))
                except DecayMeasurementError as error:
                    logger.warning("RT60 of %s under the %s scene failed: %s", job.item_id, label, error)
                    failures += 1
            measured[label], _ = mean_std(estimates)
        return measured, ItemScore([], [], [], failures, generation, audio)

    results = ordered_map(swap, jobs, cfg.workers)
    rows = []
    for job, (measured, _) in zip(jobs, results):
        delta = None
        if measured["low"] is not None and measured["high"] is not None:
            delta = measured["high"] - measured["low"]
        rows.append(
            {"item_id": job.item_id, "rt60_low": measured["low"], "rt60_high": measured["high"], "delta": delta}
        )

    deltas = [row["delta"] for row in rows if row["delta"] is not None]
    aggregate = {
        "items": len(rows),
        "low_scene": low.scene_id,
        "high_scene": high.scene_id,
        "low_scene_rt60": low.params.rt60,
        "high_scene_rt60": high.params.rt60,
        "mean_delta": mean_std(deltas)[0],
        "direction_match": sum(1 for delta in deltas if delta > 0) / len(deltas) if deltas else None,
    }
    logger.info("Finished scene swap: %s", aggregate)
    scores = [score for _, score in results]
    return _report(cfg, TaskEnum.SWAP, rows, aggregate, scores, started_at, manifest, skipped)


EVALUATORS = {
    TaskEnum.VAM: evaluate_vam,
    TaskEnum.DEREVERB: evaluate_dereverb,
    TaskEnum.SWAP: evaluate_scene_swap,
}


def evaluate(cfg: EvalConfig, device="cpu") -> RunReport:
    return EVALUATORS[cfg.task](cfg, device)


def convert_clip(loaded, task, audio: Waveform, pixels, seed=0, steps=None, iterations=GRIFFIN_LIM_ITERATIONS):
    """Runs one converter of a loaded checkpoint on a clip; returns the vocoded waveform and the generated mel."""
    converter = loaded.dereverberator if task == TaskEnum.DEREVERB else loaded.reverberator
    scene_emb = encode_scene(loaded.encoder, pixels)
    predictor = Predictor(PredictorEnum.MODEL, converter, loaded.schedule, steps)
    mel = predictor(waveform_to_melspec(audio), scene_emb, None, seed)
    return vocode(mel, iterations, seed), mel
