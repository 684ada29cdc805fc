import hashlib
import json
import logging
import os
from collections import Counter, namedtuple

import numpy as np

from mvsd.constants import (
    CLEAN_DIR,
    DATASET_VERSION,
    MANIFEST_FILENAME,
    REVERB_DIR,
    SCENES_DIR,
    SPEECH_DURATION,
)
from mvsd.enums import CollectionEnum, SplitEnum
from mvsd.libraries.acoustics import SceneParams, reverberate, synth_rir
from mvsd.libraries.helpers import derive_seed, ordered_map, sha256_file, write_json
from mvsd.libraries.scenes import render_scene, sample_scene_params, save_scene_png, synth_speechlike
from mvsd.libraries.spectral import read_wav, write_wav

logger = logging.getLogger(__name__)

DatasetConfig = namedtuple("DatasetConfig", "n_paired, m_natural, k_anechoic, seed, duration, workers")
DatasetConfig.__new__.__defaults__ = (512, 128, 128, 0, SPEECH_DURATION, 1)

PairedItem = namedtuple("PairedItem", "scene_id, clean_id, reverb_id, split, params")
NaturalItem = namedtuple("NaturalItem", "scene_id, reverb_id, split, params")
AnechoicItem = namedtuple("AnechoicItem", "clean_id, split")

DatasetManifest = namedtuple(
    "DatasetManifest", "root, version, seed, splits, paired, unpaired_natural, unpaired_anechoic"
)

_COLLECTION_CODES = {CollectionEnum.PAIRED: 1, CollectionEnum.UNPAIRED_NATURAL: 2, CollectionEnum.UNPAIRED_ANECHOIC: 3}


class DatasetError(Exception):
    """Raised when a dataset can't be written or its manifest is inconsistent"""


def item_ids(collection: str, index: int):
    stem = f"{CollectionEnum.prefixes[collection]}{index:05d}"
    return f"scene_{stem}", f"clean_{stem}", f"reverb_{stem}"


def scene_path(root, scene_id):
    return os.path.join(root, SCENES_DIR, f"{scene_id}.png")


def clean_path(root, clean_id):
    return os.path.join(root, CLEAN_DIR, f"{clean_id}.wav")


def reverb_path(root, reverb_id):
    return os.path.join(root, REVERB_DIR, f"{reverb_id}.wav")


def assign_splits(count: int, seed: int, collection: str):
    """80/10/10 split of a collection's items after a seeded shuffle."""
    order = np.random.default_rng(derive_seed(seed, _COLLECTION_CODES[collection], 0)).permutation(count)
    n_train = int(round(SplitEnum.fractions[SplitEnum.TRAIN] * count))
    n_val = min(count - n_train, int(round(SplitEnum.fractions[SplitEnum.VAL] * count)))
    splits = [SplitEnum.TEST] * count
    for rank, index in enumerate(order):
        if rank < n_train:
            splits[index] = SplitEnum.TRAIN
        elif rank < n_train + n_val:
            splits[index] = SplitEnum.VAL
    return splits


def _generate_item(job):
    root, collection, index, split, seed, duration = job
    item_seed = derive_seed(seed, _COLLECTION_CODES[collection], index + 1)
    scene_id, clean_id, reverb_id = item_ids(collection, index)
    clean = synth_speechlike(item_seed, duration)

    if collection == CollectionEnum.UNPAIRED_ANECHOIC:
        write_wav(clean_path(root, clean_id), clean)
        return AnechoicItem(clean_id, split)

    params = sample_scene_params(item_seed)
    save_scene_png(scene_path(root, scene_id), render_scene(params).pixels)
    write_wav(reverb_path(root, reverb_id), reverberate(clean, synth_rir(params)))

    if collection == CollectionEnum.UNPAIRED_NATURAL:
        # the clean source is discarded, natural recordings have no anechoic counterpart
        return NaturalItem(scene_id, reverb_id, split, params)

    write_wav(clean_path(root, clean_id), clean)
    return PairedItem(scene_id, clean_id, reverb_id, split, params)


def _prepare_directory(out_dir):
    try:
        for folder in (SCENES_DIR, CLEAN_DIR, REVERB_DIR):
            os.makedirs(os.path.join(out_dir, folder), exist_ok=True)
        probe = os.path.join(out_dir, ".write-probe")
        with open(probe, "w") as f:
            f.write("")
        os.remove(probe)
    except OSError as error:
        raise DatasetError(f"output directory {out_dir} is not writable: {error}") from error


def build_dataset(n_paired, m_natural, k_anechoic, out_dir, seed, workers: int = 1, duration=SPEECH_DURATION):
    counts = {
        CollectionEnum.PAIRED: n_paired,
        CollectionEnum.UNPAIRED_NATURAL: m_natural,
        CollectionEnum.UNPAIRED_ANECHOIC: k_anechoic,
    }
    if any(count < 0 for count in counts.values()):
        raise DatasetError(f"item counts must be >= 0, got {counts}")
    if sum(counts.values()) == 0:
        raise DatasetError("refusing to build a dataset with zero items")
    _prepare_directory(out_dir)

    jobs = []
    for collection, count in counts.items():
        splits = assign_splits(count, seed, collection)
        jobs.extend((out_dir, collection, index, splits[index], seed, duration) for index in range(count))

    logger.info("Generating %s dataset items into %s with %s workers", len(jobs), out_dir, workers)
    items = ordered_map(_generate_item, jobs, workers)

    manifest = DatasetManifest(
        root=out_dir,
        version=DATASET_VERSION,
        seed=seed,
        splits=None,
        paired=[item for item in items if isinstance(item, PairedItem)],
        unpaired_natural=[item for item in items if isinstance(item, NaturalItem)],
        unpaired_anechoic=[item for item in items if isinstance(item, AnechoicItem)],
    )
    manifest = manifest._replace(splits=_split_index(manifest))
    write_json(os.path.join(out_dir, MANIFEST_FILENAME), manifest_to_json(manifest))
    logger.info(
        "Dataset written: %s paired, %s natural, %s anechoic",
        len(manifest.paired),
        len(manifest.unpaired_natural),
        len(manifest.unpaired_anechoic),
    )
    return manifest


def _split_index(manifest: DatasetManifest):
    """Scene ids (and scene-less clean ids) per split."""
    splits = {split: [] for split in SplitEnum.as_list()}
    for item in manifest.paired + manifest.unpaired_natural:
        splits[item.split].append(item.scene_id)
    for item in manifest.unpaired_anechoic:
        splits[item.split].append(item.clean_id)
    return splits


def manifest_to_json(manifest: DatasetManifest) -> dict:
    return {
        "version": manifest.version,
        "seed": manifest.seed,
        "splits": manifest.splits,
        CollectionEnum.PAIRED: [{**item._asdict(), "params": item.params._asdict()} for item in manifest.paired],
        CollectionEnum.UNPAIRED_NATURAL: [
            {**item._asdict(), "params": item.params._asdict()} for item in manifest.unpaired_natural
        ],
        CollectionEnum.UNPAIRED_ANECHOIC: [item._asdict() for item in manifest.unpaired_anechoic],
    }


def manifest_path(path) -> str:
    return os.path.join(path, MANIFEST_FILENAME) if os.path.isdir(path) else path


def load_manifest(path) -> DatasetManifest:
    """Load and check a manifest; `path` may be the manifest file or the dataset directory."""
    from mvsd.serializers import ManifestSerializer

    path = manifest_path(path)
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, ValueError) as error:
        raise DatasetError(f"cannot read manifest {path}: {error}") from error

    serializer = ManifestSerializer(data=payload)
    if not serializer.is_valid():
        raise DatasetError(f"invalid manifest {path}: {json.dumps(serializer.errors, sort_keys=True)}")
    data = serializer.validated_data

    def params(entry):
        return SceneParams(**entry["params"])

    manifest = DatasetManifest(
        root=os.path.dirname(os.path.abspath(path)),
        version=data["version"],
        seed=data["seed"],
        splits=data["splits"],
        paired=[PairedItem(**{**entry, "params": params(entry)}) for entry in data[CollectionEnum.PAIRED]],
        unpaired_natural=[
            NaturalItem(**{**entry, "params": params(entry)}) for entry in data[CollectionEnum.UNPAIRED_NATURAL]
        ],
        unpaired_anechoic=[AnechoicItem(**entry) for entry in data[CollectionEnum.UNPAIRED_ANECHOIC]],
    )
    check_manifest(manifest)
    return manifest


def referenced_files(manifest: DatasetManifest):
    root = manifest.root
    for item in manifest.paired:
        yield scene_path(root, item.scene_id)
        yield clean_path(root, item.clean_id)
        yield reverb_path(root, item.reverb_id)
    for item in manifest.unpaired_natural:
        yield scene_path(root, item.scene_id)
        yield reverb_path(root, item.reverb_id)
    for item in manifest.unpaired_anechoic:
        yield clean_path(root, item.clean_id)


def check_manifest(manifest: DatasetManifest):
    problems = []
    ids = []
    for item in manifest.paired:
        ids.extend([item.scene_id, item.clean_id, item.reverb_id])
    for item in manifest.unpaired_natural:
        ids.extend([item.scene_id, item.reverb_id])
    ids.extend(item.clean_id for item in manifest.unpaired_anechoic)
    duplicates = sorted(i for i, count in Counter(ids).items() if count > 1)
    if duplicates:
        problems.append(f"duplicate ids: {', '.join(duplicates[:5])}")

    overlap = {item.clean_id for item in manifest.unpaired_anechoic} & {item.clean_id for item in manifest.paired}
    if overlap:
        problems.append(f"anechoic clips also in the paired set: {', '.join(sorted(overlap)[:5])}")

    seen = {}
    for split, members in manifest.splits.items():
        for member in members:
            if member in seen and seen[member] != split:
                problems.append(f"{member} is in both {seen[member]} and {split}")
            seen[member] = split

    missing = [path for path in referenced_files(manifest) if not os.path.exists(path)]
    if missing:
        problems.append(f"{len(missing)} referenced files missing, first {missing[0]}")

    if problems:
        raise DatasetError("; ".join(problems))


def dataset_checksum(root) -> str:
    """sha256 over the manifest and every file it references, in manifest order."""
    manifest = load_manifest(root)
    digest = hashlib.sha256()
    for path in [manifest_path(root)] + list(referenced_files(manifest)):
        digest.update(os.path.relpath(path, manifest.root).encode())
        digest.update(sha256_file(path).encode())
    return digest.hexdigest()


def in_split(items, split):
    return [item for item in items if item.split == split]


def load_clean(manifest: DatasetManifest, clean_id):
    return read_wav(clean_path(manifest.root, clean_id))


def load_reverb(manifest: DatasetManifest, reverb_id):
    return read_wav(reverb_path(manifest.root, reverb_id))
