"""
On-disk synthetic datasets.

A dataset directory holds manifest.txt (one "image_path seed kind" record per pair)
and, per pair, pair_XXXXX.source.ppm, .target.ppm, .flo and .mask.pgm.
"""
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np

from config.config import MANIFEST_FILE
from config.models import TransformConfig
from datagen import sample_transform
from datagen.renderer import SamplePair, render_pair
from flow.fields import FlowField
from storage.flow_file import read_flo, write_flo
from storage.images import read_image, read_mask, write_image, write_mask
from utils.errors import DataError
from utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]
IMAGE_SUFFIXES = (".png", ".ppm", ".jpg", ".jpeg")


class ManifestRecord(NamedTuple):
    image_path: str
    seed: int
    kind: str


def pair_seed(seed: int, index: int) -> int:
    """Per-pair seed derived from the run seed and the pair index"""
    return int(np.random.default_rng([seed, index]).integers(2 ** 31 - 1))


def pair_stem(directory: PathLike, index: int) -> Path:
    return Path(directory) / f"pair_{index:05d}"


def write_manifest(directory: PathLike, records: Sequence[ManifestRecord]) -> Path:
    path = Path(directory) / MANIFEST_FILE
    lines = [f"{record.image_path} {record.seed} {record.kind}\n" for record in records]
    path.write_text("".join(lines), encoding="utf-8")
    return path


def read_manifest(directory: PathLike) -> List[ManifestRecord]:
    """Parse manifest.txt; the image path may contain spaces"""
    path = Path(directory) / MANIFEST_FILE
    if not path.is_file():
        raise DataError(f"no manifest in {directory}")
    records = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rsplit(" ", 2)
        if len(parts) != 3:
            raise DataError(f"{path}:{number}: expected 'image_path seed kind'")
        try:
            records.append(ManifestRecord(parts[0], int(parts[1]), parts[2]))
        except ValueError as e:
            raise DataError(f"{path}:{number}: bad seed '{parts[1]}'") from e
    return records


def list_images(directory: PathLike) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"image directory {directory} does not exist")
    images = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        raise DataError(f"image directory {directory} holds no PNG/PPM/JPEG images")
    return images


def save_pair(pair: SamplePair, directory: PathLike, index: int) -> None:
    stem = pair_stem(directory, index)
    write_image(f"{stem}.source.ppm", pair.source)
    write_image(f"{stem}.target.ppm", pair.target)
    write_flo(f"{stem}.flo", pair.gt_flow.numpy()[0])
    write_mask(f"{stem}.mask.pgm", pair.valid_mask)


def generate_dataset(
    images_dir: PathLike,
    out_dir: PathLike,
    count: int,
    crop: int,
    seed: int,
    config: Optional[TransformConfig] = None,
) -> List[ManifestRecord]:
    """
    Render `count` pairs from the images of a directory and write them with a manifest

    Images are used round-robin in sorted order; pair i uses the seed derived from
    (seed, i), so the output is fully determined by the arguments.
    """
    config = config or TransformConfig()
    images = list_images(images_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for index in range(count):
        image_path = images[index % len(images)]
        seed_i = pair_seed(seed, index)
        spec = sample_transform(seed_i, config)
        pair = render_pair(read_image(image_path), spec, crop)
        save_pair(pair, out_dir, index)
        records.append(ManifestRecord(str(image_path), seed_i, spec.kind))
        if (index + 1) % 50 == 0:
            logger.info(f"Rendered {index + 1}/{count} pairs")
    write_manifest(out_dir, records)
    logger.info(f"Wrote {count} pairs to {out_dir}")
    return records


class SyntheticPairDataset:
    """
    Pairs of a dataset directory, loaded from the rendered files or, when those are
    missing, re-rendered from the manifest record
    """

    def __init__(self, directory: PathLike, config: Optional[TransformConfig] = None, crop: Optional[int] = None):
        self.directory = Path(directory)
        self.config = config or TransformConfig()
        self.crop = crop
        self.records = read_manifest(self.directory)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int) -> SamplePair:
        if not 0 <= index < len(self.records):
            raise IndexError(index)
        record = self.records[index]
        spec = sample_transform(record.seed, self.config, kind=record.kind)
        stem = pair_stem(self.directory, index)
        if Path(f"{stem}.flo").is_file():
            flow = read_flo(f"{stem}.flo")
            return SamplePair(
                source=read_image(f"{stem}.source.ppm"),
                target=read_image(f"{stem}.target.ppm"),
                gt_flow=FlowField.from_numpy(flow),
                valid_mask=read_mask(f"{stem}.mask.pgm"),
                spec=spec,
            )
        if self.crop is None:
            raise DataError(f"pair {index} has no files and no crop size was given to re-render it")
        return render_pair(read_image(record.image_path), spec, self.crop)


def render_in_memory(
    images: Sequence[np.ndarray],
    count: int,
    crop: int,
    seed: int,
    config: Optional[TransformConfig] = None,
) -> List[SamplePair]:
    """Same pairs as generate_dataset without touching the disk"""
    config = config or TransformConfig()
    return [
        render_pair(images[index % len(images)], sample_transform(pair_seed(seed, index), config), crop)
        for index in range(count)
    ]
