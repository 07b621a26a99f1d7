"""
Analytic cost of the correlation layers and a wall-clock benchmark.
"""
import time
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from config import presets
from correlation.volumes import global_correlation, local_correlation
from engine.tensor import Tensor
from utils.logger import setup_logger

logger = setup_logger(__name__)


class CorrelationCost(BaseModel):
    """Multiply-adds and output size of one correlation layer"""
    multiply_adds: int
    output_elements: int


def global_correlation_cost(height: int, width: int, channels: int) -> CorrelationCost:
    """(H*W)^2 * d multiply-adds, (H*W)^2 outputs"""
    pairs = (height * width) ** 2
    return CorrelationCost(multiply_adds=pairs * channels, output_elements=pairs)


def local_correlation_cost(height: int, width: int, channels: int, radius: int) -> CorrelationCost:
    """H*W*(2R+1)^2 * d multiply-adds, H*W*(2R+1)^2 outputs"""
    entries = height * width * (2 * radius + 1) ** 2
    return CorrelationCost(multiply_adds=entries * channels, output_elements=entries)


class BenchmarkRecord(BaseModel):
    """Timing of both correlation layers at one spatial size"""
    size: int
    channels: int
    radius: int
    global_seconds: float
    local_seconds: float
    global_multiply_adds: int
    local_multiply_adds: int
    global_output_elements: int
    local_output_elements: int


def _median_seconds(fn, repeat: int) -> float:
    timings = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        timings.append(time.perf_counter() - start)
    return float(np.median(timings))


def benchmark_correlation(
    sizes: List[int],
    radius: int,
    repeat: int = presets.BENCH_REPEAT,
    channels: int = presets.BENCH_CHANNELS,
    seed: Optional[int] = 0,
) -> List[BenchmarkRecord]:
    """
    Time global and local correlation on random square feature maps

    Args:
        sizes: Spatial sizes (feature maps are size x size)
        radius: Local search radius
        repeat: Repetitions per measurement (median is reported)
        channels: Feature dimension d
        seed: Seed for the random features

    Returns:
        One record per size
    """
    rng = np.random.default_rng(seed)
    records = []
    for size in sizes:
        target = Tensor(rng.standard_normal((1, channels, size, size)).astype(np.float32))
        source = Tensor(rng.standard_normal((1, channels, size, size)).astype(np.float32))
        global_cost = global_correlation_cost(size, size, channels)
        local_cost = local_correlation_cost(size, size, channels, radius)
        record = BenchmarkRecord(
            size=size,
            channels=channels,
            radius=radius,
            global_seconds=_median_seconds(lambda: global_correlation(target, source), repeat),
            local_seconds=_median_seconds(lambda: local_correlation(target, source, radius), repeat),
            global_multiply_adds=global_cost.multiply_adds,
            local_multiply_adds=local_cost.multiply_adds,
            global_output_elements=global_cost.output_elements,
            local_output_elements=local_cost.output_elements,
        )
        logger.info(
            f"size {size}: global {record.global_seconds * 1e3:.3f} ms ({record.global_multiply_adds} MACs), "
            f"local {record.local_seconds * 1e3:.3f} ms ({record.local_multiply_adds} MACs)"
        )
        records.append(record)
    return records
