"""
Training loop over synthetic pairs.
"""
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from config.config import LOSS_HISTORY_FILE
from config.models import TrainConfig
from config.presets import ADAM_BETAS, ADAM_EPS, PYRAMID_LEVELS
from datagen.renderer import SamplePair
from engine.optim import AdamState, adam_step, milestone_learning_rate
from engine.tensor import GradientTape, Tensor, backward, no_grad
from flow.fields import FlowField
from model.glunet import GLUNetModel
from trainer.loss import level_aepe, multi_scale_loss
from utils.errors import DataError, TrainingDivergedError
from utils.logger import log_training_step, setup_logger

logger = setup_logger(__name__)


class TrainResult(BaseModel):
    history: pd.DataFrame
    iterations: int

    class Config:
        arbitrary_types_allowed = True


def assemble_batch(pairs: Sequence[SamplePair], indices: Sequence[int], dtype: str = "float32") -> Tuple[Tensor, Tensor, FlowField]:
    """Stack the chosen pairs into source, target and ground-truth batches"""
    chosen = [pairs[i] for i in indices]
    dims = {pair.dims for pair in chosen}
    if len(dims) != 1:
        raise DataError(f"batch mixes pair sizes {sorted(dims)}")
    source = Tensor(np.stack([p.source for p in chosen]).astype(dtype))
    target = Tensor(np.stack([p.target for p in chosen]).astype(dtype))
    gt = np.concatenate([p.gt_flow.numpy() for p in chosen]).astype(dtype)
    return source, target, FlowField.from_numpy(gt)


class BatchSchedule:
    """Seeded epoch permutations cut into fixed-size batches, wrapping across epochs"""

    def __init__(self, size: int, batch_size: int, seed: int):
        self.size = size
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self.order: List[int] = []

    def next(self) -> List[int]:
        batch = []
        while len(batch) < self.batch_size:
            if not self.order:
                self.order = [int(i) for i in self.rng.permutation(self.size)]
            batch.append(self.order.pop(0))
        return batch


def train(
    model: GLUNetModel,
    pairs: Sequence[SamplePair],
    config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """
    Train the model with Adam on the multi-scale loss

    Args:
        model: Network to train in place
        pairs: Training pairs (all of one size)
        config: Training hyperparameters
        out_dir: Where the loss-history CSV goes, if given

    Returns:
        TrainResult with one history row per iteration
    """
    if len(pairs) == 0:
        raise DataError("training set is empty")
    params = model.parameters().trainable()
    state = AdamState(
        learning_rate=config.learning_rate,
        weight_decay=config.weight_decay,
        beta1=ADAM_BETAS[0],
        beta2=ADAM_BETAS[1],
        eps=ADAM_EPS,
    )
    schedule = BatchSchedule(len(pairs), config.batch_size, config.seed)
    rows = []
    logger.info(f"Training {params.count()} parameters for {config.iterations} iterations")

    for iteration in range(config.iterations):
        model.train()
        source, target, gt = assemble_batch(pairs, schedule.next(), model.config.dtype)
        params.zero_grad()
        with GradientTape() as tape:
            output = model(source, target)
            result = multi_scale_loss(output.levels, gt, config.level_weights)
        loss = result.total.item()
        if not np.isfinite(loss):
            levels = ", ".join(f"{name}={value:.6g}" for name, value in result.per_level.items())
            raise TrainingDivergedError(f"loss became {loss} at iteration {iteration} ({levels})")
        backward(result.total, tape)

        state.learning_rate = milestone_learning_rate(config.learning_rate, iteration, config.lr_milestones,
                                                      config.lr_gamma)
        adam_step(params, None, state)

        rows.append({"iteration": iteration, "loss": loss, **result.per_level})
        if (iteration + 1) % config.log_every == 0 or iteration == config.iterations - 1:
            logger.info(f"Iteration {iteration + 1}/{config.iterations}: loss {loss:.6g}")
            log_training_step(iteration, loss, result.per_level)

    history = pd.DataFrame(rows, columns=["iteration", "loss"] + list(PYRAMID_LEVELS))
    if out_dir is not None:
        write_history(history, out_dir)
    return TrainResult(history=history, iterations=config.iterations)


def write_history(history: pd.DataFrame, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / LOSS_HISTORY_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    history.to_csv(path, index=False, float_format="%.9g")
    return path


def evaluate_model(model: GLUNetModel, pairs: Sequence[SamplePair]) -> Dict[str, float]:
    """
    Held-out AEPE of the final flow and of every level, all measured in full-resolution
    pixels over every pixel

    Returns:
        {"final": ..., "L1": ..., ..., "L4": ...}
    """
    if len(pairs) == 0:
        raise DataError("evaluation set is empty")
    model.eval()
    sums: Dict[str, float] = {}
    counts: Dict[str, int] = {}
    with no_grad():
        for index in range(len(pairs)):
            source, target, gt = assemble_batch(pairs, [index], model.config.dtype)
            output = model(source, target)
            for name, flow in [("final", output.flow)] + list(output.levels.items()):
                mean, count = level_aepe(flow, gt)
                sums[name] = sums.get(name, 0.0) + mean * count
                counts[name] = counts.get(name, 0) + count
    return {name: sums[name] / counts[name] for name in sums}
