import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from config.config import EXIT_DATA, EXIT_OK, LOSS_HISTORY_FILE, MODEL_DIVISOR
from config.models import RunConfig
from config.presets import BENCH_CHANNELS, BENCH_REPEAT, BENCH_SIZES, DEFAULT_CROP
from correlation.cost import benchmark_correlation
from datagen.dataset import SyntheticPairDataset, generate_dataset
from engine.parallel import set_worker_count
from engine.tensor import Tensor, no_grad
from evaluation.metrics import eval_sparse, evaluate_dense_many
from evaluation.report import write_report
from flow.fields import FlowField
from flow.warp import warp
from model.glunet import GLUNetModel, load_checkpoint, save_checkpoint
from storage.flow_file import read_flo, write_flo
from storage.images import crop_to, pad_to_multiple, read_image, read_mask, resize_image, write_image
from trainer.train import train
from utils.errors import DataError, EngineError, UsageError
from utils.logger import set_global_level, setup_logger

logger = setup_logger(__name__)


class EngineArgumentParser(argparse.ArgumentParser):
    """Usage errors surface as UsageError (exit code 1) instead of argparse's exit 2"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def cmd_datagen(args: argparse.Namespace) -> int:
    """Render synthetic pairs and their manifest"""
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    run = RunConfig.load(args.config)
    out_dir = Path(args.out)
    if args.count == 0:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.txt").write_text("", encoding="utf-8")
        logger.info(f"Wrote empty manifest to {out_dir}")
        return EXIT_OK
    generate_dataset(args.images, out_dir, args.count, args.crop, args.seed, run.transforms)
    return EXIT_OK


def _prepare_output(path: Path) -> Path:
    """Create the parent directory of an output file and make sure it can be written"""
    if path.is_dir():
        raise DataError(f"{path} is a directory")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create {path.parent}: {e}") from e
    if not os.access(path.parent, os.W_OK):
        raise DataError(f"{path.parent} is not writable")
    return path


def cmd_train(args: argparse.Namespace) -> int:
    """Train a model on a rendered dataset and write the checkpoint and loss history"""
    run = RunConfig.load(args.config)
    checkpoint = _prepare_output(Path(args.out))
    if args.iterations is not None:
        if args.iterations < 1:
            raise UsageError("--iterations must be >= 1")
        run.train.iterations = args.iterations
    dataset = SyntheticPairDataset(args.data, run.transforms)
    if len(dataset) == 0:
        raise DataError(f"dataset {args.data} is empty")
    pairs = [dataset[i] for i in range(len(dataset))]

    model = GLUNetModel(run.model)
    train(model, pairs, run.train, out_dir=checkpoint.parent)
    save_checkpoint(model, checkpoint)
    logger.info(f"Saved checkpoint to {checkpoint}, loss history to {checkpoint.parent / LOSS_HISTORY_FILE}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    """Estimate the flow from a source image to a target image"""
    model = load_checkpoint(args.ckpt)
    model.eval()
    source = read_image(args.source)
    target = read_image(args.target)
    if source.shape != target.shape:
        logger.info(f"Resizing source {source.shape[1:]} to target {target.shape[1:]}")
        source = resize_image(source, target.shape[1:])

    padded_source, dims = pad_to_multiple(source, MODEL_DIVISOR)
    padded_target, _ = pad_to_multiple(target, MODEL_DIVISOR)
    with no_grad():
        output = model(Tensor(padded_source[None]), Tensor(padded_target[None]))
        flow = output.flow.numpy()[0]
        write_flo(args.out_flow, crop_to(flow, dims))
        if args.out_warp:
            warped = warp(Tensor(padded_source[None].astype(flow.dtype)), FlowField.from_numpy(flow))
            write_image(args.out_warp, crop_to(warped.data[0], dims))
    logger.info(f"Wrote {dims[0]}x{dims[1]} flow to {args.out_flow}")
    return EXIT_OK


def _flow_files(path: Path) -> List[Path]:
    if path.is_dir():
        return sorted(path.glob("*.flo"))
    if not path.is_file():
        raise DataError(f"{path} does not exist")
    return [path]


def _mask_for(gt_path: Path, mask_arg: Optional[str]) -> Optional[np.ndarray]:
    if mask_arg is None:
        return None
    mask_path = Path(mask_arg)
    if mask_path.is_dir():
        mask_path = mask_path / f"{gt_path.stem}.mask.pgm"
    return read_mask(mask_path)


def _read_correspondences(path: str) -> np.ndarray:
    """(K, 4) rows of x_t y_t x_s y_s"""
    try:
        rows = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise DataError(f"{path}: malformed correspondence file: {e}") from e
    if rows.size and rows.shape[1] != 4:
        raise DataError(f"{path}: expected 4 columns per correspondence, got {rows.shape[1]}")
    return rows


def cmd_eval(args: argparse.Namespace) -> int:
    """Compare predicted flows against dense or sparse ground truth"""
    preds = _flow_files(Path(args.pred))
    if args.sparse:
        if len(preds) != 1:
            raise DataError("sparse evaluation takes exactly one predicted flow")
        correspondences = _read_correspondences(args.sparse)
        report = eval_sparse(read_flo(preds[0]), correspondences)
    else:
        if args.gt is None:
            raise UsageError("--gt is required for dense evaluation")
        gts = _flow_files(Path(args.gt))
        if len(preds) != len(gts):
            raise DataError(f"{len(preds)} predicted flows but {len(gts)} ground-truth flows")
        masks = [_mask_for(gt, args.mask) for gt in gts]
        report = evaluate_dense_many([read_flo(p) for p in preds], [read_flo(g) for g in gts], masks)
    write_report(report, args.report)
    logger.info(f"AEPE {report.aepe:.4f} over {report.count} points, report in {args.report}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    """Time both correlation layers and report their analytic cost"""
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as e:
        raise UsageError(f"--sizes must be a comma-separated list of integers: {args.sizes}") from e
    if not sizes or any(s < 1 for s in sizes):
        raise UsageError("--sizes must list positive sizes")
    records = benchmark_correlation(sizes, args.radius, repeat=args.repeat, channels=args.channels)
    payload = json.dumps([record.dict() for record in records], indent=2)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = EngineArgumentParser(prog="dce", description="Dense correspondence estimation engine")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--threads", type=int, default=None, help="Worker cap (overrides DCE_THREADS)")
    commands = parser.add_subparsers(dest="command", parser_class=EngineArgumentParser)

    datagen = commands.add_parser("datagen", help="Render synthetic training pairs")
    datagen.add_argument("--images", required=True)
    datagen.add_argument("--out", required=True)
    datagen.add_argument("--count", type=int, required=True)
    datagen.add_argument("--crop", type=int, default=DEFAULT_CROP)
    datagen.add_argument("--seed", type=int, default=0)
    datagen.add_argument("--config", default=None)
    datagen.set_defaults(handler=cmd_datagen)

    train_parser = commands.add_parser("train", help="Train on a rendered dataset")
    train_parser.add_argument("--data", required=True)
    train_parser.add_argument("--out", required=True)
    train_parser.add_argument("--config", default=None)
    train_parser.add_argument("--iterations", type=int, default=None)
    train_parser.set_defaults(handler=cmd_train)

    infer = commands.add_parser("infer", help="Estimate the flow of an image pair")
    infer.add_argument("--ckpt", required=True)
    infer.add_argument("--source", required=True)
    infer.add_argument("--target", required=True)
    infer.add_argument("--out-flow", required=True)
    infer.add_argument("--out-warp", default=None)
    infer.set_defaults(handler=cmd_infer)

    evaluate = commands.add_parser("eval", help="Compute flow metrics")
    evaluate.add_argument("--pred", required=True)
    evaluate.add_argument("--gt", default=None)
    evaluate.add_argument("--mask", default=None)
    evaluate.add_argument("--sparse", default=None)
    evaluate.add_argument("--report", required=True)
    evaluate.set_defaults(handler=cmd_eval)

    bench = commands.add_parser("bench", help="Benchmark the correlation layers")
    bench.add_argument("--sizes", default=",".join(str(s) for s in BENCH_SIZES))
    bench.add_argument("--radius", type=int, default=4)
    bench.add_argument("--repeat", type=int, default=BENCH_REPEAT)
    bench.add_argument("--channels", type=int, default=BENCH_CHANNELS)
    bench.add_argument("--report", default=None)
    bench.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application"""
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: datagen, train, infer, eval or bench")
        if args.log_level:
            set_global_level(args.log_level)
        if args.threads is not None:
            set_worker_count(args.threads)
        return args.handler(args)
    except EngineError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
