"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 verification failure,
3 runtime abort (non-finite loss).
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import Config, ConfigError, LossConfig, ModelConfig, TrainConfig, build_config
from .data import (KernelRanges, load_pairs, load_png, make_dataset,
                   make_synthetic_sharp, save_png)
from .dump import dump_attention
from .evaluate import evaluate_model, restore_image
from .gradcheck import TARGETS, grad_check
from .network import build_model, pad_image
from .plotting import plot_metric_curves, plot_training_curves
from .sweep import format_table, run_sweep
from .training import (METRICS_NAME, TRAIN_LOG_NAME, TrainingAborted,
                       model_from_checkpoint, train_stage)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_ABORT = 3

DEFAULT_TOLERANCES = {"end2end": 1e-3}
DEFAULT_TOL = 1e-4


class Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _config_parent() -> Parser:
    """Parent parser exposing --config plus one override flag per config key."""
    parent = Parser(add_help=False)
    parent.add_argument("--config", help="flat key = value config file")
    for section in (ModelConfig, TrainConfig, LossConfig):
        for f in dataclasses.fields(section):
            flag = "--" + f.name.replace("_", "-")
            if f.name == "deterministic":
                parent.add_argument(flag, dest=f.name, action="store_true", default=None,
                                    help="single-threaded deterministic mode")
            else:
                parent.add_argument(flag, dest=f.name, default=None, metavar="V",
                                    help=argparse.SUPPRESS)
    return parent


def _overrides(args) -> dict:
    keys = {f.name for section in (ModelConfig, TrainConfig, LossConfig)
            for f in dataclasses.fields(section)}
    return {k: v for k, v in vars(args).items() if k in keys and v is not None}


def _load_config(args) -> Config:
    return build_config(getattr(args, "config", None), _overrides(args))


def _load_data(data_dir):
    train = load_pairs(data_dir, "train")
    try:
        test = load_pairs(data_dir, "test")
    except FileNotFoundError:
        log.warning("no test split under %s; stage-end evaluation disabled", data_dir)
        test = None
    return train, test


def build_parser() -> Parser:
    parser = Parser(prog="aibnet", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)
    cfgp = _config_parent()

    p = sub.add_parser("gen-data", parents=[cfgp], help="generate a synthetic blur dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=64, help="train pairs (test adds ~25%%)")
    p.add_argument("--sharp-dir", help="existing sharp PNG folder; synthesized when omitted")
    p.add_argument("--source-images", type=int, default=16)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--length-min", type=int, default=5)
    p.add_argument("--length-max", type=int, default=21)
    p.add_argument("--kernel-size", type=int, default=31)
    p.add_argument("--curvature", type=float, default=2.0, help="max |curvature|")
    p.add_argument("--noise-max", type=float, default=0.01)

    p = sub.add_parser("pretrain-encoder", parents=[cfgp],
                       help="stage 0: pretrain the encoder, then freeze it")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="mid-stage checkpoint to continue from")

    p = sub.add_parser("train", parents=[cfgp], help="train one sub-decoder stage")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init-from", help="previous stage checkpoint (default: <out>/stage<K-1>.ckpt)")
    p.add_argument("--resume", help="mid-stage checkpoint to continue from")

    p = sub.add_parser("eval", parents=[cfgp], help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--eval-stage", type=int, help="sub-decoder output to score (default: last)")
    p.add_argument("--csv", help="metrics CSV path (default: alongside the checkpoint)")

    p = sub.add_parser("infer", parents=[cfgp], help="restore a single image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--eval-stage", type=int, help="sub-decoder output to use (default: last)")

    p = sub.add_parser("gradcheck", parents=[cfgp],
                       help="verify gradients against finite differences")
    p.add_argument("--target", required=True, choices=TARGETS + ("all",))
    p.add_argument("--tol", type=float, help="max relative error (default 1e-4, end2end 1e-3)")

    p = sub.add_parser("sweep", parents=[cfgp], help="run an ablation sweep")
    p.add_argument("--kind", required=True, choices=("masks", "components"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("dump-attn", parents=[cfgp],
                       help="serialize attention maps and mask supports to CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="model weights (default: fresh seeded model)")
    p.add_argument("--input", help="input PNG (default: seeded random image)")
    p.add_argument("--sub-decoder", type=int, default=1)
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--block", type=int, default=1)

    p = sub.add_parser("plot", parents=[cfgp], help="render loss/PSNR curves to PNG")
    p.add_argument("--run", required=True, help="directory holding the training CSVs")
    p.add_argument("--out", help="figure directory (default: the run directory)")

    return parser


def _cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    if args.sharp_dir:
        sharp_dir = Path(args.sharp_dir)
    else:
        sharp_dir = out / "_sharp_src"
        make_synthetic_sharp(sharp_dir, args.source_images, args.image_size, cfg.train.seed)
    ranges = KernelRanges(length=(args.length_min, args.length_max),
                          kernel_size=args.kernel_size,
                          curvature=(-abs(args.curvature), abs(args.curvature)),
                          noise_sigma=(0.0, args.noise_max))
    manifest = make_dataset(sharp_dir, out, args.count, ranges, cfg.train.seed)
    print(f"wrote dataset under {out} (manifest: {manifest})")
    return EXIT_OK


def _run_stage(args, stage: int) -> int:
    cfg = _load_config(args)
    train_pairs, eval_pairs = _load_data(args.data)
    init_from = getattr(args, "init_from", None)
    if stage > 0 and init_from is None and args.resume is None:
        candidate = Path(args.out) / f"stage{stage - 1}.ckpt"
        if not candidate.exists():
            raise ConfigError(f"missing prerequisite checkpoint {candidate}; "
                              f"train stage {stage - 1} first or pass --init-from")
        init_from = candidate
    _, final = train_stage(cfg, stage, train_pairs, args.out, eval_pairs=eval_pairs,
                           init_from=init_from, resume_from=args.resume)
    print(f"stage {stage} checkpoint: {final}")
    return EXIT_OK


def _cmd_pretrain(args) -> int:
    return _run_stage(args, 0)


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    return _run_stage(args, cfg.train.stage)


def _cmd_eval(args) -> int:
    model, cfg, header, _ = model_from_checkpoint(args.checkpoint)
    pairs = load_pairs(args.data, args.split)
    stage = args.eval_stage or cfg.model.sub_decoders
    csv_path = args.csv or Path(args.checkpoint).parent / METRICS_NAME
    summary = evaluate_model(model, pairs, stage, iteration=header["iteration"],
                             split=args.split, csv_path=csv_path)
    print(f"{summary['count']} images  mean PSNR {summary['mean_psnr']:.4f} dB  "
          f"mean SSIM {summary['mean_ssim']:.4f}  (rows appended to {csv_path})")
    return EXIT_OK


def _cmd_infer(args) -> int:
    model, cfg, _, _ = model_from_checkpoint(args.checkpoint)
    stage = args.eval_stage or cfg.model.sub_decoders
    if not 1 <= stage <= cfg.model.sub_decoders:
        raise ConfigError(f"eval-stage must lie in [1, {cfg.model.sub_decoders}]")
    image = load_png(args.input)
    restored = restore_image(lambda x: model(x)[stage - 1], image)
    save_png(args.output, restored)
    print(f"wrote {args.output}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    targets = TARGETS if args.target == "all" else (args.target,)
    failed = False
    for target in targets:
        tol = args.tol if args.tol is not None else DEFAULT_TOLERANCES.get(target, DEFAULT_TOL)
        report = grad_check(target, seed=cfg.train.seed)
        for line in report.lines(tol):
            print(line)
        ok = report.passed(tol)
        print(f"{target}: max relative error {report.max_error:.3e} "
              f"{'<' if ok else '>='} tol {tol:g} -> {'pass' if ok else 'FAIL'}")
        failed = failed or not ok
    return EXIT_VERIFY if failed else EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    train_pairs, eval_pairs = _load_data(args.data)
    if eval_pairs is None:
        raise ConfigError(f"sweep needs a test split under {args.data}")
    rows = run_sweep(args.kind, cfg, train_pairs, eval_pairs, args.out)
    print(format_table(rows))
    print(f"report: {Path(args.out) / f'sweep_{args.kind}.tsv'}")
    return EXIT_OK


def _cmd_dump_attn(args) -> int:
    if args.checkpoint:
        model, cfg, _, _ = model_from_checkpoint(args.checkpoint)
    else:
        cfg = _load_config(args)
        model = build_model(cfg.model, cfg.train.seed)
    if args.input:
        image = torch.from_numpy(load_png(args.input)).permute(2, 0, 1).unsqueeze(0)
        image, _ = pad_image(image)
    else:
        rng = np.random.default_rng(cfg.train.seed)
        image = torch.from_numpy(rng.uniform(0, 1, size=(1, 3, 64, 64)).astype(np.float32))
    out = dump_attention(model, image.to(next(model.parameters()).dtype),
                         args.sub_decoder, args.scale, args.block, args.out)
    print(f"wrote attention dump to {out}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    run = Path(args.run)
    out = Path(args.out) if args.out else run
    made = []
    train_log = run / TRAIN_LOG_NAME
    if train_log.exists():
        made.append(plot_training_curves(train_log, out / "loss_curves.png"))
    metrics = run / METRICS_NAME
    if metrics.exists():
        made.append(plot_metric_curves(metrics, out / "psnr_curves.png"))
    if not made:
        raise ConfigError(f"no {TRAIN_LOG_NAME} or {METRICS_NAME} under {run}")
    for path in made:
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "pretrain-encoder": _cmd_pretrain,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "gradcheck": _cmd_gradcheck,
    "sweep": _cmd_sweep,
    "dump-attn": _cmd_dump_attn,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except TrainingAborted as exc:
        log.error("training aborted: %s", exc)
        return EXIT_ABORT
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
