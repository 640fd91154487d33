"""Command-line entry points: prepare-data, train, super-resolve,
sample-multi, evaluate.

Every flag that mirrors a config key (``--target-size``, ``--seed``, ...)
overrides the config file and the ``SRIM_*`` environment variables.
``--deterministic`` forces single-threaded math kernels so repeated runs
produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

from . import dataset, generator, metrics, resample, trainer
from .config import FIELD_TYPES, ConfigError, load_config
from .image import ImageFormatError, hstack_grid, load_image, save_image, to_float01, to_u8
from .rngtools import seed_sequence


def _config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", default=None,
                        help="key-value config file")
    group = parser.add_argument_group("config overrides")
    for key, kind in FIELD_TYPES.items():
        flag = "--" + key.replace("_", "-")
        group.add_argument(flag, dest=key, default=None, metavar=key.upper(),
                           type={"int": int, "float": float}.get(kind, str))


def _common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--threads", type=int, default=None,
                        help="cap math-kernel threads")
    parser.add_argument("--deterministic", action="store_true",
                        help="single-threaded, bit-reproducible mode")


def _run_config(args, *, for_train: bool = False):
    overrides = {key: getattr(args, key) for key in FIELD_TYPES
                 if getattr(args, key, None) is not None}
    cfg = load_config(args.config, overrides=overrides)
    cfg.validate(for_train=for_train)
    return cfg


def _thread_limit(args):
    n = 1 if args.deterministic else args.threads
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(n))


def cmd_prepare_data(args) -> int:
    cfg = _run_config(args)
    train, test = dataset.build_dataset(
        args.source, cfg.target_size, cfg.scale_factor,
        cfg.split_fraction, cfg.seed,
    )
    manifest = dataset.write_cache(args.out, train, test)
    print(f"wrote {len(train)} train / {len(test)} test pairs under {args.out}")
    print(f"manifest: {manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args, for_train=True)
    train_set = dataset.load_cache(args.cache, "train")
    tc = cfg.train_config()

    def progress(p, mean_dist, losses):
        last = losses[-1] if losses else float("nan")
        print(f"iter {p}/{tc.outer_iterations} selected {mean_dist:.6g} "
              f"loss {last:.6g}", flush=True)

    gp, history = trainer.train(
        train_set, tc,
        gen_config=cfg.generator_config(),
        extractor=cfg.make_extractor(),
        run_dir=args.run_dir,
        resume=args.resume,
        stop_after=args.stop_after,
        callback=progress,
    )
    print(f"finished at iteration {gp.step}; "
          f"checkpoint: {os.path.join(args.run_dir, trainer.CHECKPOINT_NAME)}")
    return 0


def cmd_super_resolve(args) -> int:
    cfg = _run_config(args)
    gp, _, _ = generator.load_checkpoint(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    for path in args.inputs:
        img = load_image(path)
        out01 = generator.sample(gp, to_float01(img, gp.config.np_dtype), cfg.seed)
        stem = os.path.splitext(os.path.basename(path))[0]
        target = os.path.join(args.out, f"{stem}.png")
        save_image(target, to_u8(out01))
        print(target)
    return 0


def cmd_sample_multi(args) -> int:
    cfg = _run_config(args)
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    gp, _, _ = generator.load_checkpoint(args.checkpoint)
    x = to_float01(load_image(args.input), gp.config.np_dtype)
    os.makedirs(args.out, exist_ok=True)
    samples = []
    for j in range(args.count):
        img_seed = int(seed_sequence(cfg.seed, "multi", j).generate_state(1)[0])
        samples.append(to_u8(generator.sample(gp, x, img_seed)))
        target = os.path.join(args.out, f"sample_{j:02d}.png")
        save_image(target, samples[-1])
        print(target)
    grid_path = os.path.join(args.out, "grid.png")
    save_image(grid_path, hstack_grid(samples))
    print(grid_path)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    gp, _, _ = generator.load_checkpoint(args.checkpoint)
    test_set = dataset.load_cache(args.cache, args.split)
    reports = metrics.evaluate(gp, test_set, cfg.seed)
    with open(args.out, "w") as fh:
        fh.write(metrics.report_csv(reports))
    for rep in reports:
        print(f"{rep.method}: mean PSNR {rep.mean_psnr:.4f} dB, "
              f"mean SSIM {rep.mean_ssim:.4f}")
    print(f"report: {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srim",
        description="Super-resolution by implicit maximum likelihood estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="build the LR/HR training cache")
    p.add_argument("--source", required=True, help="directory of source images")
    p.add_argument("--out", default="data-cache", help="cache output directory")
    _common_options(p)
    _config_options(p)
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train", help="run the IMLE training loop")
    p.add_argument("--cache", required=True, help="prepared data cache")
    p.add_argument("--run-dir", required=True, help="output directory for the run")
    p.add_argument("--resume", action="store_true",
                   help="continue from the run directory's checkpoint")
    p.add_argument("--stop-after", type=int, default=None, metavar="N",
                   help="stop after N iterations (orderly interrupt)")
    _common_options(p)
    _config_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("super-resolve", help="4x upscale images with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("inputs", nargs="+", help="input image paths")
    _common_options(p)
    _config_options(p)
    p.set_defaults(func=cmd_super_resolve)

    p = sub.add_parser("sample-multi",
                       help="draw several samples for one input, plus a grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=5)
    _common_options(p)
    _config_options(p)
    p.set_defaults(func=cmd_sample_multi)

    p = sub.add_parser("evaluate", help="PSNR/SSIM report vs the bicubic baseline")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--out", default="eval.csv", help="report CSV path")
    _common_options(p)
    _config_options(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit(args):
            return args.func(args)
    except trainer.TrainingDiverged as exc:
        print(f"error: training diverged at iteration {exc.iteration}: {exc}",
              file=sys.stderr)
        return 1
    except (ConfigError, dataset.DataError, generator.CheckpointError,
            ImageFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
