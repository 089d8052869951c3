"""Command-line entry points: train, infer, eval, gradcheck, simulate.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3
verification failure.  `DAGF_THREADS` caps inference worker threads;
every command honors `--seed` where randomness exists.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import load_bundle
from .config import config_from_meta, load_run_config
from .data import IMAGE_SUFFIXES, denormalize, load_pairs, normalize
from .errors import ConfigError, DataError, DimensionError
from .guided import DagfNet, self_ensemble_infer
from .imageio import load_image, save_image
from .losses import CobiConfig, psnr, ssim
from .simulate import generate_pairs, shallow_config, simulate_train
from .tensor import Tensor
from .train import Trainer

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _worker_count() -> int:
    raw = os.environ.get("DAGF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"DAGF_THREADS must be an integer, got {raw!r}")


def _list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    files = [p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES]
    if not files:
        raise DataError(f"no images found in {directory}")
    return files


def _model_from_checkpoint(path) -> DagfNet:
    bundle = load_bundle(path)
    cfg = config_from_meta(bundle)
    model = DagfNet(cfg, np.random.default_rng(0))
    params = {k: v for k, v in bundle.items() if not k.startswith(("state/", "meta/"))}
    model.load_state_dict(params)
    return model


# -- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    pairs = load_pairs(cfg.data_root)
    val_pairs = load_pairs(cfg.val_root) if cfg.val_root else None
    trainer = Trainer(cfg, args.out, pairs, val_pairs)
    if args.resume:
        trainer.resume(args.resume)
    result = trainer.train()
    print(f"checkpoint: {result['checkpoint']}")
    print(f"metrics: {result['csv']}")
    return EXIT_OK


def cmd_infer(args) -> int:
    model = _model_from_checkpoint(args.checkpoint)
    files = _list_images(Path(args.input_dir))
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def restore_one(path: Path):
        x = normalize(load_image(path))
        batch = Tensor(x.data[None])
        if args.ensemble:
            y = self_ensemble_infer(batch, model)
            y = Tensor(np.clip(y.data, -1.0, 1.0))
        else:
            y = model.infer(batch)
        out = denormalize(Tensor(y.data[0]))
        target = out_dir / (path.stem + ".png")
        save_image(target, out)
        return target

    failures = []
    written = 0
    workers = _worker_count()

    def run(path):
        nonlocal written
        try:
            restore_one(path)
            written += 1
        except DimensionError as exc:
            failures.append((path, str(exc)))
            print(f"skipped {path.name}: {exc}", file=sys.stderr)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, files))
    else:
        for path in files:
            run(path)
    if written == 0:
        print("all inputs failed the size contract", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_eval(args) -> int:
    pred_files = {p.stem: p for p in _list_images(Path(args.pred_dir))}
    gt_files = {p.stem: p for p in _list_images(Path(args.gt_dir))}
    unmatched = sorted(set(pred_files) ^ set(gt_files))
    if unmatched:
        print(f"unmatched stems: {', '.join(unmatched[:8])}", file=sys.stderr)
        return EXIT_DATA
    stems = sorted(pred_files)
    if not stems:
        print("no overlapping images to evaluate", file=sys.stderr)
        return EXIT_DATA
    psnrs, ssims = [], []
    for stem in stems:
        pred = load_image(pred_files[stem]).data
        gt = load_image(gt_files[stem]).data
        p = psnr(pred, gt, peak=1.0)
        s = ssim(pred, gt, data_range=1.0)
        psnrs.append(p)
        ssims.append(s)
        print(f"{stem},{_fmt(p)},{_fmt(s)}")
    mean_psnr = math.inf if any(math.isinf(v) for v in psnrs) else float(np.mean(psnrs))
    print(f"MEAN,{_fmt(mean_psnr)},{_fmt(float(np.mean(ssims)))}")
    return EXIT_OK


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return format(x, ".6g")


def cmd_gradcheck(args) -> int:
    from .verify import SCOPES, run_scope

    scopes = list(SCOPES) if args.scope == "all" else [args.scope]
    ok = True
    for scope in scopes:
        scope_ok, lines = run_scope(scope)
        ok = ok and scope_ok
        for line in lines:
            print(line)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_simulate(args) -> int:
    clean_files = _list_images(Path(args.clean_dir))
    measured_files = _list_images(Path(args.measured_dir))
    n = min(len(clean_files), len(measured_files))
    clean = [normalize(load_image(p)) for p in clean_files[:n]]
    measured = [normalize(load_image(p)) for p in measured_files[:n]]
    radius = None if args.radius < 0 else args.radius
    result = simulate_train(
        clean,
        measured,
        shallow_cfg=shallow_config(args.channels),
        steps=args.steps,
        cobi=CobiConfig(gamma=args.gamma, search_radius=radius),
        seed=args.seed if args.seed is not None else 0,
    )
    out_dir = Path(args.out_dir)
    (out_dir / "degraded").mkdir(parents=True, exist_ok=True)
    (out_dir / "clean").mkdir(parents=True, exist_ok=True)
    degraded = generate_pairs(result.model, clean)
    for path, clean_img, sim in zip(clean_files[:n], clean, degraded):
        save_image(out_dir / "degraded" / (path.stem + ".png"), denormalize(sim))
        save_image(out_dir / "clean" / (path.stem + ".png"), denormalize(clean_img))
    manifest = {
        "gamma": args.gamma,
        "steps": args.steps,
        "seed": args.seed if args.seed is not None else 0,
        "search_radius": radius,
        "channels": args.channels,
        "images": n,
        "first_loss": result.losses[0],
        "final_loss": result.losses[-1],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {n} simulated pairs to {out_dir}")
    return EXIT_OK


# -- wiring --------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="dagf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the restoration pipeline")
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--out", required=True, help="output directory for checkpoints/metrics")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="restore a directory of images")
    p.add_argument("checkpoint")
    p.add_argument("input_dir")
    p.add_argument("output_dir")
    p.add_argument("--ensemble", action="store_true",
                   help="average the eight dihedral transforms")
    p.add_argument("--seed", type=int, help="accepted for interface uniformity")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM of predictions against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--scope", choices=["ops", "blocks", "e2e", "all"], default="all")
    p.add_argument("--seed", type=int, help="accepted for interface uniformity")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("simulate", help="train the measurement simulator and emit pairs")
    p.add_argument("clean_dir")
    p.add_argument("measured_dir")
    p.add_argument("out_dir")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--radius", type=int, default=8,
                   help="search window radius; negative means exhaustive")
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
