"""Operator CLI: data generation, training, evaluation, inference, attention maps.

Exit codes: 0 success, 2 configuration/usage failure, 3 data failure,
4 numeric failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from pathlib import Path

from . import tensor as T
from .checkpoint import load_checkpoint
from .config import RunConfig
from .datagen import build_corpus, load_sources, read_manifest
from .errors import ConfigurationError, DataError, MstafError, NumericError, UsageError
from .evaluate import evaluate
from .imgio import load_image, resize_image, save_image
from .metrics import detect_pair
from .model import forward
from .tensor import Tensor
from .train import train
from .viz import render_attention_maps

log = logging.getLogger("mstaf")

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, help="override train.seed and data.seed")
    parser.add_argument("--out", required=True, help="run directory for outputs")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers (eval)")
    parser.add_argument("--preset", choices=("toy", "paper"), help="configuration preset")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")


def _resolve(args) -> RunConfig:
    cfg = RunConfig.resolve(config_path=args.config, preset=args.preset, overrides=args.overrides, seed=args.seed)
    cfg.echo(Path(args.out) / "resolved.cfg")
    return cfg


def cmd_gen_data(args) -> int:
    run = _resolve(args)
    sources_dir = args.sources or run.get_str("data.sources")
    if not sources_dir:
        raise ConfigurationError("gen-data needs a source directory (--sources or data.sources)")
    model_cfg = run.model_config()
    sources = load_sources(sources_dir, resolution=model_cfg.resolution)
    manifest = build_corpus(
        sources,
        n_pairs=run.get_int("data.n_pairs"),
        ranges=run.transform_ranges(),
        seed=run.get_int("data.seed"),
        out_dir=args.out,
        negative_fraction=run.get_float("data.negative_fraction"),
        balance_bins=run.get_bool("data.balance_bins"),
    )
    records = read_manifest(manifest)
    histogram = Counter(r["bin"] if r["label"] == "positive" else "negative" for r in records)
    total = sum(histogram.values())
    print(f"wrote {total} pairs to {manifest}")
    for name in ("difficult", "normal", "easy", "negative"):
        if histogram.get(name):
            print(f"  {name:>9s}: {histogram[name]}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = _resolve(args)
    result = train(run.model_config(), run.train_config(), args.corpus, args.out)
    print(f"trained {result.steps_run} steps; final loss {result.losses[-1]:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    run = _resolve(args)
    report = evaluate(
        args.checkpoint,
        args.corpus,
        args.out,
        batch_size=run.get_int("eval.batch_size"),
        workers=args.workers,
    )
    print(report.to_table())
    return EXIT_OK


def cmd_infer(args) -> int:
    _resolve(args)  # inference has no knobs, but every run directory carries its config
    params, cfg = load_checkpoint(args.checkpoint)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def prep(path) -> Tensor:
        image = load_image(path)
        if image.shape[1:] != (cfg.resolution, cfg.resolution):
            image = resize_image(image, cfg.resolution, cfg.resolution)  # bilinear
        return Tensor(image[None].astype(cfg.np_dtype))

    with T.no_grad():
        m_p, m_d = forward(prep(args.probe), prep(args.donor), params, cfg)
    mask_p, mask_d = m_p.numpy()[0, 0], m_d.numpy()[0, 0]
    save_image(out_dir / "mask_probe.png", mask_p)
    save_image(out_dir / "mask_donor.png", mask_d)
    verdict = "positive" if detect_pair(mask_p, mask_d) else "negative"
    (out_dir / "verdict.txt").write_text(verdict + "\n")
    print(verdict)
    return EXIT_OK


def cmd_viz_attn(args) -> int:
    try:
        qy, qx = (int(v) for v in args.token.split(","))
    except ValueError as exc:
        raise UsageError(f"--token expects 'y,x' integers, got {args.token!r}") from exc
    written = render_attention_maps(
        args.checkpoint, args.probe, args.donor, args.stage, args.block, (qy, qx), args.out
    )
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mstaf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a splice-pair corpus")
    _common_flags(p)
    p.add_argument("--sources", help="directory of source images + masks/annotations")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on a generated corpus")
    _common_flags(p)
    p.add_argument("--corpus", required=True, help="corpus directory (contains manifest.jsonl)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="predict splice masks for one probe/donor pair")
    _common_flags(p)
    p.add_argument("probe", help="probe image path")
    p.add_argument("donor", help="donor image path")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("viz-attn", help="render attention heatmaps for a query token")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--probe", required=True)
    p.add_argument("--donor", required=True)
    p.add_argument("--stage", type=int, required=True, help="stage index (1..3)")
    p.add_argument("--block", type=int, required=True, help="block index within the stage")
    p.add_argument("--token", required=True, help="query token grid coords 'y,x'")
    p.set_defaults(func=cmd_viz_attn)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MstafError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
