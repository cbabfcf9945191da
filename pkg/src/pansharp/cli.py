"""``pansharp`` command line: synth, degrade, fuse, train, eval, report.

Exit status is 0 on success, 1 on a usage error and 2 on a data error.
Images are normalised to [0, 1] on load and written back in their source
sample type. Logs go to stderr, data to stdout or files.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics, protocol, raster
from .errors import PansharpError
from .fusion import CLI_METHODS, fuse, fuse_naive
from .models.inference import pansharpen_nn
from .models.networks import VARIANTS
from .models.training import PROFILES, TrainConfig, train
from .models.weights import load_weights, save_weights
from .nn.optim import AdamConfig

log = logging.getLogger("pansharp")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
FORMATS = ("csv", "md", "json")


class UsageError(Exception):
    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so ``main`` controls the exit status."""

    def error(self, message):
        raise UsageError(message, self.format_usage())

    def parse_known_args(self, args=None, namespace=None):
        # an unknown flag before the command name would otherwise be
        # reported as a missing command
        args = sys.argv[1:] if args is None else list(args)
        if self.prog == "pansharp" and args and args[0].startswith("-") and args[0] not in ("-h", "--help"):
            self.error(f"unrecognized arguments: {args[0]}")
        return super().parse_known_args(args, namespace)

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise SystemExit(status)


# helpers ------------------------------------------------------------------

def read_image(path) -> raster.MultiBandImage:
    return raster.normalize(raster.load_msrf(path))


def write_image(img: raster.MultiBandImage, path, dtype: str) -> None:
    raster.save_msrf(raster.denormalize(img, dtype), path, dtype)


def _variant(name: str) -> str:
    key = name.lower().replace("-", "_")
    if key not in VARIANTS:
        raise argparse.ArgumentTypeError(f"invalid variant {name!r} (choose from {', '.join(VARIANTS)})")
    return key


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _filter(text: str) -> raster.ResampleFilter:
    try:
        return raster.ResampleFilter.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _emit(text: str, out: str | None) -> None:
    if out:
        raster.atomic_write_bytes(Path(out), text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def _render(reports, fmt: str) -> str:
    if fmt == "csv":
        return metrics.to_csv(reports)
    if fmt == "md":
        return metrics.to_markdown(reports)
    return metrics.to_json(reports)


# subcommands --------------------------------------------------------------

def cmd_synth(args) -> int:
    samples, seeds = [], []
    for i in range(args.count):
        s = _sample_seed(args.seed, i)
        samples.append(protocol.synth_sample(args.size, args.bands, s, args.ratio))
        seeds.append(s)
    protocol.write_dataset(args.out_dir, samples, seeds=seeds)
    log.info("wrote %d samples to %s", args.count, args.out_dir)
    return EXIT_OK


def cmd_degrade(args) -> int:
    ms_raw, pan_raw = raster.load_msrf(args.ms), raster.load_msrf(args.pan)
    sample = protocol.wald_degrade(raster.normalize(ms_raw), raster.normalize(pan_raw),
                                   args.ratio, args.filter)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_image(sample.ms, out / "ms.msrf", ms_raw.dtype)
    write_image(sample.pan, out / "pan.msrf", pan_raw.dtype)
    write_image(sample.reference, out / "ref.msrf", ms_raw.dtype)
    log.info("degraded by %d into %s", args.ratio, out)
    return EXIT_OK


def fuse_images(method: str, ms, pan, weights=None, variant=None):
    """Library path shared by ``fuse``; callers compare against it bit for bit."""
    ratio = pan.width // ms.width
    if method == "naive":
        return fuse_naive(ms, ratio)
    if method == "gan":
        return pansharpen_nn(ms, pan, weights, variant)
    return fuse(method, raster.upsample(ms, ratio), pan)


def cmd_fuse(args) -> int:
    if args.method == "gan" and not args.weights:
        raise UsageError("--method gan requires --weights", args.usage)
    ms_raw = raster.load_msrf(args.ms)
    ms, pan = raster.normalize(ms_raw), read_image(args.pan)
    weights = load_weights(args.weights, args.variant) if args.method == "gan" else None
    out = fuse_images(args.method, ms, pan, weights, args.variant)
    write_image(out, args.out, ms_raw.dtype)
    log.info("%s fusion written to %s", args.method, args.out)
    return EXIT_OK


def _training_set(samples, ms_patch: int, seed: int):
    """Samples already at ``ms_patch`` are used as-is; larger ones are tiled into random patches."""
    out = []
    for i, s in enumerate(samples):
        if (s.ms.height, s.ms.width) == (ms_patch, ms_patch):
            out.append(s)
            continue
        count = max(1, (s.ms.height // ms_patch) * (s.ms.width // ms_patch))
        cfg = protocol.SamplerConfig(ms_patch=ms_patch, count=count, seed=_sample_seed(seed, i))
        out.extend(protocol.extract_patches(s, cfg))
    return out


def cmd_train(args) -> int:
    overrides = {k: v for k, v in (("batch", args.batch), ("ms_patch", args.patch)) if v is not None}
    cfg = TrainConfig.profile(
        args.profile, alpha=args.alpha, beta=args.beta, steps=args.steps, seed=args.seed,
        use_bn=args.use_bn, adam=AdamConfig(lr=args.lr), width=args.width, **overrides,
    )
    samples = [protocol.TrainingSample(raster.normalize(s.ms), raster.normalize(s.pan),
                                       raster.normalize(s.reference), s.ratio)
               for s in protocol.read_dataset(args.data_dir)]
    if not samples:
        raise PansharpError(f"no samples in {args.data_dir}")
    data = _training_set(samples, cfg.ms_patch, cfg.seed)
    cfg = replace(cfg, ratio=data[0].ratio)
    log.info("training %s on %d patches for %d steps", args.variant, len(data), cfg.steps)
    (gen, disc), hist = train(data, args.variant, cfg, log=log.info)
    save_weights(gen, args.out)
    if args.disc_out:
        save_weights(disc, args.disc_out)
    if args.history:
        keys = list(hist.__dataclass_fields__)
        rows = ["step," + ",".join(keys)]
        rows += [f"{i}," + ",".join(repr(getattr(hist, k)[i]) for k in keys) for i in range(len(hist))]
        raster.atomic_write_bytes(Path(args.history), ("\n".join(rows) + "\n").encode())
    return EXIT_OK


def cmd_eval(args) -> int:
    if (args.ms is None) != (args.pan is None):
        raise UsageError("--ms and --pan must be given together", args.usage)
    if args.ref is None and args.ms is None:
        raise UsageError("need --ref and/or --ms with --pan", args.usage)
    fused = read_image(args.fused)
    ref = read_image(args.ref) if args.ref else None
    ms = read_image(args.ms) if args.ms else None
    pan = read_image(args.pan) if args.pan else None
    cfg = metrics.QConfig(block=args.q_block) if args.q_block else None
    label = args.method if args.method is not None else Path(args.fused).stem
    report = metrics.evaluate(fused, ref, ms, pan, args.ratio, cfg, method=label)
    for note in report.notes:
        log.warning("%s", note)
    _emit(_render([report], args.format), args.out)
    return EXIT_OK


def _load_reports(path: str):
    text = Path(path).read_text()
    if text.lstrip().startswith(("[", "{")):
        data = json.loads(text)
        return [metrics.MetricReport.from_dict(d) for d in (data if isinstance(data, list) else [data])]
    return metrics.from_csv(text)


def cmd_report(args) -> int:
    reports = []
    for path in args.inputs:
        try:
            reports.extend(_load_reports(path))
        except (ValueError, KeyError) as exc:
            raise PansharpError(f"{path}: not a metric report ({exc})") from None
    _emit(_render(reports, args.format), args.out)
    return EXIT_OK


# parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pansharp", description="Pan-sharpening toolkit.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("synth", help="write a synthetic Wald dataset")
    s.add_argument("--count", type=_positive, required=True)
    s.add_argument("--size", type=_positive, default=64, help="PAN / reference side in pixels")
    s.add_argument("--bands", type=_positive, default=4)
    s.add_argument("--ratio", type=_positive, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("degrade", help="Wald-degrade an MS/PAN pair")
    s.add_argument("--ms", required=True)
    s.add_argument("--pan", required=True)
    s.add_argument("--ratio", type=_positive, default=4)
    s.add_argument("--filter", type=_filter, default=None, help="bicubic | box | gaussian[:sigma]")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("fuse", help="fuse MS and PAN")
    s.add_argument("--method", required=True, choices=CLI_METHODS + ("gan",))
    s.add_argument("--ms", required=True)
    s.add_argument("--pan", required=True)
    s.add_argument("--weights")
    s.add_argument("--variant", type=_variant)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("train", help="train a generator")
    s.add_argument("--variant", type=_variant, required=True)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--steps", type=int, default=300)
    s.add_argument("--batch", type=_positive)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--beta", type=float, default=100.0)
    s.add_argument("--lr", type=float, default=2e-4)
    s.add_argument("--use-bn", action="store_true")
    s.add_argument("--patch", type=_positive, help="MS patch side (default from profile)")
    s.add_argument("--profile", choices=tuple(PROFILES), default="desk")
    s.add_argument("--width", type=_positive, default=32, help="base channel width")
    s.add_argument("--out", required=True, help="generator weights file")
    s.add_argument("--disc-out", help="discriminator weights file")
    s.add_argument("--history", help="per-step loss CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a fused image")
    s.add_argument("--fused", required=True)
    s.add_argument("--ref")
    s.add_argument("--ms")
    s.add_argument("--pan")
    s.add_argument("--ratio", type=_positive, default=4)
    s.add_argument("--q-block", type=_positive)
    s.add_argument("--format", choices=FORMATS, default="csv")
    s.add_argument("--method", help="row label (default: fused file stem)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="merge metric reports into one table")
    s.add_argument("--inputs", nargs="+", required=True)
    s.add_argument("--format", choices=FORMATS, default="md")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    for sp in sub.choices.values():
        sp.set_defaults(usage=sp.format_usage())
    return p


def _thread_limit():
    n = os.environ.get("PANSHARP_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(1, int(n)))


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="pansharp: %(message)s")
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if extra:
            raise UsageError(f"unrecognized arguments: {' '.join(extra)}", args.usage)
        with _thread_limit():
            return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"{exc.usage}pansharp: error: {exc}\n")
        return EXIT_USAGE
    except (PansharpError, OSError, ValueError) as exc:
        sys.stderr.write(f"pansharp: {type(exc).__name__}: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
