"""Command line entry point ``csiris``.

Exit status: 0 on success, 1 for usage errors (bad arguments, missing config
file), 2 for data errors (unreadable or rejected images, failed localization).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from csiris import harness, imagekit, iris, sampling
from csiris.errors import CSIrisError
from csiris.recon import Mode, SolverConfig, reconstruct
from csiris.transforms import Domain

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _fraction(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"fraction must be in (0, 1], got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="csiris", description="Compressive-sensing reconstruction and iris matching.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    run = sub.add_parser("run", help="run a full fraction x domain experiment")
    run.add_argument("--config", required=True, help="INI experiment description")
    run.add_argument("--output", help="override the output directory of the config")
    run.add_argument("--workers", type=int, help="override the worker count of the config")

    rec = sub.add_parser("recon", help="subsample and reconstruct one image")
    rec.add_argument("--image", required=True)
    rec.add_argument("--fraction", type=_fraction, required=True)
    rec.add_argument("--domain", choices=[d.value for d in Domain], default="dct")
    rec.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.TV_DOMAIN.value)
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--iters", type=int, default=SolverConfig.max_iters)
    rec.add_argument("--out", required=True, help="output image (.png or .pgm)")
    rec.add_argument("--mask-out", help="also write the sampling mask as PBM")

    mat = sub.add_parser("match", help="compare the iris codes of two images")
    mat.add_argument("--probe", required=True)
    mat.add_argument("--gallery", required=True)
    mat.add_argument("--max-shift", type=int, default=8)

    loc = sub.add_parser("localize", help="print the pupil/iris geometry as JSON")
    loc.add_argument("--image", required=True)
    return p


def cmd_run(args) -> int:
    try:
        cfg = harness.load_config(args.config)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(f"bad config: {exc}") from exc
    if args.output:
        cfg = replace(cfg, output=Path(args.output))
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    report = harness.run_and_emit(cfg)
    for d, row in report.psnr_matrix().items():
        cells = " ".join(f"{f:.2f}:{v:6.2f}" for f, v in zip(report.fractions, row))
        print(f"psnr {d} {cells}")
    for d, row in report.decision_matrix().items():
        cells = " ".join(f"{f:.2f}:{v}" for f, v in zip(report.fractions, row))
        print(f"decision {d} {cells}")
    for label, reason in report.skipped:
        print(f"skipped {label}: {reason}", file=sys.stderr)
    print(f"wrote {cfg.output}")
    return EXIT_OK


def cmd_recon(args) -> int:
    img = imagekit.load_image(args.image)
    mask = sampling.generate_mask(img.shape[0], img.shape[1], args.fraction, args.seed)
    cfg = SolverConfig(mode=args.mode, domain=args.domain, max_iters=args.iters)
    x, rep = reconstruct(sampling.measure(img, mask), mask, cfg)
    imagekit.save_image(x, args.out)
    if args.mask_out:
        mask.to_pbm(args.mask_out)
    q = imagekit.psnr(img, imagekit.quantize(x))  # PSNR of the file as written
    print(f"psnr {q:.4f} dB" if q != float("inf") else "psnr inf dB")
    print(f"iterations {rep.iterations} converged {str(rep.converged).lower()}")
    return EXIT_OK


def cmd_match(args) -> int:
    pipe = iris.IrisPipeline(max_shift=args.max_shift)
    gallery, _ = pipe.extract(imagekit.load_image(args.gallery))
    probe, _ = pipe.extract(imagekit.load_image(args.probe))
    hd, shift, decision = pipe.match(probe, gallery)
    print(f"hd={float(hd):.4f} shift={shift} decision={decision.value}")
    return EXIT_OK


def cmd_localize(args) -> int:
    geo = iris.localize(imagekit.load_image(args.image))
    print(geo.to_json())
    return EXIT_OK


COMMANDS = {"run": cmd_run, "recon": cmd_recon, "match": cmd_match, "localize": cmd_localize}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (CSIrisError, OSError, ValueError) as exc:
        print(f"csiris: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
