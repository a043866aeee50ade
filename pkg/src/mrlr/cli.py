"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error (malformed files or
arguments outside their domain), 3 numerical failure.  Commands that write
files remove partially written outputs when they fail.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench, dictionary as dict_mod, recognize as recog_mod, synth as synth_mod, traces
from .align import AlignConfig, align
from .errors import DataError, NumericalError
from .imageops import Frame, vectorize_normalize
from .pgm import read_pgm_file, write_pgm_file
from .synth import SynthSpec
from .transform import from_rect

__all__ = ["main"]

_DEFAULT_S = 20


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_on_error_code if hasattr(self, "exit_on_error_code") else 1)


class _Usage(Exception):
    pass


def _parse_frame(text: str) -> Frame:
    try:
        w, h = text.lower().split("x")
        return Frame(int(w), int(h))
    except ValueError as exc:
        raise _Usage(f"bad frame {text!r}, expected WxH") from exc


def _parse_init(text: str):
    parts = text.split(",")
    if len(parts) != 4:
        raise _Usage(f"bad --init {text!r}, expected x,y,w,h")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise _Usage(f"bad --init {text!r}, expected numbers") from exc


def _parse_floats(text: str):
    try:
        return [float(p) for p in text.split(",") if p != ""]
    except ValueError as exc:
        raise _Usage(f"bad list {text!r}, expected comma-separated numbers") from exc


class _Outputs:
    """Tracks files created by a command so failures can remove partial output."""

    def __init__(self):
        self.paths: list[Path] = []

    def register(self, path) -> Path:
        p = Path(path)
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            try:
                if p.is_file():
                    p.unlink()
            except OSError:
                pass


def _add_align_flags(p: argparse.ArgumentParser):
    p.add_argument("--sigma", type=float, default=0.2, help="locality bandwidth")
    p.add_argument("--s", type=int, default=None, help="atoms kept per outer pass (mrlr2)")
    p.add_argument("--variant", choices=("mrlr1", "mrlr2"), default="mrlr2")
    p.add_argument("--max-outer", type=int, default=3)
    p.add_argument("--max-inner", type=int, default=30)
    p.add_argument("--tol", type=float, default=1e-4, help="inner-step convergence tolerance")
    p.add_argument("--no-outside", action="store_true", help="exclude outside atoms from alignment")


def _align_config(args, pool_size: int) -> AlignConfig:
    if args.variant == "mrlr1":
        s = None
        if args.s is not None:
            raise _Usage("--s only applies to --variant mrlr2")
    else:
        s = args.s if args.s is not None else min(_DEFAULT_S, pool_size)
    return AlignConfig(
        sigma=args.sigma,
        s=s,
        max_outer=args.max_outer,
        max_inner=args.max_inner,
        tol_step=args.tol,
        use_outside=not args.no_outside,
    )


def _settings_dict(args, cfg: AlignConfig) -> dict:
    return {
        "variant": args.variant,
        "sigma": cfg.sigma,
        "s": cfg.s if cfg.s is not None else "none",
        "max_outer": cfg.max_outer,
        "max_inner": cfg.max_inner,
        "tol_step": cfg.tol_step,
        "use_outside": cfg.use_outside,
    }


def _emit(text: str, path, outputs: _Outputs):
    if path is None:
        sys.stdout.write(text)
    else:
        outputs.register(path)
        Path(path).write_text(text, encoding="ascii")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_synth(args, outputs: _Outputs) -> int:
    spec = SynthSpec(
        seed=args.seed,
        subjects=args.subjects,
        samples=args.samples,
        frame=_parse_frame(args.frame),
        blobs=args.blobs,
        held_out=args.held_out,
        outside=args.outside,
        noise_amplitude=args.noise,
    )
    root = Path(args.output)
    existed = root.exists()
    try:
        synth_mod.synth_generate(spec, root)
    except Exception:
        if not existed and root.exists():
            import shutil

            shutil.rmtree(root, ignore_errors=True)
        raise
    return 0


def _cmd_build_dict(args, outputs: _Outputs) -> int:
    frame = _parse_frame(args.frame)
    data = synth_mod.load_dataset(args.dataset, frame)
    dct = dict_mod.build(data.train_images, data.train_labels, frame)
    if args.outside:
        dct = dict_mod.augment_with_outside(dct, data.outside_images, frame)
    out = outputs.register(args.output)
    dict_mod.save_dictionary(dct, out)
    return 0


def _cmd_align(args, outputs: _Outputs) -> int:
    dct = dict_mod.load_dictionary(args.dict)
    img = read_pgm_file(args.image)
    tau0 = from_rect(_parse_init(args.init), dct.frame)
    pool = int((~dct.outside).sum()) if args.no_outside else dct.n
    cfg = _align_config(args, pool)
    result = align(img, dct, tau0, cfg)
    stem = Path(args.image)
    out_img = Path(args.output) if args.output else stem.with_suffix(".aligned.pgm")
    out_trace = Path(args.trace) if args.trace else stem.with_suffix(".trace.txt")
    outputs.register(out_img)
    write_pgm_file(result.aligned, out_img)
    outputs.register(out_trace)
    traces.write_trace(result, out_trace, settings=_settings_dict(args, cfg))
    return 0


def _cmd_recognize(args, outputs: _Outputs) -> int:
    dct = dict_mod.load_dictionary(args.dict)
    img = read_pgm_file(args.image)
    tau0 = from_rect(_parse_init(args.init), dct.frame)
    pool = int((~dct.outside).sum()) if args.no_outside else dct.n
    cfg = _align_config(args, pool)
    label, _, coding = recog_mod.recognize_pipeline(
        img, dct, tau0, align_cfg=cfg, coder=args.coder, lam=getattr(args, "lambda")
    )
    lines = [f"predicted={label}", "label,residual"]
    for lab, res in zip(coding.class_labels, coding.class_residuals):
        lines.append(f"{int(lab)},{float(res)!r}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _cmd_bench_roa(args, outputs: _Outputs) -> int:
    dct = dict_mod.load_dictionary(args.dict)
    pool = int((~dct.outside).sum()) if args.no_outside else dct.n
    cfg = _align_config(args, pool)
    probes = None
    if args.probes:
        data = synth_mod.load_dataset(args.probes, dct.frame)
        from .align import Probe
        from .transform import IDENTITY

        pool_imgs = data.heldout_images if data.heldout_images else data.train_images
        probes = [Probe(image=im, tau_true=IDENTITY) for im in pool_imgs]
    points = bench.bench_roa(
        dct,
        axis=args.axis,
        magnitudes=_parse_floats(args.magnitudes),
        trials=args.trials,
        seed=args.seed,
        cfg=cfg,
        probes=probes,
    )
    _emit(bench.roa_csv(points), args.output, outputs)
    return 0


def _cmd_bench_scale(args, outputs: _Outputs) -> int:
    rows = bench.bench_scale(
        mode=args.mode,
        spec_values=[v for v in args.spec.split(",") if v],
        seed=args.seed,
        reps=args.reps,
        s=args.s,
        subjects=args.subjects,
        samples=args.samples,
        frame=args.frame,
        sigma=args.sigma,
    )
    _emit(bench.scale_csv(rows), args.output, outputs)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="mrlr", description="Locality-constrained alignment and recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--frame", required=True, help="WxH")
    p.add_argument("-o", "--output", required=True, help="dataset directory")
    p.add_argument("--held-out", type=int, default=0, dest="held_out")
    p.add_argument("--outside", type=int, default=0)
    p.add_argument("--blobs", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.02)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build-dict", help="build a dictionary binary from a dataset")
    p.add_argument("dataset")
    p.add_argument("--frame", required=True, help="WxH")
    p.add_argument("--outside", action="store_true", help="include outside/ images as outside atoms")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_build_dict)

    p = sub.add_parser("align", help="align one image against a dictionary")
    p.add_argument("dict")
    p.add_argument("image")
    p.add_argument("--init", required=True, help="detector box x,y,w,h")
    p.add_argument("-o", "--output", default=None, help="aligned PGM path")
    p.add_argument("--trace", default=None, help="trace file path")
    _add_align_flags(p)
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("recognize", help="align then classify one image")
    p.add_argument("dict")
    p.add_argument("image")
    p.add_argument("--init", required=True, help="detector box x,y,w,h")
    p.add_argument("--coder", choices=("crc", "src"), default="crc")
    p.add_argument("--lambda", type=float, default=1e-3)
    _add_align_flags(p)
    p.set_defaults(func=_cmd_recognize)

    p = sub.add_parser("bench-roa", help="perturbation robustness sweep")
    p.add_argument("dict")
    p.add_argument("--axis", choices=("tx", "ty", "rot", "scale"), required=True)
    p.add_argument("--magnitudes", required=True, help="comma-separated magnitudes")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--probes", default=None, help="dataset directory supplying probe images")
    p.add_argument("-o", "--output", default=None, help="CSV path (default stdout)")
    _add_align_flags(p)
    p.set_defaults(func=_cmd_bench_roa)

    p = sub.add_parser("bench-scale", help="runtime scaling benchmark")
    p.add_argument("--mode", choices=("dims", "subjects"), required=True)
    p.add_argument("--spec", required=True, help="comma-separated frame sizes or subject counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--s", type=int, default=_DEFAULT_S)
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--frame", default="40x35")
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("-o", "--output", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_bench_scale)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse --help exits 0; usage errors surface as 1 via _Parser.error
        return int(exc.code or 0)
    outputs = _Outputs()
    try:
        return args.func(args, outputs)
    except _Usage as exc:
        outputs.cleanup()
        print(f"mrlr: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        outputs.cleanup()
        print(f"mrlr: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        outputs.cleanup()
        print(f"mrlr: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
