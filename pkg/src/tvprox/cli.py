"""``tvprox`` command line interface.

Subcommands::

    tvprox smooth        --input IN.pgm --output OUT.pgm --lambda 0.1
    tvprox sharpen       --input IN.ppm --output OUT.ppm --lambda 0.05
    tvprox denoise-eval  [--input CLEAN.pgm] --sigma 0.098 --lambda 0.05,0.1,0.2
    tvprox gradcheck     [--shape 1,8,8 --lambda-raw 0.2 --mode smooth]
    tvprox bench         --sizes 32,512 --batch 256 --reps 25

Exit codes: 0 success, 1 I/O failure, 2 solver did not converge (output is
still written), 3 gradient check failed, 64 invalid command line.
The report goes to stdout, warnings and errors to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time

import numpy as np

from .imgio import PNMError, RasterImage, add_gaussian_noise, load_pnm, psnr, save_pnm
from .layer import layer_backward, layer_forward
from .prox1d import prox_tv1d_batch
from .prox2d import objective_2d
from .testkit import InstanceSpec, SplitMix64, finite_diff_grad, gen_piecewise_constant, rel_err, unit_step
from .tvcore import LayerParams, TVError

EXIT_OK = 0
EXIT_IO = 1
EXIT_NOT_CONVERGED = 2
EXIT_CHECK_FAILED = 3
EXIT_USAGE = 64

DEFAULT_SWEEP = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5)
GRADCHECK_TOL = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals or any(not math.isfinite(v) or v < 0 for v in vals):
        raise argparse.ArgumentTypeError("values must be finite and non-negative")
    return vals


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input netpbm image (P2/P3/P5/P6)")
    common.add_argument("--output", help="output netpbm image")
    common.add_argument("--lambda", dest="lam", type=_float_list,
                        help="effective TV weight, or a comma-separated list")
    common.add_argument("--spatial", choices=("2d", "rows", "cols"), default="2d")
    common.add_argument("--iters", type=_positive_int, default=None,
                        help="Dykstra iterations K (default 4; 3 for gradcheck)")
    common.add_argument("--solver", choices=("newton", "tautstring"), default="newton")
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--format", choices=("text", "csv"), default="text")
    common.add_argument("--maxval", type=int, choices=(255, 65535), default=255,
                        help="maxval of written images")

    parser = _Parser(prog="tvprox", description="Total-variation smoothing tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("smooth", parents=[common], help="edge-preserving TV smoothing")
    sub.add_parser("sharpen", parents=[common], help="TV sharpening: 2x - prox(x)")
    p = sub.add_parser("denoise-eval", parents=[common],
                       help="PSNR of TV denoising over a lambda sweep")
    p.add_argument("--sigma", type=float, default=25 / 255,
                   help="noise std in [0, 1] units (default 25/255)")
    p = sub.add_parser("gradcheck", parents=[common],
                       help="compare layer gradients with finite differences")
    p.add_argument("--shape", type=_int_list, default=[1, 8, 8], help="C,H,W")
    p.add_argument("--lambda-raw", dest="lambda_raw", type=float, default=0.2)
    p.add_argument("--mode", choices=("smooth", "sharpen"), default="smooth")
    p = sub.add_parser("bench", parents=[common], help="time the 1D prox solvers")
    p.add_argument("--sizes", type=_int_list, default=[32])
    p.add_argument("--batch", type=_positive_int, default=256)
    p.add_argument("--reps", type=_positive_int, default=25)
    return parser


def filter_image(samples: np.ndarray, lam: float, mode: str = "smooth", spatial: str = "2d",
                 iters: int = 4, solver: str = "newton"):
    """Smooth or sharpen every channel; returns the unclamped result and diagnostics."""
    params = LayerParams(np.zeros(1), mode, spatial, iters, shared_lambda=True, solver=solver)
    y, saved = layer_forward(samples, params, lambdas=lam)
    diags = []
    for ch, d in enumerate(saved.diagnostics):
        smooth = y[ch] if mode == "smooth" else 2.0 * samples[ch] - y[ch]
        diags.append({"channel": ch, "objective": objective_2d(smooth, samples[ch], lam),
                      "max_gap": d["max_gap"], "converged": d["converged"]})
    return y, diags


def _load(path, err):
    if not path:
        err.write("tvprox: --input is required\n")
        return None
    try:
        return load_pnm(path)
    except (OSError, PNMError) as exc:
        err.write(f"tvprox: cannot read {path}: {exc}\n")
        return None


def _save(path, img, maxval, err) -> bool:
    try:
        save_pnm(path, img.clamped(), "binary", maxval)
    except OSError as exc:
        err.write(f"tvprox: cannot write {path}: {exc}\n")
        return False
    return True


def _single_lambda(args, err):
    if args.lam is None:
        err.write("tvprox: --lambda is required\n")
        return None
    if len(args.lam) != 1:
        err.write("tvprox: this command takes a single --lambda value\n")
        return None
    return args.lam[0]


def cmd_filter(args, out, err) -> int:
    mode = args.command
    lam = _single_lambda(args, err)
    if lam is None:
        return EXIT_USAGE
    if not args.output:
        err.write("tvprox: --output is required\n")
        return EXIT_USAGE
    img = _load(args.input, err)
    if img is None:
        return EXIT_IO
    iters = args.iters or 4
    y, diags = filter_image(img.samples, lam, mode, args.spatial, iters, args.solver)
    if not _save(args.output, RasterImage(y), args.maxval, err):
        return EXIT_IO
    rows = [{"lambda": lam, "iters": iters, **d} for d in diags]
    _report(out, args.format, ["lambda", "iters", "channel", "objective", "max_gap", "converged"], rows)
    if not all(d["converged"] for d in diags):
        err.write("tvprox: warning: a 1D solve did not reach the duality-gap tolerance; "
                  "output written anyway\n")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


cmd_smooth = cmd_filter
cmd_sharpen = cmd_filter


def synthetic_clean(seed: int, size: int = 64, segments: int = 4) -> np.ndarray:
    """Piecewise-constant test image in [0, 1] used when no input is given."""
    return gen_piecewise_constant(InstanceSpec(seed, (size, size), segments, 1.0, 0.0))[None]


def denoise_eval(clean: np.ndarray, sigma: float, seed: int, lambdas, spatial: str = "2d",
                 iters: int = 4, solver: str = "newton"):
    """Corrupt ``clean`` and smooth it for every lambda.

    Returns ``(rows, best)`` where each row holds ``lambda``, ``psnr_noisy``,
    ``psnr_denoised`` and ``best`` is the row with the highest denoised PSNR.
    """
    noisy = add_gaussian_noise(clean, sigma, seed)
    base = psnr(noisy, clean)
    rows = []
    for lam in lambdas:
        y, _ = filter_image(noisy, lam, "smooth", spatial, iters, solver)
        rows.append({"lambda": lam, "psnr_noisy": base, "psnr_denoised": psnr(y, clean)})
    best = max(rows, key=lambda r: r["psnr_denoised"])
    return rows, best


def cmd_denoise_eval(args, out, err) -> int:
    if args.sigma < 0:
        err.write("tvprox: --sigma must be >= 0\n")
        return EXIT_USAGE
    if args.input:
        img = _load(args.input, err)
        if img is None:
            return EXIT_IO
        clean = img.samples
    else:
        clean = synthetic_clean(args.seed)
    lambdas = args.lam if args.lam is not None else list(DEFAULT_SWEEP)
    iters = args.iters or 4
    rows, best = denoise_eval(clean, args.sigma, args.seed, lambdas, args.spatial, iters,
                              args.solver)
    for r in rows:
        r["best"] = int(r is best)
    _report(out, args.format, ["lambda", "psnr_noisy", "psnr_denoised", "best"], rows)
    if args.format == "text":
        out.write(f"best lambda: {_fmt(best['lambda'])} "
                  f"(PSNR {_fmt(best['psnr_denoised'])} dB vs noisy {_fmt(best['psnr_noisy'])} dB)\n")
    if args.output:
        y, _ = filter_image(add_gaussian_noise(clean, args.sigma, args.seed), best["lambda"],
                            "smooth", args.spatial, iters, args.solver)
        if not _save(args.output, RasterImage(y), args.maxval, err):
            return EXIT_IO
    return EXIT_OK


def gradcheck(shape, lambda_raw: float, mode: str = "smooth", spatial: str = "2d",
              iters: int = 3, seed: int = 0, solver: str = "newton", h: float = 1e-6):
    """Max relative errors of the layer's x and raw-lambda gradients vs finite differences."""
    c, hh, ww = shape
    rng = SplitMix64(seed, stream=5)
    x = rng.normal(c * hh * ww).reshape(shape)
    w = rng.normal(c * hh * ww).reshape(shape)
    raw = np.full(c, float(lambda_raw))

    def f_x(xv):
        return float(np.sum(w * layer_forward(xv, LayerParams(raw, mode, spatial, iters,
                                                              solver=solver))[0]))

    def f_raw(rv):
        return float(np.sum(w * layer_forward(x, LayerParams(rv, mode, spatial, iters,
                                                             solver=solver))[0]))

    _, saved = layer_forward(x, LayerParams(raw, mode, spatial, iters, solver=solver))
    gx, graw = layer_backward(saved, w)
    err_x = rel_err(gx, finite_diff_grad(f_x, x, h))
    err_raw = rel_err(graw, finite_diff_grad(f_raw, raw, h))
    return err_x, err_raw


def cmd_gradcheck(args, out, err) -> int:
    if len(args.shape) != 3:
        err.write("tvprox: --shape expects C,H,W\n")
        return EXIT_USAGE
    iters = args.iters or 3
    err_x, err_raw = gradcheck(tuple(args.shape), args.lambda_raw, args.mode, args.spatial,
                               iters, args.seed, args.solver)
    ok = err_x <= GRADCHECK_TOL and err_raw <= GRADCHECK_TOL
    rows = [{"path": "x", "max_rel_err": err_x}, {"path": "lambda_raw", "max_rel_err": err_raw}]
    _report(out, args.format, ["path", "max_rel_err"], rows)
    if args.format == "text":
        out.write("PASS\n" if ok else "FAIL\n")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


BENCH_SOLVERS = (
    ("newton", {"solver": "newton"}),
    ("tautstring", {"solver": "tautstring"}),
    ("newton-dense", {"solver": "newton", "linear_solver": "dense"}),
)
DENSE_MAX_N = 2048


def bench(sizes, batch: int, reps: int, lam: float = 1.0, seed: int = 0, err=None):
    """Mean/std wall time (ms) of each solver on unit-step-plus-noise batches."""
    rows = []
    for n in sizes:
        xs = unit_step(n, batch, 0.1, seed)
        by_name = {}
        for name, kw in BENCH_SOLVERS:
            if kw.get("linear_solver") == "dense" and n > DENSE_MAX_N:
                if err is not None:
                    err.write(f"tvprox: skipping {name} at n={n} (> {DENSE_MAX_N})\n")
                continue
            prox_tv1d_batch(xs[:1], lam, **kw)  # compile / warm up
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                prox_tv1d_batch(xs, lam, **kw)
                times.append((time.perf_counter() - t0) * 1e3)
            by_name[name] = (float(np.mean(times)), float(np.std(times)))
        ref = by_name["newton"][0]
        for name, (mean, std) in by_name.items():
            rows.append({"solver": name, "n": n, "batch": batch, "mean_ms": mean,
                         "std_ms": std, "speedup": mean / ref})
    return rows


def cmd_bench(args, out, err) -> int:
    lam = args.lam[0] if args.lam else 1.0
    rows = bench(args.sizes, args.batch, args.reps, lam, args.seed, err)
    _report(out, args.format, ["solver", "n", "batch", "mean_ms", "std_ms", "speedup"], rows)
    return EXIT_OK


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(v)


def _report(out, fmt: str, columns, rows) -> None:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
        out.write(buf.getvalue())
        return
    cells = [[_fmt(r[c]) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    out.write("  ".join(c.rjust(wd) for c, wd in zip(columns, widths)) + "\n")
    for row in cells:
        out.write("  ".join(v.rjust(wd) for v, wd in zip(row, widths)) + "\n")


_COMMANDS = {
    "smooth": cmd_smooth,
    "sharpen": cmd_sharpen,
    "denoise-eval": cmd_denoise_eval,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args, out, err)
    except TVError as exc:
        err.write(f"tvprox: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
