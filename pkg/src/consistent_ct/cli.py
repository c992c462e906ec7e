"""``consistent-ct`` command line.

Errors print ``error[<code>]: <message>`` on stderr and exit with the code's
exit status.  ``reconstruct`` exits 0 when the gradient tolerance is reached
and 2 when it stops at ``max_iter``.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from .errors import CTError, DimensionMismatch, FileIOError, InvalidSpec, ValidationFailed

EXIT_MAX_ITER = 2


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _modes(text):
    return [m.strip() for m in text.split(",") if m.strip()]


def parse_phantom_spec(text: str):
    """``KIND:N[:BLOCKS]``, e.g. ``checkerboard2d:64`` or ``shepp_logan2d:40``."""
    from .phantoms import PhantomSpec

    parts = text.split(":")
    try:
        kind, n = parts[0], int(parts[1])
        blocks = int(parts[2]) if len(parts) > 2 and parts[2] else 4
    except (IndexError, ValueError):
        raise InvalidSpec(f"bad phantom spec {text!r}; expected KIND:N[:BLOCKS]") from None
    if len(parts) > 3:
        raise InvalidSpec(f"bad phantom spec {text!r}; expected KIND:N[:BLOCKS]")
    spec = PhantomSpec(kind, n, blocks)
    spec.validate()
    return spec


# ------------------------------------------------------------------ commands

def cmd_build_sm(args) -> int:
    from .io import load_config, write_csm
    from .projector import build_system_matrix

    geom = load_config(args.config).geometry()
    t0 = time.perf_counter()
    W = build_system_matrix(geom, args.mode, max_rows=args.max_rows)
    if args.normalize:
        from .projector import spectral_norm

        W.normalization = spectral_norm(W, 100, args.seed)
    elapsed = time.perf_counter() - t0
    write_csm(args.out, W)
    print(f"rows={W.n_rows} cols={W.n_cols} nnz={W.nnz} build_seconds={elapsed:.3f}")
    if W.normalization is not None:
        print(f"normalization={W.normalization!r}")
    return 0


def cmd_phantom(args) -> int:
    from .io import write_ctt
    from .phantoms import make_phantom

    spec = parse_phantom_spec(args.spec)
    u = make_phantom(spec)
    write_ctt(args.out, u)
    print(f"kind={spec.kind} shape={'x'.join(str(v) for v in u.shape)}")
    return 0


def cmd_project(args) -> int:
    from .io import read_csm, read_ctt, write_ctt
    from .phantoms import gaussian

    W = read_csm(args.sm)
    u = read_ctt(args.image)
    if u.size != W.n_cols:
        raise DimensionMismatch(f"image has {u.size} values, matrix has {W.n_cols} columns")
    p = np.asarray(W.csr @ u.reshape(-1), dtype=np.float64)
    if args.sigma:
        p = p + args.sigma * gaussian(args.seed, p.size)
    shape = W.geometry.sino_shape if W.geometry is not None else (p.size,)
    write_ctt(args.out, p.reshape(shape))
    print(f"shape={'x'.join(str(v) for v in shape)} sigma={args.sigma!r} seed={args.seed}")
    return 0


def cmd_reconstruct(args) -> int:
    from .io import load_config, read_csm, read_ctt, write_ctt
    from .solver import ReconConfig, nag_tikhonov

    base = load_config(args.config).recon() if args.config else ReconConfig()
    cfg = ReconConfig(
        lam=base.lam if args.lam is None else args.lam,
        max_iter=base.max_iter if args.max_iter is None else args.max_iter,
        grad_tol_sq=base.grad_tol_sq if args.tol is None else args.tol,
        normalization=args.normalization,
        seed=base.seed if args.seed is None else args.seed,
    )
    W = read_csm(args.sm)
    p = read_ctt(args.sino)
    t0 = time.perf_counter()
    u, trace = nag_tikhonov(W, p, cfg)
    elapsed = time.perf_counter() - t0
    write_ctt(args.out, u)
    if args.trace:
        trace.write_csv(args.trace)
    last = trace.rows[-1]
    status = "converged" if trace.converged else "max_iter"
    print(f"status={status} iterations={trace.iterations} objective={last[1]!r} "
          f"grad_norm_sq={last[2]!r} normalization={trace.normalization!r} "
          f"seconds={elapsed:.3f}")
    return 0 if trace.converged else EXIT_MAX_ITER


def cmd_validate(args) -> int:
    from .io import load_config
    from .validation import all_passed, run_suite, worst, write_report

    geom = load_config(args.config).geometry() if args.config else None
    if args.suite == "adjoint" and geom is None:
        raise InvalidSpec("--suite adjoint needs --config")
    rows = run_suite(args.suite, args.samples, args.seed, geom)
    if args.report:
        write_report(rows, args.report)
    failed = [r for r in rows if not r["passed"]]
    for metric in sorted({r["metric"] for r in rows}):
        sub = [r for r in rows if r["metric"] == metric]
        print(f"{args.suite} {metric}: n={len(sub)} worst={worst(sub)!r} "
              f"failed={sum(not r['passed'] for r in sub)}")
    if not all_passed(rows):
        raise ValidationFailed(f"{len(failed)} of {len(rows)} checks failed "
                               f"(first: {failed[0]['case']} {failed[0]['metric']}="
                               f"{failed[0]['value']!r})")
    return 0


def cmd_bench(args) -> int:
    from .experiments import sweep, warm_up
    from .io import load_config

    cfg = load_config(args.config)
    geom = cfg.geometry()
    rec = cfg.recon()
    lambdas = args.lambdas or [rec.lam]
    sigma = args.sigma if args.sigma is not None else (cfg.sigma if cfg.sigma is not None else 0.0)
    warm_up()
    fields = ("mode", "resolution", "lam", "mse", "seconds", "build_seconds", "solve_seconds",
              "iterations", "converged")
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()

        def log(res):
            w.writerow(res.as_row())
            fh.flush()
            print(f"{res.mode} n={res.resolution} lambda={res.lam:g} mse={res.mse:.6g} "
                  f"seconds={res.seconds:.3f}")

        sweep(geom, phantom=args.phantom, resolutions=args.resolutions, modes=args.modes,
              lambdas=lambdas, sigma=sigma, seed=args.seed, max_iter=rec.max_iter,
              tol=rec.grad_tol_sq, blocks=args.blocks, repeats=args.repeats, log=log)
    return 0


def cmd_export_png(args) -> int:
    from PIL import Image

    from .io import read_ctt

    arr = read_ctt(args.tensor)
    if arr.ndim == 3:
        if not 0 <= args.slice < arr.shape[0]:
            raise DimensionMismatch(f"slice {args.slice} outside 0..{arr.shape[0] - 1}")
        arr = arr[args.slice]
    elif arr.ndim != 2:
        raise DimensionMismatch(f"need a 2D or 3D tensor, got rank {arr.ndim}")
    lo, hi = float(arr.min()), float(arr.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = np.clip(np.rint((arr - lo) * scale), 0, 255).astype(np.uint8)
    # row 0 is y = min; flip so y points up in the picture
    Image.fromarray(img[::-1]).save(args.out, format="PNG")
    print(f"min={lo!r} max={hi!r} -> [0,255]")
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="consistent-ct",
                                 description="Consistent CT system matrices and reconstruction.")
    ap.add_argument("--threads", type=int, default=None, help="cap numba worker threads")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-sm", help="build a system matrix (CSM1)")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", default="consistent", help="consistent | line | multiline:K")
    p.add_argument("--out", required=True)
    p.add_argument("--max-rows", type=int, default=None,
                   help="fail if a voxel spans more detector rows (3D)")
    p.add_argument("--normalize", action="store_true",
                   help="store the spectral norm (100 power iterations)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_sm)

    p = sub.add_parser("phantom", help="write a phantom (CTT1)")
    p.add_argument("--spec", required=True, help="KIND:N[:BLOCKS], KIND in "
                   "checkerboard2d, checkerboard3d, shepp_logan2d")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("project", help="forward project an image, optionally with noise")
    p.add_argument("--sm", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("reconstruct", help="Tikhonov reconstruction by NAG")
    p.add_argument("--sm", required=True)
    p.add_argument("--sino", required=True)
    p.add_argument("--config", default=None, help="defaults for lambda, max_iter, tol, seed")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--tol", type=float, default=None, help="stop when ||grad||^2 < tol")
    p.add_argument("--normalization", type=float, default=None,
                   help="override the spectral norm")
    p.add_argument("--seed", type=int, default=None, help="power iteration start")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("validate", help="run an oracle suite")
    p.add_argument("--config", default=None)
    p.add_argument("--suite", required=True, choices=("weights2d", "weights3d", "adjoint",
                                                      "identities", "partition", "continuity"))
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--report", default=None, help="CSV report path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="MSE and time sweep over modes and lambdas")
    p.add_argument("--config", required=True)
    p.add_argument("--modes", type=_modes, default=["consistent", "multiline:1", "multiline:2",
                                                     "multiline:4", "multiline:8"])
    p.add_argument("--lambdas", type=_floats, default=None)
    p.add_argument("--resolutions", type=_ints, default=None,
                   help="grid sizes to sweep (default: the config's)")
    p.add_argument("--phantom", choices=("shepp_logan", "checkerboard"), default="shepp_logan")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--repeats", type=int, default=1, help="keep the fastest of N timings")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-png", help="grayscale PNG of a 2D tensor or a 3D slice")
    p.add_argument("--tensor", required=True)
    p.add_argument("--slice", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_png)
    return ap


def _set_threads(n):
    if n is None:
        return
    import numba

    if n < 1:
        raise InvalidSpec("--threads must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
        return args.func(args)
    except CTError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        err = FileIOError(f"{exc.filename or ''}: {exc.strerror}")
        print(f"error[{err.code}]: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
