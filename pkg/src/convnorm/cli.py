"""Command-line front end: kernel generation, bound tables, checks, timing.

Exit codes: 0 success, 1 usage or parse error, 2 numerical-contract
violation (a failed gradient check), 3 I/O error, 4 gradient requested at a
point where the loss is not differentiable.

All randomness flows from a single ``--seed`` through named sub-streams
(kernel generation, rank-1 iteration restarts, power-method starts), so any
output is reproducible from its manifest.  In ``--json`` and ``--csv`` modes
stdout is byte-identical across runs for a fixed seed; measured wall-clock
times are therefore only emitted when ``--timings`` is passed explicitly.
``CONVNORM_THREADS`` caps table-row parallelism (default: machine cores).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .bounds import ConvConfig, f4_bound, make_bound_report
from .hopm import HopmConfig, hopm, tn_bound
from .kernel_io import (
    KernelFormatError,
    complex_gap_kernel,
    delta_kernel,
    gaussian_kernel,
    read_kernel,
    uniform_kernel,
    write_kernel,
)
from .oracle import build_dense_jacobian, circular_exact_norm, conv_operator, power_method
from .regularizers import REGULARIZERS, ocnn_loss, ratio_loss, regularizer_gradient, twonorm_loss

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3
EXIT_UNDEFINED = 4

_STREAMS = {"kernel": 101, "hopm": 202, "power": 303, "matrix": 404}

CSV_COLUMNS = [
    "shape",
    "stride",
    "padding",
    "n",
    "lower",
    "tn",
    "f4",
    "oracle",
    "ratio_tn",
    "ratio_f4",
    "time_tn_ms",
    "time_f4_ms",
    "time_oracle_ms",
]


def derive_seed(seed: int, stream: str, index: int = 0) -> int:
    """Deterministic per-purpose seed derived from the user's single seed."""
    ss = np.random.SeedSequence([int(seed), _STREAMS[stream], int(index)])
    return int(ss.generate_state(1)[0])


def max_workers() -> int:
    env = os.environ.get("CONVNORM_THREADS", "").strip()
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValueError(f"CONVNORM_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ValueError("CONVNORM_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".12g")


def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        shape = tuple(int(part) for part in text.replace("x", ",").split(",") if part)
    except ValueError as exc:
        raise ValueError(f"bad shape {text!r}: expected comma-separated integers") from exc
    if not shape or any(s < 1 for s in shape):
        raise ValueError(f"bad shape {text!r}: sizes must be positive")
    return shape


def _manifest(command: str, options: dict) -> dict:
    return {"command": command, "tool": "convnorm", "version": __version__, "config": options}


# ---------------------------------------------------------------------------
# gen


def _cmd_gen(args) -> int:
    if args.dist == "appendix-b":
        kernel = complex_gap_kernel()
    else:
        if not args.shape:
            raise ValueError(f"--dist {args.dist} requires a shape")
        if args.dist == "gaussian":
            kernel = gaussian_kernel(args.shape, derive_seed(args.seed, "kernel"))
        elif args.dist == "uniform":
            kernel = uniform_kernel(args.shape, derive_seed(args.seed, "kernel"))
        else:
            kernel = delta_kernel(args.shape)
    write_kernel(args.out, kernel)
    print(f"wrote {args.out}: shape {'x'.join(map(str, kernel.shape))}, dist {args.dist}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bound


def _oracle_norm(kernel, n, padding, stride, iters, tol, seed):
    config = ConvConfig(input_size=n, padding=padding, stride=stride)
    op = conv_operator(kernel, config)
    return power_method(op, iters=iters, tol=tol, seed=seed)


def _cmd_bound(args) -> int:
    kernel = read_kernel(args.kernel)
    if kernel.ndim != 4:
        raise ValueError(
            f"bound needs a 4-axis kernel, got {kernel.ndim} axes"
            + (" (strides are defined for 4-axis kernels only)" if args.stride > 1 else "")
        )
    hopm_config = HopmConfig(
        n_iters=args.iters,
        tol=args.tol,
        restarts=args.restarts,
        seed=derive_seed(args.seed, "hopm"),
    )
    report = make_bound_report(
        kernel,
        stride=args.stride,
        padding=args.padding,
        hopm_config=hopm_config,
        f4_seed=derive_seed(args.seed, "matrix"),
    )
    if args.oracle is not None:
        t0 = time.perf_counter()
        pm = _oracle_norm(
            kernel, args.oracle, args.padding, args.stride,
            args.oracle_iters, args.tol, derive_seed(args.seed, "power"),
        )
        report.oracle_norm = pm.norm
        report.oracle_input_size = args.oracle
        report.timings_ms["oracle"] = (time.perf_counter() - t0) * 1e3

    if args.json:
        options = {
            "kernel": args.kernel, "stride": args.stride, "padding": args.padding,
            "restarts": args.restarts, "iters": args.iters, "tol": args.tol,
            "oracle": args.oracle, "seed": args.seed,
        }
        payload = {
            "manifest": _manifest("bound", options),
            "kernel_shape": list(report.kernel_shape),
            "lower_sigma": report.lower_sigma,
            "tn_upper": report.tn_upper,
            "f4_upper": report.f4_upper,
            "oracle_norm": report.oracle_norm,
            "ratios": report.ratios(),
            "iterations_used": report.iterations_used,
            "restarts_used": report.restarts_used,
            "converged": report.converged,
        }
        if args.timings:
            payload["timings_ms"] = report.timings_ms
        print(json.dumps(payload, indent=2))
    else:
        print(f"kernel       : {'x'.join(map(str, report.kernel_shape))} "
              f"(stride {args.stride}, {args.padding} padding)")
        print(f"lower sigma  : {report.lower_sigma:.10g}")
        print(f"TN upper     : {report.tn_upper:.10g}")
        print(f"F4 upper     : {report.f4_upper:.10g}")
        if report.oracle_norm is not None:
            ratios = report.ratios()
            print(f"oracle ||T||2: {report.oracle_norm:.10g}  (n={args.oracle})")
            print(f"TN / oracle  : {ratios['tn_over_oracle']:.6g}")
            print(f"F4 / oracle  : {ratios['f4_over_oracle']:.6g}")
        if args.timings:
            parts = ", ".join(f"{k} {v:.2f} ms" for k, v in report.timings_ms.items())
            print(f"timings      : {parts}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# table


def _table_rows(args):
    rows = []
    if args.spec:
        with open(args.spec, "rb") as handle:
            entries = json.loads(handle.read().decode("utf-8"))
        for entry in entries:
            rows.append((tuple(int(s) for s in entry["shape"]), int(entry.get("stride", 1))))
    else:
        strides = [int(s) for s in str(args.strides).split(",") if s]
        for text in args.shape or []:
            shape = _parse_shape(text)
            for stride in strides:
                rows.append((shape, stride))
    return rows


def _eval_row(row_index, shape, stride, args) -> dict:
    lowers, tns, f4s, oracles = [], [], [], []
    t_tn = t_f4 = t_or = 0.0
    for rep in range(args.seeds):
        kernel = gaussian_kernel(shape, derive_seed(args.seed, "kernel", row_index * 100_000 + rep))
        hopm_config = HopmConfig(
            n_iters=args.iters, tol=args.tol, restarts=args.restarts,
            seed=derive_seed(args.seed, "hopm", row_index * 100_000 + rep),
        )
        report = make_bound_report(
            kernel, stride=stride, padding=args.padding, hopm_config=hopm_config,
            f4_seed=derive_seed(args.seed, "matrix", row_index * 100_000 + rep),
        )
        lowers.append(report.lower_sigma)
        tns.append(report.tn_upper)
        f4s.append(report.f4_upper)
        t_tn += report.timings_ms["tn"]
        t_f4 += report.timings_ms["f4"]
        if args.oracle is not None:
            t0 = time.perf_counter()
            pm = _oracle_norm(
                kernel, args.oracle, args.padding, stride, args.oracle_iters,
                args.tol, derive_seed(args.seed, "power", row_index * 100_000 + rep),
            )
            oracles.append(pm.norm)
            t_or += (time.perf_counter() - t0) * 1e3
    result = {
        "shape": shape, "stride": stride, "padding": args.padding,
        "n": args.oracle,
        "lower": float(np.mean(lowers)),
        "tn": float(np.mean(tns)), "tn_min": float(np.min(tns)), "tn_max": float(np.max(tns)),
        "f4": float(np.mean(f4s)),
        "oracle": float(np.mean(oracles)) if oracles else None,
        "time_tn_ms": t_tn / args.seeds, "time_f4_ms": t_f4 / args.seeds,
        "time_oracle_ms": t_or / args.seeds if oracles else None,
    }
    if oracles:
        result["ratio_tn"] = float(np.mean([t / o for t, o in zip(tns, oracles)]))
        result["ratio_f4"] = float(np.mean([f / o for f, o in zip(f4s, oracles)]))
        result["ratio_tn_min"] = float(np.min([t / o for t, o in zip(tns, oracles)]))
        result["ratio_tn_max"] = float(np.max([t / o for t, o in zip(tns, oracles)]))
    else:
        result["ratio_tn"] = result["ratio_f4"] = None
    return result


def _cmd_table(args) -> int:
    rows = _table_rows(args)
    if not rows:
        raise ValueError("no table rows: pass --shape (with --strides) or --spec")

    results: list[dict | Exception] = [None] * len(rows)

    def run(i):
        shape, stride = rows[i]
        try:
            return _eval_row(i, shape, stride, args)
        except Exception as exc:  # keep the run going; report at the end
            return exc

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        for i, result in enumerate(pool.map(run, range(len(rows)))):
            results[i] = result

    failures = 0
    out_rows = []
    for (shape, stride), result in zip(rows, results):
        if isinstance(result, Exception):
            failures += 1
            print(f"row {'x'.join(map(str, shape))} stride {stride} failed: {result}",
                  file=sys.stderr)
            continue
        out_rows.append(result)

    if args.csv:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in out_rows:
            writer.writerow([
                "x".join(map(str, r["shape"])), r["stride"], r["padding"],
                r["n"] if r["n"] is not None else "",
                _fmt(r["lower"]), _fmt(r["tn"]), _fmt(r["f4"]), _fmt(r["oracle"]),
                _fmt(r["ratio_tn"]), _fmt(r["ratio_f4"]),
                _fmt(r["time_tn_ms"]) if args.timings else "",
                _fmt(r["time_f4_ms"]) if args.timings else "",
                _fmt(r["time_oracle_ms"]) if args.timings else "",
            ])
    else:
        header = f"{'shape':>14} {'s':>2} {'lower':>10} {'TN':>10} {'F4':>10}"
        if args.oracle is not None:
            header += f" {'oracle':>10} {'TN/or':>7} {'F4/or':>7}"
        print(header)
        for r in out_rows:
            line = (f"{'x'.join(map(str, r['shape'])):>14} {r['stride']:>2} "
                    f"{r['lower']:>10.4f} {r['tn']:>10.4f} {r['f4']:>10.4f}")
            if r["oracle"] is not None:
                line += f" {r['oracle']:>10.4f} {r['ratio_tn']:>7.3f} {r['ratio_f4']:>7.3f}"
                line += (f"  (TN/or in [{r['ratio_tn_min']:.3f}, {r['ratio_tn_max']:.3f}]"
                         f" over {args.seeds} seeds)")
            print(line)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


def finite_difference_gradient(loss, kernel: np.ndarray, step: float) -> np.ndarray:
    """Central differences of a scalar loss, one kernel entry at a time."""
    grad = np.zeros_like(kernel)
    flat = kernel.ravel()
    for idx in range(flat.size):
        bumped = kernel.copy().ravel()
        bumped[idx] = flat[idx] + step
        f_plus = loss(bumped.reshape(kernel.shape))
        bumped[idx] = flat[idx] - step
        f_minus = loss(bumped.reshape(kernel.shape))
        grad.ravel()[idx] = (f_plus - f_minus) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest entry deviation, relative to the gradient's max-abs scale.

    Central differences cannot resolve entries far below the gradient scale
    to a fixed entrywise precision, so deviations are normalized by the
    scale; a zero analytic gradient falls back to the absolute error.
    """
    scale = float(np.max(np.abs(analytic)))
    if scale == 0.0:
        return float(np.max(np.abs(numeric)))
    return float(np.max(np.abs(numeric - analytic)) / scale)


def _gradcheck_pair(which: str, kernel: np.ndarray, args):
    """Analytic gradient at a converged point plus a branch-following FD loss."""
    if which == "ocnn":
        return regularizer_gradient("ocnn", kernel), ocnn_loss

    # Converge once with restarts, then hold that branch: the analytic
    # gradient is evaluated at the re-converged optimum and every FD sample
    # warm-starts from it, so slow-converging kernels stay accurate.
    base_config = HopmConfig(
        n_iters=args.iters, tol=args.tol, restarts=args.restarts,
        seed=derive_seed(args.seed, "hopm"),
    )
    if which == "2norm":
        base = twonorm_loss(kernel, base_config).estimate.factors
    else:
        base = hopm(kernel, base_config).factors
    warm = HopmConfig(
        n_iters=args.iters, tol=1e-14, restarts=1,
        seed=derive_seed(args.seed, "hopm", 1), warm_start=base,
    )
    analytic = regularizer_gradient(which, kernel, warm)
    if which == "tn":
        return analytic, lambda kk: tn_bound(kk, warm).upper
    if which == "ratio":
        return analytic, lambda kk: ratio_loss(kk, warm)
    return analytic, lambda kk: twonorm_loss(kk, warm).sigma


def _cmd_gradcheck(args) -> int:
    kernel = read_kernel(args.kernel)
    try:
        analytic, loss = _gradcheck_pair(args.which, kernel, args)
    except ValueError as exc:
        if "undefined" in str(exc):
            print(f"undefined: {exc}")
            return EXIT_UNDEFINED
        raise
    numeric = finite_difference_gradient(loss, kernel, args.step)
    err = max_relative_error(analytic, numeric)
    verdict = "PASS" if err <= args.threshold else "FAIL"
    print(f"{args.which}: max relative error {err:.3e} "
          f"(threshold {args.threshold:g}) -> {verdict}")
    if args.which == "ratio":
        inner = float(np.sum(analytic * kernel))
        print(f"ratio is scale-free: <grad, K> = {inner:.3e}")
    if args.which == "ocnn" and not analytic.any():
        print("gradient is exactly zero (loss at its minimum)")
    return EXIT_OK if verdict == "PASS" else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# oracle


def _cmd_oracle(args) -> int:
    kernel = read_kernel(args.kernel)
    if args.method == "circular-exact":
        if args.padding != "circular" or args.stride != 1:
            raise ValueError("--method circular-exact requires --padding circular and stride 1")
        value = circular_exact_norm(kernel, args.n, seed=derive_seed(args.seed, "matrix"))
        print(f"circular-exact ||T||2 (n={args.n}): {value:.10g}")
        return EXIT_OK
    config = ConvConfig(input_size=args.n, padding=args.padding, stride=args.stride)
    if args.method == "dense":
        t = build_dense_jacobian(kernel, config)
        value = float(np.linalg.norm(t, 2))
        print(f"dense ||T||2 (n={args.n}, {args.padding}, stride {args.stride}): {value:.10g}")
        return EXIT_OK
    op = conv_operator(kernel, config)
    pm = power_method(op, iters=args.iters, tol=args.tol, seed=derive_seed(args.seed, "power"))
    print(f"power ||T||2 (n={args.n}, {args.padding}, stride {args.stride}): {pm.norm:.10g}")
    print(f"iterations: {pm.iterations}, converged: {pm.converged}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def bench_bound_times(
    kernel: np.ndarray,
    ns,
    repeat: int = 3,
    seed: int = 0,
    tn_iters: int = 100,
    tn_restarts: int = 4,
    power_iters: int = 30,
    padding: str = "zero",
):
    """Wall-clock per bound per declared input size; fixed iteration counts.

    The TN and F4 computations never look at n, so their rows measure the
    same work; the power-method row grows with n.  Each cell is the minimum
    over ``repeat`` runs.
    """
    tn_config = HopmConfig(n_iters=tn_iters, tol=0.0, restarts=tn_restarts,
                           seed=derive_seed(seed, "hopm"))
    f4_seed = derive_seed(seed, "matrix")
    pm_seed = derive_seed(seed, "power")
    # Untimed warm-up: first-touch allocation, kernel caches, and frequency
    # ramp-up otherwise inflate whichever cell happens to run first.
    tn_bound(kernel, tn_config)
    f4_bound(kernel, seed=f4_seed)

    cells = {}
    for n in ns:
        op = conv_operator(kernel, ConvConfig(input_size=n, padding=padding))
        cells[(n, "tn")] = lambda: tn_bound(kernel, tn_config)
        cells[(n, "f4")] = lambda: f4_bound(kernel, seed=f4_seed)
        cells[(n, "power")] = lambda op=op: power_method(
            op, iters=power_iters, tol=0.0, seed=pm_seed
        )

    # Calibrate an inner loop per cell so each sample is >= ~150 ms (scheduler
    # jitter dominates small workloads), then interleave samples round-robin
    # so a transient stall cannot poison any single cell's whole sample set.
    inner = {}
    for key, fn in cells.items():
        t0 = time.perf_counter()
        fn()
        once = time.perf_counter() - t0
        inner[key] = max(1, int(round(0.15 / max(once, 1e-9))))
    best = {key: float("inf") for key in cells}
    for _ in range(repeat):
        for key, fn in cells.items():
            t0 = time.perf_counter()
            for _ in range(inner[key]):
                fn()
            best[key] = min(best[key], (time.perf_counter() - t0) / inner[key])
    return [
        {
            "n": n,
            "time_tn_ms": best[(n, "tn")] * 1e3,
            "time_f4_ms": best[(n, "f4")] * 1e3,
            "time_power_ms": best[(n, "power")] * 1e3,
        }
        for n in ns
    ]


def _cmd_bench(args) -> int:
    shape = _parse_shape(args.shape)
    kernel = gaussian_kernel(shape, derive_seed(args.seed, "kernel"))
    ns = [int(x) for x in str(args.ns).split(",") if x]
    rows = bench_bound_times(kernel, ns, repeat=args.repeat, seed=args.seed)
    print(f"{'n':>6} {'TN (ms)':>12} {'F4 (ms)':>12} {'power (ms)':>12}")
    for r in rows:
        print(f"{r['n']:>6} {r['time_tn_ms']:>12.2f} {r['time_f4_ms']:>12.2f} "
              f"{r['time_power_ms']:>12.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="convnorm", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"convnorm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a kernel file")
    p.add_argument("shape", nargs="*", type=int, help="kernel shape, e.g. 64 64 3 3")
    p.add_argument("--dist", choices=["gaussian", "uniform", "delta", "appendix-b"],
                   default="gaussian")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("bound", help="lower/TN/F4 bounds for one kernel")
    p.add_argument("kernel")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--padding", choices=["zero", "circular"], default="zero")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", type=int, metavar="N",
                   help="also run the power-method reference at input size N")
    p.add_argument("--oracle-iters", type=int, default=500)
    p.add_argument("--json", action="store_true")
    p.add_argument("--timings", action="store_true",
                   help="include measured wall clock (breaks byte-stable output)")
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("table", help="bound table over shapes, strides, seeds")
    p.add_argument("--shape", action="append", metavar="C_OUT,C_IN,H,W")
    p.add_argument("--strides", default="1")
    p.add_argument("--spec", help="JSON list of {shape, stride} rows")
    p.add_argument("--padding", choices=["zero", "circular"], default="zero")
    p.add_argument("--oracle", type=int, metavar="N")
    p.add_argument("--oracle-iters", type=int, default=500)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--csv", action="store_true")
    p.add_argument("--timings", action="store_true")
    p.set_defaults(func=_cmd_table)

    p = sub.add_parser("gradcheck", help="finite-difference check of a gradient")
    p.add_argument("kernel")
    p.add_argument("--which", choices=list(REGULARIZERS), default="tn")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--iters", type=int, default=1500)
    p.add_argument("--tol", type=float, default=1e-13)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("oracle", help="reference Jacobian norm")
    p.add_argument("kernel")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--padding", choices=["zero", "circular"], default="zero")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--method", choices=["power", "circular-exact", "dense"], default="power")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("bench", help="timing: bounds vs power method across n")
    p.add_argument("--shape", default="64,64,3,3")
    p.add_argument("--ns", default="16,32,64")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KernelFormatError, OSError) as exc:
        print(f"convnorm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"convnorm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
