"""Command-line front end: ``dpsw generate | workload | run | sweep``."""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .bench import QueryLog, Workload, build_workload, run_single, write_metrics_csv
from .checkpoints import alpha_for_count, build_checkpoints
from .datagen import StreamFormatError, StreamSpec, generate, load_stream, write_stream
from .params import FrameworkConfig, PrivacyBudget, budget_schedule, default_delta

OUTPUT_DIR_ENV = "DPSW_OUTPUT_DIR"

DEFAULT_W = 1_000_000
DEFAULT_NUM_CHECKPOINTS = 3
DEFAULT_ROWS = 2
DEFAULT_WIDTH = 5000
DEFAULT_EPS = 1.0
DEFAULT_GAMMA = 0.01

RUN_KEYS = ("stream", "workload", "w", "sub_len", "alpha", "num_checkpoints", "rows",
            "width", "eps", "delta", "gamma", "seed", "domain_size", "dataset", "bulk")


class CliError(Exception):
    """A user-facing failure; the message is printed as a single line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: usage error: {message}\n")


def _output_path(path: str) -> Path:
    p = Path(path)
    if not p.is_absolute() and os.environ.get(OUTPUT_DIR_ENV):
        p = Path(os.environ[OUTPUT_DIR_ENV]) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _input_path(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} file not found: {path}")
    return p


def _positive_int(text: str) -> int:
    value = int(float(text)) if "e" in text.lower() else int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpsw", description="Private sliding-window frequency sketch toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a synthetic stream file")
    gen.add_argument("--kind", choices=("zipf", "gaussian", "uniform"), default="zipf")
    gen.add_argument("--n", type=_positive_int, required=True)
    gen.add_argument("--m", type=_positive_int, required=True)
    gen.add_argument("--skew", type=float, default=1.0)
    gen.add_argument("--mean", type=float, default=50.0)
    gen.add_argument("--sd", type=float, default=25.0)
    gen.add_argument("--mix", type=float, default=0.05)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    wl = sub.add_parser("workload", help="sample query times and items with exact answers")
    wl.add_argument("--stream", required=True)
    wl.add_argument("--w", type=_positive_int, default=DEFAULT_W)
    wl.add_argument("--fraction", type=float, default=0.01)
    wl.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    wl.add_argument("--domain-size", type=_positive_int)
    wl.add_argument("--seed", type=int, default=0)
    wl.add_argument("--out", required=True)

    run = sub.add_parser("run", help="run one experiment and write a metrics CSV")
    run.add_argument("--stream", required=True)
    run.add_argument("--workload", required=True)
    run.add_argument("--w", type=_positive_int, default=DEFAULT_W)
    run.add_argument("--sub-len", type=_positive_int, help="substream length L (default 0.1 w)")
    group = run.add_mutually_exclusive_group()
    group.add_argument("--alpha", type=float)
    group.add_argument("--num-checkpoints", type=_positive_int,
                       help=f"search alpha for this many checkpoints (default {DEFAULT_NUM_CHECKPOINTS})")
    run.add_argument("--rows", type=_positive_int, default=DEFAULT_ROWS)
    run.add_argument("--width", type=_positive_int, default=DEFAULT_WIDTH)
    run.add_argument("--eps", type=float, default=DEFAULT_EPS)
    run.add_argument("--delta", type=float, help="default n^-1.5")
    run.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    run.add_argument("--domain-size", type=_positive_int)
    run.add_argument("--dataset", default="")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--bulk", action="store_true", help="batch inserts between queries (faster)")
    run.add_argument("--log", help="prefix for raw query logs")
    run.add_argument("--out", required=True)

    sweep = sub.add_parser("sweep", help="cross every grid value and write one CSV row each")
    sweep.add_argument("--grid", required=True)
    sweep.add_argument("--jobs", type=_positive_int, default=1)
    sweep.add_argument("--out", required=True)
    return parser


def resolve_run(values: dict, n: int, domain_size: int) -> tuple[FrameworkConfig, PrivacyBudget, float]:
    """Turn raw run options into a validated config, budget and gamma."""
    w = int(values.get("w") or DEFAULT_W)
    if n < w:
        raise CliError(f"stream has {n} items, fewer than the window size w={w}")
    sub_len = int(values.get("sub_len") or max(1, -(-w // 10)))
    if not 1 <= sub_len <= w:
        raise CliError(f"--sub-len must be in [1, w={w}], got {sub_len}")
    if values.get("alpha") is not None:
        alpha = float(values["alpha"])
        if not 0 < alpha < 1:
            raise CliError(f"--alpha must be in (0, 1), got {alpha}")
    else:
        count = int(values.get("num_checkpoints") or DEFAULT_NUM_CHECKPOINTS)
        try:
            alpha = alpha_for_count(sub_len, count)
        except ValueError as exc:
            raise CliError(f"--num-checkpoints: {exc}") from None
    eps = float(values.get("eps", DEFAULT_EPS))
    if not eps > 0:
        raise CliError(f"--eps must be > 0, got {eps}")
    delta = values.get("delta")
    delta = default_delta(n) if delta is None else float(delta)
    if not 0 < delta < 1:
        raise CliError(f"--delta must be in (0, 1), got {delta}")
    gamma = float(values.get("gamma", DEFAULT_GAMMA))
    if not 0 < gamma < 1:
        raise CliError(f"--gamma must be in (0, 1), got {gamma}")
    rows = int(values.get("rows") or DEFAULT_ROWS)
    width = int(values.get("width") or DEFAULT_WIDTH)
    seed = int(values.get("seed") or 0)
    try:
        config = FrameworkConfig(w=w, sub_len=sub_len, alpha=alpha, rows=rows, width=width,
                                 domain_size=domain_size, seed=seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return config, PrivacyBudget.from_eps_delta(eps, delta), gamma


def print_config(config: FrameworkConfig, budget: PrivacyBudget, gamma: float, file=None) -> str:
    """Echo every resolved parameter, derived ones included."""
    cps = build_checkpoints(config.sub_len, config.alpha)
    schedule = budget_schedule(budget.rho, config.alpha, len(cps))
    shown = list(cps.forward) if len(cps) <= 12 else list(cps.forward[:6]) + ["..."] + list(cps.forward[-5:])
    lines = [
        f"w={config.w} L={config.sub_len} alpha={config.alpha!r} |I|={len(cps)} rows={config.rows} "
        f"width={config.width} m={config.domain_size} seed={config.seed}",
        f"epsilon={budget.epsilon!r} delta={budget.delta!r} rho={budget.rho!r} gamma={gamma!r}",
        f"zeta={config.heavy_hitter_zeta!r} eta={config.eta!r}",
        f"checkpoints={shown}",
        f"schedule rho1={schedule.rho1!r} tail={list(schedule.rho_tail)!r} "
        f"sum={schedule.total!r} (<= rho: {schedule.total <= budget.rho * (1 + 1e-12)})",
    ]
    text = "\n".join(lines)
    print(text, file=file or sys.stdout)
    return text


def _load_stream(path: str) -> np.ndarray:
    try:
        return load_stream(_input_path(path, "stream"))
    except StreamFormatError as exc:
        raise CliError(str(exc)) from None


def _load_workload(path: str) -> Workload:
    try:
        return Workload.load(_input_path(path, "workload"))
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"malformed workload file {path}: {exc}") from None


def _cmd_generate(args) -> None:
    if not 0 <= args.mix <= 1:
        raise CliError(f"--mix must be in [0, 1], got {args.mix}")
    try:
        spec = StreamSpec(kind=args.kind, n=args.n, m=args.m, zipf_skew=args.skew,
                          gauss_mean=args.mean, gauss_sd=args.sd,
                          mix_uniform_fraction=args.mix, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    write_stream(_output_path(args.out), generate(spec))


def _cmd_workload(args) -> None:
    if not 0 < args.fraction <= 1:
        raise CliError(f"--fraction must be in (0, 1], got {args.fraction}")
    stream = _load_stream(args.stream)
    if stream.size < args.w:
        raise CliError(f"stream has {stream.size} items, fewer than the window size w={args.w}")
    workload = build_workload(stream, args.w, args.fraction, args.seed,
                              domain_size=args.domain_size or int(stream.max()), gamma=args.gamma)
    workload.save(_output_path(args.out))
    if workload.low_shortfall:
        print(f"note: low-frequency group short by {workload.low_shortfall} items in total", file=sys.stderr)


def _execute(values: dict, stream: np.ndarray, workload: Workload, log_prefix=None):
    domain_size = int(values.get("domain_size") or stream.max())
    config, budget, gamma = resolve_run(values, stream.size, domain_size)
    if workload.w != config.w or workload.n != stream.size:
        raise CliError(f"workload was built for w={workload.w}, n={workload.n}; "
                       f"run has w={config.w}, n={stream.size}")
    log = QueryLog() if log_prefix is not None else None
    report = run_single(config, budget, stream, workload, gamma=gamma,
                        dataset=str(values.get("dataset") or ""), bulk=bool(values.get("bulk")), log=log)
    if log is not None:
        log.save(_output_path(log_prefix))
    return config, budget, gamma, report


def _cmd_run(args) -> None:
    stream = _load_stream(args.stream)
    workload = _load_workload(args.workload)
    values = {k: getattr(args, k) for k in RUN_KEYS}
    config, budget, gamma = resolve_run(values, stream.size, args.domain_size or int(stream.max()))
    print_config(config, budget, gamma)
    _, _, _, report = _execute(values, stream, workload, args.log)
    write_metrics_csv(_output_path(args.out), [report])
    print(f"mae_high={report.mae_high:.4g} mre_high={report.mre_high:.4g} f1={report.f1:.4g} "
          f"throughput={report.throughput_ips:.0f}/s theoretical_xi={report.theoretical_xi:.4g}")


def parse_grid(text: str) -> list[dict]:
    """Parse ``key = v1, v2, ...`` lines into the Cartesian product of values.

    Blank lines and ``#`` comments are skipped. Values stay strings except
    that numbers are converted.
    """
    axes: dict[str, list] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"grid line {lineno}: expected 'key = value, ...'")
        key, _, rest = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in RUN_KEYS:
            raise CliError(f"grid line {lineno}: unknown key {key!r}")
        values = [_grid_value(v.strip()) for v in rest.split(",") if v.strip()]
        if not values:
            raise CliError(f"grid line {lineno}: no values for {key!r}")
        axes[key] = values
    for required in ("stream", "workload"):
        if required not in axes:
            raise CliError(f"grid file must set {required!r}")
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes.values())]


def _grid_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _cmd_sweep(args) -> None:
    points = parse_grid(_input_path(args.grid, "grid").read_text(encoding="utf-8"))
    streams: dict[str, np.ndarray] = {}
    workloads: dict[str, Workload] = {}
    for point in points:
        if point["stream"] not in streams:
            streams[point["stream"]] = _load_stream(str(point["stream"]))
        if point["workload"] not in workloads:
            workloads[point["workload"]] = _load_workload(str(point["workload"]))
        stream = streams[point["stream"]]
        resolve_run(point, stream.size, int(point.get("domain_size") or stream.max()))

    def one(point):
        return _execute(point, streams[point["stream"]], workloads[point["workload"]])[3]

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(one, points))
    else:
        reports = [one(p) for p in points]
    write_metrics_csv(_output_path(args.out), reports)
    print(f"wrote {len(reports)} rows to {args.out}")


COMMANDS = {"generate": _cmd_generate, "workload": _cmd_workload, "run": _cmd_run, "sweep": _cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except CliError as exc:
        print(f"dpsw {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"dpsw {args.command}: error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
