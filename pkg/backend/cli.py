# backend/cli.py
"""
命令行入口：python -m backend.cli <subcommand> ...

  estimate  DATA    Hill / adapted Hill 估计 (按 k 扫描)
  quantile  DATA    高分位数外推
  simulate          单个模拟场景 (方差缩减 + 箱线图数据)
  tables            复现两张方差缩减表
  theory            给定 (ν², β, R) 的理论方差缩减

退出码：0 成功；2 参数/数据错误；1 其他异常
"""
import argparse
import logging
import sys
from typing import List, Optional

import numpy as np
from tabulate import tabulate

from .core.config import load_run_config
from .core.errors import AdaptedHillError, ParameterError
from .core.logger import setup_logging
from .models import DistributionSpec, Scenario, TheoryParams
from .services import asymptotics, montecarlo, reports
from .services.dataset import load_dataset, to_energy

logger = logging.getLogger("CLI")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="KEY=VALUE 配置文件")
    p.add_argument("--k", type=int)
    p.add_argument("--k-plus", type=int, dest="k_plus")
    p.add_argument("--matched", action="store_true", default=None, help="k₊ 按 k(n+m)/n 匹配")
    p.add_argument("--k-sweep", dest="k_sweep", metavar="LO..HI")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.add_argument("--delimiter")
    p.add_argument("--tab", action="store_true", help="等价于 --delimiter tab")


def _add_data(p: argparse.ArgumentParser):
    p.add_argument("data", help="带表头的分隔文本文件 (列 x, y2, ...)")
    p.add_argument("--extra", help="只含相关变量列的第二个文件，追加为额外观测")
    p.add_argument("--energy", action="store_true", default=None, help="相关变量按震级换算为能量")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adapted-hill", description="Adapted Hill estimator toolkit")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="Hill 与 adapted Hill 估计")
    _add_data(p)
    _add_common(p)

    p = sub.add_parser("quantile", help="高分位数估计")
    _add_data(p)
    _add_common(p)
    p.add_argument("--p", type=float)

    p = sub.add_parser("simulate", help="单个模拟场景")
    _add_common(p)
    p.add_argument("--dist", choices=["cauchy", "logistic"], default="logistic")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--theta", type=float, default=0.3)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--reps", type=int)
    p.add_argument("--archive", help="逐次估计写入 parquet")

    p = sub.add_parser("tables", help="复现方差缩减表")
    _add_common(p)
    p.add_argument("--which", choices=["table-1", "table-2", "both"])
    p.add_argument("--reps", type=int)

    p = sub.add_parser("theory", help="理论方差缩减")
    p.add_argument("--nu2", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma1", type=float, default=1.0)
    p.add_argument("--r11", required=True, help="R(1,1)：d=2 给 R12；d=3 给 R12,R13,R23")
    p.add_argument("--r1b", help="R(1,β),R(β,1) 成对给出，顺序同 --r11；缺省时取 --r11")
    return parser


def _floats(raw: str, flag: str) -> List[float]:
    try:
        return [float(v) for v in raw.split(",")]
    except ValueError:
        raise ParameterError(f"{flag} 需要逗号分隔的数值，收到 {raw!r}")


def _run_config(args: argparse.Namespace):
    matched = args.matched
    if matched is None and getattr(args, "k_plus", None) is not None:
        # 显式 k₊ 且未要求匹配
        matched = False
    delimiter = "tab" if getattr(args, "tab", False) else getattr(args, "delimiter", None)
    return load_run_config(
        args.config,
        K=args.k, K_PLUS=args.k_plus, MATCHED=matched, K_SWEEP=args.k_sweep,
        P=getattr(args, "p", None), SEED=args.seed, REPS=getattr(args, "reps", None),
        THREADS=args.threads, OUT=args.out, DELIMITER=delimiter,
        TABLE=getattr(args, "which", None), ENERGY=getattr(args, "energy", None),
        ARCHIVE=getattr(args, "archive", None),
    )


def _print_sweep(report, columns: List[str]):
    shown = [c for c in columns if c in report.rows.columns]
    print(tabulate(report.rows[shown].values.tolist(), headers=shown, tablefmt="pretty", floatfmt=".6g"))
    for key, value in report.averages.items():
        print(f"average {key}: {value:.6g}")
    for w in report.warnings:
        print(f"warning: {w}")


# --- 子命令 ---

def cmd_estimate(args) -> int:
    config = _run_config(args)
    sample = load_dataset(args.data, config.DELIMITER, args.extra)
    if config.ENERGY:
        sample = to_energy(sample)
    report = reports.estimate_sweep(sample, config)
    if config.OUT:
        reports.write_sweep(report, config.OUT, config.DELIMITER)
    _print_sweep(report, ["k", "k_plus", "hill", "adapted", "std_error", "error"])
    return 0


def cmd_quantile(args) -> int:
    config = _run_config(args)
    sample = load_dataset(args.data, config.DELIMITER, args.extra)
    if config.ENERGY:
        sample = to_energy(sample)
    report = reports.quantile_sweep(sample, config)
    if config.OUT:
        reports.write_sweep(report, config.OUT, config.DELIMITER)
    _print_sweep(report, ["k", "hill", "adapted", "quantile_hill", "quantile_adapted", "error"])
    return 0


def cmd_simulate(args) -> int:
    config = _run_config(args)
    dist = DistributionSpec(args.dist, args.d, s=args.s, r=args.r, theta=args.theta)
    k_plus = config.k_plus_for(config.K, args.n, args.m) if not config.MATCHED else None
    sc = Scenario(distribution=dist, n=args.n, m=args.m, k=config.K, k_plus=k_plus,
                  replications=config.REPS, master_seed=config.SEED)
    result = reports.run_simulation(sc, config)
    print(tabulate(reports.scenario_summary(result).T.reset_index().values.tolist(),
                   headers=["field", "value"], tablefmt="pretty"))
    print(tabulate(reports.boxplot_frame(result).values.tolist(),
                   headers=list(reports.boxplot_frame(result).columns), tablefmt="pretty", floatfmt=".4f"))
    return 0


def cmd_tables(args) -> int:
    config = _run_config(args)
    tables = reports.run_tables(config)
    for table in sorted(tables.cells["table"].unique()):
        grid = montecarlo.format_grid(tables, table)
        print(f"\n{table} (variance reduction %, {tables.replications} replications)")
        print(tabulate(grid.reset_index().values.tolist(),
                       headers=["n", "m", "k"] + list(grid.columns), tablefmt="pretty", floatfmt=".1f"))
    if tables.caveat:
        print(f"caveat: {tables.replications} < {montecarlo.FULL_REPLICATIONS} replications, tolerances not checked")
    for cell in tables.failed:
        print(f"FAILED: {cell}")
    return 0


def _theory_params(args) -> TheoryParams:
    r11_vals = _floats(args.r11, "--r11")
    if len(r11_vals) == 1:
        d = 2
    elif len(r11_vals) == 3:
        d = 3
    else:
        raise ParameterError("--r11 需要 1 个 (d=2) 或 3 个 (d=3) 数值")
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    r11 = np.eye(d)
    for (i, j), v in zip(pairs, r11_vals):
        r11[i, j] = r11[j, i] = v

    r1b = r11.copy()
    np.fill_diagonal(r1b, args.beta)
    if args.r1b is not None:
        r1b_vals = _floats(args.r1b, "--r1b")
        if len(r1b_vals) != 2 * len(pairs):
            raise ParameterError(f"--r1b 需要 {2 * len(pairs)} 个数值 (每对 R(1,β), R(β,1))")
        for idx, (i, j) in enumerate(pairs):
            r1b[i, j], r1b[j, i] = r1b_vals[2 * idx], r1b_vals[2 * idx + 1]
    elif args.beta != 1.0:
        raise ParameterError("β != 1 时必须给出 --r1b")
    return TheoryParams(gammas=[args.gamma1] + [1.0] * (d - 1), nu2=args.nu2, beta=args.beta, r11=r11, r1b=r1b)


def cmd_theory(args) -> int:
    params = _theory_params(args)
    rows = [
        ["variance (expanded)", asymptotics.asymp_variance_multivariate(params)],
        ["variance (quadratic form)", asymptotics.asymp_variance_quadratic_form(params)],
        ["reduction", asymptotics.variance_reduction(params)],
    ]
    if params.beta == 1.0:
        r = params.r11
        closed = (asymptotics.variance_reduction_matched(params.nu2, r[0, 1]) if params.d == 2
                  else asymptotics.variance_reduction_matched(params.nu2, r[0, 1], r[0, 2], r[1, 2]))
        rows.append(["reduction (matched closed form)", closed])
    print(tabulate(rows, headers=["quantity", "value"], tablefmt="pretty", floatfmt=".6f"))
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "quantile": cmd_quantile,
    "simulate": cmd_simulate,
    "tables": cmd_tables,
    "theory": cmd_theory,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level)
    try:
        return COMMANDS[args.command](args)
    except AdaptedHillError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception("未预期的异常")
        print(f"error: unexpected failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
