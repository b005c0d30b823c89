# backend/services/montecarlo.py
import logging
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..core.errors import AdaptedHillError, ParameterError, SimulationError
from ..models import (BoxplotStats, DistributionSpec, PairedSample, Scenario,
                      ScenarioResult, StreamSpec, TablesResult, TuningParams)
from .adapted import adapted_multivariate
from .asymptotics import logistic_matched_reduction
from .sampling import sample_scenario

logger = logging.getLogger("MonteCarlo")

# 所有模拟分布 (Cauchy 边缘 / 标准 Fréchet 边缘) 的真实尾部指数
TRUE_GAMMA = 1.0

# 剔除比例上限
MAX_EXCLUDED_FRACTION = 0.01

# 每个 worker 大约分到的块数，块越小进度回报越细
BLOCKS_PER_WORKER = 8

# --- 模拟网格 ---
# (n, m, k)，k₊ 一律按匹配规则取 150 / 200 / 150
SETTINGS: List[Tuple[int, int, int]] = [(1000, 500, 100), (1000, 1000, 100), (500, 1000, 50)]

TABLE_1_COLUMNS: List[DistributionSpec] = [
    DistributionSpec("cauchy", 2, s=0.0),
    DistributionSpec("cauchy", 2, s=0.5),
    DistributionSpec("cauchy", 2, s=0.8),
    DistributionSpec("cauchy", 3, s=0.0, r=0.0),
    DistributionSpec("cauchy", 3, s=0.5, r=0.5),
    DistributionSpec("cauchy", 3, s=0.5, r=0.0),
    DistributionSpec("cauchy", 3, s=0.8, r=0.8),
    DistributionSpec("cauchy", 3, s=0.8, r=0.3),
]

TABLE_2_COLUMNS: List[DistributionSpec] = [
    DistributionSpec("logistic", d, theta=theta) for d in (2, 3) for theta in (0.1, 0.3, 0.5)
]

# 已发表的方差缩减百分比，按 SETTINGS 顺序逐行
TABLE_1_PRINTED: List[List[float]] = [
    [10.5, 12.1, 16.7, 12.7, 17.6, 19.0, 21.9, 25.8],
    [16.1, 20.9, 27.2, 19.8, 26.0, 30.1, 32.2, 39.3],
    [20.8, 28.3, 37.3, 26.6, 34.3, 37.0, 42.6, 52.7],
]
TABLE_2_PRINTED: List[List[float]] = [
    [26.6, 18.1, 9.1, 27.4, 20.4, 13.2],
    [41.7, 27.7, 15.2, 44.5, 33.1, 20.6],
    [55.6, 36.3, 21.7, 57.0, 42.1, 26.1],
]

# 允许偏差 (百分点)
TABLE_TOLERANCE = {"table-1": 4.0, "table-2": 3.0}
FULL_REPLICATIONS = 10000
MIN_TABLE_REPLICATIONS = 100


# ---------------------------------------------------------------
# 1. 单次重复
# ---------------------------------------------------------------

def simulate_replication(sc: Scenario, replication: int, tuning: TuningParams = None) -> Tuple[float, float]:
    """第 replication 次重复：用自己的随机流抽样，返回 (Hill, adapted)"""
    tuning = tuning or sc.tuning()
    joint, extra = sample_scenario(sc.distribution, sc.n, sc.m, StreamSpec(sc.master_seed, replication))
    data = PairedSample(joint[:, 0], joint[:, 1:], extra)
    report = adapted_multivariate(data, tuning)
    return report.gamma1_hill, report.gamma_adapted


def _run_block(sc: Scenario, start: int, stop: int):
    """
    处理 [start, stop) 这一段重复 (进程池里执行，必须是模块级函数)
    失败的重复记为 NaN，并按异常类型计数
    """
    tuning = sc.tuning()
    size = stop - start
    hill_vals = np.full(size, np.nan)
    adapted_vals = np.full(size, np.nan)
    errors: Dict[str, int] = Counter()
    messages: Dict[str, str] = {}
    for offset in range(size):
        try:
            hill_vals[offset], adapted_vals[offset] = simulate_replication(sc, start + offset, tuning)
        except AdaptedHillError as e:
            key = type(e).__name__
            errors[key] += 1
            messages.setdefault(key, f"replication {start + offset}: {e}")
    return start, hill_vals, adapted_vals, dict(errors), messages


def _blocks(total: int, worker_count: int) -> List[Tuple[int, int]]:
    n_blocks = max(1, min(total, worker_count * BLOCKS_PER_WORKER))
    size = int(math.ceil(total / n_blocks))
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


# ---------------------------------------------------------------
# 2. 场景
# ---------------------------------------------------------------

def _box(values: np.ndarray) -> BoxplotStats:
    """五数概括 + 1.5·IQR 之外的离群点计数"""
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    low = int(np.count_nonzero(values < q1 - 1.5 * iqr))
    high = int(np.count_nonzero(values > q3 + 1.5 * iqr))
    return BoxplotStats(minimum=float(np.min(values)), q1=float(q1), median=float(median),
                        q3=float(q3), maximum=float(np.max(values)),
                        low_outliers=low, high_outliers=high)


def run_scenario(sc: Scenario, worker_count: int = 1,
                 progress: Optional[Callable[[int, int], None]] = None,
                 keep_estimates: bool = True) -> ScenarioResult:
    """
    执行一个场景的全部重复
    1. 按重复下标切块，块内顺序执行
    2. worker_count > 1 时交给进程池
    3. 结果按下标写回缓冲区，聚合与完成顺序无关
    """
    if worker_count < 1:
        raise ParameterError(f"worker_count 必须 >= 1，收到 {worker_count}")
    total = sc.replications
    tuning = sc.tuning()
    logger.info(f"🎲 场景开始: {sc.distribution.label} n={sc.n} m={sc.m} k={sc.k} k₊={tuning.k_plus} "
                f"reps={total} workers={worker_count}")

    hill_buf = np.full(total, np.nan)
    adapted_buf = np.full(total, np.nan)
    tally: Dict[str, int] = Counter()
    messages: Dict[str, str] = {}
    done = 0

    def _collect(result):
        nonlocal done
        start, h, a, errs, msgs = result
        hill_buf[start:start + h.shape[0]] = h
        adapted_buf[start:start + a.shape[0]] = a
        tally.update(errs)
        for key, msg in msgs.items():
            messages.setdefault(key, msg)
        done += h.shape[0]
        logger.debug(f"进度 {done}/{total}")
        if progress is not None:
            progress(done, total)

    blocks = _blocks(total, worker_count)
    if worker_count == 1:
        for lo, hi in blocks:
            _collect(_run_block(sc, lo, hi))
    else:
        with ProcessPoolExecutor(max_workers=worker_count) as executor:
            future_to_block = {executor.submit(_run_block, sc, lo, hi): (lo, hi) for lo, hi in blocks}
            for future in as_completed(future_to_block):
                _collect(future.result())

    # 剔除统计
    excluded = int(sum(tally.values()))
    for key, count in sorted(tally.items()):
        logger.warning(f"⚠️ 剔除 {count} 次重复 ({key})，例如 {messages[key]}")
    if excluded > MAX_EXCLUDED_FRACTION * total:
        raise SimulationError(
            f"{sc.distribution.label}: 剔除 {excluded}/{total} 次重复，超过 {MAX_EXCLUDED_FRACTION:.0%}；"
            f"{'; '.join(messages.values())}"
        )

    valid = ~np.isnan(hill_buf)
    hill_ok, adapted_ok = hill_buf[valid], adapted_buf[valid]
    used = int(hill_ok.shape[0])
    if used < 2:
        raise SimulationError(f"{sc.distribution.label}: 有效重复不足 2 次")

    var_hill = float(np.var(hill_ok, ddof=1))
    var_adapted = float(np.var(adapted_ok, ddof=1))
    result = ScenarioResult(
        scenario=sc,
        var_hill=var_hill,
        var_adapted=var_adapted,
        reduction_pct=100.0 * (1.0 - var_adapted / var_hill),
        mean_hill=float(np.mean(hill_ok)),
        mean_adapted=float(np.mean(adapted_ok)),
        mse_hill=float(np.mean((hill_ok - TRUE_GAMMA) ** 2)),
        mse_adapted=float(np.mean((adapted_ok - TRUE_GAMMA) ** 2)),
        box_hill=_box(hill_ok),
        box_adapted=_box(adapted_ok),
        replications_used=used,
        warnings_tally=dict(tally),
        hill_estimates=hill_buf if keep_estimates else None,
        adapted_estimates=adapted_buf if keep_estimates else None,
    )
    logger.info(f"✅ 场景完成: {sc.distribution.label} 方差缩减 {result.reduction_pct:.1f}% "
                f"(有效 {used}/{total})")
    return result


def boxplot_summary(sc: Scenario, worker_count: int = 1) -> Tuple[BoxplotStats, BoxplotStats]:
    """(Hill, adapted) 两组估计的箱线图概括"""
    result = run_scenario(sc, worker_count, keep_estimates=False)
    return result.box_hill, result.box_adapted


def archive_estimates(result: ScenarioResult, path: str) -> str:
    """逐次重复的估计值写入 parquet，供外部绘制箱线图"""
    if result.hill_estimates is None or result.adapted_estimates is None:
        raise ParameterError("结果中没有保留逐次估计值 (run_scenario 需 keep_estimates=True)")
    df = pd.DataFrame({
        "replication": np.arange(result.hill_estimates.shape[0], dtype=np.int64),
        "hill": result.hill_estimates,
        "adapted": result.adapted_estimates,
    })
    dir_path = os.path.dirname(os.path.abspath(path))
    os.makedirs(dir_path, exist_ok=True)
    df.to_parquet(path, index=False, compression="snappy")
    logger.info(f"💾 已归档 {len(df)} 条逐次估计: {path}")
    return path


# ---------------------------------------------------------------
# 3. 复现两张表
# ---------------------------------------------------------------

def column_label(dist: DistributionSpec) -> str:
    if dist.kind == "cauchy":
        if dist.d == 2:
            return f"d=2 s={dist.s:g}"
        return f"d=3 s={dist.s:g} r={(dist.s if dist.r is None else dist.r):g}"
    return f"d={dist.d} theta={dist.theta:g}"


def _table_grid(which: str):
    if which == "table-1":
        return TABLE_1_COLUMNS, TABLE_1_PRINTED
    if which == "table-2":
        return TABLE_2_COLUMNS, TABLE_2_PRINTED
    raise ParameterError(f"未知表格: {which}")


def reproduce_tables(which: str = "both", replications: int = FULL_REPLICATIONS,
                     master_seed: int = 20190101, worker_count: int = 1,
                     progress: Optional[Callable[[int, int], None]] = None) -> TablesResult:
    """
    逐格运行场景，与发表值比较
    单格失败不影响其他格，状态记为 ERROR；超出容差记为 FAILED
    """
    if which not in ("table-1", "table-2", "both"):
        raise ParameterError(f"which 只能是 table-1 / table-2 / both，收到 {which!r}")
    if replications < MIN_TABLE_REPLICATIONS:
        raise ParameterError(f"复现表格至少需要 {MIN_TABLE_REPLICATIONS} 次重复，收到 {replications}")
    tables = ["table-1", "table-2"] if which == "both" else [which]
    caveat = replications < FULL_REPLICATIONS

    jobs = []
    for table in tables:
        columns, printed = _table_grid(table)
        for row, (n, m, k) in enumerate(SETTINGS):
            for col, dist in enumerate(columns):
                jobs.append((table, dist, n, m, k, printed[row][col]))

    records = []
    failed = []
    for idx, (table, dist, n, m, k, printed_pct) in enumerate(jobs, start=1):
        sc = Scenario(distribution=dist, n=n, m=m, k=k, replications=replications, master_seed=master_seed)
        nu2 = sc.tuning().nu2
        theory = (100.0 * logistic_matched_reduction(dist.theta, dist.d, nu2)
                  if dist.kind == "logistic" else float("nan"))
        record = {
            "table": table, "column": column_label(dist), "distribution": dist.label,
            "n": n, "m": m, "k": k, "k_plus": sc.tuning().k_plus,
            "reduction_pct": float("nan"), "printed_pct": printed_pct, "theory_pct": theory,
            "deviation": float("nan"), "status": "ok", "message": "",
        }
        try:
            result = run_scenario(sc, worker_count, keep_estimates=False)
            record["reduction_pct"] = result.reduction_pct
            record["deviation"] = result.reduction_pct - printed_pct
            if caveat:
                record["status"] = "caveat"
            elif abs(record["deviation"]) > TABLE_TOLERANCE[table]:
                record["status"] = "FAILED"
        except AdaptedHillError as e:
            record["status"] = "ERROR"
            record["message"] = str(e)
            logger.error(f"❌ {table} {dist.label} (n={n}, m={m}) 失败: {e}")
        if record["status"] in ("FAILED", "ERROR"):
            failed.append(f"{table} {record['column']} n={n} m={m} k={k}")
        records.append(record)
        if progress is not None:
            progress(idx, len(jobs))

    if caveat:
        logger.warning(f"⚠️ 只用了 {replications} 次重复，容差比较不具参考意义")
    return TablesResult(cells=pd.DataFrame.from_records(records), replications=replications,
                        caveat=caveat, failed=failed)


def format_grid(tables: TablesResult, table: str, value: str = "reduction_pct") -> pd.DataFrame:
    """按发表时的版式排成 (n, m, k) × 分布参数 的网格，数值保留一位小数"""
    cells = tables.cells[tables.cells["table"] == table]
    if cells.empty:
        raise ParameterError(f"结果中没有 {table}")
    columns, _ = _table_grid(table)
    order = [column_label(d) for d in columns]
    grid = cells.set_index(["n", "m", "k", "column"])[value].unstack("column")
    grid = grid.reindex(columns=order)
    grid = grid.reindex(pd.MultiIndex.from_tuples(SETTINGS, names=["n", "m", "k"]))
    return grid.round(1)
