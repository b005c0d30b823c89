# backend/services/reports.py
import logging
import os
from typing import Dict, List

import numpy as np
import pandas as pd

from ..core.config import RunConfig
from ..core.errors import AdaptedHillError, ParameterError
from ..models import PairedSample, Scenario, ScenarioResult, SweepReport, TablesResult, TuningParams
from . import montecarlo
from .adapted import adapted_multivariate
from .estimators import average_over_k_range, hill, hill_path, order_statistics, weissman_quantile

logger = logging.getLogger("Reports")

FLOAT_FORMAT = "%.12g"


# --- 1. 单个 k 的估计 ---

def _hill_by_k(sample: PairedSample, ks: List[int]) -> Dict[int, float]:
    """整段 k 的 Hill 路径；路径上有失败的 k 时返回空，由各行单独计算并记录错误"""
    try:
        return dict(zip(ks, hill_path(order_statistics(sample.x), ks)))
    except AdaptedHillError:
        return {}


def _estimate_row(sample: PairedSample, config: RunConfig, k: int, hill_values: Dict[int, float]) -> Dict:
    row = {"k": k, "k_plus": np.nan, "hill": np.nan, "adapted": np.nan,
           "std_error": np.nan, "reduction": np.nan, "warnings": "", "error": ""}
    try:
        row["hill"] = hill_values[k] if k in hill_values else hill(order_statistics(sample.x), k)
        k_plus = config.k_plus_for(k, sample.n, sample.m)
        if k_plus is None:
            row["warnings"] = "m=0: adapted estimate skipped"
            return row
        row["k_plus"] = k_plus
        report = adapted_multivariate(sample, TuningParams(k, k_plus, sample.n, sample.m))
        row.update({
            "adapted": report.gamma_adapted,
            "std_error": report.std_error,
            "reduction": report.reduction,
            "warnings": "; ".join(report.warnings),
        })
        row.update(report.tail_dependence.to_dict())
    except AdaptedHillError as e:
        # 单个 k 的失败写进该行，不中断扫描
        row["error"] = str(e)
    return row


def _sweep_average(values: Dict[int, float], ks: List[int], n: int, name: str, warnings: List[str]) -> float:
    """k 区间上的算术平均；有失败的 k 时只平均成功的部分并给出警告"""
    valid = [k for k in ks if np.isfinite(values.get(k, np.nan))]
    if not valid:
        return float("nan")
    if len(valid) == len(ks):
        return average_over_k_range(lambda k: values[k], ks[0], ks[-1], n)
    warnings.append(f"{name}: average over {len(valid)} of {len(ks)} k values")
    return float(np.mean([values[k] for k in valid]))


def estimate_sweep(sample: PairedSample, config: RunConfig) -> SweepReport:
    config.validate_for_sample(sample.n, sample.m)
    ks = config.k_values
    hill_values = _hill_by_k(sample, ks)
    rows = [_estimate_row(sample, config, k, hill_values) for k in ks]
    df = pd.DataFrame.from_records(rows)

    warnings = []
    if sample.m == 0:
        warnings.append("m=0: no extra observations, only the Hill estimator is reported")
    averages = {
        "hill": _sweep_average(dict(zip(df["k"], df["hill"])), ks, sample.n, "hill", warnings),
        "adapted": _sweep_average(dict(zip(df["k"], df["adapted"])), ks, sample.n, "adapted", warnings),
    }
    logger.info(f"📊 k={ks[0]}..{ks[-1]} 平均: Hill={averages['hill']:.6g}, adapted={averages['adapted']:.6g}")
    return SweepReport(rows=df, averages=averages, warnings=warnings)


def quantile_sweep(sample: PairedSample, config: RunConfig) -> SweepReport:
    """在 estimate_sweep 基础上，两种 γ̂ 各给一个高分位数"""
    if config.P is None:
        raise ParameterError("quantile 需要指定 P")
    report = estimate_sweep(sample, config)
    df = report.rows
    s = order_statistics(sample.x)

    def _q(k, gamma):
        if not np.isfinite(gamma):
            return np.nan
        return weissman_quantile(s, int(k), config.P, float(gamma))

    df["quantile_hill"] = [_q(k, g) for k, g in zip(df["k"], df["hill"])]
    df["quantile_adapted"] = [_q(k, g) for k, g in zip(df["k"], df["adapted"])]

    ks = config.k_values
    warnings = list(report.warnings)
    averages = dict(report.averages)
    averages["quantile_hill"] = _sweep_average(dict(zip(df["k"], df["quantile_hill"])), ks, sample.n,
                                               "quantile_hill", warnings)
    averages["quantile_adapted"] = _sweep_average(dict(zip(df["k"], df["quantile_adapted"])), ks, sample.n,
                                                  "quantile_adapted", warnings)
    return SweepReport(rows=df, averages=averages, warnings=warnings)


# --- 2. 模拟 ---

def scenario_summary(result: ScenarioResult) -> pd.DataFrame:
    """单场景汇总一行；缩减百分比保留一位小数"""
    record = result.to_dict()
    record.pop("box_hill")
    record.pop("box_adapted")
    record["warnings_tally"] = ", ".join(f"{k}={v}" for k, v in sorted(result.warnings_tally.items()))
    record["reduction_pct"] = round(result.reduction_pct, 1)
    return pd.DataFrame([record])


def boxplot_frame(result: ScenarioResult) -> pd.DataFrame:
    rows = []
    for name, box in (("hill", result.box_hill), ("adapted", result.box_adapted)):
        rows.append({"estimator": name, **box.to_dict()})
    return pd.DataFrame(rows)


def run_simulation(sc: Scenario, config: RunConfig) -> ScenarioResult:
    """
    1. 跑场景
    2. 写汇总与箱线图数据 (OUT 为前缀)
    3. 可选：逐次估计归档为 parquet
    """
    result = montecarlo.run_scenario(sc, config.THREADS, keep_estimates=config.ARCHIVE is not None)
    if config.OUT:
        write_frame(scenario_summary(result), _with_suffix(config.OUT, "summary"), config.DELIMITER)
        write_frame(boxplot_frame(result), _with_suffix(config.OUT, "boxplot"), config.DELIMITER)
    if config.ARCHIVE:
        montecarlo.archive_estimates(result, config.ARCHIVE)
    return result


def run_tables(config: RunConfig) -> TablesResult:
    tables = montecarlo.reproduce_tables(config.TABLE, config.REPS, config.SEED, config.THREADS)
    if config.OUT:
        cells = tables.cells.copy()
        for col in ("reduction_pct", "theory_pct", "deviation"):
            cells[col] = cells[col].round(1)
        write_frame(cells, config.OUT, config.DELIMITER)
    return tables


# --- 3. 写文件 ---

def _with_suffix(path: str, suffix: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}_{suffix}{ext or '.csv'}"


def write_frame(df: pd.DataFrame, path: str, delimiter: str = ",") -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, sep=delimiter, index=False, float_format=FLOAT_FORMAT, na_rep="")
    logger.info(f"💾 写出 {len(df)} 行: {path}")
    return path


def write_sweep(report: SweepReport, path: str, delimiter: str = ",") -> str:
    return write_frame(report.rows, path, delimiter)
