# backend/services/adapted.py
"""
Adapted Hill 估计量
利用相关变量更长的观测记录修正关注变量 X 的 Hill 估计：
    γ̂₁,d = γ̂₁ + Σⱼ cⱼ·(γ̂ⱼ₊ − γ̂ⱼ)
通用形式 (二元 / 多元) 与 k₊ 匹配时的化简形式必须数值一致。
"""
import logging
import math
from typing import List, Tuple

import numpy as np

from ..core.errors import DegenerateDenominatorError, ParameterError
from ..models import EstimateReport, PairedSample, TailDependenceSet, TuningParams
from .estimators import hill, order_statistics
from .tail_dependence import build_H, invert_matrix, tail_dependence_set

logger = logging.getLogger("AdaptedHill")

DEGENERATE_TOL = 1e-10


def _check_shapes(data: PairedSample, tuning: TuningParams):
    if data.n != tuning.n or data.m != tuning.m:
        raise ParameterError(
            f"tuning (n={tuning.n}, m={tuning.m}) 与样本 (n={data.n}, m={data.m}) 不一致"
        )


def hill_triples(data: PairedSample, tuning: TuningParams) -> Tuple[float, List[Tuple[float, float]]]:
    """
    γ̂₁ (k, X)，以及每个相关变量的 (γ̂ⱼ: k, 前 n 个观测；γ̂ⱼ₊: k₊, 全部 n+m 个观测)
    """
    _check_shapes(data, tuning)
    gamma1 = hill(order_statistics(data.x), tuning.k)
    triples = []
    for j in range(data.d - 1):
        g = hill(order_statistics(data.y[:, j]), tuning.k)
        g_plus = hill(order_statistics(data.related_full(j)), tuning.k_plus)
        if g_plus < DEGENERATE_TOL:
            raise DegenerateDenominatorError(
                f"γ̂{j + 2}₊={g_plus:.3e} 过小 (k₊={tuning.k_plus})，系数分母退化"
            )
        triples.append((g, g_plus))
    return gamma1, triples


def _report(gamma1: float, triples, coefficients, tuning: TuningParams, reduction: float,
            tds: TailDependenceSet = None, warnings: List[str] = None) -> EstimateReport:
    warnings = list(warnings or [])
    if tds is not None:
        warnings.extend(tds.warnings)
    if tuning.m == 0:
        warnings.append("m=0: no extra observations, the adapted estimate carries no extra information")

    coefs = np.asarray(coefficients, dtype=float)
    updates = np.asarray([gp - g for g, gp in triples], dtype=float)
    # 与 EstimateReport.reconstruct 使用同一表达式
    gamma_adapted = float(gamma1 + np.sum(coefs * updates))

    if gamma_adapted < 0:
        warnings.append(f"negative adapted estimate {gamma_adapted:.6g}")
    if not (0.0 <= reduction <= 1.0):
        warnings.append(f"plug-in variance reduction {reduction:.6g} outside [0,1]")
    if reduction <= 1.0:
        std_error = abs(gamma_adapted) * math.sqrt(1.0 - reduction) / math.sqrt(tuning.k)
    else:
        std_error = float("nan")

    return EstimateReport(
        gamma1_hill=float(gamma1),
        gamma_adapted=gamma_adapted,
        triples=[(float(g), float(gp)) for g, gp in triples],
        coefficients=[float(c) for c in coefs],
        tuning=tuning,
        reduction=float(reduction),
        std_error=float(std_error),
        tail_dependence=tds,
        warnings=warnings,
    )


# --- 1. 通用形式 ---

def adapted_bivariate(data: PairedSample, tuning: TuningParams) -> EstimateReport:
    """
    d = 2：
    γ̂₁ + (γ̂₁/γ̂₂₊)·[(R̂(1,1) − (k/k₊)R̂(1,β̂)) / (1 + k/k₊ − 2n/(n+m))]·(γ̂₂₊ − γ̂₂)
    """
    if data.d != 2:
        raise ParameterError(f"adapted_bivariate 只接受 d=2，收到 d={data.d}")
    gamma1, triples = hill_triples(data, tuning)
    tds = tail_dependence_set(data.joint(), tuning)

    r11 = tds.value(0, 1, "1", "1")
    r1b = tds.value(0, 1, "1", "b")
    numerator = r11 - tuning.nu2 * r1b
    denominator = 1.0 + tuning.nu2 - 2.0 * tuning.n / (tuning.n + tuning.m)
    if abs(denominator) < DEGENERATE_TOL:
        raise DegenerateDenominatorError(f"1 + ν̂² − 2n/(n+m) = {denominator:.3e}，系数分母退化")

    g2_plus = triples[0][1]
    coef = (gamma1 / g2_plus) * (numerator / denominator)
    reduction = numerator ** 2 / denominator
    return _report(gamma1, triples, [coef], tuning, reduction, tds)


def adapted_multivariate(data: PairedSample, tuning: TuningParams) -> EstimateReport:
    """
    γ̂₁ + Σⱼ (γ̂₁/γ̂ⱼ₊)·(Ĥ⁻¹₁ⱼ/Ĥ⁻¹₁₁)·(γ̂ⱼ₊ − γ̂ⱼ)
    plug-in 方差缩减 1 − 1/Ĥ⁻¹₁₁
    """
    gamma1, triples = hill_triples(data, tuning)
    tds = tail_dependence_set(data.joint(), tuning)
    H = build_H(tds)
    H_inv = invert_matrix(H)
    h11 = H_inv[0, 0]
    if abs(h11) < DEGENERATE_TOL:
        raise DegenerateDenominatorError(f"Ĥ⁻¹₁₁={h11:.3e}，系数分母退化")

    coefs = [(gamma1 / gp) * (H_inv[0, j + 1] / h11) for j, (_, gp) in enumerate(triples)]
    reduction = 1.0 - 1.0 / h11
    logger.debug(f"d={data.d} k={tuning.k} k₊={tuning.k_plus} Ĥ⁻¹₁₁={h11:.6g}")
    return _report(gamma1, triples, coefs, tuning, reduction, tds)


# --- 2. k₊ 匹配 (β̂ = 1) 时的化简形式 ---

def _require_matched(tuning: TuningParams):
    if not tuning.is_matched:
        raise ParameterError(
            f"需要匹配的 k₊：k/k₊ = n/(n+m) 不成立 (k={tuning.k}, k₊={tuning.k_plus}, n={tuning.n}, m={tuning.m})"
        )


def adapted_matched_bivariate(data: PairedSample, tuning: TuningParams) -> EstimateReport:
    """γ̂₁ + (γ̂₁/γ̂₂₊)·R̂(1,1)·(γ̂₂₊ − γ̂₂)"""
    _require_matched(tuning)
    if data.d != 2:
        raise ParameterError(f"adapted_matched_bivariate 只接受 d=2，收到 d={data.d}")
    gamma1, triples = hill_triples(data, tuning)
    tds = tail_dependence_set(data.joint(), tuning)
    r = tds.value(0, 1)
    coef = (gamma1 / triples[0][1]) * r
    reduction = (1.0 - tuning.nu2) * r ** 2
    return _report(gamma1, triples, [coef], tuning, reduction, tds)


def matched_trivariate_weights(r12: float, r13: float, r23: float) -> Tuple[float, float]:
    """(R̂₁₂ − R̂₁₃R̂₂₃)/(1 − R̂₂₃²) 与 (R̂₁₃ − R̂₁₂R̂₂₃)/(1 − R̂₂₃²)"""
    denominator = 1.0 - r23 ** 2
    if abs(denominator) < DEGENERATE_TOL:
        raise DegenerateDenominatorError(f"1 − R̂₂₃² = {denominator:.3e} (R̂₂₃={r23:.6g})，系数分母退化")
    return (r12 - r13 * r23) / denominator, (r13 - r12 * r23) / denominator


def adapted_matched_trivariate(data: PairedSample, tuning: TuningParams) -> EstimateReport:
    """k₊ 匹配时 d=3 的闭式"""
    _require_matched(tuning)
    if data.d != 3:
        raise ParameterError(f"adapted_matched_trivariate 只接受 d=3，收到 d={data.d}")
    gamma1, triples = hill_triples(data, tuning)
    tds = tail_dependence_set(data.joint(), tuning)
    r12, r13, r23 = tds.value(0, 1), tds.value(0, 2), tds.value(1, 2)
    weights = matched_trivariate_weights(r12, r13, r23)
    denominator = 1.0 - r23 ** 2
    coefs = [(gamma1 / gp) * w for (_, gp), w in zip(triples, weights)]
    reduction = (1.0 - tuning.nu2) * (r12 ** 2 + r13 ** 2 - 2.0 * r12 * r13 * r23) / denominator
    return _report(gamma1, triples, coefs, tuning, reduction, tds)
