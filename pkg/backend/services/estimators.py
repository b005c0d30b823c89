# backend/services/estimators.py
import logging
from typing import Callable, Iterable

import numpy as np

from ..core.errors import DomainError, ParameterError
from ..models import SortedSample

logger = logging.getLogger("Estimators")

# 次序统计量约定：X_{i,n} = 第 i 小 (1-based)
# 所有公式的 0-based 换算只在本模块里做


def order_statistics(raw) -> SortedSample:
    """稳定升序排序，不修改输入"""
    values = np.asarray(raw, dtype=float).reshape(-1)
    if values.size == 0:
        raise ParameterError("样本为空，无法排序")
    return SortedSample(np.sort(values, kind="stable"))


def _as_sorted(sample) -> SortedSample:
    if isinstance(sample, SortedSample):
        return sample
    return order_statistics(sample)


def _check_k(k: int, n: int):
    if not (1 <= k <= n - 1):
        raise ParameterError(f"k={k} 越界，需满足 1 <= k <= n-1 = {n - 1}")


# --- 1. Hill 估计 ---

def hill(sample, k: int) -> float:
    """
    γ̂ = (1/k)·Σ_{i=0}^{k-1} log X_{n−i,n} − log X_{n−k,n}
    按位置求和 (不去重)，写成对数差，顶部并列值的贡献恰好为 0
    """
    s = _as_sorted(sample)
    n = s.n
    _check_k(k, n)
    threshold = s.order_stat(n - k)
    if not threshold > 0:
        raise DomainError(f"阈值次序统计量 X_(n-k,n)={threshold} 非正，对数无定义 (k={k}, n={n})")
    top = s.values[n - k:]
    return float(np.mean(np.log(top) - np.log(threshold)))


def hill_path(sample, ks: Iterable[int]) -> np.ndarray:
    """一组 k 上的 Hill 估计 (估计值-k 图的数据)"""
    s = _as_sorted(sample)
    return np.array([hill(s, int(k)) for k in ks], dtype=float)


# --- 2. 高分位数外推 ---

def weissman_quantile(sample, k: int, p: float, gamma_hat: float) -> float:
    """x̂_p = X_{n−k,n}·(k/(np))^γ̂"""
    s = _as_sorted(sample)
    n = s.n
    _check_k(k, n)
    if not (0.0 < p < 1.0):
        raise ParameterError(f"p 必须位于 (0,1)，收到 {p}")
    if not np.isfinite(gamma_hat):
        raise ParameterError(f"gamma_hat 必须为有限值，收到 {gamma_hat}")
    factor = k / (n * p)
    return float(s.order_stat(n - k) * factor ** gamma_hat)


# --- 3. k 区间平均 ---

def average_over_k_range(estimator: Callable[[int], float], k_lo: int, k_hi: int, n: int) -> float:
    """
    对 k ∈ [k_lo, k_hi] 逐个求估计值后取算术平均
    estimator 接收 k 返回实数，单个 k 的错误直接向上抛出
    """
    if not (1 <= k_lo <= k_hi <= n - 1):
        raise ParameterError(f"k 区间 {k_lo}..{k_hi} 不合法，需满足 1 <= lo <= hi <= n-1 = {n - 1}")
    values = [float(estimator(k)) for k in range(k_lo, k_hi + 1)]
    return float(np.mean(values))
