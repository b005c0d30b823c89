# backend/services/tail_dependence.py
import logging
import math

import numpy as np

from ..core.errors import ParameterError, SingularMatrixError
from ..models import TailDependenceSet, TuningParams

logger = logging.getLogger("TailDependence")

# 主元阈值：低于此值视为数值奇异
PIVOT_TOL = 1e-12


# --- 1. 经验尾部 copula ---

def _exceed_mask(values: np.ndarray, count: int) -> np.ndarray:
    """Xᵢ >= X_{n−count+1,n}，即不低于第 count 大的观测 (并列值全部计入)"""
    n = values.shape[0]
    threshold = np.partition(values, n - count)[n - count]
    return values >= threshold


def _check_count(count: int, n: int, label: str):
    if not (1 <= count <= n):
        raise ParameterError(f"{label}: ⌊k·arg⌋={count} 越界，需位于 [1, n={n}]")


def tail_copula(x, y, k: int, x_arg: float = 1.0, y_arg: float = 1.0) -> float:
    """
    R̂(x,y) = (1/k)·#{i : Xᵢ >= X_{n−⌊kx⌋+1,n} 且 Yᵢ >= Y_{n−⌊ky⌋+1,n}}
    秩统计量，对任一坐标做严格单调递增变换不变
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise ParameterError(f"两个样本长度不一致: {x.shape[0]} vs {y.shape[0]}")
    if k < 1:
        raise ParameterError(f"k 必须 >= 1，收到 {k}")
    if x_arg < 0 or y_arg < 0:
        raise ParameterError(f"取值点必须非负，收到 ({x_arg}, {y_arg})")
    n = x.shape[0]
    kx = math.floor(k * x_arg)
    ky = math.floor(k * y_arg)
    _check_count(kx, n, "x 坐标")
    _check_count(ky, n, "y 坐标")
    joint = _exceed_mask(x, kx) & _exceed_mask(y, ky)
    return float(np.count_nonzero(joint)) / k


def tail_dependence_set(data, tuning: TuningParams) -> TailDependenceSet:
    """
    在 H 矩阵需要的点上计算 R̂ᵢⱼ：(1,1) 以及 (1,β̂)/(β̂,1)
    只使用 n 个联合观测；⌊k·β̂⌋ 用整数运算得到
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ParameterError(f"联合样本必须是 n×d 矩阵 (d >= 2)，收到形状 {data.shape}")
    n, d = data.shape
    if n != tuning.n:
        raise ParameterError(f"联合样本行数 {n} 与 tuning.n={tuning.n} 不一致")
    k = tuning.k
    k_b = tuning.k_beta
    warnings = []
    if tuning.beta_hat > 1.0:
        warnings.append(f"beta_hat={tuning.beta_hat:.6g} > 1: plug-in outside the asymptotic range")

    collapsed = tuning.is_matched
    # 1. 每列的超越集合只算一次
    masks_k = [_exceed_mask(data[:, c], k) for c in range(d)]
    masks_b = None
    if not collapsed:
        if not (1 <= k_b <= n):
            raise ParameterError(
                f"R̂₁₂(1,β̂): ⌊k·β̂⌋={k_b} 越界，需位于 [1, n={n}] (k={k}, k₊={tuning.k_plus})"
            )
        masks_b = [_exceed_mask(data[:, c], k_b) for c in range(d)]

    # 2. 逐对计数
    r11 = np.eye(d)
    r1b = np.eye(d) * tuning.beta_hat
    for i in range(d):
        for j in range(i + 1, d):
            r11[i, j] = r11[j, i] = np.count_nonzero(masks_k[i] & masks_k[j]) / k
            if collapsed:
                r1b[i, j] = r1b[j, i] = r11[i, j]
            else:
                # r1b[i, j] = R̂ᵢⱼ(1,β̂)，r1b[j, i] = R̂ᵢⱼ(β̂,1)
                r1b[i, j] = np.count_nonzero(masks_k[i] & masks_b[j]) / k
                r1b[j, i] = np.count_nonzero(masks_b[i] & masks_k[j]) / k

    return TailDependenceSet(d=d, beta_hat=1.0 if collapsed else tuning.beta_hat,
                             nu2=tuning.nu2, r11=r11, r1b=r1b, warnings=warnings)


# --- 2. H 矩阵 ---

def assemble_h(d: int, nu2: float, beta: float, r11: np.ndarray, r1b: np.ndarray) -> np.ndarray:
    """
    H₁₁ = 1，Hᵢᵢ = 1+ν²−2ν²β
    H₁ᵢ = ν²R₁ᵢ(1,β) − R₁ᵢ(1,1)
    Hᵢⱼ = (1+ν²)Rᵢⱼ(1,1) − ν²(Rᵢⱼ(1,β) + Rᵢⱼ(β,1))
    估计值 (build_H) 和理论值 (asymptotics) 共用这一份公式
    """
    H = np.empty((d, d))
    H[0, 0] = 1.0
    h = 1.0 + nu2 - 2.0 * nu2 * beta
    for i in range(1, d):
        H[i, i] = h
        H[0, i] = H[i, 0] = nu2 * r1b[0, i] - r11[0, i]
        for j in range(i + 1, d):
            H[i, j] = H[j, i] = (1.0 + nu2) * r11[i, j] - nu2 * (r1b[i, j] + r1b[j, i])
    return H


def build_H(tds: TailDependenceSet) -> np.ndarray:
    if tds.r11.shape != (tds.d, tds.d) or tds.r1b.shape != (tds.d, tds.d):
        raise ParameterError(f"TailDependenceSet 不完整: 需要 {tds.d}x{tds.d} 的 R 矩阵")
    return assemble_h(tds.d, tds.nu2, tds.beta_hat, tds.r11, tds.r1b)


# --- 3. 小矩阵求逆 ---

def invert_matrix(M) -> np.ndarray:
    """Gauss-Jordan 消元 + 部分主元；主元绝对值低于 PIVOT_TOL 时报奇异"""
    a = np.array(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError(f"只能对方阵求逆，收到形状 {a.shape}")
    n = a.shape[0]
    inv = np.eye(n)

    for col in range(n):
        # 1. 选主元并换行
        p = int(np.argmax(np.abs(a[col:, col]))) + col
        if abs(a[p, col]) < PIVOT_TOL:
            raise SingularMatrixError(f"矩阵数值奇异: 第 {col + 1} 列主元 {a[p, col]:.3e} 低于 {PIVOT_TOL:g}")
        if p != col:
            a[[col, p]] = a[[p, col]]
            inv[[col, p]] = inv[[p, col]]

        # 2. 主元行归一
        pivot = a[col, col]
        a[col] /= pivot
        inv[col] /= pivot

        # 3. 消去其余各行
        for row in range(n):
            if row != col and a[row, col] != 0.0:
                lam = a[row, col]
                a[row] -= lam * a[col]
                inv[row] -= lam * inv[col]
    return inv
