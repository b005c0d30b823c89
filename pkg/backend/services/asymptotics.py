# backend/services/asymptotics.py
import logging
from typing import Optional

import numpy as np

from ..core.errors import ParameterError
from ..models import SecondOrderParams, TheoryParams
from .tail_dependence import assemble_h, invert_matrix

logger = logging.getLogger("Asymptotics")

# 理论值计算，全部输入都是真值而非估计值
# 约定：向量 (γ̂₁, γ̂₂, γ̂₂₊, ..., γ̂_d, γ̂_d₊)
#   γ̂₁, γ̂ⱼ 以 √k 标准化，γ̂ⱼ₊ 以 √k₊ 标准化


def _idx(j: int, plus: bool) -> int:
    """变量 j (0-based, j >= 1) 在 (2d−1) 维向量中的位置"""
    return 2 * j if plus else 2 * j - 1


def theory_h(params: TheoryParams) -> np.ndarray:
    return assemble_h(params.d, params.nu2, params.beta, params.r11, params.r1b)


def _inverse_first_row(params: TheoryParams):
    H = theory_h(params)
    H_inv = invert_matrix(H)
    return H, H_inv[0]


def _weights(params: TheoryParams) -> np.ndarray:
    """a = (1, (γ₁/γⱼ)·H⁻¹₁ⱼ/H⁻¹₁₁, ...)"""
    _, row = _inverse_first_row(params)
    g = params.gammas
    a = np.empty(params.d)
    a[0] = 1.0
    a[1:] = (g[0] / g[1:]) * row[1:] / row[0]
    return a


def _check_second_order(params: TheoryParams, so: SecondOrderParams):
    if so.lambdas.shape[0] != params.d:
        raise ParameterError(f"二阶参数个数 {so.lambdas.shape[0]} 与维度 d={params.d} 不一致")


# --- 1. 协方差矩阵 ---

def breve_sigma(params: TheoryParams) -> np.ndarray:
    """全部 2d−1 个 Hill 估计量的联合渐近协方差"""
    d = params.d
    g = params.gammas
    nu = np.sqrt(params.nu2)
    beta = params.beta
    R, Rb = params.r11, params.r1b
    S = np.zeros((2 * d - 1, 2 * d - 1))

    S[0, 0] = g[0] ** 2
    for j in range(1, d):
        a, b = _idx(j, False), _idx(j, True)
        # 1. 与 γ̂₁ 的协方差
        S[0, a] = S[a, 0] = R[0, j] * g[0] * g[j]
        S[0, b] = S[b, 0] = nu * Rb[0, j] * g[0] * g[j]
        # 2. 同一变量的两个估计
        S[a, a] = S[b, b] = g[j] ** 2
        S[a, b] = S[b, a] = nu * beta * g[j] ** 2
        # 3. 不同相关变量之间
        for i in range(1, j):
            ai, bi = _idx(i, False), _idx(i, True)
            gg = g[i] * g[j]
            S[ai, a] = S[a, ai] = R[i, j] * gg
            S[ai, b] = S[b, ai] = nu * Rb[i, j] * gg
            S[bi, a] = S[a, bi] = nu * Rb[j, i] * gg
            S[bi, b] = S[b, bi] = R[i, j] * gg
    return S


def breve_mu(params: TheoryParams, so: SecondOrderParams) -> np.ndarray:
    """与 breve_sigma 同序的渐近均值 (偏差) 向量"""
    _check_second_order(params, so)
    nu = np.sqrt(params.nu2)
    lam, rho = so.lambdas, so.rhos
    mu = np.zeros(2 * params.d - 1)
    mu[0] = lam[0] / (1.0 - rho[0])
    for j in range(1, params.d):
        mu[_idx(j, False)] = lam[j] / (1.0 - rho[j])
        mu[_idx(j, True)] = lam[j] * params.beta ** (-rho[j]) / (nu * (1.0 - rho[j]))
    return mu


def corollary_covariance(params: TheoryParams) -> np.ndarray:
    """Σ_d = ΓΓᵀ ∘ H，对应向量 (γ̂₁, γ̂₂₊−γ̂₂, ..., γ̂_d₊−γ̂_d) 在 √k 尺度下"""
    return np.outer(params.gammas, params.gammas) * theory_h(params)


def corollary_mean(params: TheoryParams, so: SecondOrderParams) -> np.ndarray:
    _check_second_order(params, so)
    lam, rho = so.lambdas, so.rhos
    mu = np.empty(params.d)
    mu[0] = lam[0] / (1.0 - rho[0])
    mu[1:] = lam[1:] * (params.beta ** (-rho[1:]) - 1.0) / (1.0 - rho[1:])
    return mu


# --- 2. 渐近方差 ---

def asymp_variance_bivariate(params: TheoryParams) -> float:
    """γ₁²[1 − (R(1,1) − ν²R(1,β))² / (1 + ν² − 2ν²β)]"""
    if params.d != 2:
        raise ParameterError(f"asymp_variance_bivariate 只接受 d=2，收到 d={params.d}")
    denominator = 1.0 + params.nu2 - 2.0 * params.nu2 * params.beta
    if denominator <= 0:
        raise ParameterError(f"1 + ν² − 2ν²β = {denominator:.6g} 非正")
    numerator = params.r11[0, 1] - params.nu2 * params.r1b[0, 1]
    return float(params.gammas[0] ** 2 * (1.0 - numerator ** 2 / denominator))


def asymp_variance_multivariate(params: TheoryParams) -> float:
    """
    用 H⁻¹ 第一行逐项展开：
    σ² = γ₁²(1 − [2H⁻¹₁₁ Σⱼ H⁻¹₁ⱼ(R₁ⱼ(1,1) − ν²R₁ⱼ(1,β))
                  − h Σⱼ (H⁻¹₁ⱼ)² − 2 Σ_{i<j} hᵢⱼ H⁻¹₁ᵢ H⁻¹₁ⱼ] / (H⁻¹₁₁)²)
    """
    H, row = _inverse_first_row(params)
    d = params.d
    h = 1.0 + params.nu2 - 2.0 * params.nu2 * params.beta

    cross = sum(row[j] * (params.r11[0, j] - params.nu2 * params.r1b[0, j]) for j in range(1, d))
    square = sum(row[j] ** 2 for j in range(1, d))
    pairs = sum(H[i, j] * row[i] * row[j] for i in range(1, d) for j in range(i + 1, d))
    bracket = 2.0 * row[0] * cross - h * square - 2.0 * pairs
    return float(params.gammas[0] ** 2 * (1.0 - bracket / row[0] ** 2))


def asymp_variance_quadratic_form(params: TheoryParams) -> float:
    """aᵀ Σ_d a，与逐项展开的结果互相校验"""
    a = _weights(params)
    return float(a @ corollary_covariance(params) @ a)


def asymp_bias(params: TheoryParams, so: SecondOrderParams) -> float:
    """λ₁/(1−ρ₁) + Σⱼ (γ₁/γⱼ)(H⁻¹₁ⱼ/H⁻¹₁₁)·λⱼ(β^(−ρⱼ)−1)/(1−ρⱼ)"""
    return float(_weights(params) @ corollary_mean(params, so))


# --- 3. 方差缩减 ---

def variance_reduction(params: TheoryParams) -> float:
    """1 − σ²/γ₁²"""
    return float(1.0 - asymp_variance_multivariate(params) / params.gammas[0] ** 2)


def variance_reduction_matched(nu2: float, r12: float, r13: Optional[float] = None,
                               r23: Optional[float] = None) -> float:
    """
    β = 1 时的闭式：
      d=2: (1−ν²)R²
      d=3: (1−ν²)(R₁₂² + R₁₃² − 2R₁₂R₁₃R₂₃)/(1 − R₂₃²)
    """
    if not (0.0 < nu2 < 1.0):
        raise ParameterError(f"ν² 必须位于 (0,1)，收到 {nu2}")
    if r13 is None and r23 is None:
        return float((1.0 - nu2) * r12 ** 2)
    if r13 is None or r23 is None:
        raise ParameterError("d=3 需要同时给出 r13 和 r23")
    denominator = 1.0 - r23 ** 2
    if denominator <= 0:
        raise ParameterError(f"1 − R₂₃² = {denominator:.6g} 非正")
    return float((1.0 - nu2) * (r12 ** 2 + r13 ** 2 - 2.0 * r12 * r13 * r23) / denominator)


# --- 4. logistic 模型的理论尾部 copula ---

def logistic_tail_copula(theta: float, x: float, y: float) -> float:
    """R(x,y) = x + y − (x^(1/θ) + y^(1/θ))^θ，对数尺度计算避免 θ 很小时溢出"""
    if not (0.0 < theta <= 1.0):
        raise ParameterError(f"theta 必须位于 (0,1]，收到 {theta}")
    if x < 0 or y < 0:
        raise ParameterError(f"取值点必须非负，收到 ({x}, {y})")
    if x == 0 or y == 0:
        return 0.0
    norm = np.exp(theta * np.logaddexp(np.log(x) / theta, np.log(y) / theta))
    return float(x + y - norm)


def logistic_matched_reduction(theta: float, d: int, nu2: float) -> float:
    """对称 logistic 模型在匹配 k₊ 下的理论方差缩减 (所有 Rᵢⱼ(1,1) 相同)"""
    r = logistic_tail_copula(theta, 1.0, 1.0)
    R = np.full((d, d), r)
    np.fill_diagonal(R, 1.0)
    return variance_reduction(TheoryParams.matched(np.ones(d), nu2, R))
