# backend/services/sampling.py
import logging
import math
from typing import Tuple

import numpy as np

from ..core.errors import ParameterError
from ..models import DistributionSpec, LogisticParam, ScaleMatrix, StreamSpec

logger = logging.getLogger("Sampling")

# 所有采样函数都接受 StreamSpec 或已经建好的 Generator：
# 同一次重复实验里的多次抽样必须顺序消费同一条流


def _rng(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, StreamSpec):
        return stream.generator()
    raise ParameterError(f"stream 必须是 StreamSpec 或 numpy Generator，收到 {type(stream).__name__}")


def _check_count(count: int, allow_zero: bool = False):
    if count < 0 or (count == 0 and not allow_zero):
        raise ParameterError(f"count 必须 >= {0 if allow_zero else 1}，收到 {count}")


# --- 1. 精确 Pareto (Hill 估计的测试基准) ---

def pareto_from_uniform(gamma: float, u):
    """逆变换 U^(−γ)"""
    return np.power(u, -gamma)


def sample_pareto(gamma: float, count: int, stream) -> np.ndarray:
    if not gamma > 0:
        raise ParameterError(f"gamma 必须为正，收到 {gamma}")
    _check_count(count)
    rng = _rng(stream)
    # random() 取值 [0,1)，用 1-u 避开 0
    u = 1.0 - rng.random(count)
    return pareto_from_uniform(gamma, u)


# --- 2. 第一象限/卦限上的多元 Cauchy ---

def _cauchy_proposals(chol: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """多元 t(1 自由度)：N(0,S) / sqrt(χ²₁)"""
    d = chol.shape[0]
    z = rng.standard_normal((size, d)) @ chol.T
    w = rng.chisquare(1.0, size)
    return z / np.sqrt(w)[:, None]


def _scale_cholesky(scale: ScaleMatrix) -> np.ndarray:
    try:
        return np.linalg.cholesky(scale.matrix)
    except np.linalg.LinAlgError:
        raise ParameterError(f"尺度矩阵非正定: s={scale.s}, r={scale.r}")


def sample_orthant_cauchy(scale: ScaleMatrix, count: int, stream) -> np.ndarray:
    """
    拒绝采样：只接受全部分量为正的提议点
    接受率 >= 2^(−d)，正相关时更高
    """
    _check_count(count)
    chol = _scale_cholesky(scale)
    rng = _rng(stream)
    d = scale.d

    accepted = []
    n_accepted = 0
    rate = 0.5 ** d
    while n_accepted < count:
        need = count - n_accepted
        batch = int(math.ceil(need / rate * 1.1)) + 16
        proposals = _cauchy_proposals(chol, batch, rng)
        keep = proposals[np.all(proposals > 0, axis=1)]
        if keep.shape[0] > 0:
            rate = max(rate, keep.shape[0] / batch)
        accepted.append(keep[:need])
        n_accepted += min(keep.shape[0], need)
    return np.vstack(accepted)


def orthant_acceptance_rate(scale: ScaleMatrix, proposals: int, stream) -> float:
    """拒绝循环的接受率诊断：proposals 个提议点中全正的比例"""
    _check_count(proposals)
    chol = _scale_cholesky(scale)
    points = _cauchy_proposals(chol, proposals, _rng(stream))
    return float(np.mean(np.all(points > 0, axis=1)))


# --- 3. 正稳定分布 (logistic 模型的混合变量) ---

def _log_positive_stable(theta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """log S，在对数尺度上计算，θ 很小时指数 (1−θ)/θ 很大，避免溢出"""
    # (0, π) 开区间
    u = np.pi * (1.0 - rng.random(count))
    e = rng.standard_exponential(count)
    log_a = (theta / (1.0 - theta) * np.log(np.sin(theta * u))
             + np.log(np.sin((1.0 - theta) * u))
             - np.log(np.sin(u)) / (1.0 - theta))
    return (1.0 - theta) / theta * (log_a - np.log(e))


def sample_positive_stable(theta: float, count: int, stream) -> np.ndarray:
    """
    Kanter 表示：U ~ Uniform(0,π), E ~ Exp(1)
    A(U) = sin(θU)^(θ/(1−θ)) · sin((1−θ)U) / sin(U)^(1/(1−θ))
    S = (A(U)/E)^((1−θ)/θ)，满足 E[exp(−tS)] = exp(−t^θ)
    """
    if not (0.0 < theta < 1.0):
        raise ParameterError(f"theta 必须位于 (0,1)，收到 {theta}")
    _check_count(count, allow_zero=True)
    rng = _rng(stream)
    if count == 0:
        return np.empty(0)
    return np.exp(_log_positive_stable(theta, count, rng))


# --- 4. 对称 logistic (标准 Fréchet 边缘) ---

def sample_logistic(param: LogisticParam, count: int, stream) -> np.ndarray:
    """
    Xᵢ = (S/Eᵢ)^θ，S 为共享的正稳定变量，Eᵢ 独立单位指数
    θ = 1 时稳定构造退化，直接生成 d 个独立 Fréchet (1/E)
    """
    _check_count(count)
    rng = _rng(stream)
    d = param.d
    if param.theta == 1.0:
        return 1.0 / rng.standard_exponential((count, d))
    log_s = _log_positive_stable(param.theta, count, rng)
    e = rng.standard_exponential((count, d))
    return np.exp(param.theta * (log_s[:, None] - np.log(e)))


# --- 5. 单次重复实验的完整抽样 ---

def _draw(distribution: DistributionSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    if distribution.kind == "cauchy":
        return sample_orthant_cauchy(ScaleMatrix(distribution.d, distribution.s, distribution.r), count, rng)
    return sample_logistic(LogisticParam(distribution.theta, distribution.d), count, rng)


def sample_scenario(distribution: DistributionSpec, n: int, m: int, stream) -> Tuple[np.ndarray, np.ndarray]:
    """
    先抽 n 个联合观测，再抽 m 个额外观测 (只保留相关变量)
    额外观测来自 F_-，即同一联合分布丢掉第一列
    """
    rng = _rng(stream)
    joint = _draw(distribution, n, rng)
    if m == 0:
        return joint, np.empty((0, distribution.d - 1))
    extra = _draw(distribution, m, rng)[:, 1:]
    return joint, extra
