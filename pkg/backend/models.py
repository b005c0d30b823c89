from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .core.errors import ParameterError

# 所有模块共用的领域对象 (纯数据 + 轻量校验)


# ---------------------------------------------------------------
# 1. 随机数流
# ---------------------------------------------------------------

@dataclass(frozen=True)
class StreamSpec:
    """
    (master_seed, stream_index) 唯一确定一条随机流
    每次重复实验 (replication) 用自己的 stream_index，与线程/进程数无关
    """
    master_seed: int
    stream_index: int

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ParameterError(f"master_seed 必须是 64 位无符号整数，收到 {self.master_seed}")
        if int(self.stream_index) < 0:
            raise ParameterError(f"stream_index 必须 >= 0，收到 {self.stream_index}")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([int(self.master_seed), int(self.stream_index)]))


@dataclass(frozen=True)
class ScaleMatrix:
    """
    限制在第一象限/卦限的 Cauchy 分布的尺度矩阵 S
    对角线为 1，非对角为 s；d=3 时 S₂₃ = S₃₂ = r
    """
    d: int
    s: float
    r: Optional[float] = None

    def __post_init__(self):
        if self.d < 2:
            raise ParameterError(f"维度 d 必须 >= 2，收到 {self.d}")
        try:
            np.linalg.cholesky(self.matrix)
        except np.linalg.LinAlgError:
            raise ParameterError(f"尺度矩阵非正定: d={self.d}, s={self.s}, r={self.r}")

    @property
    def matrix(self) -> np.ndarray:
        S = np.full((self.d, self.d), float(self.s))
        if self.d == 3 and self.r is not None:
            S[1, 2] = S[2, 1] = float(self.r)
        np.fill_diagonal(S, 1.0)
        return S


@dataclass(frozen=True)
class LogisticParam:
    """对称 logistic 模型 exp{−(Σ xᵢ^(−1/θ))^θ}，θ=1 为独立，θ↓0 为完全尾部相关"""
    theta: float
    d: int

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise ParameterError(f"theta 必须位于 (0,1]，收到 {self.theta}")
        if self.d < 2:
            raise ParameterError(f"维度 d 必须 >= 2，收到 {self.d}")


# ---------------------------------------------------------------
# 2. 估计量相关
# ---------------------------------------------------------------

@dataclass(frozen=True)
class SortedSample:
    """升序次序统计量 X_{1,n} <= ... <= X_{n,n} (0-based 存储)"""
    values: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def order_stat(self, i: int) -> float:
        """X_{i,n}，i 从 1 开始 (第 i 小)；下标换算只在这里做"""
        return float(self.values[i - 1])


def matched_k_plus(k: int, n: int, m: int) -> int:
    """k/k₊ = n/(n+m) 的整数解，四舍五入 (.5 向上)"""
    return (2 * k * (n + m) + n) // (2 * n)


@dataclass(frozen=True)
class TuningParams:
    k: int
    k_plus: int
    n: int
    m: int

    def __post_init__(self):
        if not (1 <= self.k <= self.n - 1):
            raise ParameterError(f"k={self.k} 越界，需满足 1 <= k <= n-1 = {self.n - 1}")
        if not (self.k < self.k_plus <= self.n + self.m - 1):
            raise ParameterError(
                f"k₊={self.k_plus} 越界，需满足 k < k₊ <= n+m-1 (k={self.k}, n+m-1={self.n + self.m - 1})"
            )

    @classmethod
    def matched(cls, k: int, n: int, m: int) -> "TuningParams":
        return cls(k=k, k_plus=matched_k_plus(k, n, m), n=n, m=m)

    @property
    def nu2(self) -> float:
        return self.k / self.k_plus

    @property
    def beta_hat(self) -> float:
        return (self.n * self.k_plus) / ((self.n + self.m) * self.k)

    @property
    def is_matched(self) -> bool:
        # 整数运算判断 k/k₊ = n/(n+m)，避免浮点误差
        return self.k * (self.n + self.m) == self.k_plus * self.n

    @property
    def k_beta(self) -> int:
        """⌊k·β̂⌋ = ⌊n·k₊/(n+m)⌋，精确整数运算"""
        return (self.n * self.k_plus) // (self.n + self.m)

    def to_dict(self) -> dict:
        return {"k": self.k, "k_plus": self.k_plus, "n": self.n, "m": self.m,
                "nu2": self.nu2, "beta_hat": self.beta_hat}


@dataclass
class TailDependenceSet:
    """
    R̂ᵢⱼ 在 H 矩阵需要的点上的取值 (下标 0 = 关注变量 X，1..d-1 = 相关变量)
    r11[i, j] = R̂ᵢⱼ(1,1)，对称，对角线记为 1
    r1b[i, j] = R̂ᵢⱼ(1,β̂)，于是 R̂ᵢⱼ(β̂,1) = r1b[j, i]；β̂ = 1 时 r1b 与 r11 相同
    """
    d: int
    beta_hat: float
    nu2: float
    r11: np.ndarray
    r1b: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def collapsed(self) -> bool:
        """匹配模式下只需要 (1,1) 点"""
        return self.beta_hat == 1.0

    def value(self, i: int, j: int, x: str = "1", y: str = "1") -> float:
        """按 (x, y) ∈ {"1","b"} 读取 R̂ᵢⱼ(x,y)，存储只保存一份"""
        if x == "1" and y == "1":
            return float(self.r11[i, j])
        if x == "1" and y == "b":
            return float(self.r1b[i, j])
        if x == "b" and y == "1":
            return float(self.r1b[j, i])
        raise ParameterError(f"不支持的取值点 ({x}, {y})")

    def to_dict(self) -> Dict[str, float]:
        out = {}
        for i in range(self.d):
            for j in range(i + 1, self.d):
                out[f"R{i + 1}{j + 1}(1,1)"] = float(self.r11[i, j])
                if not self.collapsed:
                    out[f"R{i + 1}{j + 1}(1,b)"] = float(self.r1b[i, j])
                    out[f"R{i + 1}{j + 1}(b,1)"] = float(self.r1b[j, i])
        return out


@dataclass
class EstimateReport:
    gamma1_hill: float
    gamma_adapted: float
    # 每个相关变量的 (γ̂ⱼ, γ̂ⱼ₊)
    triples: List[Tuple[float, float]]
    # cⱼ = (γ̂₁/γ̂ⱼ₊)·(Ĥ⁻¹₁ⱼ/Ĥ⁻¹₁₁)
    coefficients: List[float]
    tuning: TuningParams
    reduction: float
    std_error: float
    tail_dependence: Optional[TailDependenceSet] = None
    warnings: List[str] = field(default_factory=list)

    def reconstruct(self) -> float:
        """γ̂₁ + Σⱼ cⱼ(γ̂ⱼ₊ − γ̂ⱼ)，与构造时的表达式完全一致"""
        coefs = np.asarray(self.coefficients, dtype=float)
        updates = np.asarray([gp - g for g, gp in self.triples], dtype=float)
        return float(self.gamma1_hill + np.sum(coefs * updates))

    def to_dict(self) -> dict:
        return {
            "gamma1_hill": self.gamma1_hill,
            "gamma_adapted": self.gamma_adapted,
            "triples": [list(t) for t in self.triples],
            "coefficients": list(self.coefficients),
            "tuning": self.tuning.to_dict(),
            "reduction": self.reduction,
            "std_error": self.std_error,
            "tail_dependence": self.tail_dependence.to_dict() if self.tail_dependence else {},
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------
# 3. 渐近理论参数
# ---------------------------------------------------------------

@dataclass
class TheoryParams:
    """
    理论值 (非估计值)：γ₁..γ_d, ν², β 以及 R 在 (1,1)/(1,β) 点的取值
    r11 / r1b 的约定与 TailDependenceSet 相同
    """
    gammas: np.ndarray
    nu2: float
    beta: float
    r11: np.ndarray
    r1b: np.ndarray

    def __post_init__(self):
        self.gammas = np.asarray(self.gammas, dtype=float)
        self.r11 = np.asarray(self.r11, dtype=float)
        self.r1b = np.asarray(self.r1b, dtype=float)
        d = self.gammas.shape[0]
        if d < 2:
            raise ParameterError(f"维度 d 必须 >= 2，收到 {d}")
        if np.any(self.gammas <= 0):
            raise ParameterError("所有 γⱼ 必须为正")
        if not (0.0 < self.nu2 < 1.0):
            raise ParameterError(f"ν² 必须位于 (0,1)，收到 {self.nu2}")
        # β > 1 只在有限样本 plug-in 时出现，理论公式不外推
        if not (0.0 < self.beta <= 1.0):
            raise ParameterError(f"β 必须位于 (0,1]，收到 {self.beta}")
        if self.r11.shape != (d, d) or self.r1b.shape != (d, d):
            raise ParameterError(f"R 矩阵维度必须是 {d}x{d}")
        off = ~np.eye(d, dtype=bool)
        if np.any(self.r11[off] < 0) or np.any(self.r11[off] > 1):
            raise ParameterError("R(1,1) 必须位于 [0,1]")
        if np.any(self.r1b[off] < 0) or np.any(self.r1b[off] > self.beta + 1e-15):
            raise ParameterError(f"R(1,β) 必须位于 [0, β={self.beta}]")
        if not np.allclose(self.r11, self.r11.T):
            raise ParameterError("R(1,1) 矩阵必须对称")

    @property
    def d(self) -> int:
        return int(self.gammas.shape[0])

    @classmethod
    def matched(cls, gammas, nu2: float, r11) -> "TheoryParams":
        """β = 1：R(1,β) = R(1,1)"""
        r11 = np.asarray(r11, dtype=float)
        return cls(gammas=gammas, nu2=nu2, beta=1.0, r11=r11, r1b=r11.copy())

    @classmethod
    def bivariate(cls, gamma1: float, gamma2: float, nu2: float, beta: float,
                  r11: float, r1b: float = None) -> "TheoryParams":
        r1b = r11 if r1b is None else r1b
        R11 = np.array([[1.0, r11], [r11, 1.0]])
        # 对角项不参与公式，只占位
        R1B = np.array([[beta, r1b], [r1b, beta]])
        return cls(gammas=[gamma1, gamma2], nu2=nu2, beta=beta, r11=R11, r1b=R1B)


@dataclass
class SecondOrderParams:
    lambdas: np.ndarray
    rhos: np.ndarray

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.rhos = np.asarray(self.rhos, dtype=float)
        if self.lambdas.shape != self.rhos.shape:
            raise ParameterError("lambdas 与 rhos 长度必须一致")
        if np.any(self.rhos > 0):
            raise ParameterError("所有 ρⱼ 必须 <= 0")


# ---------------------------------------------------------------
# 4. 数据 & 蒙特卡洛
# ---------------------------------------------------------------

@dataclass
class PairedSample:
    """
    x       : n 个关注变量观测
    y       : n×(d-1) 相关变量 (与 x 同期)
    y_extra : m×(d-1) 只有相关变量的额外观测
    """
    x: np.ndarray
    y: np.ndarray
    y_extra: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim == 1:
            self.y = self.y.reshape(-1, 1)
        self.y_extra = np.asarray(self.y_extra, dtype=float)
        if self.y_extra.size == 0:
            self.y_extra = self.y_extra.reshape(0, self.y.shape[1])
        elif self.y_extra.ndim == 1:
            self.y_extra = self.y_extra.reshape(-1, 1)
        if self.x.shape[0] < 3:
            raise ParameterError(f"至少需要 3 个完整观测，收到 n={self.x.shape[0]}")
        if self.y.shape[0] != self.x.shape[0]:
            raise ParameterError(f"x 与 y 行数不一致: {self.x.shape[0]} vs {self.y.shape[0]}")
        if self.y.shape[1] < 1 or self.y_extra.shape[1] != self.y.shape[1]:
            raise ParameterError("y 与 y_extra 的列数必须一致且 >= 1")
        for name, arr in (("x", self.x), ("y", self.y), ("y_extra", self.y_extra)):
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"{name} 含有非有限值")

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def m(self) -> int:
        return int(self.y_extra.shape[0])

    @property
    def d(self) -> int:
        return int(self.y.shape[1]) + 1

    def joint(self) -> np.ndarray:
        """n×d 联合样本矩阵，第 0 列为 x"""
        return np.column_stack([self.x, self.y])

    def related_full(self, j: int) -> np.ndarray:
        """第 j 个相关变量 (0-based) 的全部 n+m 个观测"""
        return np.concatenate([self.y[:, j], self.y_extra[:, j]])


@dataclass(frozen=True)
class DistributionSpec:
    """模拟分布：kind = 'cauchy' (s, r) 或 'logistic' (theta)"""
    kind: str
    d: int
    s: float = 0.0
    r: Optional[float] = None
    theta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cauchy", "logistic"):
            raise ParameterError(f"未知分布类型: {self.kind}")
        if self.kind == "cauchy":
            ScaleMatrix(self.d, self.s, self.r)
        else:
            LogisticParam(self.theta, self.d)

    @property
    def label(self) -> str:
        if self.kind == "cauchy":
            if self.d == 3:
                r = self.s if self.r is None else self.r
                return f"cauchy d=3 s={self.s:g} r={r:g}"
            return f"cauchy d=2 s={self.s:g}"
        return f"logistic d={self.d} theta={self.theta:g}"


@dataclass(frozen=True)
class Scenario:
    distribution: DistributionSpec
    n: int
    m: int
    k: int
    k_plus: Optional[int] = None  # None = 匹配规则
    replications: int = 10000
    master_seed: int = 20190101

    def __post_init__(self):
        if self.replications < 2:
            raise ParameterError(f"replications 必须 >= 2，收到 {self.replications}")
        # 提前校验 (k, k₊) 组合
        self.tuning()

    def tuning(self) -> TuningParams:
        if self.k_plus is None:
            return TuningParams.matched(self.k, self.n, self.m)
        return TuningParams(self.k, self.k_plus, self.n, self.m)


@dataclass
class BoxplotStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    low_outliers: int
    high_outliers: int

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    def to_dict(self) -> dict:
        return {"min": self.minimum, "q1": self.q1, "median": self.median, "q3": self.q3,
                "max": self.maximum, "iqr": self.iqr,
                "low_outliers": self.low_outliers, "high_outliers": self.high_outliers}


@dataclass
class ScenarioResult:
    scenario: Scenario
    var_hill: float
    var_adapted: float
    reduction_pct: float
    mean_hill: float
    mean_adapted: float
    mse_hill: float
    mse_adapted: float
    box_hill: BoxplotStats
    box_adapted: BoxplotStats
    replications_used: int
    warnings_tally: Dict[str, int] = field(default_factory=dict)
    # 每次重复的估计值，按 replication 下标存放 (剔除的为 NaN)
    hill_estimates: Optional[np.ndarray] = None
    adapted_estimates: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.distribution.label,
            "n": self.scenario.n, "m": self.scenario.m, "k": self.scenario.k,
            "k_plus": self.scenario.tuning().k_plus,
            "var_hill": self.var_hill, "var_adapted": self.var_adapted,
            "reduction_pct": self.reduction_pct,
            "mean_hill": self.mean_hill, "mean_adapted": self.mean_adapted,
            "mse_hill": self.mse_hill, "mse_adapted": self.mse_adapted,
            "box_hill": self.box_hill.to_dict(), "box_adapted": self.box_adapted.to_dict(),
            "replications_used": self.replications_used,
            "warnings_tally": dict(self.warnings_tally),
        }


@dataclass
class TablesResult:
    """reproduce_tables 的输出：逐格长表 + 汇总标记"""
    # 列: table, column, distribution, n, m, k, k_plus, reduction_pct, printed_pct,
    #     theory_pct, deviation, status, message
    cells: pd.DataFrame
    replications: int
    # 重复次数低于 10000 时容差没有意义，只做冒烟检查
    caveat: bool
    failed: List[str] = field(default_factory=list)


@dataclass
class SweepReport:
    """estimate / quantile 扫描结果：每个 k 一行，外加 k 区间平均"""
    rows: pd.DataFrame
    averages: Dict[str, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
