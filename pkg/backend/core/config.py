# backend/core/config.py
import os
import re
from typing import Optional, Tuple

from pydantic import ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ParameterError
from ..models import matched_k_plus

BACKEND_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


class Settings(BaseSettings):
    # 1. App 设置
    PROJECT_NAME: str = "Adapted Hill Toolkit"
    API_V1_STR: str = "/api"

    # 2. Server 设置
    API_HOST: str = "0.0.0.0"
    API_PORT: int = 8000
    DEBUG: bool = False

    # 3. 日志 & 计算资源
    LOG_DIR: str = os.path.join(os.path.dirname(BACKEND_DIR), "logs")
    LOG_LEVEL: str = "INFO"
    DEFAULT_THREADS: int = 1
    # 内存任务表里最多保留的已结束任务数
    SIMULATION_TASK_LIMIT: int = 100

    model_config = SettingsConfigDict(
        env_file=os.path.join(BACKEND_DIR, ".env"),
        case_sensitive=True,
        # 【关键】设置为 ignore，.env 里多余的字段自动忽略
        extra="ignore",
    )


# 单例模式，全系统复用
settings = Settings()


_SWEEP_RE = re.compile(r"^\s*(\d+)\s*\.\.\s*(\d+)\s*$")


def parse_k_sweep(raw) -> Optional[Tuple[int, int]]:
    """'40..60' -> (40, 60)；也接受 (lo, hi) / [lo, hi]"""
    if raw is None or raw == "":
        return None
    if isinstance(raw, (tuple, list)):
        if len(raw) != 2:
            raise ParameterError(f"k-sweep 需要两个端点，收到 {raw!r}")
        lo, hi = int(raw[0]), int(raw[1])
    else:
        match = _SWEEP_RE.match(str(raw))
        if not match:
            raise ParameterError(f"k-sweep 格式应为 LO..HI，收到 {raw!r}")
        lo, hi = int(match.group(1)), int(match.group(2))
    if lo < 1 or lo > hi:
        raise ParameterError(f"k-sweep 区间不合法: {lo}..{hi}")
    return lo, hi


class RunConfig(BaseSettings):
    """
    单次运行配置
    来源优先级: 命令行覆盖 > --config 指定的 KEY=VALUE 文件 > 默认值
    (不读取进程环境变量)
    """
    K: int = 100
    K_PLUS: Optional[int] = None
    MATCHED: bool = True
    # 以字符串 "LO..HI" 保存，dotenv 源不会对 str 字段做 JSON 解码
    K_SWEEP: Optional[str] = None
    P: Optional[float] = None
    SEED: int = 20190101
    REPS: int = 10000
    THREADS: int = settings.DEFAULT_THREADS
    OUT: Optional[str] = None
    DELIMITER: str = ","
    TABLE: str = "both"
    ENERGY: bool = False
    ARCHIVE: Optional[str] = None

    model_config = SettingsConfigDict(case_sensitive=True, extra="ignore")

    @classmethod
    def settings_customise_sources(cls, settings_cls, init_settings, env_settings,
                                   dotenv_settings, file_secret_settings):
        # 只保留 init (命令行) 和 dotenv (配置文件)
        return init_settings, dotenv_settings

    @field_validator("K_SWEEP", mode="before")
    @classmethod
    def _parse_sweep(cls, v):
        bounds = parse_k_sweep(v)
        if bounds is None:
            return None
        return f"{bounds[0]}..{bounds[1]}"

    @field_validator("DELIMITER", mode="before")
    @classmethod
    def _parse_delimiter(cls, v):
        if v is None:
            return ","
        if str(v).lower() in ("tab", "\\t", "\t"):
            return "\t"
        return str(v)

    @field_validator("TABLE")
    @classmethod
    def _check_table(cls, v):
        if v not in ("table-1", "table-2", "both"):
            raise ParameterError(f"TABLE 只能是 table-1 / table-2 / both，收到 {v!r}")
        return v

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.K < 1:
            raise ParameterError(f"K 必须 >= 1，收到 {self.K}")
        if self.P is not None and not (0.0 < self.P < 1.0):
            raise ParameterError(f"P 必须位于 (0,1)，收到 {self.P}")
        if self.THREADS < 1:
            raise ParameterError(f"THREADS 必须 >= 1，收到 {self.THREADS}")
        if self.REPS < 2:
            raise ParameterError(f"REPS 必须 >= 2，收到 {self.REPS}")
        if self.K_PLUS is not None and self.K_PLUS <= self.K:
            raise ParameterError(f"K_PLUS ({self.K_PLUS}) 必须大于 K ({self.K})")
        return self

    @property
    def k_values(self):
        """扫描的 k 列表 (未设置 K_SWEEP 时只有 K)"""
        if self.K_SWEEP is None:
            return [self.K]
        lo, hi = parse_k_sweep(self.K_SWEEP)
        return list(range(lo, hi + 1))

    def k_plus_for(self, k: int, n: int, m: int) -> Optional[int]:
        """
        按配置给出 k 对应的 k₊
        - 显式 K_PLUS：只允许单个 k (或者它恰好满足匹配规则)
        - 匹配规则：k₊ = round(k(n+m)/n)，.5 向上取
        """
        if m == 0:
            return None
        if self.K_PLUS is not None:
            if self.MATCHED and self.K_PLUS * n != k * (n + m):
                raise ParameterError(
                    f"K_PLUS={self.K_PLUS} 与匹配规则冲突 (k={k}, n={n}, m={m})；显式 k₊ 请加 MATCHED=false"
                )
            return self.K_PLUS
        return matched_k_plus(k, n, m)

    def validate_for_sample(self, n: int, m: int):
        """执行前检查：扫描区间与样本量是否相容"""
        ks = self.k_values
        if ks[-1] > n - 1:
            raise ParameterError(f"k={ks[-1]} 超出范围，需满足 k <= n-1 = {n - 1}")
        if self.K_PLUS is not None and len(ks) > 1:
            raise ParameterError("显式 K_PLUS 只能配合单个 k 使用；扫描请用匹配规则")
        if m > 0:
            for k in (ks[0], ks[-1]):
                kp = self.k_plus_for(k, n, m)
                if kp is not None and kp > n + m - 1:
                    raise ParameterError(f"k₊={kp} 超出范围，需满足 k₊ <= n+m-1 = {n + m - 1}")


def load_run_config(config_path: Optional[str] = None, **overrides) -> RunConfig:
    """
    读取扁平 KEY=VALUE 配置文件，再用命令行参数覆盖
    overrides 中值为 None 的项视为未指定
    """
    clean = {k: v for k, v in overrides.items() if v is not None}
    if config_path is not None and not os.path.exists(config_path):
        raise ParameterError(f"配置文件不存在: {config_path}")
    try:
        return RunConfig(_env_file=config_path, **clean)
    except ValidationError as e:
        # 把 pydantic 的多行报错压成一行
        reasons = "; ".join(f"{'.'.join(map(str, err['loc'])) or 'config'}: {err['msg']}" for err in e.errors())
        raise ParameterError(f"配置不合法: {reasons}") from e
