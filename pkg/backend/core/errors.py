# backend/core/errors.py
"""
统一异常定义
所有异常都继承 ValueError，API 层统一映射为 400，CLI 层返回退出码 2。
"""


class AdaptedHillError(ValueError):
    """所有可预期错误的基类"""


class ParameterError(AdaptedHillError):
    """参数越界 / 不合法 (k 超范围, p 不在 (0,1) 等)"""


class DomainError(AdaptedHillError):
    """数学定义域错误 (例如对非正数取对数)"""


class SingularMatrixError(AdaptedHillError):
    """矩阵数值奇异 (主元低于阈值)"""


class DegenerateDenominatorError(AdaptedHillError):
    """分母退化 (γ̂ⱼ₊ ≈ 0 或 1 − R̂₂₃² ≈ 0)"""


class IngestionError(AdaptedHillError):
    """数据文件读取错误，带行号/列名"""

    def __init__(self, message: str, row: int = None, column: str = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class SimulationError(AdaptedHillError):
    """蒙特卡洛场景失败 (剔除的重复次数过多等)"""
