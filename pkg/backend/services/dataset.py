# backend/services/dataset.py
import logging
import os
from typing import List, Optional

import numpy as np
import pandas as pd

from ..core.errors import IngestionError
from ..models import PairedSample

logger = logging.getLogger("Dataset")

# 文件格式：带表头的分隔文本，列 x, y2, ..., yd
# x 为空的行只含相关变量，进入 y_extra
# 行号一律是数据行号 (表头不计)，从 1 开始


def _read_raw(path: str, delimiter: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise IngestionError(f"文件不存在: {path}")
    try:
        # 全部按字符串读入，自己做数值解析才能报出行列
        df = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise IngestionError(f"文件为空或缺少表头: {path}")
    df.columns = [str(c).strip() for c in df.columns]
    return df


def _related_columns(df: pd.DataFrame, path: str) -> List[str]:
    cols = []
    j = 2
    while f"y{j}" in df.columns:
        cols.append(f"y{j}")
        j += 1
    if not cols:
        raise IngestionError(f"缺少表头或相关变量列 (需要 y2, y3, ...): {path}")
    return cols


def _parse(value: str, row: int, column: str) -> float:
    text = value.strip()
    try:
        number = float(text)
    except ValueError:
        raise IngestionError(f"非数值字段 {value!r}", row=row, column=column)
    if not np.isfinite(number):
        raise IngestionError(f"非有限数值 {value!r}", row=row, column=column)
    return number


def _parse_related(record, columns: List[str], row: int) -> List[float]:
    values = []
    for col in columns:
        text = record[col]
        if text.strip() == "":
            raise IngestionError("缺少相关变量取值", row=row, column=col)
        values.append(_parse(text, row, col))
    return values


def load_dataset(path: str, delimiter: str = ",", extra_path: Optional[str] = None) -> PairedSample:
    """
    1. 读表头，校验 x 与 y2..yd
    2. 逐行解析：x 非空为完整观测，x 为空为额外观测
    3. 可选第二个文件 (只含 y 列) 追加到 y_extra
    """
    df = _read_raw(path, delimiter)
    if "x" not in df.columns:
        raise IngestionError(f"缺少表头或 x 列: {path}")
    related = _related_columns(df, path)

    x, y, y_extra = [], [], []
    for i, record in enumerate(df.to_dict("records"), start=1):
        x_text = record["x"].strip()
        values = _parse_related(record, related, i)
        if x_text == "":
            y_extra.append(values)
        else:
            x.append(_parse(x_text, i, "x"))
            y.append(values)

    if extra_path is not None:
        extra_df = _read_raw(extra_path, delimiter)
        extra_related = _related_columns(extra_df, extra_path)
        if extra_related != related:
            raise IngestionError(f"额外文件的相关变量列 {extra_related} 与主文件 {related} 不一致")
        for i, record in enumerate(extra_df.to_dict("records"), start=1):
            y_extra.append(_parse_related(record, related, i))

    if not x:
        raise IngestionError(f"没有完整观测 (x 非空的行): {path}")

    d = len(related) + 1
    sample = PairedSample(
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float).reshape(-1, d - 1),
        y_extra=np.asarray(y_extra, dtype=float).reshape(-1, d - 1),
    )
    logger.info(f"📥 读取 {path}: n={sample.n}, m={sample.m}, d={sample.d}")
    return sample


def write_dataset(sample: PairedSample, path: str, delimiter: str = ",") -> str:
    """写出后再读入数值完全一致 (17 位有效数字)"""
    related = [f"y{j}" for j in range(2, sample.d + 1)]
    complete = pd.DataFrame(sample.y, columns=related)
    complete.insert(0, "x", sample.x)
    extra = pd.DataFrame(sample.y_extra, columns=related)
    extra.insert(0, "x", np.nan)
    df = pd.concat([complete, extra], ignore_index=True)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, sep=delimiter, index=False, na_rep="", float_format="%.17g")
    return path


def magnitude_to_energy(M):
    """里氏震级 → 释放能量 (兆焦)：E = 2·10^(1.5(M−1))"""
    return 2.0 * np.power(10.0, 1.5 * (np.asarray(M, dtype=float) - 1.0))


def to_energy(sample: PairedSample) -> PairedSample:
    """相关变量列 (震级) 换算成能量，x 不变"""
    return PairedSample(x=sample.x, y=magnitude_to_energy(sample.y), y_extra=magnitude_to_energy(sample.y_extra))
