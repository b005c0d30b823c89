# scripts/test_estimators.py
import sys
import os
import math
import logging

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from backend.core.errors import DomainError, ParameterError
from backend.core.logger import setup_logging
from backend.models import StreamSpec
from backend.services.estimators import (average_over_k_range, hill, hill_path, order_statistics,
                                         weissman_quantile)
from backend.services.sampling import sample_pareto

setup_logging()
logger = logging.getLogger("TestScript")

LN2 = math.log(2.0)


def test_order_statistics():
    raw = np.array([3.0, 1.0, 2.0])
    assert list(order_statistics(raw).values) == [1.0, 2.0, 3.0]
    assert list(raw) == [3.0, 1.0, 2.0]
    assert list(order_statistics([5, 5, 5]).values) == [5.0, 5.0, 5.0]
    assert list(order_statistics([2.5]).values) == [2.5]
    with pytest.raises(ParameterError):
        order_statistics([])


def test_hill_hand_values():
    assert hill(order_statistics([1, 2, 4, 8]), 2) == pytest.approx(1.5 * LN2, abs=1e-12)
    assert hill(order_statistics([2, 5, 5, 5]), 2) == 0.0
    assert hill(order_statistics([10, 20, 40, 80]), 2) == pytest.approx(1.5 * LN2, abs=1e-12)


def test_hill_scale_invariance():
    x = sample_pareto(0.7, 500, StreamSpec(1, 0))
    for c in (1e-3, 2.5, 1e4):
        assert hill(order_statistics(c * x), 50) == pytest.approx(hill(order_statistics(x), 50), abs=1e-12)


def test_hill_errors():
    s = order_statistics([1, 2, 4, 8])
    with pytest.raises(ParameterError):
        hill(s, 0)
    with pytest.raises(ParameterError):
        hill(s, 4)
    with pytest.raises(DomainError):
        hill(order_statistics([-1, 0, 3, 4]), 2)


def test_hill_path_matches_pointwise():
    s = order_statistics(sample_pareto(1.0, 300, StreamSpec(2, 0)))
    path = hill_path(s, range(10, 20))
    assert np.array_equal(path, [hill(s, k) for k in range(10, 20)])


def test_hill_calibration_on_exact_pareto():
    """n=1000, k=100：γ̂ 的均值与 √k(γ̂−γ) 的方差"""
    rng = StreamSpec(20190101, 0).generator()
    reps, n, k = 10000, 1000, 100
    estimates = np.array([hill(order_statistics(sample_pareto(1.0, n, rng)), k) for _ in range(reps)])
    assert abs(estimates.mean() - 1.0) < 0.01
    assert abs(np.var(np.sqrt(k) * (estimates - 1.0), ddof=1) - 1.0) < 0.1


def test_weissman_quantile():
    values = np.arange(1, 101) / 45.0  # X_{90,100} = 2
    s = order_statistics(values)
    assert weissman_quantile(s, 10, 0.025, 1.0) == pytest.approx(8.0)
    # p = k/n 时外推因子为 1
    assert weissman_quantile(s, 10, 0.1, 1.7) == s.order_stat(90)
    # k/(np) > 1 时随 γ̂ 单调递增
    assert weissman_quantile(s, 10, 0.01, 0.5) < weissman_quantile(s, 10, 0.01, 0.6)
    with pytest.raises(ParameterError):
        weissman_quantile(s, 10, 0.0, 1.0)
    with pytest.raises(ParameterError):
        weissman_quantile(s, 100, 0.01, 1.0)


def test_weissman_recovers_pareto_quantile():
    n = 10000
    i = np.arange(1, n + 1)
    s = order_statistics((1.0 - i / (n + 1.0)) ** -1.0)
    k = 500
    q = weissman_quantile(s, k, 1.0 / n, hill(s, k))
    assert abs(q / n - 1.0) < 0.10


def test_average_over_k_range():
    s = order_statistics([1, 2, 4, 8, 16])
    assert average_over_k_range(lambda k: hill(s, k), 2, 2, s.n) == hill(s, 2)
    assert average_over_k_range(lambda k: 3.25, 1, 4, s.n) == 3.25
    assert average_over_k_range(lambda k: hill(s, k), 2, 3, s.n) == pytest.approx(1.75 * LN2, abs=1e-12)
    with pytest.raises(ParameterError):
        average_over_k_range(lambda k: hill(s, k), 3, 2, s.n)
    with pytest.raises(ParameterError):
        average_over_k_range(lambda k: hill(s, k), 1, 5, s.n)


def main():
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            logger.info(f"✅ {name}")


if __name__ == "__main__":
    main()
