# scripts/test_sampling.py
import sys
import os
import math
import logging

import numpy as np
import pytest
from scipy import stats

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from backend.core.errors import ParameterError
from backend.core.logger import setup_logging
from backend.models import DistributionSpec, LogisticParam, ScaleMatrix, StreamSpec
from backend.services.estimators import hill, order_statistics
from backend.services.sampling import (orthant_acceptance_rate, pareto_from_uniform, sample_logistic,
                                       sample_orthant_cauchy, sample_pareto, sample_positive_stable,
                                       sample_scenario)
from backend.services.tail_dependence import tail_copula

setup_logging()
logger = logging.getLogger("TestScript")

SEED = 20190101


def test_pareto_inverse_transform():
    assert pareto_from_uniform(1.0, 0.5) == 2.0
    assert pareto_from_uniform(2.0, 0.25) == 16.0


def test_pareto_hill_recovers_index():
    x = sample_pareto(1.0, 10000, StreamSpec(SEED, 1))
    assert abs(hill(order_statistics(x), 500) - 1.0) < 0.15


def test_pareto_rejects_bad_arguments():
    with pytest.raises(ParameterError):
        sample_pareto(0.0, 10, StreamSpec(SEED, 0))
    with pytest.raises(ParameterError):
        sample_pareto(1.0, 0, StreamSpec(SEED, 0))


def test_same_stream_same_draws():
    a = sample_logistic(LogisticParam(0.3, 3), 500, StreamSpec(SEED, 7))
    b = sample_logistic(LogisticParam(0.3, 3), 500, StreamSpec(SEED, 7))
    c = sample_logistic(LogisticParam(0.3, 3), 500, StreamSpec(SEED, 8))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_orthant_acceptance_rates():
    proposals = 100000
    for d, p in ((2, 0.25), (3, 0.125)):
        rate = orthant_acceptance_rate(ScaleMatrix(d, 0.0, 0.0 if d == 3 else None), proposals, StreamSpec(SEED, d))
        band = 3 * math.sqrt(p * (1 - p) / proposals)
        assert abs(rate - p) < band, (d, rate)


def test_orthant_cauchy_positive_and_heavy_tailed():
    x = sample_orthant_cauchy(ScaleMatrix(2, 0.5), 10000, StreamSpec(SEED, 3))
    assert x.shape == (10000, 2)
    assert np.all(x > 0)
    assert abs(hill(order_statistics(x[:, 0]), 500) - 1.0) < 0.15


def test_non_positive_definite_scale_rejected():
    with pytest.raises(ParameterError):
        ScaleMatrix(3, 0.9, -0.9)


def test_positive_stable_laplace_transform():
    draws = 1_000_000
    s = sample_positive_stable(0.5, draws, StreamSpec(SEED, 11))
    assert abs(np.mean(np.exp(-s)) - math.exp(-1.0)) < 0.005
    s = sample_positive_stable(0.3, draws, StreamSpec(SEED, 12))
    assert abs(np.mean(np.exp(-2.0 * s)) - math.exp(-2.0 ** 0.3)) < 0.005
    s = sample_positive_stable(0.1, draws, StreamSpec(SEED, 13))
    assert abs(np.mean(np.exp(-s)) - math.exp(-1.0)) < 0.005


def test_positive_stable_edge_cases():
    assert sample_positive_stable(0.5, 0, StreamSpec(SEED, 0)).shape == (0,)
    with pytest.raises(ParameterError):
        sample_positive_stable(1.0, 10, StreamSpec(SEED, 0))


def test_logistic_frechet_marginals():
    x = sample_logistic(LogisticParam(0.3, 2), 1_000_000, StreamSpec(SEED, 21))
    for col in range(2):
        assert abs(np.mean(x[:, col] <= 1.0) - math.exp(-1.0)) < 0.005
    # 标准 Fréchet = invweibull(c=1)
    for idx, theta in enumerate((0.1, 0.3, 0.5)):
        small = sample_logistic(LogisticParam(theta, 2), 100000, StreamSpec(SEED, 22 + idx))
        for col in range(2):
            assert stats.kstest(small[:, col], "invweibull", args=(1.0,)).pvalue > 0.001, (theta, col)


def test_logistic_tail_copula_matches_theory():
    n, k = 1_000_000, 10_000
    for idx, theta in enumerate((0.1, 0.3, 0.5)):
        x = sample_logistic(LogisticParam(theta, 2), n, StreamSpec(SEED, 30 + idx))
        assert abs(tail_copula(x[:, 0], x[:, 1], k) - (2.0 - 2.0 ** theta)) < 0.02, theta
    x = sample_logistic(LogisticParam(1.0, 2), n, StreamSpec(SEED, 40))
    assert abs(tail_copula(x[:, 0], x[:, 1], k)) < 0.02


def test_scenario_draw_shapes():
    joint, extra = sample_scenario(DistributionSpec("cauchy", 3, s=0.5, r=0.5), 100, 50, StreamSpec(SEED, 0))
    assert joint.shape == (100, 3)
    assert extra.shape == (50, 2)
    joint, extra = sample_scenario(DistributionSpec("logistic", 2, theta=0.3), 100, 0, StreamSpec(SEED, 0))
    assert extra.shape == (0, 1)


def main():
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            logger.info(f"✅ {name}")


if __name__ == "__main__":
    main()
