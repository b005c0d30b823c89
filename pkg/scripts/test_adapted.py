# scripts/test_adapted.py
import sys
import os
import math
import logging

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from backend.core.errors import DegenerateDenominatorError, ParameterError, SingularMatrixError
from backend.core.logger import setup_logging
from backend.models import DistributionSpec, EstimateReport, PairedSample, StreamSpec, TuningParams
from backend.services.adapted import (adapted_bivariate, adapted_matched_bivariate, adapted_matched_trivariate,
                                      adapted_multivariate, matched_trivariate_weights)
from backend.services.sampling import sample_scenario

setup_logging()
logger = logging.getLogger("TestScript")


def _paired(dist: DistributionSpec, n: int, m: int, index: int) -> PairedSample:
    joint, extra = sample_scenario(dist, n, m, StreamSpec(20190101, index))
    return PairedSample(joint[:, 0], joint[:, 1:], extra)


def test_reconstruction_identity():
    data = _paired(DistributionSpec("logistic", 3, theta=0.4), 500, 500, 0)
    report = adapted_multivariate(data, TuningParams.matched(50, 500, 500))
    assert report.reconstruct() == report.gamma_adapted
    assert report.tuning.k_plus == 100
    assert len(report.triples) == 2 and len(report.coefficients) == 2


def test_zero_tail_dependence_gives_hill():
    # y 的秩与 x 完全相反：顶部 k 个不相交，R̂(1,1) = 0
    x = np.arange(1.0, 201.0)
    y = 1.0 / x
    extra = np.linspace(0.001, 2.0, 100)
    data = PairedSample(x, y, extra)
    tuning = TuningParams.matched(20, 200, 100)
    for estimator in (adapted_bivariate, adapted_multivariate, adapted_matched_bivariate):
        report = estimator(data, tuning)
        assert report.tail_dependence.value(0, 1) == 0.0
        assert report.gamma_adapted == report.gamma1_hill


def test_zero_update_gives_hill():
    data = _paired(DistributionSpec("logistic", 2, theta=0.3), 400, 400, 1)
    # 额外观测与前 n 个相同：k₊ = 2k 时 γ̂₂₊ = γ̂₂
    dup = PairedSample(data.x, data.y, data.y.copy())
    report = adapted_matched_bivariate(dup, TuningParams.matched(40, 400, 400))
    g2, g2_plus = report.triples[0]
    assert g2_plus == pytest.approx(g2, abs=1e-12)
    assert report.gamma_adapted == pytest.approx(report.gamma1_hill, abs=1e-12)


def test_matched_bivariate_formula():
    data = _paired(DistributionSpec("cauchy", 2, s=0.5), 1000, 500, 2)
    report = adapted_matched_bivariate(data, TuningParams.matched(100, 1000, 500))
    g1 = report.gamma1_hill
    g2, g2_plus = report.triples[0]
    r = report.tail_dependence.value(0, 1)
    assert report.gamma_adapted == pytest.approx(g1 + (g1 / g2_plus) * r * (g2_plus - g2), abs=1e-14)
    assert report.reduction == pytest.approx((1 - 1000 / 1500) * r ** 2, abs=1e-14)
    se = report.gamma_adapted * math.sqrt(1 - report.reduction) / math.sqrt(100)
    assert report.std_error == pytest.approx(se, rel=1e-12)


def _hand_report(gamma1, triples, coefficients):
    return EstimateReport(gamma1_hill=gamma1, gamma_adapted=float("nan"), triples=triples,
                          coefficients=coefficients, tuning=TuningParams.matched(10, 100, 50),
                          reduction=0.0, std_error=float("nan"))


def test_hand_evaluated_anchors():
    # 二元匹配：γ̂₁=1.5, γ̂₂=1.0, γ̂₂₊=1.2, R̂=0.8
    assert _hand_report(1.5, [(1.0, 1.2)], [(1.5 / 1.2) * 0.8]).reconstruct() == pytest.approx(1.7, abs=1e-12)

    w12, w13 = matched_trivariate_weights(0.8, 0.8, 0.4)
    assert w12 == pytest.approx(0.48 / 0.84, abs=1e-15)
    assert w13 == pytest.approx(0.48 / 0.84, abs=1e-15)
    # γ̂₁=1, γ̂ⱼ₊=1，更新量 (0.1, −0.1)
    assert _hand_report(1.0, [(0.9, 1.0), (1.1, 1.0)], [w12, w13]).reconstruct() == pytest.approx(1.0, abs=1e-12)

    assert matched_trivariate_weights(0.6, 0.3, 0.0) == (0.6, 0.3)
    assert matched_trivariate_weights(0.6, 0.0, 0.0) == (0.6, 0.0)
    with pytest.raises(DegenerateDenominatorError):
        matched_trivariate_weights(0.5, 0.5, 1.0)


def test_trivariate_collapses_when_third_variable_is_tail_independent():
    idx = np.arange(200)
    x = np.arange(1.0, 201.0)
    # y2 的前 20 名与 x 共享 15 个：R̂₁₂ = 0.75
    y2 = x.copy()
    y2[:5], y2[195:] = x[195:].copy(), x[:5].copy()
    # y3 的前 20 名落在下标 20..39，与 x、y2 的前 20 名都不相交
    y3 = np.where((idx >= 20) & (idx < 40), 1000.0 + idx, x)
    extra = np.random.default_rng(20190101).uniform(1.0, 300.0, size=(100, 2))
    tuning = TuningParams.matched(20, 200, 100)

    full = PairedSample(x, np.column_stack([y2, y3]), extra)
    pair = PairedSample(x, y2.reshape(-1, 1), extra[:, :1])
    tri = adapted_matched_trivariate(full, tuning)
    bi = adapted_matched_bivariate(pair, tuning)
    assert tri.tail_dependence.value(0, 1) == 0.75
    assert tri.tail_dependence.value(0, 2) == 0.0
    assert tri.tail_dependence.value(1, 2) == 0.0
    assert tri.coefficients[1] == 0.0
    assert tri.gamma_adapted == pytest.approx(bi.gamma_adapted, abs=1e-14)
    assert tri.reduction == pytest.approx(bi.reduction, abs=1e-14)
    assert adapted_multivariate(full, tuning).gamma_adapted == pytest.approx(bi.gamma_adapted, abs=1e-12)

def test_generic_and_specialized_forms_agree():
    bivariate = [DistributionSpec("logistic", 2, theta=t) for t in (0.3, 0.4, 0.5, 0.6, 0.7)] + \
                [DistributionSpec("cauchy", 2, s=s) for s in (0.0, 0.5, 0.8)]
    trivariate = [DistributionSpec("logistic", 3, theta=t) for t in (0.3, 0.5, 0.7)] + \
                 [DistributionSpec("cauchy", 3, s=s, r=r)
                  for s, r in ((0.0, 0.0), (0.5, 0.3), (0.5, 0.5), (0.8, 0.3), (0.8, 0.8))]
    tuning = TuningParams.matched(20, 200, 100)
    for idx in range(1000):
        data = _paired(bivariate[idx % len(bivariate)], 200, 100, 1000 + idx)
        generic = adapted_multivariate(data, tuning).gamma_adapted
        assert adapted_bivariate(data, tuning).gamma_adapted == pytest.approx(generic, abs=1e-12)
        assert adapted_matched_bivariate(data, tuning).gamma_adapted == pytest.approx(generic, abs=1e-12)

        data3 = _paired(trivariate[idx % len(trivariate)], 200, 100, 3000 + idx)
        generic3 = adapted_multivariate(data3, tuning)
        special3 = adapted_matched_trivariate(data3, tuning)
        assert special3.gamma_adapted == pytest.approx(generic3.gamma_adapted, abs=1e-12), idx
        assert special3.reduction == pytest.approx(generic3.reduction, abs=1e-12), idx


def test_unmatched_bivariate_agrees_with_multivariate():
    for idx in range(20):
        data = _paired(DistributionSpec("logistic", 2, theta=0.5), 400, 200, 500 + idx)
        tuning = TuningParams(40, 50, 400, 200)
        assert not tuning.is_matched
        a = adapted_bivariate(data, tuning)
        b = adapted_multivariate(data, tuning)
        assert a.gamma_adapted == pytest.approx(b.gamma_adapted, abs=1e-12)
        assert a.reduction == pytest.approx(b.reduction, abs=1e-12)


def test_scale_invariance():
    data = _paired(DistributionSpec("logistic", 3, theta=0.5), 500, 250, 7)
    tuning = TuningParams.matched(50, 500, 250)
    scaled = PairedSample(3.0 * data.x, 5.0 * data.y, 5.0 * data.y_extra)
    a = adapted_multivariate(data, tuning).gamma_adapted
    b = adapted_multivariate(scaled, tuning).gamma_adapted
    assert b == pytest.approx(a, abs=1e-12)


def test_matched_forms_reject_unmatched_tuning():
    data = _paired(DistributionSpec("logistic", 2, theta=0.5), 400, 200, 8)
    with pytest.raises(ParameterError):
        adapted_matched_bivariate(data, TuningParams(40, 50, 400, 200))
    with pytest.raises(ParameterError):
        adapted_matched_trivariate(data, TuningParams.matched(40, 400, 200))


def test_identical_related_columns_are_degenerate():
    data = _paired(DistributionSpec("logistic", 2, theta=0.5), 400, 200, 9)
    twin = PairedSample(data.x, np.column_stack([data.y, data.y]), np.column_stack([data.y_extra, data.y_extra]))
    tuning = TuningParams.matched(40, 400, 200)
    with pytest.raises(DegenerateDenominatorError):
        adapted_matched_trivariate(twin, tuning)
    with pytest.raises(SingularMatrixError):
        adapted_multivariate(twin, tuning)


def test_flat_related_tail_is_degenerate():
    x = np.arange(1.0, 101.0)
    y = np.concatenate([np.arange(1.0, 51.0), np.full(50, 60.0)])
    data = PairedSample(x, y, np.full(50, 60.0))
    with pytest.raises(DegenerateDenominatorError):
        adapted_multivariate(data, TuningParams.matched(10, 100, 50))


def test_tuning_sample_mismatch():
    data = _paired(DistributionSpec("logistic", 2, theta=0.5), 400, 200, 10)
    with pytest.raises(ParameterError):
        adapted_multivariate(data, TuningParams.matched(40, 400, 100))


def main():
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            logger.info(f"✅ {name}")


if __name__ == "__main__":
    main()
