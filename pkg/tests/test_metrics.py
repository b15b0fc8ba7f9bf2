import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from desmoke.imagecore import ImageRgb, ShapeMismatchError
from desmoke.metrics import EvalReport, EvalRow, MetricConfig, evaluate, mse, psnr, read_rows, score_pair, ssim


def test_oracles_on_random_pairs(rng):
    cfg = MetricConfig()
    for _ in range(100):
        I, J = rng.random((8, 9, 3)), rng.random((8, 9, 3))
        assert abs(mse(I, J) - oracles.mse_loop(I, J)) <= 1e-9
        assert abs(psnr(I, J) - oracles.psnr_formula(I, J)) <= 1e-9
        assert abs(ssim(I, J) - oracles.ssim_global_formula(I, J, cfg.C1, cfg.C2)) <= 1e-9


def test_identical_images(rng):
    I = rng.random((10, 10, 3))
    assert psnr(I, I) == math.inf
    assert ssim(I, I) == 1.0
    assert ssim(I, I, MetricConfig(ssim_mode="windowed", window=3)) == 1.0


def test_uniform_difference_is_twenty_db():
    I = np.full((16, 16, 3), 0.5)
    assert psnr(I, I + 0.1) == pytest.approx(20.0, abs=1e-9)
    assert psnr(I, I - 0.1) == pytest.approx(20.0, abs=1e-9)


def test_constant_images_ssim_formula():
    cfg = MetricConfig()
    a, b = 0.3, 0.7
    expected = (2 * a * b + cfg.C1) / (a * a + b * b + cfg.C1)
    assert ssim(np.full((5, 5), a), np.full((5, 5), b)) == pytest.approx(expected, abs=1e-12)


def test_custom_constants_and_max():
    cfg = MetricConfig(max_value=255.0, c1=1.0, c2=2.0)
    I = np.full((4, 4), 100.0)
    assert psnr(I, I + 25.5, cfg) == pytest.approx(20.0, abs=1e-9)
    assert cfg.C1 == 1.0 and cfg.C2 == 2.0
    assert MetricConfig(max_value=255.0).C1 == pytest.approx((0.01 * 255) ** 2)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        mse(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        MetricConfig(ssim_mode="gaussian")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_metrics_symmetric(seed):
    r = np.random.default_rng(seed)
    I, J = r.random((6, 6, 3)), r.random((6, 6, 3))
    assert mse(I, J) == mse(J, I)
    assert psnr(I, J) == psnr(J, I)
    assert ssim(I, J) == pytest.approx(ssim(J, I), abs=1e-15)
    assert -1.0 <= ssim(I, J) <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.01, 0.2), st.floats(1.1, 3.0))
def test_psnr_decreases_with_noise(seed, sigma, factor):
    r = np.random.default_rng(seed)
    I = r.random((8, 8, 3))
    n = r.standard_normal((8, 8, 3))
    assert psnr(I, I + sigma * n) > psnr(I, I + factor * sigma * n)


def windowed_oracle(a, b, w, C1, C2):
    vals = []
    for y in range(a.shape[0] - w + 1):
        for x in range(a.shape[1] - w + 1):
            vals.append(oracles.ssim_global_formula(a[y : y + w, x : x + w], b[y : y + w, x : x + w], C1, C2))
    return sum(vals) / len(vals)


def test_windowed_ssim_matches_oracle(rng):
    cfg = MetricConfig(ssim_mode="windowed", window=4)
    a, b = rng.random((9, 10)), rng.random((9, 10))
    assert abs(ssim(a, b, cfg) - windowed_oracle(a, b, 4, cfg.C1, cfg.C2)) <= 1e-12
    with pytest.raises(ValueError):
        ssim(a, b, MetricConfig(ssim_mode="windowed", window=20))


def test_row_gain_and_significance():
    assert EvalRow("a", "low", 21.0, 0.9, 20.0, 0.8).significant
    assert not EvalRow("a", "low", 20.4, 0.9, 20.0, 0.8).significant
    assert EvalRow("a", "low", 21.0, 0.9, 20.0, 0.8).psnr_gain == pytest.approx(1.0)


def test_report_aggregates_and_files(tmp_path):
    rows = [
        EvalRow("a", "low", 20.0, 0.8, 15.0, 0.6),
        EvalRow("b", "low", 22.0, 0.9, 16.0, 0.7),
        EvalRow("c", "high", 18.0, 0.7, 10.0, 0.4),
    ]
    rep = EvalReport(rows)
    assert rep.aggregates["low"]["psnr"]["mean"] == pytest.approx(21.0)
    assert rep.aggregates["all"]["psnr"]["median"] == pytest.approx(20.0)
    paths = rep.write(tmp_path)
    back = read_rows(paths["rows"])
    assert [(r.id, r.psnr, r.baseline_ssim) for r in back] == [(r.id, r.psnr, r.baseline_ssim) for r in rows]
    summary = json.loads(paths["summary"].read_text())
    assert summary["n_records"] == 3
    box = json.loads(paths["boxplot"].read_text())
    assert box["high"]["psnr"]["max"] == 18.0


def test_identical_baseline_written_as_inf(tmp_path, rng):
    clear = ImageRgb(rng.random((8, 8, 3)))
    row = score_pair(clear, clear, clear, "x", "low", MetricConfig())
    assert row.psnr == math.inf and row.baseline_psnr == math.inf
    paths = EvalReport([row]).write(tmp_path)
    assert "inf" in paths["rows"].read_text()
    assert read_rows(paths["rows"])[0].baseline_psnr == math.inf
    json.loads(paths["summary"].read_text())


def test_evaluate_untrained_checkpoint(desk_dataset, tmp_path):
    from desmoke.trainer import TrainConfig, train

    res = train(desk_dataset, TrainConfig(max_steps=1, batch_size=4, width_scale=0.25, verbose=False), tmp_path)
    rep = evaluate(desk_dataset, res.checkpoint)
    assert len(rep.rows) == len(desk_dataset.split("test"))
    assert all(np.isfinite(r.psnr) and -1 <= r.ssim <= 1 for r in rep.rows)
    with pytest.raises(ValueError):
        evaluate(desk_dataset, res.checkpoint, split="validation")
