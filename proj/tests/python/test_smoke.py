import math
import os
import subprocess

import pytest

import captime


def test_student_t_closed_forms():
    assert captime.student_t_logpdf(0.0, 0.0, 1.0, 1.0) == pytest.approx(-math.log(math.pi), rel=1e-12)
    assert captime.student_t_cdf(0.0, 2.0, 3.0, 5.0) < 0.5
    q = captime.student_t_quantile(0.9, 1.0, 2.0, 4.0)
    assert captime.student_t_cdf(q, 1.0, 2.0, 4.0) == pytest.approx(0.9, abs=1e-7)


def test_patching_and_normalization():
    assert captime.patch_count(32, 8) == 5
    patches = captime.patchify([float(i) for i in range(16)], 8)
    assert len(patches) == 3
    assert patches[0] == [float(i) for i in range(8)]
    z, mean, std = captime.instance_normalize([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5
    assert std == pytest.approx(math.sqrt(1.25))
    assert sum(z) == pytest.approx(0.0, abs=1e-12)


def test_metrics():
    assert captime.smape([100.0], [110.0]) == pytest.approx(200.0 * 10.0 / 210.0)
    assert captime.mse([1.0, 2.0, 3.0], [2.0, 2.0, 1.0]) == pytest.approx(5.0 / 3.0)
    assert captime.owa(6.0, 0.75, 12.0, 1.5) == 0.5
    assert captime.naive2([3.0, 1.0, 4.0, 1.0, 5.0], 3, 1) == [5.0, 5.0, 5.0]
    with pytest.raises(Exception):
        captime.owa(1.0, 1.0, 0.0, 1.0)


def test_synthetic_is_deterministic():
    a = captime.generate_synthetic(length=256, seed=3)
    b = captime.generate_synthetic(length=256, seed=3)
    assert a["values"] == b["values"]
    assert len(a["regimes"]) == 8
    assert len(a["texts"]) == 7


def test_forecast_from_checkpoint(tmp_path):
    cli = os.environ.get("CAPTIME_CLI")
    if not cli:
        pytest.skip("CAPTIME_CLI not set")
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "lookback = 16\npatch_len = 4\nmax_horizon = 8\n"
        "encoder_width = 16\nencoder_blocks = 1\n"
        "backbone.layers = 1\nbackbone.heads = 2\nbackbone.width = 16\nbackbone.ffn = 32\n"
        "backbone.max_positions = 16\nexperts = 2\ntop_k = 1\n"
        "max_steps = 5\npretrain_steps = 5\nbatch_size = 8\ncontext_extension = 1\n"
        "synth.length = 600\nsynth.period = 8\nsynth.segment = 16\n"
        "series = data/series.csv\ntexts = data/texts.jsonl\n"
    )
    subprocess.run([cli, "synth", "--config", str(cfg), "--out", str(tmp_path / "data")], check=True)
    subprocess.run([cli, "train", "--config", str(cfg), "--out", str(tmp_path / "run")], check=True)

    m = captime.Model.load(str(tmp_path / "run" / "model.ckpt"))
    assert m.probabilistic
    lookback = [math.sin(0.8 * t) for t in range(16)]
    r = m.forecast(lookback, 6, text="surge", quantiles=[0.1, 0.9], keep_attention=True)
    assert len(r["point"]) == 6
    assert r["steps"] == 2
    assert all(s > 0 for s in r["sigma"])
    assert all(lo < hi for lo, hi in zip(r["quantiles"][0.1], r["quantiles"][0.9]))
    assert len(r["attention"]) == 2
    assert m.forecast(lookback, 6, text="surge")["point"] == r["point"]
    with pytest.raises(ValueError):
        m.forecast(lookback, 0)
