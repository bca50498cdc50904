import math

import numpy as np
import pytest

from physkit.errors import ContractError, EstimationError, ParseError
from physkit.signals import (
    ClipRecord,
    estimate_hr,
    gen_clip,
    load_waveform,
    metrics,
    read_manifest,
    save_waveform,
    write_manifest,
)


def test_noiseless_clip_has_exact_encoder_estimate():
    clip = gen_clip(72.0, snr_db=math.inf, seed=3)
    assert np.array_equal(clip.x_enc, clip.bvp)


def test_clip_generation_is_bit_deterministic():
    a = gen_clip(90.0, snr_db=5.0, seed=11)
    b = gen_clip(90.0, snr_db=5.0, seed=11)
    assert np.array_equal(a.bvp, b.bvp)
    assert np.array_equal(a.x_enc, b.x_enc)
    for fa, fb in zip(a.pyramid, b.pyramid):
        assert np.array_equal(fa, fb)
    assert a.scene == b.scene
    c = gen_clip(90.0, snr_db=5.0, seed=12)
    assert not np.array_equal(a.bvp, c.bvp)


def test_realized_snr_is_exact():
    clip = gen_clip(65.0, snr_db=10.0, seed=4, n_samples=512)
    phase_clip = gen_clip(65.0, snr_db=math.inf, seed=4, n_samples=512)
    noise = clip.bvp - phase_clip.bvp
    snr = 10.0 * math.log10(np.mean(phase_clip.bvp**2) / np.mean(noise**2))
    assert abs(snr - 10.0) < 1e-9  # noise is rescaled to the target power


def test_pyramid_levels_carry_signal():
    clip = gen_clip(72.0, snr_db=math.inf, seed=5)
    for feat in clip.pyramid:
        flat = feat.reshape(feat.shape[0], -1)
        corr = np.corrcoef(flat.T, clip.bvp)[-1, :-1]
        assert np.max(np.abs(corr)) > 0.5


def test_gen_clip_contract_errors():
    with pytest.raises(ContractError):
        gen_clip(30.0)
    with pytest.raises(ContractError):
        gen_clip(160.0)
    with pytest.raises(ContractError):
        gen_clip(72.0, n_samples=32)
    with pytest.raises(ContractError):
        gen_clip(150.0, fs=9.0)  # below Nyquist for the 2nd harmonic


def test_estimate_recovers_pure_tone():
    fs, n = 30.0, 512
    t = np.arange(n) / fs
    est = estimate_hr(np.sin(2 * np.pi * 1.2 * t), fs)
    assert est.resolution_hz == pytest.approx(30.0 / 1024.0)
    assert abs(est.bpm - 72.0) <= 60.0 * est.resolution_hz


def test_estimate_picks_dominant_of_two_tones():
    fs, n = 30.0, 512
    t = np.arange(n) / fs
    wave = 1.0 * np.sin(2 * np.pi * 1.0 * t) + 0.3 * np.sin(2 * np.pi * 2.0 * t)
    est = estimate_hr(wave, fs)
    assert abs(est.bpm - 60.0) <= 60.0 * est.resolution_hz


def test_estimate_rejects_dc_only_input():
    with pytest.raises(EstimationError):
        estimate_hr(np.full(512, 3.0), 30.0)


def test_estimate_rejects_short_input():
    with pytest.raises(ContractError):
        estimate_hr(np.zeros(100), 30.0)  # under 4 seconds


def test_estimate_is_scale_invariant():
    rng = np.random.default_rng(6)
    t = np.arange(512) / 30.0
    wave = np.sin(2 * np.pi * 1.5 * t) + 0.1 * rng.standard_normal(512)
    a = estimate_hr(wave, 30.0)
    b = estimate_hr(1e3 * wave, 30.0)
    assert a == b


def test_clean_clips_recover_true_rate_within_one_bin():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        hr = float(rng.uniform(45.0, 150.0))
        clip = gen_clip(hr, n_samples=512, snr_db=math.inf, seed=int(rng.integers(1 << 30)))
        est = estimate_hr(clip.bvp, clip.fs)
        worst = max(worst, abs(est.bpm - hr))
        assert abs(est.bpm - hr) <= 60.0 * est.resolution_hz
    assert worst <= 60.0 * (30.0 / 1024.0)


def test_metrics_perfect_alignment():
    rep = metrics([60.0, 75.0, 90.0], [60.0, 75.0, 90.0])
    assert rep.mae == 0.0 and rep.rmse == 0.0 and rep.pearson_r == pytest.approx(1.0)


def test_metrics_single_point_has_undefined_pearson():
    rep = metrics([70.0], [72.0])
    assert rep.mae == 2.0 and rep.rmse == 2.0 and rep.pearson_r is None


def test_metrics_two_point_hand_values():
    # diffs are (-2, +2): MAE 2, RMSE 2; both lists increase so r = 1
    rep = metrics([60.0, 80.0], [62.0, 78.0])
    assert rep.mae == 2.0 and rep.rmse == 2.0
    assert rep.pearson_r == pytest.approx(1.0)


def test_rmse_dominates_mae_on_random_pairs():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        n = int(rng.integers(2, 20))
        rep = metrics(rng.uniform(45, 150, n), rng.uniform(45, 150, n))
        assert rep.rmse >= rep.mae >= 0.0


def test_metrics_contract_errors():
    with pytest.raises(ContractError):
        metrics([1.0, 2.0], [1.0])
    with pytest.raises(ContractError):
        metrics([], [])


def test_waveform_csv_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(9)
    x = rng.standard_normal(64)
    path = tmp_path / "wave.csv"
    save_waveform(path, x, fs=30.0)
    back, fs = load_waveform(path)
    assert fs == 30.0 and np.array_equal(back, x)


def test_waveform_parse_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("fs=30\n1.0\noops\n")
    with pytest.raises(ParseError) as err:
        load_waveform(path)
    assert "line 3" in str(err.value)
    path.write_text("1.0\n2.0\n")
    with pytest.raises(ParseError) as err:
        load_waveform(path)
    assert "line 1" in str(err.value)


def test_manifest_roundtrip_and_regeneration(tmp_path):
    clip = gen_clip(80.0, snr_db=10.0, seed=21)
    rec = ClipRecord(
        clip_id="clip_000",
        bvp_path="clip_000.bvp.csv",
        xenc_path="clip_000.xenc.csv",
        hr_bpm=80.0,
        fs=30.0,
        n_samples=128,
        snr_db=10.0,
        seed=21,
        lighting=clip.scene.lighting,
        motion=clip.scene.motion,
        skin_tone=clip.scene.skin_tone,
    )
    path = tmp_path / "manifest.jsonl"
    write_manifest(path, [rec])
    loaded = read_manifest(path)
    assert len(loaded) == 1 and loaded[0] == rec
    regen = loaded[0].to_clip()
    assert np.array_equal(regen.bvp, clip.bvp)
    assert np.array_equal(regen.x_enc, clip.x_enc)


def test_manifest_handles_infinite_snr(tmp_path):
    rec = ClipRecord(
        clip_id="c",
        bvp_path="c.bvp.csv",
        xenc_path="c.xenc.csv",
        hr_bpm=72.0,
        fs=30.0,
        n_samples=128,
        snr_db=math.inf,
        seed=1,
        lighting="dim",
        motion=False,
        skin_tone="type-2",
    )
    path = tmp_path / "manifest.jsonl"
    write_manifest(path, [rec])
    assert math.isinf(read_manifest(path)[0].snr_db)
