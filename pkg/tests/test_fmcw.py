import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vitalcloak import fmcw
from vitalcloak.fmcw import ACOUSTIC, MMWAVE, FMCWError, Reflector, Scene, SensorProfile
from vitalcloak.signal_model import DisplacementSignal

C = 299_792_458.0


def still(duration, rate=2000.0):
    return DisplacementSignal(np.zeros(int(duration * rate)), rate, "composite")


def sine_mm(amplitude_mm, bpm, duration, rate=2000.0):
    t = np.arange(int(duration * rate)) / rate
    return DisplacementSignal(amplitude_mm * np.sin(2 * np.pi * bpm / 60 * t), rate, "composite")


def test_preset_range_resolution():
    assert MMWAVE.range_resolution * 100 == pytest.approx(4.88, abs=0.01)
    assert ACOUSTIC.range_resolution * 100 == pytest.approx(4.29, abs=0.01)


def test_bandwidth_follows_slope_and_adc_window():
    assert MMWAVE.bandwidth == pytest.approx(60.012e12 * 256 / 5e6)
    assert ACOUSTIC.bandwidth == pytest.approx(4000.0)


def test_acoustic_frame_rate():
    assert ACOUSTIC.frame_rate == pytest.approx(93.75)


def test_range_bins_at_30cm():
    assert MMWAVE.range_bin(0.30) == 6
    assert ACOUSTIC.range_bin(0.30) == 7


@given(st.floats(0.05, 2.0))
def test_beat_frequency_formula(d):
    assert MMWAVE.beat_frequency(d) == pytest.approx(2 * 60.012e12 * d / C)


def test_get_profile():
    assert fmcw.get_profile("mmWave") is MMWAVE
    assert fmcw.get_profile(ACOUSTIC) is ACOUSTIC
    with pytest.raises(FMCWError):
        fmcw.get_profile("lidar")


def test_profile_round_trip_and_unknown_fields():
    assert SensorProfile.from_dict(MMWAVE.to_dict()) == MMWAVE
    d = MMWAVE.to_dict() | {"gain": 3}
    with pytest.raises(FMCWError):
        SensorProfile.from_dict(d)


def test_noiseless_if_matches_closed_form():
    d0 = 0.42
    scene = Scene(d0, still(0.01), snr_db=np.inf)
    frames = fmcw.simulate_frames(MMWAVE, scene)
    t = np.arange(256) / 5e6
    fb = 2 * MMWAVE.slope * d0 / C
    expected = np.exp(1j * (2 * np.pi * fb * t + 4 * np.pi * 77e9 * d0 / C))
    assert np.allclose(frames[0], expected, atol=1e-9)
    assert np.allclose(frames, frames[0])


@pytest.mark.parametrize("profile", [MMWAVE, ACOUSTIC])
@pytest.mark.parametrize("d0", [0.3, 0.6, 1.2])
def test_range_peak_at_expected_bin(profile, d0):
    scene = Scene(d0, still(0.2), snr_db=np.inf)
    rp = fmcw.range_fft(fmcw.simulate_frames(profile, scene, n_frames=4), profile)
    assert int(np.argmax(np.abs(rp[0]))) == profile.range_bin(d0)


def test_phase_tracks_displacement_linearly():
    scene = Scene(0.3, sine_mm(0.1, 60.0, 2.0), snr_db=np.inf)
    disp, series = fmcw.sense(MMWAVE, scene)
    truth = np.interp(np.arange(len(disp)) * MMWAVE.frame_period, scene.displacement.times,
                      scene.displacement.samples)
    truth -= truth.mean()
    # centre-of-sweep wavelength makes the recovery unbiased
    gain = np.dot(disp.samples, truth) / np.dot(truth, truth)
    assert gain == pytest.approx(1.0, abs=0.01)
    # the literal start-frequency wavelength overstates by (f_c + B/2) / f_c
    start = fmcw.displacement_from_phase(series, MMWAVE, reference="start")
    ratio = np.dot(start.samples, truth) / np.dot(truth, truth)
    assert ratio == pytest.approx(1 + MMWAVE.bandwidth / 2 / 77e9, rel=0.01)


def test_noise_power_matches_snr():
    scene = Scene(0.3, still(0.5), snr_db=10.0)
    noisy = fmcw.simulate_frames(MMWAVE, scene, np.random.default_rng(0))
    clean = fmcw.simulate_frames(MMWAVE, scene)
    p_noise = np.mean(np.abs(noisy - clean) ** 2)
    assert 10 * np.log10(1.0 / p_noise) == pytest.approx(10.0, abs=0.1)


def test_blocks_do_not_change_noise():
    scene = Scene(0.3, sine_mm(0.5, 70.0, 1.2), snr_db=5.0)
    full = fmcw.simulate_frames(MMWAVE, scene, np.random.default_rng(9))
    part = fmcw.simulate_frames(MMWAVE, scene, np.random.default_rng(9), n_frames=1500)
    assert np.array_equal(full[:1500], part)
    rp = fmcw.observe(MMWAVE, scene, np.random.default_rng(9))
    assert np.allclose(rp, fmcw.range_fft(full, MMWAVE)[:, :128])


def test_sense_is_deterministic():
    scene = Scene(0.3, sine_mm(0.5, 70.0, 1.0), snr_db=15.0)
    a, _ = fmcw.sense(ACOUSTIC, scene, np.random.default_rng(4))
    b, _ = fmcw.sense(ACOUSTIC, scene, np.random.default_rng(4))
    assert np.array_equal(a.samples, b.samples)


@pytest.mark.parametrize("profile", [MMWAVE, ACOUSTIC])
def test_recovered_displacement_correlates(profile):
    src = sine_mm(0.5, 72.0, 12.0)
    disp, series = fmcw.sense(profile, Scene(0.3, src, snr_db=20.0), np.random.default_rng(2))
    assert series.sample_rate == pytest.approx(profile.frame_rate)
    truth = np.interp(np.arange(len(disp)) / profile.frame_rate, src.times, src.samples)
    assert np.corrcoef(disp.samples, truth)[0, 1] > 0.95


def test_select_bin_prefers_moving_target_over_clutter():
    scene = Scene(0.6, sine_mm(1.0, 80.0, 1.0), snr_db=30.0,
                  clutter=(Reflector(0.3, 3.0),))
    rp = fmcw.observe(MMWAVE, scene, np.random.default_rng(0))
    assert fmcw.select_bin(rp) == MMWAVE.range_bin(0.6)


def test_select_bin_static_scene_falls_back_to_strongest():
    rp = fmcw.range_fft(fmcw.simulate_frames(MMWAVE, Scene(0.45, still(0.05), snr_db=np.inf)), MMWAVE)
    assert fmcw.select_bin(rp) == MMWAVE.range_bin(0.45)


def test_extract_phase_unwraps():
    phi = np.linspace(0, 40, 400)
    rp = np.zeros((400, 4), complex)
    rp[:, 2] = np.exp(1j * phi)
    series = fmcw.extract_phase(rp, 2, 100.0)
    assert np.allclose(series.phase, phi - phi.mean())
    with pytest.raises(FMCWError):
        fmcw.extract_phase(rp, 9, 100.0)


def test_out_of_range_and_too_short():
    with pytest.raises(FMCWError):
        fmcw.simulate_frames(ACOUSTIC, Scene(50.0, still(1.0)))
    with pytest.raises(FMCWError):
        fmcw.simulate_frames(ACOUSTIC, Scene(0.3, still(0.001)))
    with pytest.raises(FMCWError):
        Scene(-1.0, still(1.0))


def test_if_matrix_file(tmp_path):
    frames = fmcw.simulate_frames(MMWAVE, Scene(0.3, still(0.01)), np.random.default_rng(1))
    path = tmp_path / "if.bin"
    fmcw.write_if_matrix(path, frames)
    raw = path.read_bytes()
    assert len(raw) == 16 + frames.size * 8
    back = fmcw.read_if_matrix(path)
    assert back.dtype == np.dtype("<c8")
    assert np.allclose(back, frames, atol=1e-6)
    (tmp_path / "bad.bin").write_bytes(b"x" * 32)
    with pytest.raises(FMCWError):
        fmcw.read_if_matrix(tmp_path / "bad.bin")


@settings(max_examples=10)
@given(st.floats(0.05, 0.5))
def test_phase_amplitude_scales_with_displacement(amp_mm):
    scene = Scene(0.3, sine_mm(amp_mm, 60.0, 2.0), snr_db=np.inf)
    _, series = fmcw.sense(MMWAVE, scene)
    expected = 4 * np.pi * amp_mm * 1e-3 / MMWAVE.effective_wavelength
    assert np.ptp(series.phase) / 2 == pytest.approx(expected, rel=0.01)
