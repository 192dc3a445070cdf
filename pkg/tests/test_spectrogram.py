import numpy as np
import pytest

from vitalcloak import spectrogram as sg


@pytest.mark.parametrize("pad", [1, 4])
def test_bin_spacing_is_resolution_over_pad(pad):
    x = np.random.default_rng(0).standard_normal(30 * 100)
    t, f, p = sg.spectrogram(x, 100.0, resolution_bpm=6.0, pad=pad)
    assert np.allclose(np.diff(f), 6.0 / pad)
    assert p.shape == (len(f), len(t))


def test_padding_separates_crowded_lines():
    fs = 200.0
    t = np.arange(int(30 * fs)) / fs
    x = sum(a * np.sin(2 * np.pi * b / 60 * t) for a, b in ((1.0, 66.0), (0.6, 81.1), (1.0, 94.0)))
    for pad, expect in ((1, False), (4, True)):
        _, f, p = sg.spectrogram(x, fs, pad=pad)
        assert sg.ridges_match(f, p, [66.0, 81.1, 94.0]) is expect


@pytest.mark.parametrize("bpm", [54.0, 78.0, 102.0, 81.0])
def test_tone_ridge(bpm):
    fs = 200.0
    t = np.arange(int(30 * fs)) / fs
    _, f, p = sg.spectrogram(np.sin(2 * np.pi * bpm / 60 * t), fs)
    top = sg.ridges(f, p, top=1)[0]
    assert abs(top - bpm) <= 6.0
    assert sg.ridges_match(f, p, [bpm])


def test_ridges_match_rejects_absent_line():
    fs = 200.0
    t = np.arange(int(30 * fs)) / fs
    _, f, p = sg.spectrogram(np.sin(2 * np.pi * 60 / 60 * t), fs)
    assert not sg.ridges_match(f, p, [100.0])


def test_too_short():
    with pytest.raises(ValueError):
        sg.spectrogram(np.zeros(500), 100.0)


def test_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    t, f, p = np.arange(4.0), np.arange(3.0) * 6, rng.random((3, 4))
    sg.save_matrix(tmp_path / "m.txt", t, f, p)
    t2, f2, p2 = sg.load_matrix(tmp_path / "m.txt")
    assert np.allclose(t, t2) and np.allclose(f, f2) and np.allclose(p, p2, rtol=1e-9)
