import math

import numpy as np
import pytest

from scatenc.filterbank import (FilterBank, FilterBankError, FilterParams, build_filter_bank,
                                frequency_grid, littlewood_paley, make_mother_morlet, reflect)


def argmax_freq(f, params):
    wy, wx = frequency_grid(params.height, params.width)
    i = np.argmax(np.abs(f.spectrum))
    return wx.flat[i], wy.flat[i]


def test_mother_zero_sum():
    p = FilterParams(J=1, L=1, width=64, height=64)
    f = make_mother_morlet(p, 0.0)
    assert abs(f.spectrum[0, 0]) <= 1e-6 * np.abs(f.spectrum).max()
    assert np.abs(f.spectrum).max() == pytest.approx(1.0)


def test_mother_peak_on_positive_wx_axis():
    p = FilterParams(J=1, L=1, width=64, height=64)
    wx, wy = argmax_freq(make_mother_morlet(p, 0.0), p)
    bin_ = 2 * math.pi / 64
    assert wy == 0
    assert wx > 0
    assert abs(wx - p.xi0) <= bin_ * (1 + 1e-9)


def test_mother_90_is_transpose_of_0():
    p = FilterParams(J=1, L=1, width=64, height=64)
    f0 = make_mother_morlet(p, 0.0).spectrum
    f90 = make_mother_morlet(p, 90.0).spectrum
    assert np.abs(f90 - f0.T).max() <= 1e-10


def test_mother_rejects_tiny_raster():
    with pytest.raises(FilterBankError, match="raster too small"):
        make_mother_morlet(FilterParams(J=1, L=1, width=4, height=16), 0.0)


def test_params_validation():
    with pytest.raises(FilterBankError):
        FilterParams(J=4, L=4, width=64, height=64, xi0=3.5)
    with pytest.raises(FilterBankError):
        FilterParams(J=0, L=4, width=64, height=64)


def test_bank_size_and_orientations():
    bank = build_filter_bank(FilterParams(J=4, L=8, width=64, height=64))
    assert len(bank) == 32
    assert sorted({f.gamma for f in bank}) == [k * 22.5 for k in range(8)]
    # j-major, gamma-minor
    assert [(f.j, f.gamma) for f in bank] == [(j, k * 22.5) for j in range(4) for k in range(8)]


def test_degenerate_bank_equals_mother():
    p = FilterParams(J=1, L=1, width=32, height=32)
    bank = build_filter_bank(p)
    assert len(bank) == 1
    np.testing.assert_allclose(bank.filters[0].spectrum, make_mother_morlet(p, 0.0).spectrum,
                               rtol=0, atol=1e-12)


def test_coarsest_peak_radius():
    p = FilterParams(J=5, L=2, width=128, height=128)
    f = build_filter_bank(p).get(4, 0)
    wx, wy = argmax_freq(f, p)
    assert abs(math.hypot(wx, wy) - p.xi0 / 16) <= 2 * math.pi / 128


def test_j_too_large():
    with pytest.raises(FilterBankError, match="J too large"):
        build_filter_bank(FilterParams(J=6, L=4, width=32, height=32))


def test_every_filter_zero_sum():
    bank = build_filter_bank(FilterParams(J=5, L=4, width=64, height=48))
    for f in bank:
        assert abs(f.spectrum[0, 0]) <= 1e-6 * np.abs(f.spectrum).max()


def test_dilation_property_inner_half():
    # psi_{j+1}(w) = psi_j(2w) on |w| <= pi/2; periodization error only vanishes
    # once 2^j * pi exceeds the envelope reach, i.e. from j = 2 with the defaults
    n = 128
    bank = build_filter_bank(FilterParams(J=5, L=4, width=n, height=n))
    idx = np.r_[0:n // 4 + 1, 3 * n // 4:n]
    for j in range(2, 4):
        for g in range(4):
            fine = bank.get(j, g).spectrum
            coarse = bank.get(j + 1, g).spectrum
            doubled = fine[np.ix_((2 * idx) % n, (2 * idx) % n)]
            assert np.abs(coarse[np.ix_(idx, idx)] - doubled).max() <= 1e-8


def test_bank_is_deterministic():
    p = FilterParams(J=3, L=4, width=32, height=32)
    a, b = build_filter_bank(p), build_filter_bank(p)
    for fa, fb in zip(a, b):
        np.testing.assert_array_equal(fa.spectrum, fb.spectrum)


def test_lp_empty_bank_is_zero():
    p = FilterParams(J=1, L=1, width=32, height=32)
    rep = littlewood_paley(FilterBank(p, []), (0.5, 2.0))
    assert rep.a_min == rep.a_max == 0.0


def test_lp_default_coverage():
    p = FilterParams(J=5, L=8, width=128, height=128)
    rep = littlewood_paley(build_filter_bank(p), (p.xi0 / 2 ** 5, p.xi0))
    assert rep.a_min >= 0.3 * rep.a_max
    assert 0 <= rep.a_min <= rep.a_max


def test_lp_scales_quadratically():
    p = FilterParams(J=3, L=4, width=32, height=32)
    bank = build_filter_bank(p)
    doubled = FilterBank(p, [type(f)(f.gamma, f.j, 2 * f.spectrum) for f in bank])
    ann = (p.xi0 / 8, p.xi0)
    a, b = littlewood_paley(bank, ann), littlewood_paley(doubled, ann)
    assert b.a_min == pytest.approx(4 * a.a_min, rel=1e-12)
    assert b.a_max == pytest.approx(4 * a.a_max, rel=1e-12)


def test_lp_matches_direct_sum():
    # independent pointwise evaluation of sum |f(w)|^2 + |f(-w)|^2
    p = FilterParams(J=2, L=2, width=16, height=16)
    bank = build_filter_bank(p)
    wy, wx = frequency_grid(16, 16)
    vals = []
    for r in range(16):
        for c in range(16):
            rad = math.hypot(wx[r, c], wy[r, c])
            if 0.5 <= rad <= 2.0:
                s = sum(abs(f.spectrum[r, c]) ** 2 + abs(f.spectrum[-r % 16, -c % 16]) ** 2
                        for f in bank)
                vals.append(s)
    rep = littlewood_paley(bank, (0.5, 2.0))
    assert rep.a_min == pytest.approx(min(vals), rel=1e-12)
    assert rep.a_max == pytest.approx(max(vals), rel=1e-12)


def test_lp_bad_annulus():
    bank = build_filter_bank(FilterParams(J=2, L=2, width=16, height=16))
    with pytest.raises(FilterBankError):
        littlewood_paley(bank, (1.0, 0.5))
    with pytest.raises(FilterBankError, match="no grid points"):
        littlewood_paley(bank, (0.01, 0.02))


def test_reflect():
    a = np.arange(12.0).reshape(3, 4)
    r = reflect(a)
    for i in range(3):
        for j in range(4):
            assert r[i, j] == a[-i % 3, -j % 4]
