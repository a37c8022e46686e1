import numpy as np
from scipy.special import zeta

from soundranging.series import PowerLaw, classify_series, power_tail


def test_inverse_k_converges():
    k = np.arange(1, 4097)
    v = classify_series(1.0 / k)
    assert v.converges
    assert v.growth_ratio >= 1.0


def test_constant_diverges():
    v = classify_series(np.ones(4096))
    assert v.diverges
    assert abs(v.growth_ratio - 2.0) < 1e-12


def test_harmonic_squares_diverge_at_large_n():
    assert classify_series(1.0 / np.sqrt(np.arange(1, 4097))).diverges


def test_short_sequence_undetermined():
    assert classify_series(np.ones(8)).verdict == "undetermined"


def test_slow_decay_undetermined_with_wide_margins():
    # with equal default margins a long sequence always gets a verdict
    k = np.arange(1, 65)
    v = classify_series(k ** -0.51, div_margin=0.5, conv_margin=0.01)
    assert v.verdict == "undetermined"
    assert classify_series(k ** -0.51).verdict != "undetermined"


def test_rounding_noise_counts_as_zero():
    assert classify_series(np.full(256, 6e-17)).converges


def test_power_law_fit_exact():
    k = np.arange(1, 101)
    fit = PowerLaw.fit(3.0 / k**2)
    assert abs(fit.exponent - 2.0) < 1e-12
    assert abs(fit.scale - 3.0) < 1e-9


def test_power_tail_matches_zeta():
    n = 1000
    k = np.arange(1, n + 1)
    assert abs(power_tail(1.0 / k) - zeta(2.0, n + 1)) < 1e-15
    assert power_tail(np.ones(10)) is None
    assert power_tail(np.r_[1.0, 0.0]) == 0.0
