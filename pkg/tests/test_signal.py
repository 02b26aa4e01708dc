import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fatsynth.signal import (
    DEFAULT_FAT_AMPLITUDES,
    DEFAULT_FAT_PPM,
    GYROMAGNETIC_MHZ_PER_T,
    CSESimulator,
    ComplexImageSeries,
    EchoProtocol,
    FatSpectrum,
    QMaps,
    add_complex_noise,
    fat_phasor,
    foreground_mask,
    forward_signal_complex,
    forward_signal_shared_phase,
    pdff_map,
    ppm_to_hz,
)

PROT = EchoProtocol.uniform(1.4e-3, 2.2e-3, 6)
SPEC = FatSpectrum.default()


def _maps(rng, shape=(8, 9)):
    return QMaps(
        rho_w=rng.uniform(0, 1, shape),
        rho_f=rng.uniform(0, 1, shape),
        r2star=rng.uniform(0, 200, shape),
        field=rng.uniform(-200, 200, shape),
        phi0=rng.uniform(-0.5, 0.5, shape),
    )


def test_default_spectrum_values():
    # six-peak liver fat model at 1.5 T
    assert SPEC.n_peaks == 6
    assert np.isclose(sum(SPEC.amplitudes), 1.0)
    assert SPEC.source_ppm == tuple(DEFAULT_FAT_PPM)
    assert np.allclose(SPEC.amplitudes, np.array(DEFAULT_FAT_AMPLITUDES) / sum(DEFAULT_FAT_AMPLITUDES))
    # main methylene peak: -3.4 ppm * 42.5774 MHz/T * 1.5 T
    assert SPEC.frequencies[1] == pytest.approx(-3.4 * GYROMAGNETIC_MHZ_PER_T * 1.5)
    assert SPEC.frequencies[1] == pytest.approx(-217.14474)


def test_ppm_to_hz_scalar_and_array():
    assert isinstance(ppm_to_hz(1.0, 3.0), float)
    assert ppm_to_hz(1.0, 3.0) == pytest.approx(127.7322)
    np.testing.assert_allclose(ppm_to_hz(np.array([1.0, -2.0]), 1.5), [63.8661, -127.7322])


def test_spectrum_rejects_bad_input():
    with pytest.raises(ValueError):
        FatSpectrum.from_ppm([1.0, 2.0], [0.5])
    with pytest.raises(ValueError):
        FatSpectrum.from_ppm([1.0], [-1.0])


def test_protocol_uniform():
    p = EchoProtocol.uniform(1.4e-3, 2.2e-3, 6)
    np.testing.assert_allclose(p.te, 1.4e-3 + 2.2e-3 * np.arange(6))
    assert p.n_echoes == 6
    assert p.delta_te == pytest.approx(2.2e-3)
    assert p.truncate(3).n_echoes == 3
    assert EchoProtocol((1e-3, 2e-3, 4e-3)).delta_te is None
    with pytest.raises(ValueError):
        EchoProtocol.uniform(1e-3, 1e-3, 0)
    with pytest.raises(ValueError):
        p.truncate(7)


def test_fat_phasor_at_zero_is_one():
    assert fat_phasor(SPEC, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert isinstance(fat_phasor(SPEC, 0.0), complex)
    assert fat_phasor(SPEC, np.zeros(3)).shape == (3,)


def test_qmaps_invariants():
    rng = np.random.default_rng(0)
    q = _maps(rng)
    np.testing.assert_array_equal(QMaps.from_stack(q.stack()).stack(), q.stack())
    with pytest.raises(ValueError):
        QMaps(-np.ones(2), np.ones(2), np.ones(2), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        QMaps(np.ones(2), np.ones(2), np.array([1.0, np.nan]), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        QMaps(np.ones(2), np.ones(3), np.ones(2), np.zeros(2), np.zeros(2))


def test_shared_phase_equals_complex_model():
    rng = np.random.default_rng(1)
    q = _maps(rng)
    a = forward_signal_shared_phase(q, PROT, SPEC).echoes
    b = forward_signal_complex(q.to_complex(), PROT, SPEC).echoes
    assert np.max(np.abs(a - b)) <= 1e-12


def test_hand_computed_voxel():
    # water-only voxel: I_n = rho exp(-R2* t) exp(i 2 pi (phi t + phi0))
    q = QMaps(np.array([2.0]), np.array([0.0]), np.array([50.0]), np.array([30.0]), np.array([0.25]))
    te = PROT.te
    expect = 2.0 * np.exp(-50 * te) * np.exp(2j * np.pi * (30 * te + 0.25))
    np.testing.assert_allclose(forward_signal_shared_phase(q, PROT, SPEC).echoes[:, 0], expect, rtol=1e-14)


def test_field_strength_mismatch():
    q = _maps(np.random.default_rng(2), (2, 2))
    with pytest.raises(ValueError, match="field strength"):
        forward_signal_shared_phase(q, PROT, FatSpectrum.default(3.0))


@settings(max_examples=40, deadline=None)
@given(
    rw=st.floats(0, 2), rf=st.floats(0, 2), r2=st.floats(0, 300),
    phi=st.floats(-500, 500), phi0=st.floats(-1, 1),
    phi_b=st.floats(-500, 500), phi0_b=st.floats(-1, 1),
)
def test_magnitude_invariant_to_phase_terms(rw, rf, r2, phi, phi0, phi_b, phi0_b):
    def mag(f, p0):
        q = QMaps(np.array([rw]), np.array([rf]), np.array([r2]), np.array([0.0]), np.array([0.0]))
        base = forward_signal_shared_phase(q, PROT, SPEC).echoes
        q2 = QMaps(q.rho_w, q.rho_f, q.r2star, np.array([f]), np.array([p0]))
        return np.abs(forward_signal_shared_phase(q2, PROT, SPEC).echoes), np.abs(base)

    a, base = mag(phi, phi0)
    b, _ = mag(phi_b, phi0_b)
    np.testing.assert_allclose(a, base, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(b, base, rtol=1e-12, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(r2=st.floats(0, 400), rw=st.floats(0.01, 2), rf=st.floats(0, 2))
def test_r2star_decay_law(r2, rw, rf):
    # |I(R2*)| = |I(0)| exp(-R2* t) echo by echo
    q0 = QMaps(np.array([rw]), np.array([rf]), np.array([0.0]), np.array([10.0]), np.array([0.1]))
    q1 = QMaps(q0.rho_w, q0.rho_f, np.array([r2]), q0.field, q0.phi0)
    a = np.abs(forward_signal_shared_phase(q0, PROT, SPEC).echoes[:, 0])
    b = np.abs(forward_signal_shared_phase(q1, PROT, SPEC).echoes[:, 0])
    np.testing.assert_allclose(b, a * np.exp(-r2 * PROT.te), rtol=1e-12, atol=1e-300)


@settings(max_examples=50, deadline=None)
@given(rw=st.floats(0, 10), rf=st.floats(0, 10))
def test_pdff_bounds(rw, rf):
    q = QMaps(np.array([rw, 1.0]), np.array([rf, 0.0]), np.zeros(2), np.zeros(2), np.zeros(2))
    p = pdff_map(q)
    assert np.all((p >= 0) & (p <= 1))
    if rw + rf > 1e-6 * max(rw + rf, 1.0):
        assert p[0] == pytest.approx(rf / (rw + rf))


def test_pdff_floor_zeroes_empty_voxels():
    q = QMaps(np.array([0.0, 1.0]), np.array([0.0, 3.0]), np.zeros(2), np.zeros(2), np.zeros(2))
    np.testing.assert_allclose(pdff_map(q), [0.0, 0.75])


def test_noise_level_and_determinism():
    rng = np.random.default_rng(3)
    q = _maps(rng, (64, 64))
    s = forward_signal_shared_phase(q, PROT, SPEC)
    a = add_complex_noise(s, 50.0, seed=7)
    b = add_complex_noise(s, 50.0, seed=7)
    np.testing.assert_array_equal(a.echoes, b.echoes)
    fg = foreground_mask(s)
    sigma = np.abs(s.echoes[0][fg]).mean() / 50.0
    assert a.metadata["noise_sigma"] == pytest.approx(sigma)
    resid = (a.echoes - s.echoes).real.ravel()
    assert np.std(resid) == pytest.approx(sigma, rel=0.03)
    clean = add_complex_noise(s, np.inf, seed=0)
    np.testing.assert_array_equal(clean.echoes, s.echoes)
    with pytest.raises(ValueError):
        add_complex_noise(s, -1.0, seed=0)


def test_series_truncate():
    q = _maps(np.random.default_rng(4), (3, 3))
    s = forward_signal_shared_phase(q, PROT, SPEC)
    t = s.truncate(3)
    assert isinstance(t, ComplexImageSeries)
    assert t.n_echoes == 3
    np.testing.assert_array_equal(t.echoes, s.echoes[:3])


def test_simulator_estimator():
    from sklearn.base import clone

    sim = CSESimulator()
    X = np.array([[1.0, 0.5, 30.0, 20.0, 0.1], [0.2, 0.8, 60.0, -40.0, 0.0]])
    out = sim.fit(X).transform(X)
    assert out.shape == (2, 6) and np.iscomplexobj(out)
    q = QMaps.from_stack(X.T)
    np.testing.assert_allclose(out, forward_signal_shared_phase(q, PROT, SPEC).echoes.T)
    assert clone(sim).get_params()["field_strength"] == 1.5
    with pytest.raises(ValueError):
        sim.transform(np.ones((2, 4)))
