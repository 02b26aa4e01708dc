"""Chemical-shift-encoded signal model: fat spectrum, echo protocols,
quantitative maps, forward simulation, PDFF and noise injection.

Internal units are fixed: seconds for echo times, Hz for frequencies and
the field map, s^-1 for R2*, and cycles for the common initial phase.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_positive, check_real_array, check_seed

__all__ = [
    "GYROMAGNETIC_MHZ_PER_T",
    "DEFAULT_FAT_PPM",
    "DEFAULT_FAT_AMPLITUDES",
    "FatSpectrum",
    "EchoProtocol",
    "QMaps",
    "QMapsComplex",
    "ComplexImageSeries",
    "ppm_to_hz",
    "fat_phasor",
    "forward_signal_shared_phase",
    "forward_signal_complex",
    "pdff_map",
    "foreground_mask",
    "add_complex_noise",
    "CSESimulator",
]

GYROMAGNETIC_MHZ_PER_T = 42.5774

# six-peak liver triglyceride model, ppm relative to water
DEFAULT_FAT_PPM = (-3.80, -3.40, -2.60, -1.94, -0.39, 0.60)
DEFAULT_FAT_AMPLITUDES = (0.087, 0.693, 0.128, 0.004, 0.039, 0.048)

PDFF_FLOOR = 1e-6


def ppm_to_hz(ppm, field_strength):
    """Convert a chemical shift in ppm to Hz at ``field_strength`` tesla."""
    field_strength = check_positive(field_strength, "field_strength")
    out = np.asarray(ppm, dtype=np.float64) * GYROMAGNETIC_MHZ_PER_T * field_strength
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FatSpectrum:
    """Multi-peak fat spectrum. Amplitudes are normalized to sum to one."""

    frequencies: tuple
    amplitudes: tuple
    field_strength: float = 1.5
    source_ppm: tuple = None

    def __post_init__(self):
        freqs = tuple(float(f) for f in np.atleast_1d(self.frequencies))
        amps = np.asarray(self.amplitudes, dtype=np.float64).ravel()
        if len(freqs) == 0 or len(freqs) != amps.size:
            raise ValueError("spectrum needs one amplitude per peak and at least one peak")
        if not np.all(np.isfinite(freqs)) or not np.all(np.isfinite(amps)):
            raise ValueError("spectrum peaks must be finite")
        if np.any(amps <= 0):
            raise ValueError("peak amplitudes must be strictly positive")
        check_positive(self.field_strength, "field_strength")
        amps = amps / amps.sum()
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in amps))
        object.__setattr__(self, "field_strength", float(self.field_strength))
        if self.source_ppm is not None:
            object.__setattr__(self, "source_ppm", tuple(float(p) for p in self.source_ppm))

    @classmethod
    def from_ppm(cls, ppm, amplitudes, field_strength=1.5):
        hz = [ppm_to_hz(p, field_strength) for p in ppm]
        return cls(tuple(hz), tuple(amplitudes), field_strength, source_ppm=tuple(ppm))

    @classmethod
    def default(cls, field_strength=1.5):
        return cls.from_ppm(DEFAULT_FAT_PPM, DEFAULT_FAT_AMPLITUDES, field_strength)

    @property
    def n_peaks(self):
        return len(self.frequencies)

    def to_dict(self):
        out = {"field_strength": self.field_strength,
               "frequencies_hz": list(self.frequencies),
               "amplitudes": list(self.amplitudes)}
        if self.source_ppm is not None:
            out["ppm"] = list(self.source_ppm)
        return out


@dataclass(frozen=True)
class EchoProtocol:
    """Multi-echo acquisition: strictly increasing positive echo times (s)."""

    echo_times: tuple
    field_strength: float = 1.5

    def __post_init__(self):
        te = np.asarray(self.echo_times, dtype=np.float64).ravel()
        if te.size < 1:
            raise ValueError("protocol needs at least one echo")
        if not np.all(np.isfinite(te)) or np.any(te <= 0):
            raise ValueError("echo times must be positive and finite")
        if np.any(np.diff(te) <= 0):
            raise ValueError("echo times must be strictly increasing")
        check_positive(self.field_strength, "field_strength")
        object.__setattr__(self, "echo_times", tuple(float(t) for t in te))
        object.__setattr__(self, "field_strength", float(self.field_strength))

    @classmethod
    def uniform(cls, te1, delta_te, n, field_strength=1.5):
        """Equally spaced echoes ``te1 + k * delta_te`` for ``k < n``."""
        check_positive(te1, "te1")
        check_positive(delta_te, "delta_te")
        if int(n) != n or n < 1:
            raise ValueError(f"echo count must be a positive integer, got {n}")
        return cls(tuple(te1 + k * delta_te for k in range(int(n))), field_strength)

    @property
    def n_echoes(self):
        return len(self.echo_times)

    @property
    def te(self):
        return np.asarray(self.echo_times)

    @property
    def delta_te(self):
        """Echo spacing if the echoes are uniform, else ``None``."""
        if self.n_echoes < 2:
            return None
        d = np.diff(self.te)
        return float(d[0]) if np.allclose(d, d[0], rtol=1e-9, atol=0) else None

    def truncate(self, n):
        """Keep the first ``n`` echoes."""
        if not 1 <= n <= self.n_echoes:
            raise ValueError(f"cannot keep {n} of {self.n_echoes} echoes")
        return EchoProtocol(self.echo_times[:n], self.field_strength)

    def to_dict(self):
        return {"echo_times": list(self.echo_times), "field_strength": self.field_strength}


def _as_maps(*arrays):
    out = [np.asarray(a, dtype=np.float64) for a in arrays]
    shape = out[0].shape
    if any(a.shape != shape for a in out):
        raise ValueError(f"maps must share dimensions, got {[a.shape for a in out]}")
    return out


@dataclass(frozen=True, eq=False)
class QMaps:
    """Real-valued quantitative maps with a common initial phase.

    Maps may be 2-D images or any other shape (e.g. a flat list of voxels);
    all five must agree.
    """

    rho_w: np.ndarray
    rho_f: np.ndarray
    r2star: np.ndarray
    field: np.ndarray
    phi0: np.ndarray
    pixel_size: float = 1.5

    CHANNELS = ("rho_w", "rho_f", "r2star", "field", "phi0")

    def __post_init__(self):
        maps = _as_maps(self.rho_w, self.rho_f, self.r2star, self.field, self.phi0)
        for name, m in zip(self.CHANNELS, maps):
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, m)
        for name in ("rho_w", "rho_f", "r2star"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be non-negative")
        check_positive(self.pixel_size, "pixel_size")

    @property
    def shape(self):
        return self.rho_w.shape

    @property
    def height(self):
        return self.shape[0]

    @property
    def width(self):
        return self.shape[1]

    def stack(self):
        """Channels stacked on a leading axis, in ``CHANNELS`` order."""
        return np.stack([getattr(self, c) for c in self.CHANNELS])

    @classmethod
    def from_stack(cls, arr, pixel_size=1.5):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape[0] != 5:
            raise ValueError(f"expected 5 stacked channels, got {arr.shape[0]}")
        return cls(*arr, pixel_size=pixel_size)

    def to_complex(self):
        """Fold the shared phase into complex amplitudes."""
        phase = np.exp(2j * np.pi * self.phi0)
        return QMapsComplex(self.rho_w * phase, self.rho_f * phase, self.r2star, self.field)


@dataclass(frozen=True, eq=False)
class QMapsComplex:
    """Quantitative maps with independent complex water and fat amplitudes."""

    rho_w: np.ndarray
    rho_f: np.ndarray
    r2star: np.ndarray
    field: np.ndarray

    def __post_init__(self):
        rw = np.asarray(self.rho_w, dtype=np.complex128)
        rf = np.asarray(self.rho_f, dtype=np.complex128)
        r2, fm = _as_maps(self.r2star, self.field)
        if rw.shape != r2.shape or rf.shape != r2.shape:
            raise ValueError("maps must share dimensions")
        if np.any(r2 < 0):
            raise ValueError("r2star must be non-negative")
        object.__setattr__(self, "rho_w", rw)
        object.__setattr__(self, "rho_f", rf)
        object.__setattr__(self, "r2star", r2)
        object.__setattr__(self, "field", fm)

    @property
    def shape(self):
        return self.rho_w.shape


@dataclass(frozen=True, eq=False)
class ComplexImageSeries:
    """Echo images stacked on the leading axis, shape ``(N, *spatial)``."""

    echoes: np.ndarray
    protocol: EchoProtocol
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        echoes = np.asarray(self.echoes, dtype=np.complex128)
        if echoes.ndim < 1 or echoes.shape[0] != self.protocol.n_echoes:
            raise ValueError(
                f"series has {echoes.shape[0] if echoes.ndim else 0} echoes, "
                f"protocol has {self.protocol.n_echoes}")
        object.__setattr__(self, "echoes", echoes)

    @property
    def n_echoes(self):
        return self.echoes.shape[0]

    @property
    def shape(self):
        return self.echoes.shape[1:]

    def truncate(self, n):
        return ComplexImageSeries(self.echoes[:n], self.protocol.truncate(n), dict(self.metadata))


def fat_phasor(spectrum, t):
    """Sum of ``a_p * exp(i 2 pi f_p t)`` over the fat peaks.

    ``t`` may be a scalar or an array of times in seconds.
    """
    t = np.asarray(t, dtype=np.float64)
    f = np.asarray(spectrum.frequencies)
    a = np.asarray(spectrum.amplitudes)
    out = np.exp(2j * np.pi * np.multiply.outer(t, f)) @ a
    return complex(out) if out.ndim == 0 else out


def _check_fields(protocol, spectrum):
    if not np.isclose(protocol.field_strength, spectrum.field_strength, rtol=1e-9, atol=0):
        raise ValueError(
            f"spectrum field strength {spectrum.field_strength} T does not match "
            f"protocol {protocol.field_strength} T")


def _simulate(rho_w, rho_f, r2star, fieldmap, protocol, spectrum):
    te = protocol.te.reshape((-1,) + (1,) * rho_w.ndim)
    fp = fat_phasor(spectrum, protocol.te).reshape(te.shape)
    decay = np.exp((-r2star + 2j * np.pi * fieldmap) * te)
    return decay * (rho_w + rho_f * fp)


def forward_signal_shared_phase(q, protocol, spectrum, shape=None):
    """Simulate echo images from real maps with a common initial phase.

    ``I_n = exp(-R2* t_n) exp(i2 pi field t_n) exp(i2 pi phi0) (rho_w + rho_f * fat(t_n))``
    """
    if shape is not None and tuple(shape) != q.shape:
        raise ValueError(f"maps have shape {q.shape}, requested {tuple(shape)}")
    _check_fields(protocol, spectrum)
    phase = np.exp(2j * np.pi * q.phi0)
    echoes = _simulate(q.rho_w, q.rho_f, q.r2star, q.field, protocol, spectrum) * phase
    return ComplexImageSeries(echoes, protocol)


def forward_signal_complex(q, protocol, spectrum, shape=None):
    """Simulate echo images from maps with independent complex amplitudes."""
    if shape is not None and tuple(shape) != q.shape:
        raise ValueError(f"maps have shape {q.shape}, requested {tuple(shape)}")
    _check_fields(protocol, spectrum)
    return ComplexImageSeries(_simulate(q.rho_w, q.rho_f, q.r2star, q.field, protocol, spectrum), protocol)


def pdff_map(q, floor=PDFF_FLOOR):
    """Fat fraction ``|rho_f| / (|rho_w| + |rho_f|)`` in [0, 1].

    Voxels whose total is below ``floor`` times the largest total are set
    to zero.
    """
    w = np.abs(q.rho_w)
    f = np.abs(q.rho_f)
    total = w + f
    if total.size == 0:
        return total
    cutoff = floor * total.max()
    out = np.zeros_like(total)
    ok = (total > cutoff) & (total > 0)
    out[ok] = f[ok] / total[ok]
    return np.clip(out, 0.0, 1.0)


def foreground_mask(series, threshold=0.05):
    """Voxels whose first-echo magnitude exceeds ``threshold`` of the max."""
    mag = np.abs(series.echoes[0])
    if mag.size == 0 or mag.max() == 0:
        return np.zeros(mag.shape, dtype=bool)
    return mag > threshold * mag.max()


def add_complex_noise(series, snr, seed, mask=None):
    """Add white Gaussian noise independently to real and imaginary parts.

    The standard deviation is the mean first-echo magnitude over the
    foreground divided by ``snr``. ``snr=inf`` returns an unchanged copy.
    """
    snr = check_positive(snr, "snr", allow_inf=True)
    seed = check_seed(seed)
    if np.isinf(snr):
        return ComplexImageSeries(series.echoes.copy(), series.protocol,
                                  dict(series.metadata, snr="inf", noise_sigma=0.0))
    if mask is None:
        mask = foreground_mask(series)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != series.shape:
        raise ValueError(f"mask shape {mask.shape} does not match images {series.shape}")
    if not mask.any():
        raise ValueError("empty foreground: cannot set noise level")
    sigma = float(np.abs(series.echoes[0][mask]).mean()) / snr
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(series.echoes.shape) + 1j * rng.standard_normal(series.echoes.shape)
    meta = dict(series.metadata, snr=snr, noise_sigma=sigma, noise_seed=seed)
    return ComplexImageSeries(series.echoes + sigma * noise, series.protocol, meta)


class CSESimulator(BaseEstimator, TransformerMixin):
    """Voxelwise forward model as a scikit-learn transformer.

    ``transform`` maps an ``(n_voxels, 5)`` array of
    ``(rho_w, rho_f, r2star, field, phi0)`` rows to ``(n_voxels, n_echoes)``
    complex signals.

    Parameters
    ----------
    echo_times : sequence of float
        Echo times in seconds.
    field_strength : float
        Main field in tesla; also sets the default fat spectrum.
    fat_ppm, fat_amplitudes : sequence of float, optional
        Override the six-peak default spectrum.
    """

    def __init__(self, echo_times=(1.4e-3, 3.6e-3, 5.8e-3, 8.0e-3, 10.2e-3, 12.4e-3),
                 field_strength=1.5, fat_ppm=None, fat_amplitudes=None):
        self.echo_times = echo_times
        self.field_strength = field_strength
        self.fat_ppm = fat_ppm
        self.fat_amplitudes = fat_amplitudes

    def fit(self, X=None, y=None):
        self.protocol_ = EchoProtocol(tuple(self.echo_times), self.field_strength)
        if self.fat_ppm is None:
            self.spectrum_ = FatSpectrum.default(self.field_strength)
        else:
            self.spectrum_ = FatSpectrum.from_ppm(self.fat_ppm, self.fat_amplitudes, self.field_strength)
        return self

    def transform(self, X):
        if not hasattr(self, "protocol_"):
            self.fit()
        X = check_real_array(X, "X", ndim=2)
        if X.shape[1] != 5:
            raise ValueError(f"X must have 5 columns (rho_w, rho_f, r2star, field, phi0), got {X.shape[1]}")
        q = QMaps(*X.T)
        return forward_signal_shared_phase(q, self.protocol_, self.spectrum_).echoes.T
