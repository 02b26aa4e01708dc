"""Voxelwise water-fat separation by variable projection.

For fixed ``(R2*, field)`` the water and fat amplitudes enter linearly and
are eliminated with an exact 2x2 complex least-squares solve; the remaining
two nonlinear parameters are found by a coarse grid over the field/R2*
window followed by Gauss-Newton refinement of several starting points.
All routines are vectorized over voxels and every voxel is processed with
elementwise arithmetic only, so results do not depend on batch order.
"""

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_complex_array
from .signal import (ComplexImageSeries, EchoProtocol, FatSpectrum, QMaps, QMapsComplex,
                     fat_phasor, pdff_map)

__all__ = [
    "FitConfig",
    "FitResult",
    "STATUS_NOT_CONVERGED",
    "STATUS_RANK_DEFICIENT",
    "STATUS_SEED_DISAGREES",
    "varpro_project",
    "fit_voxel",
    "fit_voxels",
    "fit_image",
    "shared_phase_projection",
    "residual_landscape",
    "WaterFatSeparator",
]

STATUS_NOT_CONVERGED = 1
STATUS_RANK_DEFICIENT = 2
STATUS_SEED_DISAGREES = 4

THREADS_ENV = "FATSYNTH_NUM_THREADS"
_CHUNK = 4096


@dataclass
class FitConfig:
    """Solver settings.

    ``field_window`` is the half-width of the field search in Hz; ``None``
    means one aliasing period, ``1 / (2 * delta_te)``.
    """

    field_window: float = None
    r2star_range: tuple = (0.0, 500.0)
    n_field_grid: int = 64
    n_r2star_grid: int = 11
    max_iter: int = 100
    n_starts: int = 3
    tol: float = 1e-10
    max_halvings: int = 20
    downsample: int = 2
    median_size: int = 5

    def __post_init__(self):
        lo, hi = (float(v) for v in self.r2star_range)
        if lo < 0 or hi <= lo:
            raise ValueError(f"invalid r2star_range {self.r2star_range}")
        self.r2star_range = (lo, hi)
        if self.field_window is not None and self.field_window <= 0:
            raise ValueError("field_window must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        for name in ("n_field_grid", "n_r2star_grid", "max_iter", "n_starts", "downsample", "median_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    def window(self, protocol):
        if self.field_window is not None:
            return float(self.field_window)
        return 0.5 / _period_spacing(protocol)


def _period_spacing(protocol):
    te = protocol.te
    if te.size < 2:
        raise ValueError("field search needs at least two echoes")
    dte = protocol.delta_te
    return dte if dte is not None else float(np.min(np.diff(te)))


@dataclass(eq=False)
class FitResult:
    """Output of :func:`fit_voxel` / :func:`fit_image`.

    ``residual`` is the per-voxel sum of squared residuals; ``status`` is a
    bitmask of the ``STATUS_*`` flags; ``swap_flags`` marks voxels whose
    chosen field disagrees with the spatial seed by more than a quarter of
    the aliasing period.
    """

    estimate: QMapsComplex
    qmaps: QMaps
    residual: np.ndarray
    iterations: np.ndarray
    swap_flags: np.ndarray
    status: np.ndarray
    field_seed: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    @property
    def pdff(self):
        return pdff_map(self.qmaps)

    def summary(self):
        return {
            "voxels": int(self.residual.size),
            "not_converged": int(np.count_nonzero(self.status & STATUS_NOT_CONVERGED)),
            "rank_deficient": int(np.count_nonzero(self.status & STATUS_RANK_DEFICIENT)),
            "swap_flagged": int(np.count_nonzero(self.swap_flags)),
            "mean_iterations": float(self.iterations.mean()) if self.iterations.size else 0.0,
            "max_iterations": int(self.iterations.max()) if self.iterations.size else 0,
        }


def _inner(u, v):
    """Row-wise ``sum(conj(u) * v)`` along the echo axis."""
    return np.sum(u.conj() * v, axis=-1)


class _Projector:
    """Exact amplitude solve for a batch of (R2*, field) pairs."""

    def __init__(self, r2, phi, te, fp):
        self.w = np.exp((-r2[..., None] + 2j * np.pi * phi[..., None]) * te)
        self.b = self.w * fp
        w2 = np.exp(-2.0 * r2[..., None] * te)
        self.g11 = np.sum(w2, axis=-1)
        self.g22 = np.sum(w2 * np.abs(fp) ** 2, axis=-1)
        self.g12 = np.sum(w2 * fp, axis=-1)
        det = self.g11 * self.g22 - np.abs(self.g12) ** 2
        self.deficient = ~(det > 1e-12 * self.g11 * self.g22)
        self.det = np.where(self.deficient, det + 1e-12 * self.g11 * self.g22 + 1e-300, det)

    def amplitudes(self, s):
        y1 = _inner(self.w, s)
        y2 = _inner(self.b, s)
        c1 = (self.g22 * y1 - self.g12 * y2) / self.det
        c2 = (self.g11 * y2 - self.g12.conj() * y1) / self.det
        return c1, c2

    def residual(self, s):
        c1, c2 = self.amplitudes(s)
        return s - self.w * c1[..., None] - self.b * c2[..., None], c1, c2


def _sq(r):
    return np.sum(r.real ** 2 + r.imag ** 2, axis=-1)


def varpro_project(signal, r2star, field, protocol, spectrum):
    """Linear least-squares water/fat amplitudes at fixed ``(r2star, field)``.

    Parameters
    ----------
    signal : array_like, complex, shape (..., N)
        Echo samples along the last axis.
    r2star, field : float or array_like
        Broadcastable against ``signal.shape[:-1]``.

    Returns
    -------
    rho_w, rho_f : complex ndarray
    residual : ndarray
        Squared norm of the projected residual.
    deficient : bool ndarray
        True where the two-column basis is numerically rank deficient.
    """
    s = check_complex_array(signal, "signal", min_last=1)
    if protocol.n_echoes != s.shape[-1]:
        raise ValueError(f"signal has {s.shape[-1]} echoes, protocol has {protocol.n_echoes}")
    if s.shape[-1] < 3:
        raise ValueError("water-fat fitting needs at least three echoes")
    te = protocol.te
    fp = fat_phasor(spectrum, te)
    r2 = np.broadcast_to(np.asarray(r2star, dtype=np.float64), s.shape[:-1])
    phi = np.broadcast_to(np.asarray(field, dtype=np.float64), s.shape[:-1])
    proj = _Projector(r2, phi, te, fp)
    r, c1, c2 = proj.residual(s)
    return c1, c2, _sq(r), proj.deficient


def _grid_profile(s, te, fp, phi_grid, r2_grid):
    """Projected residual minimized over R2* for each field grid value.

    Returns ``(profile, r2_at_min)`` of shape ``(V, len(phi_grid))``.
    Uses the fact that the Gram matrix depends on R2* only.
    """
    energy = _sq(s)[:, None]
    e = np.exp(-2j * np.pi * np.multiply.outer(phi_grid, te))  # (G, N)
    best = np.full((s.shape[0], phi_grid.size), np.inf)
    best_r2 = np.zeros_like(best)
    for r2 in r2_grid:
        d = np.exp(-r2 * te)
        w2 = d * d
        g11 = w2.sum()
        g22 = np.sum(w2 * np.abs(fp) ** 2)
        g12 = np.sum(w2 * fp)
        det = g11 * g22 - abs(g12) ** 2
        sw = s * d
        swf = sw * fp.conj()
        # accumulate echo by echo: fixed summation order, no (V, G, N) temporary
        y1 = sw[:, :1] * e[:, 0]
        y2 = swf[:, :1] * e[:, 0]
        for n in range(1, te.size):
            y1 += sw[:, n:n + 1] * e[:, n]
            y2 += swf[:, n:n + 1] * e[:, n]
        quad = (g22 * (y1.real ** 2 + y1.imag ** 2) + g11 * (y2.real ** 2 + y2.imag ** 2)
                - 2.0 * np.real(y1.conj() * (g12 * y2))) / det
        res = np.maximum(energy - quad, 0.0)
        better = res < best
        best = np.where(better, res, best)
        best_r2 = np.where(better, r2, best_r2)
    return best, best_r2


def _local_minima(profile, periodic):
    left = np.roll(profile, 1, axis=1)
    right = np.roll(profile, -1, axis=1)
    if not periodic:
        left[:, 0] = np.inf
        right[:, -1] = np.inf
    return (profile < left) & (profile <= right)


def _gauss_newton(s, r2, phi, te, fp, r2_range, config):
    """Refine a batch of starts; arrays are flat over (voxel, start)."""
    lo, hi = r2_range
    r, c1, c2 = _Projector(r2, phi, te, fp).residual(s)
    res = _sq(r)
    energy = _sq(s)
    iters = np.zeros(r2.shape, dtype=np.int64)
    active = energy > 0
    converged = ~active
    for _ in range(config.max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        si, ri = s[idx], r[idx]
        lin = _Projector(r2[idx], phi[idx], te, fp)
        model = si - ri
        d1 = -te * model
        d2 = 2j * np.pi * te * model
        pd1 = lin.residual(d1)[0]
        pd2 = lin.residual(d2)[0]
        h11 = _sq(pd1)
        h22 = _sq(pd2)
        h12 = np.real(_inner(pd1, pd2))
        g1 = np.real(_inner(d1, ri))
        g2 = np.real(_inner(d2, ri))
        det = h11 * h22 - h12 * h12
        ok = det > 1e-14 * h11 * h22
        safe = np.where(ok, det, 1.0)
        step_r2 = np.where(ok, (h22 * g1 - h12 * g2) / safe, 0.0)
        step_phi = np.where(ok, (h11 * g2 - h12 * g1) / safe, 0.0)

        old = res[idx]
        trial_r2 = np.clip(r2[idx] + step_r2, lo, hi)
        trial_phi = phi[idx] + step_phi
        tp = _Projector(trial_r2, trial_phi, te, fp)
        tr, tc1, tc2 = tp.residual(si)
        tres = _sq(tr)
        worse = tres > old
        scale = np.ones(idx.size)
        for _h in range(config.max_halvings):
            if not worse.any():
                break
            j = np.flatnonzero(worse)
            scale[j] *= 0.5
            trial_r2[j] = np.clip(r2[idx[j]] + scale[j] * step_r2[j], lo, hi)
            trial_phi[j] = phi[idx[j]] + scale[j] * step_phi[j]
            hp = _Projector(trial_r2[j], trial_phi[j], te, fp)
            hr, hc1, hc2 = hp.residual(si[j])
            tr[j], tc1[j], tc2[j] = hr, hc1, hc2
            tres[j] = _sq(hr)
            worse[j] = tres[j] > old[j]
        accept = ~worse
        a = idx[accept]
        r2[a], phi[a] = trial_r2[accept], trial_phi[accept]
        r[a], c1[a], c2[a], res[a] = tr[accept], tc1[accept], tc2[accept], tres[accept]
        iters[idx] += 1

        done = (
            ~accept
            | ~ok
            | (np.abs(old - tres) <= config.tol * old)
            | (tres <= 1e-26 * energy[idx])
            | ((np.abs(step_phi) * scale < 1e-10) & (np.abs(step_r2) * scale < 1e-10))
        )
        converged[idx[done]] = True
        active[idx[done]] = False
    deficient = _Projector(r2, phi, te, fp).deficient
    return r2, phi, c1, c2, res, iters, converged, deficient


def _wrap(phi, period):
    return (phi + 0.5 * period) % period - 0.5 * period


def _fit_batch(s, protocol, spectrum, config, field_seed=None):
    """Fit flat voxels ``s`` of shape (V, N). Returns a dict of flat arrays."""
    te = protocol.te
    fp = fat_phasor(spectrum, te)
    V = s.shape[0]
    window = config.window(protocol)
    period = 2.0 * window
    uniform = protocol.delta_te is not None
    full_period = uniform and window >= 0.5 / protocol.delta_te * (1 - 1e-12)
    if uniform:
        period = 1.0 / protocol.delta_te

    phi_grid = -window + (2.0 * window) * np.arange(config.n_field_grid) / config.n_field_grid
    if not full_period:
        phi_grid = np.linspace(-window, window, config.n_field_grid)
    r2_grid = np.linspace(config.r2star_range[0], config.r2star_range[1], config.n_r2star_grid)

    profile, prof_r2 = _grid_profile(s, te, fp, phi_grid, r2_grid)
    minima = _local_minima(profile, periodic=full_period)
    masked = np.where(minima, profile, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")[:, :config.n_starts]
    rows = np.arange(V)[:, None]
    start_phi = phi_grid[order]
    start_r2 = prof_r2[rows, order]
    valid = np.isfinite(masked[rows, order])
    # always keep the global grid minimum as a start
    valid[:, 0] = True
    glob = np.argmin(profile, axis=1)
    start_phi[:, 0] = phi_grid[glob]
    start_r2[:, 0] = prof_r2[np.arange(V), glob]

    if field_seed is not None:
        seed = np.asarray(field_seed, dtype=np.float64).ravel()
        near = np.argmin(np.abs(_wrap(seed[:, None] - phi_grid[None], period)), axis=1)
        start_phi = np.concatenate([start_phi, seed[:, None]], axis=1)
        start_r2 = np.concatenate([start_r2, prof_r2[np.arange(V), near][:, None]], axis=1)
        valid = np.concatenate([valid, np.ones((V, 1), dtype=bool)], axis=1)

    M = start_phi.shape[1]
    vi, mi = np.nonzero(valid)
    r2, phi, c1, c2, res, iters, conv, defi = _gauss_newton(
        s[vi], start_r2[vi, mi].copy(), start_phi[vi, mi].copy(), te, fp, config.r2star_range, config)
    if uniform:
        phi = _wrap(phi, period)

    table = np.full((V, M), np.inf)
    table[vi, mi] = res
    absphi = np.full((V, M), np.inf)
    absphi[vi, mi] = np.abs(phi)
    energy = _sq(s)
    best = table.min(axis=1)
    tie = table <= (best + 1e-12 * energy)[:, None]
    # exact ties: prefer the spatial seed when there is one, else the smaller |field|
    if field_seed is not None:
        absphi[vi, mi] = np.abs(_wrap(phi - seed[vi], period))
    choice = np.argmin(np.where(tie, absphi, np.inf), axis=1)

    pos = np.full((V, M), -1, dtype=np.int64)
    pos[vi, mi] = np.arange(vi.size)
    k = pos[np.arange(V), choice]

    status = np.zeros(V, dtype=np.int64)
    status[~conv[k]] |= STATUS_NOT_CONVERGED
    status[defi[k]] |= STATUS_RANK_DEFICIENT
    out = {
        "rho_w": c1[k], "rho_f": c2[k], "r2star": r2[k], "field": phi[k],
        "residual": res[k], "iterations": iters[k], "status": status,
        "swap": np.zeros(V, dtype=bool),
    }
    if field_seed is not None:
        far = np.abs(_wrap(out["field"] - seed, period)) > 0.25 * period
        out["swap"] = far
        out["status"] = np.where(far, status | STATUS_SEED_DISAGREES, status)
    zero = energy == 0
    for key in ("rho_w", "rho_f", "r2star", "field", "residual"):
        out[key] = np.where(zero, 0, out[key])
    out["iterations"] = np.where(zero, 0, out["iterations"])
    return out


def _n_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def fit_voxels(signals, protocol, spectrum, config=None, field_seed=None):
    """Fit many voxels at once. ``signals`` has shape ``(..., N)``.

    Returns a :class:`FitResult` whose maps have shape ``signals.shape[:-1]``.
    Work is split in fixed-size chunks, optionally across threads
    (``FATSYNTH_NUM_THREADS``); chunking does not change the result.
    """
    config = config or FitConfig()
    s = check_complex_array(signals, "signals", min_last=3)
    if s.shape[-1] != protocol.n_echoes:
        raise ValueError(f"signals have {s.shape[-1]} echoes, protocol has {protocol.n_echoes}")
    if not np.isclose(protocol.field_strength, spectrum.field_strength, rtol=1e-9, atol=0):
        raise ValueError("spectrum and protocol field strengths differ")
    shape = s.shape[:-1]
    flat = s.reshape(-1, s.shape[-1])
    seed = None if field_seed is None else np.broadcast_to(np.asarray(field_seed, float), shape).ravel()
    chunks = [(i, min(i + _CHUNK, flat.shape[0])) for i in range(0, flat.shape[0], _CHUNK)]

    def run(bounds):
        a, b = bounds
        return _fit_batch(flat[a:b], protocol, spectrum, config, None if seed is None else seed[a:b])

    threads = _n_threads()
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    if parts:
        merged = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    else:
        merged = {k: np.zeros(0, dtype=d) for k, d in (
            ("rho_w", complex), ("rho_f", complex), ("r2star", float), ("field", float),
            ("residual", float), ("iterations", np.int64), ("status", np.int64), ("swap", bool))}
    est = QMapsComplex(merged["rho_w"].reshape(shape), merged["rho_f"].reshape(shape),
                       merged["r2star"].reshape(shape), merged["field"].reshape(shape))
    return FitResult(
        estimate=est,
        qmaps=shared_phase_projection(est),
        residual=merged["residual"].reshape(shape),
        iterations=merged["iterations"].reshape(shape),
        swap_flags=merged["swap"].reshape(shape),
        status=merged["status"].reshape(shape),
        field_seed=None if seed is None else seed.reshape(shape),
        metadata={"field_window_hz": config.window(protocol)},
    )


def fit_voxel(signal, protocol, spectrum, config=None, field_seed=None):
    """Fit a single voxel's ``N`` complex echo samples (N >= 3)."""
    s = check_complex_array(signal, "signal", ndim=1, min_last=3)
    return fit_voxels(s[None], protocol, spectrum, config,
                      None if field_seed is None else [field_seed])


def _downsample(echoes, factor):
    n, h, w = echoes.shape
    hh, ww = h // factor, w // factor
    cropped = echoes[:, :hh * factor, :ww * factor]
    return cropped.reshape(n, hh, factor, ww, factor).mean(axis=(2, 4))


def _nanmedian_filter(img, size):
    # edges extend with nan so background never leaks into the estimate
    return ndimage.generic_filter(img, np.nanmedian, size=size, mode="constant", cval=np.nan)


def initial_field_map(series, spectrum, config=None):
    """Smoothed low-resolution field estimate used to seed :func:`fit_image`."""
    config = config or FitConfig()
    echoes = series.echoes
    if echoes.ndim != 3:
        raise ValueError("fit_image expects echoes of shape (N, H, W)")
    factor = max(1, min(int(config.downsample), echoes.shape[1], echoes.shape[2]))
    small = _downsample(echoes, factor)
    coarse = fit_voxels(np.moveaxis(small, 0, -1), series.protocol, spectrum, config)
    field = coarse.estimate.field.copy()
    energy = np.sum(np.abs(small) ** 2, axis=0)
    keep = energy > 0.05 ** 2 * energy.max() if energy.max() > 0 else np.zeros_like(energy, bool)
    field[~keep] = np.nan
    if keep.any():
        # all-nan windows are expected at the body edge
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            field = _nanmedian_filter(field, config.median_size)
    field = np.nan_to_num(field, nan=0.0)
    full = np.repeat(np.repeat(field, factor, axis=0), factor, axis=1)
    h, w = echoes.shape[1:]
    out = np.zeros((h, w))
    out[:full.shape[0], :full.shape[1]] = full[:h, :w]
    if full.shape[0] < h:
        out[full.shape[0]:, :] = out[full.shape[0] - 1:full.shape[0], :]
    if full.shape[1] < w:
        out[:, full.shape[1]:] = out[:, full.shape[1] - 1:full.shape[1]]
    return out


def fit_image(series, spectrum, config=None, mask=None):
    """Fit every voxel of an ``(N, H, W)`` series.

    A coarse fit on a downsampled copy, median-smoothed, seeds the
    per-voxel multi-start refinement. Voxels outside ``mask`` (default:
    all voxels with nonzero signal) are returned as zeros.
    """
    config = config or FitConfig()
    if not isinstance(series, ComplexImageSeries):
        raise TypeError("series must be a ComplexImageSeries")
    if series.n_echoes < 3:
        raise ValueError("water-fat fitting needs at least three echoes")
    seed = initial_field_map(series, spectrum, config)
    sig = np.moveaxis(series.echoes, 0, -1)
    if mask is None:
        mask = np.any(sig != 0, axis=-1)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != series.shape:
        raise ValueError(f"mask shape {mask.shape} does not match images {series.shape}")
    inner = fit_voxels(sig[mask], series.protocol, spectrum, config, field_seed=seed[mask])

    def scatter(values, dtype):
        out = np.zeros(series.shape, dtype=dtype)
        out[mask] = values
        return out

    est = QMapsComplex(scatter(inner.estimate.rho_w, complex), scatter(inner.estimate.rho_f, complex),
                       scatter(inner.estimate.r2star, float), scatter(inner.estimate.field, float))
    meta = dict(inner.metadata, protocol=series.protocol.to_dict())
    return FitResult(
        estimate=est,
        qmaps=shared_phase_projection(est),
        residual=scatter(inner.residual, float),
        iterations=scatter(inner.iterations, np.int64),
        swap_flags=scatter(inner.swap_flags, bool),
        status=scatter(inner.status, np.int64),
        field_seed=seed,
        metadata=meta,
    )


def shared_phase_projection(est, pixel_size=1.5):
    """Collapse complex amplitudes onto a common initial phase.

    The phase is ``arg(rho_w + rho_f)``, i.e. the amplitude-weighted
    consensus of the two species; it is zero where both vanish.
    """
    total = est.rho_w + est.rho_f
    phi0 = np.angle(total) / (2 * np.pi)
    return QMaps(np.abs(est.rho_w), np.abs(est.rho_f), est.r2star, est.field,
                 np.where(np.abs(total) > 0, phi0, 0.0), pixel_size=pixel_size)


def residual_landscape(signal, protocol, spectrum, phi_grid, r2_grid):
    """Dense projected-residual table over ``phi_grid x r2_grid``.

    Brute-force reference for the multi-start search.
    """
    s = check_complex_array(signal, "signal", ndim=1, min_last=3)
    P, R = np.meshgrid(np.asarray(phi_grid, float), np.asarray(r2_grid, float), indexing="ij")
    _, _, res, _ = varpro_project(np.broadcast_to(s, P.shape + s.shape), R, P, protocol, spectrum)
    return res


class WaterFatSeparator(BaseEstimator, TransformerMixin):
    """Water-fat separation as a scikit-learn transformer.

    ``transform`` takes ``(n_voxels, n_echoes)`` complex signals and
    returns ``(n_voxels, 5)`` rows of ``(|rho_w|, |rho_f|, r2star, field,
    phi0)``; :meth:`predict_pdff` returns the fat fraction per voxel.
    """

    def __init__(self, echo_times=(1.4e-3, 3.6e-3, 5.8e-3, 8.0e-3, 10.2e-3, 12.4e-3),
                 field_strength=1.5, fat_ppm=None, fat_amplitudes=None, field_window=None,
                 r2star_range=(0.0, 500.0), n_field_grid=64, n_r2star_grid=11, n_starts=3,
                 max_iter=100, tol=1e-10):
        self.echo_times = echo_times
        self.field_strength = field_strength
        self.fat_ppm = fat_ppm
        self.fat_amplitudes = fat_amplitudes
        self.field_window = field_window
        self.r2star_range = r2star_range
        self.n_field_grid = n_field_grid
        self.n_r2star_grid = n_r2star_grid
        self.n_starts = n_starts
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X=None, y=None):
        self.protocol_ = EchoProtocol(tuple(self.echo_times), self.field_strength)
        if self.protocol_.n_echoes < 3:
            raise ValueError("water-fat fitting needs at least three echoes")
        if self.fat_ppm is None:
            self.spectrum_ = FatSpectrum.default(self.field_strength)
        else:
            self.spectrum_ = FatSpectrum.from_ppm(self.fat_ppm, self.fat_amplitudes, self.field_strength)
        self.config_ = FitConfig(field_window=self.field_window, r2star_range=tuple(self.r2star_range),
                                 n_field_grid=self.n_field_grid, n_r2star_grid=self.n_r2star_grid,
                                 n_starts=self.n_starts, max_iter=self.max_iter, tol=self.tol)
        return self

    def _fit_result(self, X):
        if not hasattr(self, "config_"):
            self.fit()
        X = check_complex_array(X, "X", ndim=2)
        return fit_voxels(X, self.protocol_, self.spectrum_, self.config_)

    def transform(self, X):
        q = self._fit_result(X).qmaps
        return np.column_stack([q.rho_w, q.rho_f, q.r2star, q.field, q.phi0])

    def predict_pdff(self, X):
        return self._fit_result(X).pdff
