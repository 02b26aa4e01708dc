"""Similarity, diversity and quantification-accuracy metrics."""

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist, pdist

from ._validation import check_seed, check_same_shape

__all__ = [
    "mmd_gaussian",
    "mmd_permutation_threshold",
    "median_bandwidth",
    "ssim",
    "ssim_components",
    "ms_ssim",
    "MS_SSIM_WEIGHTS",
    "pairwise_diversity",
    "pdff_mae",
    "roi_bias",
    "BlandAltmanStats",
    "bland_altman",
    "confidence_halfwidth",
    "bland_altman_csv",
    "bland_altman_svg",
    "magnitude_features",
]

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
Z95 = 1.96


def _as_2d(x):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(len(x), -1) if x.ndim != 2 else x


def median_bandwidth(a, b):
    pooled = np.vstack([a, b])
    d = pdist(pooled)
    h = float(np.median(d)) if d.size else 0.0
    return h if h > 0 else 1.0


def mmd_gaussian(a, b, bandwidth=None):
    """Biased squared MMD with a Gaussian kernel.

    ``bandwidth=None`` uses the median pairwise distance of the pooled set.
    Rows are samples; higher-dimensional samples are flattened.
    """
    a, b = _as_2d(a), _as_2d(b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both sample sets must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    h = median_bandwidth(a, b) if bandwidth is None else float(bandwidth)
    gamma = 1.0 / (2.0 * h * h)
    kaa = np.exp(-gamma * cdist(a, a, "sqeuclidean")).mean()
    kbb = np.exp(-gamma * cdist(b, b, "sqeuclidean")).mean()
    kab = np.exp(-gamma * cdist(a, b, "sqeuclidean")).mean()
    return max(float(kaa + kbb - 2.0 * kab), 0.0)


def mmd_permutation_threshold(a, b, seed, n_permutations=200, alpha=0.05, bandwidth=None):
    """``1 - alpha`` quantile of the MMD under random relabelling of the pool."""
    a, b = _as_2d(a), _as_2d(b)
    h = median_bandwidth(a, b) if bandwidth is None else bandwidth
    pooled = np.vstack([a, b])
    rng = np.random.default_rng(check_seed(seed))
    stats = []
    for _ in range(int(n_permutations)):
        p = rng.permutation(len(pooled))
        stats.append(mmd_gaussian(pooled[p[:len(a)]], pooled[p[len(a):]], bandwidth=h))
    return float(np.quantile(stats, 1.0 - alpha))


def magnitude_features(first_echoes):
    """Flattened first-echo magnitudes, each normalized to unit mean."""
    feats = []
    for img in first_echoes:
        m = np.abs(np.asarray(img)).ravel()
        mu = m.mean()
        feats.append(m / mu if mu > 0 else m)
    return np.stack(feats)


def _gauss(x, sigma):
    # truncate=3.5 with sigma=1.5 gives the 11-tap window
    return ndimage.gaussian_filter(x, sigma, truncate=3.5, mode="reflect")


def ssim_components(a, b, data_range=None, sigma=1.5, k1=0.01, k2=0.03):
    """Local luminance and contrast-structure maps, cropped to valid pixels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b, names=("a", "b"))
    if a.ndim != 2:
        raise ValueError("ssim expects 2-D images")
    if data_range is None:
        data_range = max(a.max(), b.max()) - min(a.min(), b.min())
        data_range = data_range if data_range > 0 else 1.0
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a, mu_b = _gauss(a, sigma), _gauss(b, sigma)
    saa = _gauss(a * a, sigma) - mu_a * mu_a
    sbb = _gauss(b * b, sigma) - mu_b * mu_b
    sab = _gauss(a * b, sigma) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    cs = (2 * sab + c2) / (saa + sbb + c2)
    pad = int(3.5 * sigma + 0.5)
    crop = (slice(pad, -pad or None),) * 2
    return lum[crop], cs[crop]


def ssim(a, b, data_range=None, sigma=1.5, k1=0.01, k2=0.03):
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    ``data_range`` defaults to the joint range of the two images.
    """
    lum, cs = ssim_components(a, b, data_range, sigma, k1, k2)
    return float(np.mean(lum * cs))


def _halve(x):
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(a, b, data_range=None, weights=MS_SSIM_WEIGHTS):
    """Five-scale SSIM: contrast-structure at every scale, luminance at the
    coarsest. Negative contrast-structure terms are clipped to zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b, names=("a", "b"))
    levels = len(weights)
    need = 2 ** (levels - 1) * 11
    if a.ndim != 2 or min(a.shape) < need:
        raise ValueError(f"images must be at least {need}x{need} for {levels} scales, got {a.shape}")
    if data_range is None:
        data_range = max(a.max(), b.max()) - min(a.min(), b.min())
        data_range = data_range if data_range > 0 else 1.0
    out = 1.0
    for j, w in enumerate(weights):
        lum, cs = ssim_components(a, b, data_range)
        if j == levels - 1:
            out *= max(float(np.mean(lum * cs)), 0.0) ** w
        else:
            out *= max(float(np.mean(cs)), 0.0) ** w
            a, b = _halve(a), _halve(b)
    return float(out)


def pairwise_diversity(samples, n_pairs, seed, data_range=None):
    """Mean SSIM and MS-SSIM over random distinct pairs of 2-D samples.

    MS-SSIM is reported as ``nan`` when the images are too small for five
    scales.
    """
    samples = [np.asarray(s, dtype=np.float64) for s in samples]
    n = len(samples)
    if n < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(check_seed(seed))
    i = rng.integers(0, n, size=int(n_pairs))
    j = (i + rng.integers(1, n, size=int(n_pairs))) % n
    s_vals, m_vals = [], []
    small = min(samples[0].shape) < 2 ** 4 * 11
    for p, q in zip(i, j):
        s_vals.append(ssim(samples[p], samples[q], data_range))
        if not small:
            m_vals.append(ms_ssim(samples[p], samples[q], data_range))
    if small:
        warnings.warn("images too small for five-scale MS-SSIM; reporting nan", RuntimeWarning)
    return float(np.mean(s_vals)), float(np.mean(m_vals)) if m_vals else float("nan")


def pdff_mae(est, ref, mask=None):
    """Mean absolute PDFF error over ``mask``, in percentage points."""
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    check_same_shape(est, ref, names=("est", "ref"))
    mask = np.ones(est.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != est.shape:
        raise ValueError("mask shape differs from maps")
    if not mask.any():
        raise ValueError("empty mask")
    return float(np.mean(np.abs(est[mask] - ref[mask])) * 100.0)


def roi_bias(est, ref, rois):
    """Median-PDFF difference per ROI (est minus ref), percentage points.

    The same masks are applied to both maps.
    """
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    check_same_shape(est, ref, names=("est", "ref"))
    out = {}
    for label in rois.LABELS:
        m = np.asarray(rois.masks[label], dtype=bool)
        if m.shape != est.shape:
            raise ValueError(f"ROI {label} lies outside the image")
        if not m.any():
            raise ValueError(f"ROI {label} is empty")
        out[label] = float((np.median(est[m]) - np.median(ref[m])) * 100.0)
    return out


@dataclass(frozen=True)
class BlandAltmanStats:
    """Bias and 95% limits of agreement; differences are est - ref."""

    bias: float
    sd: float
    loa_low: float
    loa_high: float
    n: int

    def as_row(self):
        return {"n": self.n, "bias": self.bias, "sd": self.sd,
                "loa_low": self.loa_low, "loa_high": self.loa_high}


def bland_altman(est, ref):
    est = np.asarray(est, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    check_same_shape(est, ref, names=("est", "ref"))
    if est.size < 2:
        raise ValueError("Bland-Altman needs at least two pairs")
    d = est - ref
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    return BlandAltmanStats(bias, sd, bias - Z95 * sd, bias + Z95 * sd, int(d.size))


def confidence_halfwidth(values, group_size=None):
    """1.96 x SD of per-item values, optionally after averaging consecutive
    groups of ``group_size`` items (per-subject aggregation)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if group_size and group_size > 1:
        n = (v.size // group_size) * group_size
        v = v[:n].reshape(-1, group_size).mean(axis=1)
    if v.size < 2:
        return float("nan")
    return float(Z95 * v.std(ddof=1))


def bland_altman_csv(rows):
    """CSV text for ``(method, stats)`` pairs; the header records the sign."""
    buf = io.StringIO()
    buf.write("# difference convention: est - ref (method minus reference), PDFF percentage points\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "n", "bias", "sd", "loa_low", "loa_high"])
    for method, st in rows:
        w.writerow([method, st.n, f"{st.bias:.6f}", f"{st.sd:.6f}", f"{st.loa_low:.6f}", f"{st.loa_high:.6f}"])
    return buf.getvalue()


def bland_altman_svg(est, ref, stats, title="Bland-Altman", width=480, height=360):
    """Scatter of mean vs difference with bias and limit-of-agreement lines."""
    est = np.asarray(est, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    mean = 0.5 * (est + ref)
    diff = est - ref
    m = 50
    x0, x1 = float(mean.min()), float(mean.max())
    lo = min(float(diff.min()), stats.loa_low)
    hi = max(float(diff.max()), stats.loa_high)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if hi == lo:
        lo, hi = lo - 1, hi + 1
    pad = 0.1 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def px(x):
        return m + (x - x0) / (x1 - x0) * (width - 2 * m)

    def py(y):
        return height - m - (y - lo) / (hi - lo) * (height - 2 * m)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">'
        f'mean of methods (pp)</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">est - ref (pp)</text>',
    ]
    for label, y, dash in (("bias", stats.bias, ""), ("+1.96 SD", stats.loa_high, ' stroke-dasharray="5,4"'),
                           ("-1.96 SD", stats.loa_low, ' stroke-dasharray="5,4"')):
        parts.append(f'<line x1="{m}" y1="{py(y):.2f}" x2="{width - m}" y2="{py(y):.2f}" '
                     f'stroke="firebrick"{dash}/>')
        parts.append(f'<text x="{width - m + 2}" y="{py(y) + 4:.2f}" font-size="10">{label} {y:.2f}</text>')
    for xm, d in zip(mean, diff):
        parts.append(f'<circle cx="{px(xm):.2f}" cy="{py(d):.2f}" r="2.5" fill="steelblue"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
