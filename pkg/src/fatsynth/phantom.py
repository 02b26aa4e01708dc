"""Procedural abdominal phantoms with known quantitative maps.

Geometry is a body ellipse with a subcutaneous fat ring, a liver, a spleen
and remaining soft tissue (labelled muscle). Organ outlines are ellipses
with low-frequency radial perturbations; tissue properties are drawn per
phantom and modulated by smooth random fields.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from ._validation import check_seed
from .signal import EchoProtocol, FatSpectrum, QMaps, forward_signal_shared_phase

__all__ = [
    "BACKGROUND", "SUBCUTANEOUS_FAT", "MUSCLE", "LIVER", "SPLEEN", "TISSUES",
    "TissueRanges", "PhantomConfig", "RoiSet", "Phantom",
    "sample_qmaps", "item_seed", "generate_dataset", "ROI_AREA_MM2",
]

BACKGROUND, SUBCUTANEOUS_FAT, MUSCLE, LIVER, SPLEEN = range(5)
TISSUES = {"subcutaneous_fat": SUBCUTANEOUS_FAT, "muscle": MUSCLE, "liver": LIVER, "spleen": SPLEEN}
ROI_AREA_MM2 = 200.0
ROI_MARGIN_PX = 3
MIN_GRID = 64
DEFAULT_FOV_MM = 384.0


def _interval(value, name, lo=0.0, hi=np.inf):
    a, b = (float(v) for v in value)
    if not (lo <= a <= b <= hi):
        raise ValueError(f"{name} range {value} must satisfy {lo} <= low <= high <= {hi}")
    return (a, b)


@dataclass
class TissueRanges:
    """Per-tissue parameter ranges: fat fraction, total density, R2* (s^-1)."""

    pdff: tuple
    rho: tuple = (0.8, 1.2)
    r2star: tuple = (20.0, 40.0)

    def __post_init__(self):
        self.pdff = _interval(self.pdff, "pdff", 0.0, 1.0)
        self.rho = _interval(self.rho, "rho")
        self.r2star = _interval(self.r2star, "r2star")


def _default_tissues():
    return {
        "liver": TissueRanges(pdff=(0.0, 0.40), rho=(0.8, 1.2), r2star=(25.0, 80.0)),
        "subcutaneous_fat": TissueRanges(pdff=(0.80, 0.95), rho=(0.9, 1.2), r2star=(20.0, 40.0)),
        "spleen": TissueRanges(pdff=(0.0, 0.03), rho=(0.8, 1.1), r2star=(20.0, 40.0)),
        "muscle": TissueRanges(pdff=(0.0, 0.05), rho=(0.6, 0.9), r2star=(25.0, 40.0)),
    }


@dataclass
class PhantomConfig:
    """Phantom synthesis settings.

    ``pixel_size`` defaults to a 384 mm field of view divided by the grid.
    ``variation`` is the relative amplitude of smooth intra-tissue
    modulation; ``smoothness`` is the correlation length as a fraction of
    the grid.
    """

    grid: tuple = (256, 256)
    pixel_size: float = None
    tissues: dict = field(default_factory=_default_tissues)
    field_amplitude: float = 150.0
    phi0_amplitude: float = 0.1
    variation: float = 0.05
    smoothness: float = 0.08
    boundary_perturbation: float = 0.04

    def __post_init__(self):
        if np.isscalar(self.grid):
            self.grid = (int(self.grid), int(self.grid))
        self.grid = tuple(int(g) for g in self.grid)
        if len(self.grid) != 2 or min(self.grid) < MIN_GRID:
            raise ValueError(f"grid {self.grid} too small to contain organs (minimum {MIN_GRID}x{MIN_GRID})")
        if self.pixel_size is None:
            self.pixel_size = DEFAULT_FOV_MM / max(self.grid)
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")
        tissues = _default_tissues()
        for name, spec in (self.tissues or {}).items():
            if name not in TISSUES:
                raise ValueError(f"unknown tissue {name!r}; expected one of {sorted(TISSUES)}")
            tissues[name] = spec if isinstance(spec, TissueRanges) else TissueRanges(**spec)
        self.tissues = tissues
        for name in ("field_amplitude", "phi0_amplitude", "variation", "smoothness", "boundary_perturbation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["grid"] = list(self.grid)
        d["tissues"] = {k: {kk: list(vv) for kk, vv in v.items()} for k, v in d["tissues"].items()}
        return d


@dataclass(eq=False)
class RoiSet:
    """Two co-localized liver ROIs: right (RHL) and left (LHL) hepatic lobe."""

    masks: dict
    centers: dict
    pixel_size: float

    LABELS = ("RHL", "LHL")

    def area_mm2(self, label):
        return float(np.count_nonzero(self.masks[label])) * self.pixel_size ** 2

    def stack(self):
        return np.stack([self.masks[k] for k in self.LABELS])

    @classmethod
    def from_stack(cls, arr, pixel_size):
        arr = np.asarray(arr) > 0.5
        masks = dict(zip(cls.LABELS, arr))
        centers = {k: tuple(float(c) for c in np.argwhere(m).mean(axis=0)) if m.any() else (np.nan, np.nan)
                   for k, m in masks.items()}
        return cls(masks, centers, pixel_size)


@dataclass(eq=False)
class Phantom:
    qmaps: QMaps
    labels: np.ndarray
    rois: RoiSet
    seed: int


def _smooth_field(rng, shape, corr):
    """Zero-mean smooth random field scaled to max |value| = 1."""
    noise = rng.standard_normal(shape)
    sigma = max(corr * max(shape), 1.0)
    g = ndimage.gaussian_filter(noise, sigma, mode="wrap")
    g -= g.mean()
    peak = np.abs(g).max()
    return g / peak if peak > 0 else g


def _blob(X, Y, cx, cy, ax, ay, rng, perturb):
    """Ellipse with radial sinusoidal perturbation of orders 2..4."""
    dx, dy = (X - cx) / ax, (Y - cy) / ay
    theta = np.arctan2(dy, dx)
    r = np.hypot(dx, dy)
    edge = np.ones_like(theta)
    for k in (2, 3, 4):
        edge += perturb * rng.uniform(-1, 1) * np.cos(k * theta + rng.uniform(0, 2 * np.pi))
    return r <= edge


def _roi_mask(center, n_pixels, shape):
    yy, xx = np.indices(shape)
    d2 = (yy - center[0]) ** 2 + (xx - center[1]) ** 2
    order = np.lexsort((np.arange(d2.size), d2.ravel()))[:n_pixels]
    mask = np.zeros(d2.size, dtype=bool)
    mask[order] = True
    return mask.reshape(shape)


def _place_rois(liver, pixel_size):
    n_pixels = max(1, int(round(ROI_AREA_MM2 / pixel_size ** 2)))
    radius = np.sqrt(n_pixels / np.pi)
    dist = ndimage.distance_transform_edt(liver)
    eligible = np.argwhere(dist >= radius + ROI_MARGIN_PX + 1)
    if eligible.shape[0] == 0:
        raise ValueError("liver too small to hold the ROIs")
    xs = eligible[:, 1]
    masks, centers = {}, {}
    # RHL sits on the image-left side of the liver, LHL towards the midline
    for label, q in (("RHL", 0.2), ("LHL", 0.8)):
        target_x = np.quantile(xs, q)
        col = eligible[np.abs(xs - target_x) == np.abs(xs - target_x).min()]
        pick = col[np.argmin(np.abs(col[:, 0] - np.median(col[:, 0])))]
        centers[label] = (float(pick[0]), float(pick[1]))
        masks[label] = _roi_mask(pick, n_pixels, liver.shape) & liver
    return RoiSet(masks, centers, pixel_size)


def sample_qmaps(config, seed):
    """Draw one phantom.

    Returns a :class:`Phantom` holding the maps, the tissue label map and
    the liver ROIs. Deterministic for a given ``(config, seed)``.
    """
    seed = check_seed(seed)
    rng = np.random.default_rng(seed)
    h, w = config.grid
    # normalized coordinates, x across columns, y down rows, unit = FOV
    Y, X = np.meshgrid((np.arange(h) + 0.5) / h - 0.5, (np.arange(w) + 0.5) / w - 0.5, indexing="ij")
    p = config.boundary_perturbation

    ax, ay = rng.uniform(0.40, 0.46), rng.uniform(0.28, 0.34)
    fat_frac = rng.uniform(0.08, 0.15)
    body = _blob(X, Y, 0.0, 0.0, ax, ay, rng, p / 2)
    inner = _blob(X, Y, 0.0, 0.0, ax * (1 - fat_frac), ay * (1 - fat_frac), rng, p / 2) & body
    liver = _blob(X, Y, rng.uniform(-0.16, -0.12), rng.uniform(-0.04, 0.0),
                  rng.uniform(0.16, 0.20), rng.uniform(0.12, 0.16), rng, p) & inner
    spleen = _blob(X, Y, rng.uniform(0.20, 0.24), rng.uniform(0.06, 0.10),
                   rng.uniform(0.05, 0.07), rng.uniform(0.07, 0.09), rng, p) & inner & ~liver

    labels = np.full((h, w), BACKGROUND, dtype=np.int64)
    labels[body] = SUBCUTANEOUS_FAT
    labels[inner] = MUSCLE
    labels[liver] = LIVER
    labels[spleen] = SPLEEN

    rho_w = np.zeros((h, w))
    rho_f = np.zeros((h, w))
    r2star = np.zeros((h, w))
    corr = config.smoothness
    for name, code in TISSUES.items():
        rng_t = config.tissues[name]
        base_pdff = rng.uniform(*rng_t.pdff)
        base_rho = rng.uniform(*rng_t.rho)
        base_r2 = rng.uniform(*rng_t.r2star)
        mod = [_smooth_field(rng, (h, w), corr) for _ in range(3)]
        m = labels == code
        v = config.variation
        pdff = np.clip(base_pdff * (1 + v * mod[0]), *rng_t.pdff)
        rho = np.clip(base_rho * (1 + v * mod[1]), *rng_t.rho)
        r2 = np.clip(base_r2 * (1 + v * mod[2]), *rng_t.r2star)
        rho_w[m] = (rho * (1 - pdff))[m]
        rho_f[m] = (rho * pdff)[m]
        r2star[m] = r2[m]

    # field: quadratic polynomial plus smooth random field, scaled into +-amplitude
    coef = rng.uniform(-1, 1, 6)
    poly = coef[0] + coef[1] * X + coef[2] * Y + coef[3] * X * X + coef[4] * X * Y + coef[5] * Y * Y
    shape_f = poly + _smooth_field(rng, (h, w), corr)
    peak = np.abs(shape_f).max()
    fmap = config.field_amplitude * rng.uniform(0.5, 1.0) * (shape_f / peak if peak > 0 else shape_f)
    fmap = np.clip(fmap, -config.field_amplitude, config.field_amplitude)
    phi0 = config.phi0_amplitude * _smooth_field(rng, (h, w), 2 * corr)

    q = QMaps(rho_w, rho_f, r2star, fmap, phi0, pixel_size=config.pixel_size)
    rois = _place_rois(liver & (labels == LIVER), config.pixel_size)
    return Phantom(q, labels, rois, seed)


def item_seed(master_seed, index, stream=0):
    """Seed for dataset item ``index``; independent of the dataset size.

    Nonzero ``stream`` values give further independent sequences from the
    same master seed.
    """
    key = (int(index),) if stream == 0 else (int(stream), int(index))
    ss = np.random.SeedSequence(entropy=check_seed(master_seed), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def generate_dataset(config, count, seed, protocol=None, spectrum=None, start=0):
    """Simulate ``count`` phantoms and their noiseless echo series.

    Item ``i`` uses ``item_seed(seed, start + i)``, so a dataset can be
    produced in pieces and concatenated.
    """
    if int(count) != count or count < 1:
        raise ValueError(f"count must be a positive integer, got {count}")
    protocol = protocol or EchoProtocol.uniform(1.4e-3, 2.2e-3, 6)
    spectrum = spectrum or FatSpectrum.default(protocol.field_strength)
    items = []
    for i in range(start, start + int(count)):
        ph = sample_qmaps(config, item_seed(seed, i))
        items.append((ph, forward_signal_shared_phase(ph.qmaps, protocol, spectrum)))
    return items
