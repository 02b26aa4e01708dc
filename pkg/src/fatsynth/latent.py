"""Whitened principal-component embedding of quantitative maps.

A linear encoder/decoder pair providing the latent space for diffusion
sampling. Channels are rescaled to unit spread before the decomposition so
that R2* (tens of s^-1) does not swamp the densities.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .signal import QMaps

__all__ = ["PcaModel", "LatentPCA", "fit_pca", "encode", "decode", "flatten_qmaps"]

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Fitted embedding.

    ``components`` has orthonormal rows; ``stds`` holds the per-component
    training standard deviations, sorted descending. ``channel_scale`` and
    ``grid`` describe the flattened input layout (``None`` grid for plain
    feature vectors).
    """

    mean: np.ndarray
    components: np.ndarray
    stds: np.ndarray
    channel_scale: np.ndarray
    grid: tuple = None
    pixel_size: float = 1.5
    n_requested: int = None

    @property
    def n_components(self):
        return self.components.shape[0]

    @property
    def n_features(self):
        return self.mean.shape[0]

    def _scale_vector(self):
        if self.grid is None:
            return self.channel_scale
        return np.repeat(self.channel_scale, int(np.prod(self.grid)))

    def metadata(self):
        return {
            "k": int(self.n_components),
            "k_requested": None if self.n_requested is None else int(self.n_requested),
            "grid": None if self.grid is None else list(self.grid),
            "channels": list(QMaps.CHANNELS) if self.grid is not None else None,
            "channel_scale": [float(c) for c in self.channel_scale],
            "pixel_size": float(self.pixel_size),
        }


def flatten_qmaps(maps):
    """Stack a sequence of 2-D :class:`QMaps` into an ``(n, 5*H*W)`` array."""
    maps = list(maps)
    if not maps:
        raise ValueError("no maps to flatten")
    shape = maps[0].shape
    if any(q.shape != shape for q in maps):
        raise ValueError("all maps must share the same grid")
    return np.stack([q.stack().ravel() for q in maps]), shape


class LatentPCA(BaseEstimator, TransformerMixin):
    """Whitening PCA with deterministic component signs.

    Parameters
    ----------
    n_components : int
        Requested latent dimension ``k``. If the centred data has lower
        rank, fewer components are kept (see ``n_components_``).
    scale_channels : bool
        For q-map input, divide each channel by its pooled training
        standard deviation before the decomposition.
    """

    def __init__(self, n_components=64, scale_channels=True):
        self.n_components = n_components
        self.scale_channels = scale_channels

    def fit(self, X, y=None, grid=None, pixel_size=1.5):
        if grid is None and len(X) and isinstance(X[0], QMaps):
            pixel_size = X[0].pixel_size
            X, grid = flatten_qmaps(X)
        X = check_array(X, dtype=np.float64)
        n, d = X.shape
        k = int(self.n_components)
        if k < 1 or k > n:
            raise ValueError(f"need 1 <= n_components <= n_samples, got k={k}, n={n}")
        if grid is not None:
            n_ch = d // int(np.prod(grid))
            per_channel = X.reshape(n, n_ch, -1)
            scale = per_channel.std(axis=(0, 2)) if self.scale_channels else np.ones(n_ch)
        else:
            scale = np.ones(d)
        scale = np.where(scale > 0, scale, 1.0)
        model_scale = scale
        scale = np.repeat(scale, int(np.prod(grid))) if grid is not None else scale

        Xs = X / scale
        mean = Xs.mean(axis=0)
        centred = Xs - mean
        _, s, vt = np.linalg.svd(centred, full_matrices=False)
        rank = int(np.count_nonzero(s > RANK_TOL * max(s[0] if s.size else 0.0, 1e-300)))
        keep = min(k, rank)
        vt = vt[:keep]
        # sign convention: largest-magnitude entry of each component is positive
        flip = np.sign(vt[np.arange(keep), np.argmax(np.abs(vt), axis=1)])
        vt = vt * flip[:, None]
        denom = np.sqrt(max(n - 1, 1))
        self.model_ = PcaModel(mean=mean, components=vt, stds=s[:keep] / denom,
                               channel_scale=model_scale, grid=None if grid is None else tuple(grid),
                               pixel_size=pixel_size, n_requested=k)
        self.n_components_ = keep
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        m = self.model_
        if len(X) and isinstance(X[0], QMaps):
            X, grid = flatten_qmaps(X)
            if m.grid is not None and tuple(grid) != m.grid:
                raise ValueError(f"maps have grid {grid}, model expects {m.grid}")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != m.n_features:
            raise ValueError(f"expected {m.n_features} features, got {X.shape[1]}")
        z = (X / m._scale_vector() - m.mean) @ m.components.T
        return z / np.where(m.stds > 0, m.stds, 1.0)

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        m = self.model_
        Z = check_array(Z, dtype=np.float64, ensure_min_features=0)
        if Z.shape[1] != m.n_components:
            raise ValueError(f"expected {m.n_components} latent coordinates, got {Z.shape[1]}")
        return ((Z * m.stds) @ m.components + m.mean) * m._scale_vector()


def fit_pca(maps, k=64, scale_channels=True):
    """Fit the embedding on a list of :class:`QMaps` (or an ``(n, d)`` array)."""
    est = LatentPCA(n_components=k, scale_channels=scale_channels).fit(maps)
    return est.model_


def _estimator(model):
    est = LatentPCA(n_components=model.n_requested or model.n_components)
    est.model_ = model
    est.n_components_ = model.n_components
    return est


def encode(model, q):
    """Whitened latent coordinates of one :class:`QMaps` (or feature vector)."""
    if isinstance(q, QMaps):
        if model.grid is None or q.shape != model.grid:
            raise ValueError(f"maps of shape {q.shape} do not match model layout {model.grid}")
        x = q.stack().ravel()
    else:
        x = np.asarray(q, dtype=np.float64).ravel()
    return _estimator(model).transform(x[None])[0]


def decode(model, z, clamp=True):
    """Maps for latent ``z``, projected to the physical domain.

    Densities and R2* are clamped at zero. With a feature-vector model the
    raw reconstruction is returned.
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.shape[0] != model.n_components:
        raise ValueError(f"latent has {z.shape[0]} coordinates, model has {model.n_components}")
    x = _estimator(model).inverse_transform(z[None])[0]
    if model.grid is None:
        return x
    arr = x.reshape((5,) + tuple(model.grid))
    if clamp:
        arr[:3] = np.maximum(arr[:3], 0.0)
    return QMaps.from_stack(arr, pixel_size=model.pixel_size)
