"""Denoising diffusion in latent space.

Linear variance schedule, closed-form forward noising, the noise-prediction
objective, a small fully connected denoiser with hand-written gradients,
and two reverse samplers: the standard ancestral update and the plain
``z <- z - eps_theta(z, t)`` iteration.

Time steps are 1-based throughout: ``t`` in ``1..T`` reads index ``t - 1``
of the schedule arrays.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_seed

__all__ = [
    "BetaSchedule",
    "linear_beta_schedule",
    "forward_noise",
    "denoiser_loss",
    "timestep_embedding",
    "MLPDenoiser",
    "Adam",
    "TrainingDiverged",
    "train_mlp_denoiser",
    "sample_paper_literal",
    "sample_ddpm_ancestral",
    "SAMPLERS",
    "generate_qmaps",
    "LatentDiffusion",
]


class TrainingDiverged(FloatingPointError):
    def __init__(self, step, value):
        super().__init__(f"non-finite training loss {value} at step {step}")
        self.step = step


@dataclass(frozen=True, eq=False)
class BetaSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_start: float = None
    beta_end: float = None

    @property
    def T(self):
        return self.beta.shape[0]

    def check_step(self, t):
        t = np.asarray(t)
        if np.any(t != np.round(t)) or np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"time step out of range 1..{self.T}: {t}")
        return t.astype(np.int64)

    def metadata(self):
        return {"T": int(self.T), "beta_start": self.beta_start, "beta_end": self.beta_end,
                "kind": "linear"}


def linear_beta_schedule(T=500, beta_start=1e-4, beta_end=0.02):
    """Betas linearly spaced from ``beta_start`` to ``beta_end`` inclusive."""
    if int(T) != T or T < 2:
        raise ValueError(f"T must be an integer >= 2, got {T}")
    if not (0 < beta_start < beta_end < 1):
        raise ValueError(f"need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}")
    beta = np.linspace(beta_start, beta_end, int(T))
    alpha = 1.0 - beta
    return BetaSchedule(beta, alpha, np.cumprod(alpha), float(beta_start), float(beta_end))


def forward_noise(schedule, z0, t, eps):
    """``sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps``; ``t`` scalar or per row."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValueError(f"z0 {z0.shape} and eps {eps.shape} differ in shape")
    t = schedule.check_step(t)
    ab = schedule.alpha_bar[t - 1]
    if ab.ndim == 1 and z0.ndim == 2:
        ab = ab[:, None]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def denoiser_loss(denoiser, schedule, z0, seed, n_repeats=1):
    """Monte-Carlo estimate of ``E ||eps - eps_theta(z_t, t)||^2``.

    Each of the ``len(z0) * n_repeats`` draws pairs a batch row with a
    uniform time step and fresh standard normal noise.
    """
    z0 = check_array(z0, dtype=np.float64)
    rng = np.random.default_rng(check_seed(seed))
    z = np.tile(z0, (int(n_repeats), 1))
    t = rng.integers(1, schedule.T + 1, size=z.shape[0])
    eps = rng.standard_normal(z.shape)
    zt = forward_noise(schedule, z, t, eps)
    pred = np.asarray(denoiser(zt, t), dtype=np.float64)
    return float(np.mean(np.sum((eps - pred) ** 2, axis=1)))


def timestep_embedding(t, dim):
    """Sinusoidal embedding ``[sin(t w_i), cos(t w_i)]`` with geometric w_i."""
    if dim % 2:
        raise ValueError("embedding dimension must be even")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    arg = np.asarray(t, dtype=np.float64)[:, None] * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class MLPDenoiser:
    """Fully connected noise predictor with SiLU activations.

    Input is the latent concatenated with a sinusoidal embedding of the
    time step. Parameters are a flat list ``[W1, b1, W2, b2, ...]``.
    """

    def __init__(self, dim, hidden=128, n_layers=3, time_dim=32, seed=0):
        self.dim = int(dim)
        self.hidden = int(hidden)
        self.n_layers = int(n_layers)
        self.time_dim = int(time_dim)
        rng = np.random.default_rng(check_seed(seed))
        sizes = [self.dim + self.time_dim] + [self.hidden] * self.n_layers + [self.dim]
        self.params = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(1.0 / a) * (0.1 if i == len(sizes) - 2 else 1.0)
            self.params += [rng.standard_normal((a, b)) * scale, np.zeros(b)]

    def config(self):
        return {"dim": self.dim, "hidden": self.hidden, "n_layers": self.n_layers,
                "time_dim": self.time_dim}

    def _forward(self, z, t):
        h = np.concatenate([np.asarray(z, dtype=np.float64), timestep_embedding(t, self.time_dim)], axis=1)
        cache = []
        n = len(self.params) // 2
        for i in range(n):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            a = h @ W + b
            cache.append((h, a))
            h = a * _sigmoid(a) if i < n - 1 else a
        return h, cache

    def __call__(self, z, t):
        z = np.atleast_2d(z)
        t = np.broadcast_to(np.asarray(t), (z.shape[0],))
        return self._forward(z, t)[0]

    def loss_and_grad(self, zt, t, eps):
        """Batch-mean squared error and its gradient w.r.t. ``params``."""
        out, cache = self._forward(zt, t)
        diff = out - eps
        loss = float(np.mean(np.sum(diff ** 2, axis=1)))
        g = 2.0 * diff / zt.shape[0]
        grads = [None] * len(self.params)
        n = len(cache)
        for i in reversed(range(n)):
            h, a = cache[i]
            if i < n - 1:
                s = _sigmoid(a)
                g = g * (s * (1.0 + a * (1.0 - s)))
            grads[2 * i] = h.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i:
                g = g @ self.params[2 * i].T
        return loss, grads

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        total = sum(p.size for p in self.params)
        if flat.size != total:
            raise ValueError(f"expected {total} parameters, got {flat.size}")
        i = 0
        for k, p in enumerate(self.params):
            self.params[k] = flat[i:i + p.size].reshape(p.shape).copy()
            i += p.size
        return self

    @classmethod
    def from_flat(cls, flat, dim, hidden, n_layers, time_dim):
        return cls(dim, hidden, n_layers, time_dim).set_flat(flat)


class Adam:
    def __init__(self, params, lr=7e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainingHistory:
    epoch_loss: list = field(default_factory=list)
    steps: int = 0


def train_mlp_denoiser(z0, schedule, arch=None, optimizer=None, seed=0):
    """Fit an :class:`MLPDenoiser` to the noise-prediction objective.

    ``arch`` keys: ``hidden``, ``n_layers``, ``time_dim``. ``optimizer``
    keys: ``lr``, ``batch_size``, ``epochs``, ``beta1``, ``beta2``.
    Returns ``(denoiser, history)``; ``history.epoch_loss`` is the mean
    training loss per epoch.
    """
    z0 = check_array(z0, dtype=np.float64)
    arch = {"hidden": 128, "n_layers": 3, "time_dim": 32, **(arch or {})}
    opt = {"lr": 7e-5, "batch_size": 8, "epochs": 300, "beta1": 0.9, "beta2": 0.999, **(optimizer or {})}
    seed = check_seed(seed)
    ss = np.random.SeedSequence(seed)
    init_seed, data_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    net = MLPDenoiser(z0.shape[1], seed=init_seed, **arch)
    adam = Adam(net.params, lr=opt["lr"], beta1=opt["beta1"], beta2=opt["beta2"])
    rng = np.random.default_rng(data_seed)
    n = z0.shape[0]
    bs = int(min(opt["batch_size"], n))
    hist = TrainingHistory()
    for _epoch in range(int(opt["epochs"])):
        order = rng.permutation(n)
        total = 0.0
        batches = 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            t = rng.integers(1, schedule.T + 1, size=idx.size)
            eps = rng.standard_normal((idx.size, z0.shape[1]))
            zt = forward_noise(schedule, z0[idx], t, eps)
            loss, grads = net.loss_and_grad(zt, t, eps)
            hist.steps += 1
            if not np.isfinite(loss):
                raise TrainingDiverged(hist.steps, loss)
            adam.step(net.params, grads)
            total += loss
            batches += 1
        hist.epoch_loss.append(total / batches)
    return net, hist


def _check_finite(z, t):
    if not np.all(np.isfinite(z)):
        raise FloatingPointError(f"non-finite sample at step {t}")


def sample_paper_literal(schedule, denoiser, seed, dim, n_samples=1):
    """Reverse iteration ``z_{t-1} = z_t - eps_theta(z_t, t)`` from pure noise."""
    rng = np.random.default_rng(check_seed(seed))
    z = rng.standard_normal((int(n_samples), int(dim)))
    for t in range(schedule.T, 0, -1):
        z = z - denoiser(z, np.full(z.shape[0], t))
        _check_finite(z, t)
    return z


def sample_ddpm_ancestral(schedule, denoiser, seed, dim, n_samples=1):
    """Standard ancestral sampler with variance ``beta_t`` and no noise at t=1."""
    rng = np.random.default_rng(check_seed(seed))
    z = rng.standard_normal((int(n_samples), int(dim)))
    for t in range(schedule.T, 0, -1):
        a, b, ab = schedule.alpha[t - 1], schedule.beta[t - 1], schedule.alpha_bar[t - 1]
        eps = denoiser(z, np.full(z.shape[0], t))
        z = (z - (b / np.sqrt(1.0 - ab)) * eps) / np.sqrt(a)
        if t > 1:
            z = z + np.sqrt(b) * rng.standard_normal(z.shape)
        _check_finite(z, t)
    return z


SAMPLERS = {"ancestral": sample_ddpm_ancestral, "literal": sample_paper_literal}


def generate_qmaps(pca, schedule, denoiser, count, seed, sampler="ancestral"):
    """Sample latents and decode them into physical :class:`QMaps`."""
    from .latent import decode

    if count == 0:
        return []
    z = SAMPLERS[sampler](schedule, denoiser, seed, pca.n_components, count)
    return [decode(pca, zi) for zi in z]


class LatentDiffusion(BaseEstimator):
    """Diffusion model over fixed-length latent vectors.

    ``fit(Z)`` trains the denoiser; ``sample(n)`` draws new latents.
    Defaults follow T=500 steps, betas in [1e-4, 0.02], Adam with step
    7e-5 and batch 8.
    """

    def __init__(self, n_steps=500, beta_start=1e-4, beta_end=0.02, hidden=128, n_layers=3,
                 time_dim=32, learning_rate=7e-5, batch_size=8, epochs=300, sampler="ancestral",
                 random_state=0):
        self.n_steps = n_steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.hidden = hidden
        self.n_layers = n_layers
        self.time_dim = time_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.sampler = sampler
        self.random_state = random_state

    def fit(self, Z, y=None):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        Z = check_array(Z, dtype=np.float64)
        self.schedule_ = linear_beta_schedule(self.n_steps, self.beta_start, self.beta_end)
        self.denoiser_, hist = train_mlp_denoiser(
            Z, self.schedule_,
            arch={"hidden": self.hidden, "n_layers": self.n_layers, "time_dim": self.time_dim},
            optimizer={"lr": self.learning_rate, "batch_size": self.batch_size, "epochs": self.epochs},
            seed=self.random_state)
        self.loss_trace_ = np.asarray(hist.epoch_loss)
        self.n_features_in_ = Z.shape[1]
        return self

    def sample(self, n_samples=1, seed=None):
        check_is_fitted(self, "denoiser_")
        seed = self.random_state if seed is None else seed
        return SAMPLERS[self.sampler](self.schedule_, self.denoiser_, seed, self.n_features_in_, n_samples)

    def score(self, Z, y=None, seed=0):
        """Negative denoising loss on ``Z`` (higher is better)."""
        check_is_fitted(self, "denoiser_")
        return -denoiser_loss(self.denoiser_, self.schedule_, Z, seed)
