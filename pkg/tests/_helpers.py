"""Reference objects shared by the unit and acceptance tests."""

import numpy as np


class GaussianOptimalDenoiser:
    """Exact ``E[eps | z_t]`` when the data are N(mu, sigma^2) per coordinate."""

    def __init__(self, schedule, mu, sigma):
        self.schedule = schedule
        self.mu = mu
        self.sigma = sigma

    def __call__(self, z, t):
        ab = self.schedule.alpha_bar[np.asarray(t) - 1][:, None]
        var = ab * self.sigma ** 2 + (1.0 - ab)
        return np.sqrt(1.0 - ab) * (z - np.sqrt(ab) * self.mu) / var


def gmm_2d(n, seed):
    """Two well-separated isotropic components in the plane."""
    rng = np.random.default_rng(seed)
    centers = np.array([[-1.5, 0.5], [1.5, -0.5]])
    k = rng.integers(0, 2, size=n)
    return centers[k] + 0.35 * rng.standard_normal((n, 2))


def grad_check(net, zt, t, eps, n_dirs=20, h=1e-5, seed=0):
    """Worst relative error between analytic and central-difference
    directional derivatives.

    Directions are random unit vectors: ``n_dirs`` over all parameters plus
    one confined to each parameter array, so an error in a single layer or
    bias cannot hide behind the others.
    """
    _, grads = net.loss_and_grad(zt, t, eps)
    flat_g = np.concatenate([g.ravel() for g in grads])
    theta = net.get_flat()
    rng = np.random.default_rng(seed)
    bounds = np.cumsum([0] + [p.size for p in net.params])
    supports = [slice(None)] * n_dirs + [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    worst = 0.0
    for sl in supports:
        v = np.zeros(theta.size)
        v[sl] = rng.standard_normal(v[sl].size)
        v /= np.linalg.norm(v)
        lp = net.set_flat(theta + h * v).loss_and_grad(zt, t, eps)[0]
        lm = net.set_flat(theta - h * v).loss_and_grad(zt, t, eps)[0]
        fd = (lp - lm) / (2 * h)
        an = flat_g @ v
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an)))
    net.set_flat(theta)
    return worst


ACCEPTANCE_LINES = []


class criterion:
    """Context manager that records one PASS/FAIL line for an acceptance criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.details = []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        import time

        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        import time

        dt = time.perf_counter() - self._t0
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc_type is not None:
            detail = (detail + "; " if detail else "") + f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        line = f"[acceptance {self.number}] {status} {self.title} ({dt:.1f} s) {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False
