"""Mean-field Gaussian variational inference over a flat weight vector.

Weights are drawn as ``theta = mu + softplus(rho) * eps`` and the loss is the
Monte-Carlo estimate of ``E_q[log q(theta) - log p(theta) - log p(D|theta)]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import expit, logsumexp

LOG_2PI = math.log(2.0 * math.pi)


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


@dataclass(eq=False)
class VariationalParams:
    """Mean and raw scale per weight; ``sigma = softplus(rho)``."""

    mu: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.mu = np.array(self.mu, dtype=np.float64)
        self.rho = np.array(self.rho, dtype=np.float64)
        if self.mu.ndim != 1 or self.mu.shape != self.rho.shape:
            raise ValueError("mu and rho must be 1-D arrays of equal length")

    @classmethod
    def init(cls, mu0: np.ndarray, sigma0: float = 0.05) -> "VariationalParams":
        mu0 = np.asarray(mu0, dtype=np.float64)
        return cls(mu0.copy(), np.full(mu0.shape, float(softplus_inv(sigma0))))

    @property
    def sigma(self) -> np.ndarray:
        return softplus(self.rho)

    @property
    def size(self) -> int:
        return self.mu.size

    def copy(self) -> "VariationalParams":
        return VariationalParams(self.mu.copy(), self.rho.copy())

    def save(self, path, header: Optional[dict] = None) -> None:
        """Text checkpoint: one JSON header line, then ``mu rho`` as float hex."""
        head = {"format": "bpinn-variational-v1", "n": self.size}
        head.update(header or {})
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(head, sort_keys=True) + "\n")
            for m, r in zip(self.mu, self.rho):
                fh.write(f"{float(m).hex()} {float(r).hex()}\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            head = json.loads(fh.readline())
            if head.get("format") != "bpinn-variational-v1":
                raise ValueError(f"{path}: not a variational checkpoint")
            pairs = [line.split() for line in fh if line.strip()]
        mu = np.array([float.fromhex(p[0]) for p in pairs])
        rho = np.array([float.fromhex(p[1]) for p in pairs])
        if mu.size != head["n"]:
            raise ValueError(f"{path}: truncated checkpoint")
        return cls(mu, rho), head


# -- priors ------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPrior:
    sigma: float = 1.0
    tag = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    def logpdf(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        return -0.5 * LOG_2PI - math.log(self.sigma) - 0.5 * (theta / self.sigma) ** 2

    def grad(self, theta):
        return -np.asarray(theta) / self.sigma ** 2

    def to_dict(self):
        return {"kind": self.tag, "sigma": self.sigma}


@dataclass(frozen=True)
class SpikeSlabPrior:
    """pi * N(0, sigma1^2) + (1 - pi) * N(0, sigma2^2), with sigma1 > sigma2."""

    pi: float = 0.5
    sigma1: float = 1.0
    sigma2: float = 0.1
    tag = "spike_slab"

    def __post_init__(self):
        if not 0 < self.pi < 1:
            raise ValueError("pi must lie in (0, 1)")
        if not self.sigma1 > self.sigma2 > 0:
            raise ValueError("need sigma1 > sigma2 > 0")

    def _components(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        l1 = math.log(self.pi) - 0.5 * LOG_2PI - math.log(self.sigma1) - 0.5 * (theta / self.sigma1) ** 2
        l2 = math.log1p(-self.pi) - 0.5 * LOG_2PI - math.log(self.sigma2) - 0.5 * (theta / self.sigma2) ** 2
        return l1, l2

    def logpdf(self, theta):
        l1, l2 = self._components(theta)
        return np.logaddexp(l1, l2)

    def grad(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        l1, l2 = self._components(theta)
        r1 = expit(l1 - l2)
        return -theta * (r1 / self.sigma1 ** 2 + (1.0 - r1) / self.sigma2 ** 2)

    def to_dict(self):
        return {"kind": self.tag, "pi": self.pi, "sigma1": self.sigma1, "sigma2": self.sigma2}


@dataclass(frozen=True)
class LaplacePrior:
    """Density (lam / 2) * exp(-lam * |theta|)."""

    lam: float = 1.0
    tag = "laplace"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be > 0")

    def logpdf(self, theta):
        return math.log(self.lam / 2.0) - self.lam * np.abs(np.asarray(theta, dtype=np.float64))

    def grad(self, theta):
        return -self.lam * np.sign(theta)

    def to_dict(self):
        return {"kind": self.tag, "lam": self.lam}


Prior = Union[GaussianPrior, SpikeSlabPrior, LaplacePrior]

_PRIORS = {"gaussian": GaussianPrior, "spike_slab": SpikeSlabPrior, "laplace": LaplacePrior}


def prior_from_dict(d: dict) -> Prior:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _PRIORS:
        raise ValueError(f"unknown prior {kind!r}; choose from {sorted(_PRIORS)}")
    return _PRIORS[kind](**d)


def log_prior(prior: Prior, theta) -> float:
    return float(np.sum(prior.logpdf(theta)))


# -- variational density -----------------------------------------------------


def sample_weights(vp: VariationalParams, rng=None, eps: Optional[np.ndarray] = None):
    """Reparameterised draw.  Pass ``eps`` to replay a previous draw."""
    if eps is None:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        eps = rng.standard_normal(vp.size)
    eps = np.asarray(eps, dtype=np.float64)
    return vp.mu + vp.sigma * eps, eps


def log_variational(vp: VariationalParams, theta, eps=None) -> float:
    """log q(theta | mu, sigma); ``eps`` is accepted for symmetry and unused."""
    sigma = vp.sigma
    z = (np.asarray(theta, dtype=np.float64) - vp.mu) / sigma
    return float(np.sum(-0.5 * LOG_2PI - np.log(sigma) - 0.5 * z * z))


# -- Monte-Carlo ELBO --------------------------------------------------------


class LikelihoodError(FloatingPointError):
    def __init__(self, sample: int, value):
        self.sample = sample
        super().__init__(f"non-finite log-likelihood {value!r} at Monte-Carlo sample {sample}")


@dataclass(frozen=True)
class ElboEstimate:
    """Monte-Carlo averages; ``loss = log_q - log_prior - log_lik``."""

    loss: float
    log_q: float
    log_prior: float
    log_lik: float
    n_samples: int


def _eps_batch(vp, n_samples, seed, eps):
    if eps is not None:
        eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
        if eps.shape[1] != vp.size:
            raise ValueError("replayed eps has the wrong length")
        return eps
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.standard_normal((n_samples, vp.size))


def mc_elbo(
    vp: VariationalParams,
    prior: Prior,
    log_likelihood: Callable[[np.ndarray], float],
    n_samples: int = 1,
    seed=None,
    eps=None,
) -> ElboEstimate:
    eps = _eps_batch(vp, n_samples, seed, eps)
    lq = lp = ll = 0.0
    for i, e in enumerate(eps):
        theta, _ = sample_weights(vp, eps=e)
        v = float(log_likelihood(theta))
        if not math.isfinite(v):
            raise LikelihoodError(i, v)
        lq += log_variational(vp, theta)
        lp += log_prior(prior, theta)
        ll += v
    n = eps.shape[0]
    lq, lp, ll = lq / n, lp / n, ll / n
    return ElboEstimate(lq - lp - ll, lq, lp, ll, n)


def elbo_gradient(
    vp: VariationalParams,
    prior: Prior,
    log_likelihood_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    n_samples: int = 1,
    seed=None,
    eps=None,
):
    """Loss estimate and its gradient with respect to (mu, rho).

    ``log_likelihood_grad(theta)`` returns the log-likelihood and its gradient.
    Under the reparameterisation ``log q`` reduces to
    ``sum(-log sigma - eps^2 / 2)`` up to a constant, so its only explicit
    dependence is on ``rho``.
    """
    eps = _eps_batch(vp, n_samples, seed, eps)
    sigma = vp.sigma
    dsig = expit(vp.rho)
    g_mu = np.zeros(vp.size)
    g_rho = np.zeros(vp.size)
    lq = lp = ll = 0.0
    for i, e in enumerate(eps):
        theta, _ = sample_weights(vp, eps=e)
        v, g_ll = log_likelihood_grad(theta)
        if not math.isfinite(v):
            raise LikelihoodError(i, v)
        g_theta = -prior.grad(theta) - g_ll
        g_mu += g_theta
        g_rho += (g_theta * e - 1.0 / sigma) * dsig
        lq += log_variational(vp, theta)
        lp += log_prior(prior, theta)
        ll += v
    n = eps.shape[0]
    lq, lp, ll = lq / n, lp / n, ll / n
    return ElboEstimate(lq - lp - ll, lq, lp, ll, n), g_mu / n, g_rho / n
