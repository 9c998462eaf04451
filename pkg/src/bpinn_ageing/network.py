"""Fully-connected tanh network with exact input derivatives.

The network maps normalized coordinates ``(x, t)`` to a scalar.  Alongside
the value it propagates ``d/dx``, ``d/dt`` and ``d2/dx2`` layer by layer
(forward sensitivities), and :meth:`TanhMLP.vjp` runs the reverse sweep so
any loss built from those four quantities can be differentiated with
respect to the flattened parameter vector.

Parameters live in a single flat float64 vector.  Layer ``l`` contributes
its weight matrix of shape ``(fan_in, fan_out)`` in C order followed by its
bias vector.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

INPUT_DIM = 2
OUTPUT_DIM = 1


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkShape:
    hidden: tuple[int, ...]
    input_dim: int = INPUT_DIM
    output_dim: int = OUTPUT_DIM

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if len(self.hidden) < 1:
            raise ShapeError("need at least one hidden layer")
        if any(w < 1 for w in self.hidden):
            raise ShapeError(f"hidden widths must be >= 1, got {self.hidden}")
        if self.input_dim != INPUT_DIM or self.output_dim != OUTPUT_DIM:
            raise ShapeError("network is fixed to 2 inputs (x, t) and 1 output")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        s = self.sizes
        return [(s[i], s[i + 1]) for i in range(len(s) - 1)]

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes)


@dataclass
class Derivatives:
    """Network output and its input derivatives at a batch of points."""

    u: np.ndarray
    u_t: np.ndarray
    u_x: np.ndarray
    u_xx: np.ndarray


@dataclass
class _Cache:
    x: np.ndarray
    t: np.ndarray
    # per hidden layer: (pre-activation stack, post-activation stack, tanh, 1-tanh^2, -2 tanh (1-tanh^2), mask)
    layers: list = field(default_factory=list)
    with_derivs: bool = True


class TanhMLP:
    """Tanh multilayer perceptron over a flat parameter vector."""

    def __init__(self, shape: NetworkShape | Sequence[int]):
        if not isinstance(shape, NetworkShape):
            shape = NetworkShape(tuple(shape))
        self.shape = shape
        self.n_params = shape.n_params
        self._slices = []
        offset = 0
        for fan_in, fan_out in shape.layer_shapes:
            w = slice(offset, offset + fan_in * fan_out)
            offset += fan_in * fan_out
            b = slice(offset, offset + fan_out)
            offset += fan_out
            self._slices.append((w, b, fan_in, fan_out))

    def __repr__(self):
        return f"TanhMLP(hidden={self.shape.hidden})"

    # -- parameter handling -------------------------------------------------

    def init_params(self, seed=None) -> np.ndarray:
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        theta = np.zeros(self.n_params)
        for w, _, fan_in, fan_out in self._slices:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            theta[w] = rng.uniform(-limit, limit, size=fan_in * fan_out)
        return theta

    def unflatten(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ShapeError(
                f"expected flat parameter vector of length {self.n_params}, got shape {theta.shape}"
            )
        return [
            (theta[w].reshape(fan_in, fan_out), theta[b])
            for w, b, fan_in, fan_out in self._slices
        ]

    def flatten(self, layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        if len(layers) != len(self._slices):
            raise ShapeError(f"expected {len(self._slices)} layers, got {len(layers)}")
        parts = []
        for (W, b), (_, _, fan_in, fan_out) in zip(layers, self._slices):
            W = np.asarray(W, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if W.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ShapeError(
                    f"layer shape mismatch: got W{W.shape} b{b.shape}, want ({fan_in}, {fan_out})"
                )
            parts += [W.ravel(), b]
        return np.concatenate(parts)

    # -- evaluation ---------------------------------------------------------

    @staticmethod
    def _inputs(x, t):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        x, t = np.broadcast_arrays(x, t)
        if x.ndim != 1:
            raise ShapeError("x and t must be scalars or 1-D arrays")
        return np.ascontiguousarray(x), np.ascontiguousarray(t)

    def _check_masks(self, masks):
        if masks is None:
            return [None] * len(self.shape.hidden)
        if len(masks) != len(self.shape.hidden):
            raise ShapeError(f"need one mask per hidden layer ({len(self.shape.hidden)})")
        return masks

    def forward(self, theta, x, t, masks=None) -> np.ndarray:
        """Network output at the points ``(x, t)``.

        ``masks`` optionally holds one multiplicative array per hidden layer,
        broadcastable to ``(n_points, width)`` (dropout).
        """
        x, t = self._inputs(x, t)
        layers = self.unflatten(theta)
        masks = self._check_masks(masks)
        W, b = layers[0]
        a = np.tanh(np.outer(x, W[0]) + np.outer(t, W[1]) + b)
        if masks[0] is not None:
            a = a * masks[0]
        for (W, b), m in zip(layers[1:-1], masks[1:]):
            a = np.tanh(a @ W + b)
            if m is not None:
                a = a * m
        W, b = layers[-1]
        return (a @ W + b)[:, 0]

    def _forward_cached(self, layers, x, t, masks, with_derivs):
        # Hidden states are stacked as (4, n, width): value, d/dx, d/dt, d2/dx2.
        cache = _Cache(x=x, t=t, with_derivs=with_derivs)
        n = x.shape[0]
        W, b = layers[0]
        if with_derivs:
            Z = np.empty((4, n, W.shape[1]))
            Z[0] = np.outer(x, W[0]) + np.outer(t, W[1]) + b
            Z[1] = W[0]
            Z[2] = W[1]
            Z[3] = 0.0
        else:
            Z = (np.outer(x, W[0]) + np.outer(t, W[1]) + b)[None]
        for li in range(len(layers) - 1):
            if li > 0:
                W, b = layers[li]
                k = A.shape[0]
                Z = (A.reshape(k * n, -1) @ W).reshape(k, n, -1)
                Z[0] += b
            a = np.tanh(Z[0])
            f1 = a * a
            np.subtract(1.0, f1, out=f1)
            if with_derivs:
                f2 = a * f1
                f2 *= -2.0
                zx = Z[1]
                A = Z * f1
                A[0] = a
                s = zx * zx
                s *= f2
                A[3] += s
            else:
                f2 = None
                A = a[None]
            m = masks[li]
            if m is not None:
                A = A * m
            cache.layers.append((Z, A, a, f1, f2, m))
        W, b = layers[-1]
        k = A.shape[0]
        out = (A.reshape(k * n, -1) @ W).reshape(k, n)
        out[0] += b[0]
        if with_derivs:
            res = Derivatives(u=out[0], u_t=out[2], u_x=out[1], u_xx=out[3])
        else:
            res = Derivatives(u=out[0], u_t=None, u_x=None, u_xx=None)
        return res, cache

    def input_derivatives(self, theta, x, t, masks=None) -> Derivatives:
        x, t = self._inputs(x, t)
        out, _ = self._forward_cached(self.unflatten(theta), x, t, self._check_masks(masks), True)
        return out

    def evaluate(self, theta, x, t, masks=None, with_derivs=True):
        """Forward pass that keeps the intermediates needed by :meth:`vjp`."""
        x, t = self._inputs(x, t)
        return self._forward_cached(
            self.unflatten(theta), x, t, self._check_masks(masks), with_derivs
        )

    def vjp(self, theta, cache: _Cache, g_u, g_t=None, g_x=None, g_xx=None) -> np.ndarray:
        """Gradient of ``sum(g_u*u + g_t*u_t + g_x*u_x + g_xx*u_xx)`` w.r.t. theta."""
        layers = self.unflatten(theta)
        grad = np.zeros(self.n_params)
        n = cache.x.shape[0]
        if cache.with_derivs:
            G = np.zeros((4, n))
            G[0] = g_u
            for i, g in ((1, g_x), (2, g_t), (3, g_xx)):
                if g is not None:
                    G[i] = g
        else:
            if not (g_t is None and g_x is None and g_xx is None):
                raise ValueError("derivative cotangents need a cache built with_derivs=True")
            G = np.asarray(g_u, dtype=np.float64)[None]
        k = G.shape[0]

        W, b = layers[-1]
        wsl, bsl, _, _ = self._slices[-1]
        A = cache.layers[-1][1]
        grad[wsl] = A.reshape(k * n, -1).T @ G.reshape(k * n)
        grad[bsl] = G[0].sum()
        GA = G[:, :, None] * W[:, 0]

        for li in range(len(layers) - 2, -1, -1):
            Z, A, a, f1, f2, m = cache.layers[li]
            if m is not None:
                GA = GA * m
            GZ = GA * f1
            if k == 4:
                zx = Z[1]
                s = GA[1] * zx
                s += GA[2] * Z[2]
                if li > 0:
                    s += GA[3] * Z[3]
                s *= f2
                GZ[0] += s
                # d(f2)/dz = 2 f1 (3 tanh^2 - 1)
                w = a * a
                w *= 3.0
                w -= 1.0
                w *= zx
                w *= zx
                w *= GZ[3]
                w *= 2.0
                GZ[0] += w
                s = GA[3] * f2
                s *= zx
                s *= 2.0
                GZ[1] += s
            wsl, bsl, fi, fo = self._slices[li]
            grad[bsl] = GZ[0].sum(axis=0)
            if li == 0:
                gW = np.empty((2, fo))
                gW[0] = cache.x @ GZ[0]
                gW[1] = cache.t @ GZ[0]
                if k == 4:
                    gW[0] += GZ[1].sum(axis=0)
                    gW[1] += GZ[2].sum(axis=0)
                grad[wsl] = gW.ravel()
                break
            W, _ = layers[li]
            Aprev = cache.layers[li - 1][1]
            grad[wsl] = (Aprev.reshape(k * n, -1).T @ GZ.reshape(k * n, -1)).ravel()
            GA = (GZ.reshape(k * n, -1) @ W.T).reshape(k, n, -1)
        return grad

    def loss_gradient(
        self,
        theta,
        x,
        t,
        loss: Callable[[Derivatives], tuple[float, Derivatives]],
        masks=None,
    ) -> tuple[float, np.ndarray]:
        """Value and parameter gradient of a loss over network outputs.

        ``loss`` receives the :class:`Derivatives` at the batch and returns the
        scalar value together with its partial derivatives with respect to each
        of the four arrays (``None`` entries mean zero).
        """
        out, cache = self.evaluate(theta, x, t, masks=masks, with_derivs=True)
        value, cot = loss(out)
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite loss value {value!r}")
        return float(value), self.vjp(theta, cache, cot.u, cot.u_t, cot.u_x, cot.u_xx)


# -- serialization ---------------------------------------------------------

_MAGIC = "bpinn-params-v1"


def save_params(path, shape: NetworkShape, theta: np.ndarray, seed=None, extra: Optional[dict] = None):
    """Write a flat vector with a one-line JSON header; values are stored as
    IEEE-754 hex strings so the round trip is bit-exact."""
    header = {"format": _MAGIC, "hidden": list(shape.hidden), "n": int(theta.size), "seed": seed}
    if extra:
        header.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for v in np.asarray(theta, dtype=np.float64):
            fh.write(float(v).hex() + "\n")


def load_params(path) -> tuple[NetworkShape, np.ndarray, dict]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != _MAGIC:
            raise ValueError(f"{path}: not a parameter file")
        values = [float.fromhex(line.strip()) for line in fh if line.strip()]
    theta = np.array(values, dtype=np.float64)
    shape = NetworkShape(tuple(header["hidden"]))
    if theta.size != header["n"] or theta.size != shape.n_params:
        raise ShapeError(f"{path}: parameter count mismatch")
    return shape, theta, header
