"""Minimal differentiable building blocks for the variational critics.

A single-hidden-layer ReLU MLP with hand-written reverse-mode gradients, a
conditional diagonal-Gaussian density head, the Adam update, and a central
finite-difference gradient checker. Everything is plain float64 numpy and is
bit-deterministic given identical seeds and call order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ParameterError, TrainingError

DEFAULT_HIDDEN = 20

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0

_LOG_2PI = math.log(2.0 * math.pi)


class MlpCache(NamedTuple):
    """Activations saved by a forward pass for the matching backward pass.

    Caches alias reusable scratch buffers, so only the most recent forward's
    cache is valid; ``owner``/``token`` let backward reject stale ones.
    """

    x: np.ndarray
    hidden: np.ndarray
    mask: np.ndarray
    owner: "Mlp"
    token: int


class Mlp:
    """y = w2 @ relu(w1 @ x + b1) + b2, applied row-wise to a batch.

    Large per-batch activations are written into buffers reused across calls
    (training touches them tens of thousands of times), which is why backward
    only accepts the cache of the latest forward.
    """

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ParameterError("weight matrices must be 2-d")
        if self.b1.shape != (self.w1.shape[0],) or self.b2.shape != (self.w2.shape[0],):
            raise ParameterError("bias shapes do not match weight shapes")
        if self.w2.shape[1] != self.w1.shape[0]:
            raise ParameterError("hidden dimensions of w1 and w2 disagree")
        self._scratch: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._token = 0

    @classmethod
    def initialize(
        cls,
        in_dim: int,
        hidden_dim: int,
        out_dim: int,
        rng: np.random.Generator,
    ) -> "Mlp":
        """He-scaled Gaussian weights (ReLU-appropriate), zero biases.

        Draw order is w1 then w2 so initialization is reproducible from the
        caller's stream.
        """
        if min(in_dim, hidden_dim, out_dim) < 1:
            raise ParameterError("all dimensions must be positive")
        w1 = rng.standard_normal((hidden_dim, in_dim)) * math.sqrt(2.0 / in_dim)
        w2 = rng.standard_normal((out_dim, hidden_dim)) * math.sqrt(1.0 / hidden_dim)
        return cls(w1, np.zeros(hidden_dim), w2, np.zeros(out_dim))

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays, keyed for the optimizer."""
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def _buffers(
        self, batch: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        bufs = self._scratch.get(batch)
        if bufs is None:
            bufs = (
                np.empty((batch, self.hidden_dim)),
                np.empty((batch, self.out_dim)),
                np.empty((batch, self.hidden_dim)),
                np.empty((batch, self.hidden_dim)),
            )
            self._scratch[batch] = bufs
        return bufs

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ParameterError(
                f"input must be (batch, {self.in_dim}), got {x.shape}"
            )
        hidden, out, _, mask = self._buffers(x.shape[0])
        np.matmul(x, self.w1.T, out=hidden)
        hidden += self.b1
        np.maximum(hidden, 0.0, out=hidden)
        # 0/1 mask is relu'(pre) with the subgradient at 0 defined as 0;
        # kept in float so backward multiplies without a dtype cast
        np.sign(hidden, out=mask)
        np.matmul(hidden, self.w2.T, out=out)
        out += self.b2
        self._token += 1
        return out, MlpCache(x=x, hidden=hidden, mask=mask, owner=self, token=self._token)

    def backward(
        self,
        cache: MlpCache,
        dout: np.ndarray,
        need_input_grad: bool = False,
    ) -> tuple[dict[str, np.ndarray], np.ndarray | None]:
        """Exact gradients of the forward map; ReLU subgradient at 0 is 0."""
        dout = np.asarray(dout, dtype=np.float64)
        if cache.owner is not self or cache.token != self._token:
            raise ParameterError("stale cache: backward must follow its own forward")
        if (
            cache.x.ndim != 2
            or cache.x.shape[1] != self.in_dim
            or cache.hidden.shape != (cache.x.shape[0], self.hidden_dim)
            or dout.shape != (cache.x.shape[0], self.out_dim)
        ):
            raise ParameterError("cache does not match this network and output gradient")
        dw2 = dout.T @ cache.hidden
        db2 = dout.sum(axis=0)
        dpre = self._buffers(cache.x.shape[0])[2]
        if self.out_dim == 1 and not need_input_grad:
            # dpre = (dout w2) * mask factorizes through the scalar output:
            # reduce t = dout * mask against x, scaling by w2 afterwards
            np.multiply(dout, cache.mask, out=dpre)
            dw1 = self.w2[0][:, None] * (dpre.T @ cache.x)
            db1 = self.w2[0] * (dout[:, 0] @ cache.mask)
            return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}, None
        np.matmul(dout, self.w2, out=dpre)
        dpre *= cache.mask
        dw1 = dpre.T @ cache.x
        db1 = dpre.sum(axis=0)
        grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}
        dx = dpre @ self.w1 if need_input_grad else None
        return grads, dx


class CondGaussianHead:
    """Diagonal Gaussian q(v | u) with MLP mean and log-variance heads."""

    def __init__(self, mu_net: Mlp, logvar_net: Mlp):
        if mu_net.in_dim != logvar_net.in_dim or mu_net.out_dim != logvar_net.out_dim:
            raise ParameterError("mean and log-variance heads must share dimensions")
        self.mu_net = mu_net
        self.logvar_net = logvar_net

    @classmethod
    def initialize(
        cls,
        u_dim: int,
        v_dim: int,
        hidden_dim: int,
        rng: np.random.Generator,
    ) -> "CondGaussianHead":
        mu_net = Mlp.initialize(u_dim, hidden_dim, v_dim, rng)
        logvar_net = Mlp.initialize(u_dim, hidden_dim, v_dim, rng)
        return cls(mu_net, logvar_net)

    @property
    def u_dim(self) -> int:
        return self.mu_net.in_dim

    @property
    def v_dim(self) -> int:
        return self.mu_net.out_dim

    def parameters(self) -> dict[str, np.ndarray]:
        out = {f"mu.{k}": p for k, p in self.mu_net.parameters().items()}
        out.update({f"logvar.{k}": p for k, p in self.logvar_net.parameters().items()})
        return out


class CondGaussianCache(NamedTuple):
    mu_cache: MlpCache
    logvar_cache: MlpCache
    mu: np.ndarray
    logvar_raw: np.ndarray
    logvar: np.ndarray
    v: np.ndarray


def cond_gaussian_logpdf(
    head: CondGaussianHead, u: np.ndarray, v: np.ndarray
) -> tuple[np.ndarray, CondGaussianCache]:
    """Row-wise log q(v_i | u_i); log-variances are clamped to [-10, 10]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 2 or v.ndim != 2 or u.shape[0] != v.shape[0]:
        raise ParameterError("u and v must be 2-d with equal batch sizes")
    if v.shape[1] != head.v_dim:
        raise ParameterError(f"v must have width {head.v_dim}, got {v.shape[1]}")
    mu, mu_cache = head.mu_net.forward(u)
    logvar_raw, logvar_cache = head.logvar_net.forward(u)
    logvar = np.clip(logvar_raw, LOGVAR_MIN, LOGVAR_MAX)
    inv_var = np.exp(-logvar)
    resid = v - mu
    per_dim = -0.5 * _LOG_2PI - 0.5 * logvar - 0.5 * resid * resid * inv_var
    logpdf = per_dim.sum(axis=1)
    cache = CondGaussianCache(mu_cache, logvar_cache, mu, logvar_raw, logvar, v)
    return logpdf, cache


def cond_gaussian_logpdf_backward(
    head: CondGaussianHead,
    cache: CondGaussianCache,
    dlogpdf: np.ndarray,
    need_input_grads: bool = False,
) -> tuple[dict[str, np.ndarray], np.ndarray | None, np.ndarray | None]:
    """Gradients of sum(dlogpdf * logpdf) w.r.t. head parameters (and u, v).

    The clamp contributes zero gradient outside [-10, 10].
    """
    dlogpdf = np.asarray(dlogpdf, dtype=np.float64)
    if dlogpdf.shape != (cache.v.shape[0],):
        raise ParameterError("dlogpdf must be one value per row")
    inv_var = np.exp(-cache.logvar)
    resid = cache.v - cache.mu
    w = dlogpdf[:, None]
    dmu = w * resid * inv_var
    dlogvar = w * (-0.5 + 0.5 * resid * resid * inv_var)
    in_range = (cache.logvar_raw >= LOGVAR_MIN) & (cache.logvar_raw <= LOGVAR_MAX)
    dlogvar_raw = dlogvar * in_range
    mu_grads, du_mu = head.mu_net.backward(cache.mu_cache, dmu, need_input_grads)
    lv_grads, du_lv = head.logvar_net.backward(cache.logvar_cache, dlogvar_raw, need_input_grads)
    grads = {f"mu.{k}": g for k, g in mu_grads.items()}
    grads.update({f"logvar.{k}": g for k, g in lv_grads.items()})
    if need_input_grads:
        du = du_mu + du_lv
        dv = -w * resid * inv_var
        return grads, du, dv
    return grads, None, None


def cond_gaussian_logpdf_matrix(
    head: CondGaussianHead, u: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """All-pairs log q(v_j | u_i) as an (N, N) matrix (no gradients).

    The conditioning networks run once on the N rows of u; densities for all
    pairs follow from expanding the squared residual.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 2 or v.ndim != 2 or u.shape[0] != v.shape[0]:
        raise ParameterError("u and v must be 2-d with equal batch sizes")
    mu, _ = head.mu_net.forward(u)
    logvar_raw, _ = head.logvar_net.forward(u)
    logvar = np.clip(logvar_raw, LOGVAR_MIN, LOGVAR_MAX)
    inv_var = np.exp(-logvar)
    const = np.sum(-0.5 * _LOG_2PI - 0.5 * logvar - 0.5 * mu * mu * inv_var, axis=1)
    cross = (mu * inv_var) @ v.T
    quad = (0.5 * inv_var) @ (v * v).T
    return const[:, None] + cross - quad


@dataclass
class AdamState:
    """First/second-moment accumulators for one parameter dictionary."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    _scratch: dict[str, tuple[np.ndarray, np.ndarray]] = field(
        default_factory=dict, repr=False
    )

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 1e-4) -> "AdamState":
        return cls(
            lr=lr,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place:
    p -= lr * (m / (1 - beta1^t)) / (sqrt(v / (1 - beta2^t)) + eps)."""
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ParameterError(f"gradient shape mismatch for {name!r}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name!r}", step=t)
        m = state.m[name]
        v = state.v[name]
        scratch = state._scratch.get(name)
        if scratch is None:
            scratch = (np.empty_like(p), np.empty_like(p))
            state._scratch[name] = scratch
        a, b = scratch
        m *= state.beta1
        np.multiply(g, 1.0 - state.beta1, out=a)
        m += a
        v *= state.beta2
        np.multiply(g, g, out=a)
        a *= 1.0 - state.beta2
        v += a
        np.divide(v, bias2, out=a)
        np.sqrt(a, out=a)
        a += state.eps
        np.divide(m, a, out=b)
        b *= state.lr / bias1
        p -= b
    return params, state


def gradient_check(
    loss_and_grad: Callable[[], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max relative disagreement between reverse-mode and central differences.

    ``loss_and_grad`` must read the live arrays in ``params`` and return the
    scalar loss with its gradients. Each coordinate is perturbed by +-h in
    place; the relative error is |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
    """
    _, grads = loss_and_grad()
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        gflat = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            loss_plus, _ = loss_and_grad()
            flat[k] = orig - h
            loss_minus, _ = loss_and_grad()
            flat[k] = orig
            fd = (loss_plus - loss_minus) / (2.0 * h)
            ad = gflat[k]
            err = abs(ad - fd) / max(1e-8, abs(ad) + abs(fd))
            worst = max(worst, err)
    return worst
