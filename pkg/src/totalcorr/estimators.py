"""Four trainable variational mutual-information bounds on paired batches.

MINE, NWJ and InfoNCE are lower bounds scored by a scalar critic f(u, v);
CLUB is an upper bound built on a conditional Gaussian approximation q(v | u).
Product-of-marginals samples are formed from the off-diagonal pairs of the
batch's score matrix (all N(N-1) of them), so no extra shuffling randomness
enters a training step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParameterError, TrainingError
from .nn import (
    AdamState,
    CondGaussianHead,
    DEFAULT_HIDDEN,
    Mlp,
    MlpCache,
    adam_step,
    cond_gaussian_logpdf,
    cond_gaussian_logpdf_backward,
    cond_gaussian_logpdf_matrix,
)

MINE_EMA_DECAY = 0.99
MINE_EMA_FLOOR = 1e-30


class MiEstimatorKind(Enum):
    MINE = "MINE"
    NWJ = "NWJ"
    INFONCE = "INFONCE"
    CLUB = "CLUB"

    @property
    def is_upper_bound(self) -> bool:
        return self is MiEstimatorKind.CLUB

    @property
    def is_lower_bound(self) -> bool:
        return not self.is_upper_bound


@dataclass
class MiTermEstimator:
    """One trainable MI estimator: critic or conditional head plus optimizer."""

    kind: MiEstimatorKind
    u_dim: int
    v_dim: int
    critic: Mlp | None
    head: CondGaussianHead | None
    adam: AdamState
    ema_denominator: float = 1.0
    _pairs_buf: np.ndarray | None = None

    def parameters(self) -> dict[str, np.ndarray]:
        owner = self.head if self.kind is MiEstimatorKind.CLUB else self.critic
        return owner.parameters()


def create_term_estimator(
    kind: MiEstimatorKind,
    u_dim: int,
    v_dim: int,
    rng: np.random.Generator,
    hidden: int = DEFAULT_HIDDEN,
    lr: float = 1e-4,
) -> MiTermEstimator:
    if min(u_dim, v_dim) < 1:
        raise ParameterError("u_dim and v_dim must be positive")
    if kind is MiEstimatorKind.CLUB:
        head = CondGaussianHead.initialize(u_dim, v_dim, hidden, rng)
        critic = None
        params = head.parameters()
    else:
        critic = Mlp.initialize(u_dim + v_dim, hidden, 1, rng)
        head = None
        params = critic.parameters()
    return MiTermEstimator(
        kind=kind,
        u_dim=u_dim,
        v_dim=v_dim,
        critic=critic,
        head=head,
        adam=AdamState.for_params(params, lr=lr),
    )


def _check_pair_batch(u: np.ndarray, v: np.ndarray) -> int:
    if u.ndim != 2 or v.ndim != 2:
        raise ParameterError("u and v must be 2-d batches")
    if u.shape[0] != v.shape[0]:
        raise ParameterError(f"batch sizes disagree: {u.shape[0]} vs {v.shape[0]}")
    if u.shape[0] < 2:
        raise ParameterError("contrastive bounds need a batch of at least 2")
    return u.shape[0]


def _pair_inputs(u: np.ndarray, v: np.ndarray, buf: np.ndarray | None) -> np.ndarray:
    """All N*N rows concat(u_i, v_j), written into a reusable buffer."""
    n = u.shape[0]
    width = u.shape[1] + v.shape[1]
    if buf is None or buf.shape != (n * n, width):
        buf = np.empty((n * n, width))
    grid = buf.reshape(n, n, width)
    grid[:, :, : u.shape[1]] = u[:, None, :]
    grid[:, :, u.shape[1]:] = v[None, :, :]
    return buf


def _score_matrix_cached(
    critic: Mlp, u: np.ndarray, v: np.ndarray, buf: np.ndarray | None = None
) -> tuple[np.ndarray, MlpCache, np.ndarray]:
    n = _check_pair_batch(u, v)
    pairs = _pair_inputs(u, v, buf)
    out, cache = critic.forward(pairs)
    return out.reshape(n, n), cache, pairs


def score_matrix(critic: Mlp, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Pairwise critic scores: entry (i, j) = critic(concat(u_i, v_j)).

    The diagonal holds joint-pair scores; the off-diagonal holds
    product-of-marginals scores.
    """
    scores, _, _ = _score_matrix_cached(
        critic, np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    )
    return scores.copy()


def _as_square(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1] or scores.shape[0] < 2:
        raise ParameterError(f"scores must be square with N >= 2, got {scores.shape}")
    return scores


_offdiag_masks: dict[int, np.ndarray] = {}


def _offdiag(n: int) -> np.ndarray:
    mask = _offdiag_masks.get(n)
    if mask is None:
        mask = ~np.eye(n, dtype=bool)
        mask.setflags(write=False)
        _offdiag_masks[n] = mask
    return mask


def _logmeanexp_offdiag(scores: np.ndarray) -> float:
    vals = scores[_offdiag(scores.shape[0])]
    shift = np.max(vals)
    return float(shift + np.log(np.mean(np.exp(vals - shift))))


def mine_value(scores: np.ndarray) -> float:
    """Donsker-Varadhan form: mean joint score minus log mean marginal e^score."""
    scores = _as_square(scores)
    return float(np.mean(np.diag(scores))) - _logmeanexp_offdiag(scores)


def _mine_surrogate(
    scores: np.ndarray, ema_denominator: float
) -> tuple[float, np.ndarray]:
    """Bias-corrected training objective with the moving average held fixed.

    loss = -mean(diag) + mean_offdiag(e^scores) / ema; its exact gradient
    replaces the log's data-dependent denominator with the moving average.
    """
    n = scores.shape[0]
    log_ema = math.log(ema_denominator)
    scaled = np.exp(scores - log_ema) * _offdiag(n)
    loss = -float(np.mean(np.diag(scores))) + float(np.sum(scaled)) / (n * (n - 1))
    grad = scaled / (n * (n - 1))
    np.fill_diagonal(grad, -1.0 / n)
    return loss, grad


def _mine_update(
    scores: np.ndarray, ema_denominator: float, logmeanexp: float
) -> tuple[float, np.ndarray, float]:
    batch_mean = math.exp(logmeanexp)
    new_ema = MINE_EMA_DECAY * ema_denominator + (1.0 - MINE_EMA_DECAY) * batch_mean
    if new_ema < MINE_EMA_FLOOR:
        raise TrainingError(
            f"MINE moving average underflowed ({new_ema!r} < {MINE_EMA_FLOOR})",
            kind=MiEstimatorKind.MINE.value,
        )
    loss, grad = _mine_surrogate(scores, new_ema)
    return loss, grad, new_ema


def mine_loss(
    scores: np.ndarray, ema_denominator: float
) -> tuple[float, np.ndarray, float]:
    """Corrected MINE loss, its gradient w.r.t. scores, and the updated EMA.

    The moving average of mean_offdiag(e^scores) is updated before use
    (decay 0.99) and is treated as a constant by the gradient.
    """
    scores = _as_square(scores)
    return _mine_update(scores, ema_denominator, _logmeanexp_offdiag(scores))


def nwj_value(scores: np.ndarray) -> float:
    """f-divergence form: mean joint score minus mean marginal e^(score-1)."""
    scores = _as_square(scores)
    return float(np.mean(np.diag(scores))) - float(
        np.mean(np.exp(scores[_offdiag(scores.shape[0])] - 1.0))
    )


def nwj_loss(scores: np.ndarray) -> tuple[float, np.ndarray]:
    scores = _as_square(scores)
    n = scores.shape[0]
    marg = np.exp(scores - 1.0) * _offdiag(n)
    loss = -float(np.mean(np.diag(scores))) + float(np.sum(marg)) / (n * (n - 1))
    grad = marg / (n * (n - 1))
    np.fill_diagonal(grad, -1.0 / n)
    return loss, grad


def infonce_value(scores: np.ndarray) -> float:
    """Contrastive form; bounded above by log N for any score matrix."""
    scores = _as_square(scores)
    n = scores.shape[0]
    shift = scores.max(axis=1, keepdims=True)
    logsumexp = shift[:, 0] + np.log(np.sum(np.exp(scores - shift), axis=1))
    return float(np.mean(np.diag(scores) - logsumexp)) + math.log(n)


def _infonce_train(scores: np.ndarray) -> tuple[float, float, np.ndarray]:
    n = scores.shape[0]
    shift = scores.max(axis=1, keepdims=True)
    expd = np.exp(scores - shift)
    rowsum = expd.sum(axis=1)
    logsumexp = shift[:, 0] + np.log(rowsum)
    value = float(np.mean(np.diag(scores) - logsumexp)) + math.log(n)
    grad = expd / rowsum[:, None]
    grad[np.diag_indices(n)] -= 1.0
    grad /= n
    return value, -value, grad


def infonce_loss(scores: np.ndarray) -> tuple[float, np.ndarray]:
    scores = _as_square(scores)
    _, loss, grad = _infonce_train(scores)
    return loss, grad


def club_value(head: CondGaussianHead, u: np.ndarray, v: np.ndarray) -> float:
    """Contrastive log-ratio upper bound:
    mean_i log q(v_i | u_i) - mean_{i,j} log q(v_j | u_i).
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_pair_batch(u, v)
    logpdf = cond_gaussian_logpdf_matrix(head, u, v)
    return float(np.mean(np.diag(logpdf)) - np.mean(logpdf))


def club_train_loss(
    head: CondGaussianHead, u: np.ndarray, v: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Negative conditional log-likelihood on the joint pairs.

    q is fit by maximum likelihood only; the bound value itself is never
    differentiated.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = _check_pair_batch(u, v)
    logpdf, cache = cond_gaussian_logpdf(head, u, v)
    grads, _, _ = cond_gaussian_logpdf_backward(head, cache, np.full(n, -1.0 / n))
    return -float(np.mean(logpdf)), grads


_VALUE_FNS = {
    MiEstimatorKind.MINE: mine_value,
    MiEstimatorKind.NWJ: nwj_value,
    MiEstimatorKind.INFONCE: infonce_value,
}


def evaluate(est: MiTermEstimator, u: np.ndarray, v: np.ndarray) -> float:
    """Current bound value on a batch, without any parameter update."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if est.kind is MiEstimatorKind.CLUB:
        return club_value(est.head, u, v)
    scores, _, est._pairs_buf = _score_matrix_cached(est.critic, u, v, est._pairs_buf)
    return _VALUE_FNS[est.kind](scores)


def train_step(est: MiTermEstimator, u: np.ndarray, v: np.ndarray) -> float:
    """One optimizer step on a joint batch; returns the step's bound value.

    Lower bounds ascend their own value (MINE through the EMA-corrected
    objective); CLUB descends the conditional NLL while the returned value is
    the upper bound itself.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_pair_batch(u, v)
    if u.shape[1] != est.u_dim or v.shape[1] != est.v_dim:
        raise ParameterError(
            f"expected widths ({est.u_dim}, {est.v_dim}), "
            f"got ({u.shape[1]}, {v.shape[1]})"
        )
    step = est.adam.step_count + 1
    if est.kind is MiEstimatorKind.CLUB:
        value = club_value(est.head, u, v)
        loss, grads = club_train_loss(est.head, u, v)
        if not math.isfinite(loss):
            raise TrainingError("non-finite loss", kind=est.kind.value, step=step)
        adam_step(est.head.parameters(), grads, est.adam)
        return value
    scores, cache, est._pairs_buf = _score_matrix_cached(
        est.critic, u, v, est._pairs_buf
    )
    if est.kind is MiEstimatorKind.MINE:
        logmeanexp = _logmeanexp_offdiag(scores)
        value = float(np.mean(np.diag(scores))) - logmeanexp
        loss, grad_scores, est.ema_denominator = _mine_update(
            scores, est.ema_denominator, logmeanexp
        )
    elif est.kind is MiEstimatorKind.NWJ:
        value = nwj_value(scores)
        loss, grad_scores = nwj_loss(scores)
    else:
        value, loss, grad_scores = _infonce_train(scores)
    if not math.isfinite(loss):
        raise TrainingError("non-finite loss", kind=est.kind.value, step=step)
    n = scores.shape[0]
    grads, _ = est.critic.backward(cache, grad_scores.reshape(n * n, 1))
    try:
        adam_step(est.critic.parameters(), grads, est.adam)
    except TrainingError as exc:
        raise TrainingError(str(exc), kind=est.kind.value, step=step) from exc
    return value
