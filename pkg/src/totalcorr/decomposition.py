"""Tree-like and line-like reduction of total correlation to MI terms.

Total correlation obeys TC(X) = TC(X_A) + TC(X_comp) + I(X_A; X_comp) for any
binary split, so recursive splitting expresses TC(X) as a sum of n-1 mutual
information terms. The tree path halves each group at the floor midpoint; the
line path peels one variable at a time: TC(X) = sum_i I(X_{1:i}; x_{i+1}).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ParameterError, TrainingError
from .estimators import (
    MiEstimatorKind,
    MiTermEstimator,
    create_term_estimator,
    evaluate,
    train_step,
)
from .gaussian import GaussianModel, IndexSet, mi_closed_form
from .nn import DEFAULT_HIDDEN


class PathKind(Enum):
    TREE = "TREE"
    LINE = "LINE"


@dataclass(frozen=True)
class MiTerm:
    """One MI term I(left; right) of a decomposition."""

    left: IndexSet
    right: IndexSet

    def __post_init__(self):
        if len(self.left) == 0 or len(self.right) == 0:
            raise ParameterError("both sides of an MI term must be non-empty")
        if self.left.overlaps(self.right):
            raise ParameterError(
                f"term sides overlap: {self.left.indices} and {self.right.indices}"
            )


@dataclass(frozen=True)
class DecompositionPlan:
    """Ordered MI terms whose sum equals the total correlation of n variables."""

    n: int
    kind: PathKind
    terms: tuple[MiTerm, ...]


def _contiguous(lo: int, hi: int) -> IndexSet:
    return IndexSet(tuple(range(lo, hi + 1)))


def build_plan(n: int, kind: PathKind) -> DecompositionPlan:
    """Emit the n-1 MI terms of the requested calculation path.

    TREE recurses depth-first on [i, j], splitting at m = floor((i+j)/2) and
    emitting (X_{i:m}; X_{m+1:j}) before descending into both halves. LINE
    emits (X_{1:i}; x_{i+1}) for i = 1..n-1. A single variable yields an
    empty plan.
    """
    if n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    terms: list[MiTerm] = []
    if kind is PathKind.TREE:

        def split(i: int, j: int) -> None:
            if j - i <= 0:
                return
            m = (i + j) // 2
            terms.append(MiTerm(_contiguous(i, m), _contiguous(m + 1, j)))
            split(i, m)
            split(m + 1, j)

        split(1, n)
    elif kind is PathKind.LINE:
        for i in range(1, n):
            terms.append(MiTerm(_contiguous(1, i), IndexSet.of(i + 1)))
    else:
        raise ParameterError(f"unknown path kind: {kind!r}")
    return DecompositionPlan(n=n, kind=kind, terms=tuple(terms))


def closed_form_plan_sum(model: GaussianModel, plan: DecompositionPlan) -> float:
    """Sum of exact Gaussian MI over the plan's terms; equals the exact TC."""
    if plan.n != model.dim:
        raise ParameterError(f"plan is for n={plan.n}, model has dim={model.dim}")
    return float(sum(mi_closed_form(model, t.left, t.right) for t in plan.terms))


@dataclass
class TcEstimator:
    """Per-term trainable MI estimators wired to the columns of a sample batch."""

    plan: DecompositionPlan
    kind: MiEstimatorKind
    terms: list[MiTermEstimator]
    left_cols: list[np.ndarray] = field(repr=False, default_factory=list)
    right_cols: list[np.ndarray] = field(repr=False, default_factory=list)
    width: int = 0

    @property
    def n_terms(self) -> int:
        return len(self.terms)


def make_tc_estimator(
    plan: DecompositionPlan,
    kind: MiEstimatorKind,
    seed: int | np.random.SeedSequence,
    dims: list[int] | None = None,
    hidden: int = DEFAULT_HIDDEN,
    lr: float = 1e-4,
) -> TcEstimator:
    """One independent estimator per MI term, initialized from ``seed``.

    ``dims`` gives the width of each variable's block in a batch (all scalar
    by default); term estimators see the concatenation of their blocks.
    """
    dims = [1] * plan.n if dims is None else list(dims)
    if len(dims) != plan.n:
        raise ParameterError(f"dims must have length {plan.n}, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ParameterError("every variable block must have positive width")
    offsets = np.concatenate(([0], np.cumsum(dims)))

    def columns(subset: IndexSet) -> np.ndarray:
        return np.concatenate(
            [np.arange(offsets[p], offsets[p + 1]) for p in subset.positions()]
        )

    rng = np.random.default_rng(seed)
    est = TcEstimator(plan=plan, kind=kind, terms=[], width=int(offsets[-1]))
    for term in plan.terms:
        lcols = columns(term.left)
        rcols = columns(term.right)
        est.terms.append(
            create_term_estimator(kind, len(lcols), len(rcols), rng, hidden, lr)
        )
        est.left_cols.append(lcols)
        est.right_cols.append(rcols)
    return est


def _check_batch(est: TcEstimator, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != est.width:
        raise ParameterError(
            f"batch must be (N, {est.width}), got {batch.shape}"
        )
    return batch


def tc_train_step(est: TcEstimator, batch: np.ndarray) -> tuple[float, np.ndarray]:
    """Train every term once on the batch; returns (sum, per-term values)."""
    batch = _check_batch(est, batch)
    values = np.empty(est.n_terms)
    for k, term_est in enumerate(est.terms):
        u = batch[:, est.left_cols[k]]
        v = batch[:, est.right_cols[k]]
        try:
            values[k] = train_step(term_est, u, v)
        except TrainingError as exc:
            raise TrainingError(str(exc), kind=est.kind.value, term=k) from exc
    return float(np.sum(values)), values


def tc_evaluate(est: TcEstimator, batch: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-term bound values on a batch without updating any parameters."""
    batch = _check_batch(est, batch)
    values = np.array(
        [
            evaluate(term_est, batch[:, est.left_cols[k]], batch[:, est.right_cols[k]])
            for k, term_est in enumerate(est.terms)
        ]
    )
    return float(np.sum(values)), values
