"""Numerical identity checks shared by the CLI selftest and the test suite.

The gradient probes compare reverse-mode gradients against central finite
differences on fixed batches. Central differences are only a valid oracle
where the loss is C^1 on [theta-h, theta+h]; coordinates whose perturbation
flips a ReLU or log-variance clamp state are detected exactly (by comparing
activation masks at both ends) and reported separately instead of polluting
the comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .decomposition import PathKind, build_plan, closed_form_plan_sum
from .errors import ParameterError
from .estimators import (
    MiEstimatorKind,
    _mine_surrogate,
    club_train_loss,
    create_term_estimator,
    infonce_loss,
    infonce_value,
    nwj_loss,
)
from .gaussian import (
    equicorrelated_sigma,
    mc_tc_oracle,
    random_correlation,
    sample,
    solve_rho_for_tc,
    tc_closed_form,
)
from .nn import LOGVAR_MAX, LOGVAR_MIN


@dataclass
class LossProbe:
    """One estimator loss on a fixed batch, instrumented for FD checking.

    ``loss_grad_sig`` returns (loss, grads, activation signature); the
    signature captures every kink state so FD validity is decidable exactly.
    """

    name: str
    params: dict[str, np.ndarray]
    loss_grad_sig: Callable[[], tuple[float, dict[str, np.ndarray], bytes]]


def make_loss_probes(
    rng: np.random.Generator, dim: int = 4, batch: int = 16
) -> list[LossProbe]:
    """The four estimator losses on one fixed dim-4 batch split 2 + 2."""
    model = equicorrelated_sigma(dim, 0.7)
    data = sample(model, batch, rng)
    u, v = data[:, : dim // 2], data[:, dim // 2 :]
    n = batch
    pairs = np.concatenate((np.repeat(u, n, axis=0), np.tile(v, (n, 1))), axis=1)
    probes = []

    def critic_probe(name, loss_fn):
        est = create_term_estimator(MiEstimatorKind[name], u.shape[1], v.shape[1], rng)

        def loss_grad_sig():
            out, cache = est.critic.forward(pairs)
            loss, grad = loss_fn(out.reshape(n, n))
            grads, _ = est.critic.backward(cache, grad.reshape(-1, 1))
            return loss, grads, np.packbits(cache.mask != 0.0).tobytes()

        return est, loss_grad_sig

    mine, mine_lgs = critic_probe("MINE", lambda s: _mine_surrogate(s, 1.3))
    probes.append(LossProbe("MINE", mine.critic.parameters(), mine_lgs))

    nwj, nwj_lgs = critic_probe("NWJ", nwj_loss)
    probes.append(LossProbe("NWJ", nwj.critic.parameters(), nwj_lgs))

    # InfoNCE is invariant to adding any function of u to a row of scores,
    # so some coordinates (the output bias always; w1 entries whose unit has
    # a row-constant ReLU mask) carry exactly-zero gradients
    nce, nce_lgs = critic_probe("INFONCE", infonce_loss)
    probes.append(LossProbe("INFONCE", nce.critic.parameters(), nce_lgs))

    club = create_term_estimator(MiEstimatorKind.CLUB, u.shape[1], v.shape[1], rng)

    def club_lgs():
        loss, grads = club_train_loss(club.head, u, v)
        _, mu_cache = club.head.mu_net.forward(u)
        logvar_raw, lv_cache = club.head.logvar_net.forward(u)
        clamp = (logvar_raw >= LOGVAR_MIN) & (logvar_raw <= LOGVAR_MAX)
        sig = (
            np.packbits(mu_cache.mask != 0.0).tobytes()
            + np.packbits(lv_cache.mask != 0.0).tobytes()
            + np.packbits(clamp).tobytes()
        )
        return loss, grads, sig

    probes.append(LossProbe("CLUB", club.head.parameters(), club_lgs))
    return probes


@dataclass
class GradientReport:
    """FD-vs-reverse-mode comparison for one probe at one parameter point.

    ``worst_checked`` is the spec metric |ad - fd| / max(1e-8, |ad| + |fd|)
    maximized over coordinates where FD is a meaningful oracle: the loss is
    C^1 across [theta-h, theta+h] (no kink crossing) and at least one of
    ad, fd rises above the FD rounding floor ~ eps * |loss| / h. Coordinates
    where both are below that floor have gradients that are zero to FD
    precision (InfoNCE's shift invariances produce such exact zeros);
    ``worst_raw`` keeps the unfiltered metric for reference.
    """

    worst_checked: float
    worst_raw: float
    kink_coords: list[str]
    zero_verified: int
    checked: int


def fd_report(probe: LossProbe, h: float = 1e-5) -> GradientReport:
    eps = float(np.finfo(np.float64).eps)
    _, grads, _ = probe.loss_grad_sig()
    worst_checked = 0.0
    worst_raw = 0.0
    zero_verified = 0
    checked = 0
    kinks: list[str] = []
    for name, arr in probe.params.items():
        flat = arr.reshape(-1)
        gflat = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            loss_plus, _, sig_plus = probe.loss_grad_sig()
            flat[k] = orig - h
            loss_minus, _, sig_minus = probe.loss_grad_sig()
            flat[k] = orig
            fd = (loss_plus - loss_minus) / (2.0 * h)
            ad = gflat[k]
            err = abs(ad - fd) / max(1e-8, abs(ad) + abs(fd))
            worst_raw = max(worst_raw, err)
            if sig_plus != sig_minus:
                kinks.append(f"{probe.name}.{name}[{k}]")
                continue
            noise = 4.0 * eps * max(abs(loss_plus), abs(loss_minus), 1.0) / (2.0 * h)
            if abs(ad) <= noise and abs(fd) <= noise:
                zero_verified += 1
            else:
                checked += 1
                worst_checked = max(worst_checked, err)
    return GradientReport(worst_checked, worst_raw, kinks, zero_verified, checked)


# ------------------------------------------------------------ identity checks

def check_decomposition_identity(trials: int = 100, seed: int = 20240) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 9))
        model = random_correlation(n, rng)
        truth = tc_closed_form(model)
        for kind in PathKind:
            err = abs(closed_form_plan_sum(model, build_plan(n, kind)) - truth)
            worst = max(worst, err)
    return worst < 1e-9, f"max |plan sum - closed form| = {worst:.3e} over {trials} covariances"


def check_target_calibration() -> tuple[bool, str]:
    worst = 0.0
    for target in (2.0, 4.0, 6.0, 8.0, 10.0):
        rho = solve_rho_for_tc(4, target)
        worst = max(worst, abs(tc_closed_form(equicorrelated_sigma(4, rho)) - target))
    return worst < 1e-9, f"max calibration residual = {worst:.3e}"


def check_mc_oracle(num_samples: int = 100_000, seeds: int = 20) -> tuple[bool, str]:
    details = []
    ok = True
    for rho in (0.3, 0.5, 0.826):
        model = equicorrelated_sigma(4, rho)
        truth = tc_closed_form(model)
        hits = sum(
            abs(est - truth) < 3 * se
            for est, se in (
                mc_tc_oracle(model, num_samples, np.random.default_rng(seed))
                for seed in range(seeds)
            )
        )
        ok &= hits >= seeds - 1
        details.append(f"rho={rho}: {hits}/{seeds}")
    return ok, "within 3 SE on " + ", ".join(details)


def check_gradient_integrity(points: int = 10, seed: int = 77) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    kinks = 0
    zeros = 0
    total_coords = 0
    for _ in range(points):
        for probe in make_loss_probes(rng):
            report = fd_report(probe)
            worst = max(worst, report.worst_checked)
            kinks += len(report.kink_coords)
            zeros += report.zero_verified
            total_coords += sum(p.size for p in probe.params.values())
    ok = worst < 1e-4 and kinks <= 0.01 * total_coords
    return ok, (
        f"max FD error {worst:.3e} over {points} points "
        f"({total_coords} coordinates: {zeros} zero to FD precision, "
        f"{kinks} kink crossings excluded)"
    )


def check_infonce_cap(trials: int = 200, seed: int = 5150) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst_margin = -math.inf
    for _ in range(trials):
        n = int(rng.integers(2, 65))
        scores = rng.standard_normal((n, n)) * rng.uniform(0.1, 30)
        worst_margin = max(worst_margin, infonce_value(scores) - math.log(n))
    return worst_margin <= 1e-12, f"max (value - ln N) = {worst_margin:.3e}"
