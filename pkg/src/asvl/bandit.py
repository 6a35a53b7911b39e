"""Tsallis-INF bandit policy with importance-weighted loss estimates.

The policy puts weight 4 / (eta * (qhat(a) - x))^2 on arm ``a``, where the
normalizer x < min(qhat) makes the weights sum to one.  x is found by a
warm-started Newton iteration with a bisection fallback; both routes are
exposed so they can be cross-checked.
"""

from __future__ import annotations

import math
from typing import Sequence

NORMALIZER_TOL = 1e-10
_NEWTON_FINE_TOL = 1e-14
_NEWTON_MAX_ITERS = 100
_BISECT_MAX_ITERS = 500
_MIN_POLICY_MASS = 1e-12
_CLAMP_SLACK = 1e-9


class DegeneratePolicyError(RuntimeError):
    pass


def _weight_sum(shifted: Sequence[float], eta: float, y: float):
    """Sum of weights and of weights^{3/2} at normalizer y (shifted scale, y < 0)."""
    wsum = 0.0
    w32 = 0.0
    for q in shifted:
        w = 4.0 / (eta * (q - y)) ** 2
        wsum += w
        w32 += w * math.sqrt(w)
    return wsum, w32


def solve_normalizer(qhat: Sequence[float], eta: float, warm_start: float | None = None) -> float:
    """Normalizer x with sum_a 4/(eta*(qhat(a)-x))^2 = 1 and x < min(qhat).

    Newton steps from the warm start; falls back to bisection if the iterate
    leaves the feasible region or fails to converge.  The residual of the
    returned solution is below NORMALIZER_TOL.
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    n = len(qhat)
    if n == 0:
        raise ValueError("no arms")
    m = min(qhat)
    shifted = [q - m for q in qhat]
    if n == 1:
        return m - 2.0 / eta
    # In shifted coordinates the root y* lies in [-2*sqrt(n)/eta, -2/eta].
    y = warm_start - m if warm_start is not None else -2.0 * math.sqrt(n) / eta
    if y >= 0.0:
        y = -2.0 * math.sqrt(n) / eta
    best_y = y
    best_resid = math.inf
    for _ in range(_NEWTON_MAX_ITERS):
        wsum, w32 = _weight_sum(shifted, eta, y)
        resid = wsum - 1.0
        if abs(resid) < best_resid:
            best_resid = abs(resid)
            best_y = y
        if abs(resid) <= _NEWTON_FINE_TOL:
            break
        y_next = y - resid / (eta * w32)
        if y_next >= 0.0 or y_next == y:
            break  # infeasible or stalled at float resolution
        y = y_next
    if best_resid <= NORMALIZER_TOL:
        return best_y + m
    return _bisect_shifted(shifted, eta) + m


def normalizer_by_bisection(qhat: Sequence[float], eta: float) -> float:
    """Pure-bisection reference solution for the normalizer."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if len(qhat) == 0:
        raise ValueError("no arms")
    m = min(qhat)
    if len(qhat) == 1:
        return m - 2.0 / eta
    return _bisect_shifted([q - m for q in qhat], eta) + m


def _bisect_shifted(shifted: Sequence[float], eta: float) -> float:
    # The weight sum is strictly decreasing in u = -y on [2/eta, 2*sqrt(n)/eta]
    # and crosses 1 inside that bracket.
    lo = 2.0 / eta
    hi = 2.0 * math.sqrt(len(shifted)) / eta
    best = hi
    best_resid = math.inf
    for _ in range(_BISECT_MAX_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # bracket exhausted at float resolution
        wsum, _ = _weight_sum(shifted, eta, -mid)
        resid = wsum - 1.0
        if abs(resid) < best_resid:
            best_resid = abs(resid)
            best = mid
        if resid == 0.0:
            break
        if resid > 0.0:
            lo = mid  # too much mass: push u up
        else:
            hi = mid
    return -best


class TsallisBandit:
    """Adversarial bandit over a fixed arm list.

    ``loss_update`` adds an importance-weighted loss estimate for the played
    arm; ``recompute_policy`` re-solves the normalizer for the supplied
    learning rate.  Losses are expected in [0, loss_cap]; values outside by
    more than float slack are clamped and counted, never silently dropped.
    """

    def __init__(self, arms: Sequence, loss_cap: float = 1.0):
        arms = tuple(arms)
        if len(arms) == 0:
            raise ValueError("no arms")
        if loss_cap <= 0.0:
            raise ValueError("loss_cap must be positive")
        self.arms = arms
        self._index = {a: i for i, a in enumerate(arms)}
        self.loss_cap = loss_cap
        self.qhat = [0.0] * len(arms)
        self.policy = [1.0 / len(arms)] * len(arms)
        self.normalizer: float | None = None
        self.eta: float | None = None
        self.clamp_count = 0

    def __len__(self) -> int:
        return len(self.arms)

    def reset(self) -> None:
        """Back to the uniform policy with zero loss estimates."""
        n = len(self.arms)
        self.qhat = [0.0] * n
        self.policy = [1.0 / n] * n
        self.normalizer = None
        self.eta = None

    def prob(self, arm) -> float:
        return self.policy[self._index[arm]]

    def policy_snapshot(self) -> tuple:
        return tuple(self.policy)

    def sample(self, rng):
        """Draw an arm id; rng is a numpy Generator."""
        u = rng.random()
        acc = 0.0
        for a, p in zip(self.arms, self.policy):
            acc += p
            if u < acc:
                return a
        return self.arms[-1]

    def loss_update(self, arm, loss: float) -> None:
        idx = self._index[arm]
        p = self.policy[idx]
        if p < _MIN_POLICY_MASS:
            raise DegeneratePolicyError(f"degenerate policy mass {p} on arm {arm!r}")
        if loss < 0.0 or loss > self.loss_cap + _CLAMP_SLACK:
            self.clamp_count += 1
        loss = min(max(loss, 0.0), self.loss_cap)
        self.qhat[idx] += loss / p

    def recompute_policy(self, eta: float) -> None:
        x = solve_normalizer(self.qhat, eta, warm_start=self.normalizer)
        self.normalizer = x
        self.eta = eta
        self.policy = [4.0 / (eta * (q - x)) ** 2 for q in self.qhat]
