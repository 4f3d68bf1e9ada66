"""Chebyshev semi-iteration for symmetric positive definite systems.

Solves K x = b using only applications of K, given an interval
[lam_min, lam_max] enclosing K's spectrum.  Each update step performs exactly
one operator application, which in the decentralized setting is one
message-exchange round, so `order` fixes the communication cost exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ChebyshevResult:
    x: np.ndarray
    residual: np.ndarray          # b - K x, maintained by recurrence
    k_dx: np.ndarray              # K @ (x - x0), accumulated from applications
    residual_norms: list[float]   # ||r|| before and after each step

    @property
    def contracted(self) -> bool:
        return self.residual_norms[-1] <= self.residual_norms[0]


def chebyshev_solve(apply_op, b, x0, order: int, lam_min: float,
                    lam_max: float, r0=None) -> ChebyshevResult:
    """Run `order` Chebyshev steps from x0.

    `r0` may supply the initial residual b - K x0 when it is already known
    (e.g. cached from the previous outer iteration); otherwise one extra
    operator application computes it.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if lam_min <= 0 or lam_max < lam_min:
        raise ValueError(f"need 0 < lam_min <= lam_max, got [{lam_min}, {lam_max}]")
    x = np.array(x0, dtype=float, copy=True)
    r = np.array(b, dtype=float) - apply_op(x) if r0 is None else np.array(r0, copy=True)
    k_dx = np.zeros_like(x)
    mid = (lam_max + lam_min) / 2.0
    half = (lam_max - lam_min) / 2.0
    norms = [float(np.linalg.norm(r))]
    p = alpha = None
    for k in range(1, order + 1):
        if k == 1:
            p = r.copy()
            alpha = 1.0 / mid
        else:
            beta = 0.5 * (half * alpha) ** 2 if k == 2 else (half * alpha / 2.0) ** 2
            alpha = 1.0 / (mid - beta / alpha)
            p = r + beta * p
        kp = apply_op(p)
        x += alpha * p
        r -= alpha * kp
        k_dx += alpha * kp
        norms.append(float(np.linalg.norm(r)))
    return ChebyshevResult(x=x, residual=r, k_dx=k_dx, residual_norms=norms)
