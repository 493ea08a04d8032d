"""Coefficient schedules (alpha_i, lam_i) for the power-mean estimator.

Arrays are aligned with the window, oldest iterate first. When a formula
gives lam > 1 it is clamped to 1, which turns every weight into exactly
alpha_i; the clamp is flagged on the result and logged.
"""

import logging
from dataclasses import dataclass

import numpy as np

SCHEDULES = ("THM61", "RPGTH", "ADAPTIVE")

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MpmCoefficients:
    alpha: np.ndarray
    lam: np.ndarray
    tag: str
    clamped: bool = False

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        lam = np.asarray(self.lam, dtype=float)
        if alpha.shape != lam.shape or alpha.ndim != 1:
            raise ValueError("alpha and lam must be 1-d arrays of equal length")
        if self.tag not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.tag!r}")
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise ValueError("alpha outside [0, 1]")
        if abs(alpha.sum() - 1.0) > 1e-12:
            raise ValueError(f"alpha sums to {alpha.sum()!r}, not 1")
        # lam may be 0 only where alpha is 0 (a dropped iterate)
        if np.any(lam > 1) or np.any((lam <= 0) & (alpha > 0)):
            raise ValueError("lam outside (0, 1]")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "lam", lam)

    def __len__(self):
        return len(self.alpha)

    def summary(self):
        live = self.alpha > 0
        return float(self.alpha[live].mean()), float(self.lam[live].mean())


def _clamp(lam, tag):
    over = lam > 1.0
    if np.any(over):
        log.warning("%s: lambda %.4g clamped to 1", tag, float(np.max(lam)))
    return np.minimum(lam, 1.0), bool(np.any(over))


def _check_positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def thm61_schedule(d_theta, delta, D, N, omega_k):
    """lam = sqrt(4 (d log 6 + log(1/delta)) / (3 D N omega_k)), alpha = 1/omega_k."""
    _check_positive(d_theta=d_theta, D=D, N=N, omega_k=omega_k)
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if D < 1:
        raise ValueError(f"D must be at least 1, got {D}")
    lam = np.sqrt(4.0 * (d_theta * np.log(6.0) + np.log(1.0 / delta)) / (3.0 * D * N * omega_k))
    lam, clamped = _clamp(np.full(omega_k, lam), "THM61")
    return MpmCoefficients(np.full(omega_k, 1.0 / omega_k), lam, "THM61", clamped)


def rpgth_schedule(D, N, omega_k):
    """lam = sqrt(1 / (D N omega_k)), alpha = 1/omega_k."""
    _check_positive(D=D, N=N, omega_k=omega_k)
    lam, clamped = _clamp(np.full(omega_k, np.sqrt(1.0 / (D * N * omega_k))), "RPGTH")
    return MpmCoefficients(np.full(omega_k, 1.0 / omega_k), lam, "RPGTH", clamped)


def adaptive_schedule(dhat_list, N, omega_k=None):
    """Divergence-driven coefficients from estimated chi-square distances.

    alpha_i is proportional to (D_i + 1)^(-1/2) and
    lam_i = sqrt(1 / ((D_i + 1) N omega_k)). An infinite D_i (an iterate whose
    divergence could not be represented) gets alpha_i = 0.
    """
    d = np.asarray(dhat_list, dtype=float)
    omega_k = len(d) if omega_k is None else omega_k
    _check_positive(N=N, omega_k=omega_k)
    if len(d) != omega_k:
        raise ValueError(f"expected {omega_k} divergences, got {len(d)}")
    if np.any(np.isnan(d)) or np.any(d < 0):
        raise ValueError("divergence estimates must be non-negative")
    inv = 1.0 / np.sqrt(d + 1.0)
    alpha = inv / inv.sum()
    lam, clamped = _clamp(np.sqrt(1.0 / ((d + 1.0) * N * omega_k)), "ADAPTIVE")
    return MpmCoefficients(alpha, lam, "ADAPTIVE", clamped)
