"""Gradient-ascent update rules."""

import numpy as np

MODES = ("CONSTANT", "ADAM")


class Optimizer:
    """Constant-step ascent or Adam (ascent sign).

    Adam uses beta1 = 0.9, beta2 = 0.999, eps = 1e-8 with bias correction.
    """

    def __init__(self, mode="ADAM", step=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if not step > 0:
            raise ValueError("step size must be positive")
        self.mode = mode
        self.step = float(step)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def ascend(self, theta, grad):
        theta = np.asarray(theta, dtype=float)
        grad = np.asarray(grad, dtype=float)
        if theta.shape != grad.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match {theta.shape}")
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient")
        if self.mode == "CONSTANT":
            return theta + self.step * grad

        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta + self.step * m_hat / (np.sqrt(v_hat) + self.eps)
