"""Explicit Runge-Kutta integrators for matrix-valued ODEs.

Both routines return the solution sampled at the requested output times.
The adaptive Dormand-Prince pair clamps its steps so every output time is
hit exactly, which keeps results independent of any interpolant.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

__all__ = ["IntegrationError", "dopri5", "rk4"]


class IntegrationError(RuntimeError):
    """Raised when the step-size controller cannot meet the tolerance."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t:.17g})")
        self.t = t


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(x) ** 2)))


def _initial_step(f, t0, y0, f0, rtol, atol, span):
    # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
    scale = atol + rtol * np.abs(y0)
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    d2 = _rms((f(t0 + h0, y1) - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def dopri5(
    f: Callable[[float, np.ndarray], np.ndarray],
    t_eval: np.ndarray,
    y0: np.ndarray,
    *,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    post_step: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_rejections: int = 60,
) -> np.ndarray:
    """Adaptive Dormand-Prince 5(4) integration of ``dy/dt = f(t, y)``.

    Args:
        f: right-hand side; receives and returns arrays shaped like ``y0``.
        t_eval: strictly increasing output times; ``t_eval[0]`` is the
            initial time.
        y0: initial value (any shape, real or complex).
        rtol, atol: local error tolerances.
        post_step: optional projection applied to every accepted step.
        max_rejections: consecutive rejections tolerated before giving up.

    Returns:
        Array of shape ``(len(t_eval),) + y0.shape``.

    Raises:
        IntegrationError: if the controller shrinks the step to roundoff
            level or rejects ``max_rejections`` steps in a row.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    y = np.array(y0, dtype=np.result_type(y0, float), copy=True)
    out = np.empty((len(t_eval),) + y.shape, dtype=y.dtype)
    out[0] = y
    if len(t_eval) == 1:
        return out

    t = float(t_eval[0])
    span = float(t_eval[-1] - t_eval[0])
    k = [None] * 7
    k[0] = f(t, y)
    h = _initial_step(f, t, y, k[0], rtol, atol, span)
    rejections = 0

    for i in range(1, len(t_eval)):
        t_next = float(t_eval[i])
        while t < t_next:
            last = t + h >= t_next - 1e-13 * max(abs(t_next), span)
            step = t_next - t if last else h
            if step <= 1e-14 * max(abs(t), span):
                raise IntegrationError("step size underflow", t)

            for s in range(1, 7):
                dy = sum(a * k[j] for j, a in enumerate(_A[s]) if a != 0.0)
                k[s] = f(t + _C[s] * step, y + step * dy)
            y_new = y + step * sum(b * k[j] for j, b in enumerate(_B[:6]) if b != 0.0)
            err = step * sum(e * k[j] for j, e in enumerate(_E) if e != 0.0)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = _rms(err / scale)
            if not np.isfinite(err_norm):
                err_norm = np.inf

            if err_norm <= 1.0:
                t = t_next if last else t + step
                y = post_step(y_new) if post_step is not None else y_new
                k[0] = k[6]
                factor = _MAX_FACTOR if err_norm == 0 else min(
                    _MAX_FACTOR, _SAFETY * err_norm ** -0.2)
                if rejections:
                    factor = min(factor, 1.0)
                # a clamped final step says nothing about the natural step size
                if not last or step >= h:
                    h = step * max(factor, _MIN_FACTOR)
                rejections = 0
            else:
                rejections += 1
                if rejections > max_rejections:
                    raise IntegrationError("step rejection cascade", t)
                factor = _MIN_FACTOR if not np.isfinite(err_norm) else max(
                    _MIN_FACTOR, _SAFETY * err_norm ** -0.2)
                h = step * factor
        out[i] = y
    return out


def rk4(
    f: Callable[[float, np.ndarray], np.ndarray],
    t_eval: np.ndarray,
    y0: np.ndarray,
    *,
    substeps: int = 10,
    post_step: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> np.ndarray:
    """Classical fixed-step RK4 with ``substeps`` steps per output interval."""
    t_eval = np.asarray(t_eval, dtype=float)
    y = np.array(y0, dtype=np.result_type(y0, float), copy=True)
    out = np.empty((len(t_eval),) + y.shape, dtype=y.dtype)
    out[0] = y
    for i in range(1, len(t_eval)):
        t0, t1 = t_eval[i - 1], t_eval[i]
        h = (t1 - t0) / substeps
        for n in range(substeps):
            t = t0 + n * h
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if post_step is not None:
                y = post_step(y)
        out[i] = y
    return out
