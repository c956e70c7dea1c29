"""Scans of the shortcut family over its gap knob.

For fixed ``(Delta0, t_f)`` the time-averaged squared gap ``M(knob)`` is
U-shaped: it has a single minimum at ``knob_star`` and grows on both sides.
The two sides are the two fidelity branches. On the ``LowerMu`` side
(``knob > knob_star``) raising M lowers the peak adiabatic parameter; on
the ``HigherMu`` side (``knob < knob_star``) raising M raises it too. A
point's branch is read off the sign of ``(dmu/dknob) * (dM/dknob)`` between
neighbouring scan points, which does not depend on the knob's orientation.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .core import NoiseConfig, TimeGrid, propagate
from .metrics import QUADRATURE_STEPS, time_average, uhlmann_fidelity
from .tls import INITIAL_STATE, TARGET_STATE, TlsProtocol, sp_knob_bounds, sp_protocol

__all__ = [
    "ScanResult", "RangeError", "LOWER_MU", "HIGHER_MU", "evaluate_sp", "scan_sp_family",
    "classify_branches", "split_branches", "m_of_knob", "m_minimum", "branch_knob_grid",
    "find_protocol_for_m",
]

LOWER_MU = "LowerMu"
HIGHER_MU = "HigherMu"

DEFAULT_STEPS = 400


class RangeError(ValueError):
    """Target M outside what a branch can reach."""

    def __init__(self, m_target, m_min, m_max):
        super().__init__(f"M = {m_target:.6g} is outside the achievable range "
                         f"[{m_min:.6g}, {m_max:.6g}]")
        self.m_min = m_min
        self.m_max = m_max


@dataclass(frozen=True)
class ScanResult:
    knob: float
    m_param: float
    mu_max: float
    fidelity: float
    branch: str = ""
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def m_of_knob(delta0: float, t_f: float, knob: float, n_steps: int = QUADRATURE_STEPS) -> float:
    """M of the SP with this knob: the TLS has one gap, counted twice."""
    proto = TlsProtocol("SP", delta0, t_f, knob=knob)
    t = np.linspace(0.0, t_f, n_steps + 1)
    return 2.0 * time_average(proto.gap(t) ** 2, t)


def evaluate_sp(delta0: float, t_f: float, gamma: float, knob: float,
                n_steps: int = DEFAULT_STEPS) -> ScanResult:
    """Build one SP, propagate it with noise and collect (M, mu_max, fidelity).

    Construction or integration failures are returned in ``error`` rather
    than raised.
    """
    try:
        proto = sp_protocol(delta0, t_f, knob, n_steps=n_steps)
        grid = TimeGrid.uniform(t_f, n_steps)
        final = propagate(proto.trajectory(), INITIAL_STATE, NoiseConfig(gamma), grid).final
        return ScanResult(
            knob=float(knob),
            m_param=m_of_knob(delta0, t_f, knob),
            mu_max=float(np.max(proto.mu(grid.times))),
            fidelity=uhlmann_fidelity(final, TARGET_STATE),
        )
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        nan = math.nan
        return ScanResult(float(knob), nan, nan, nan, error=f"{type(exc).__name__}: {exc}")


def _evaluate_args(args):
    return evaluate_sp(*args)


def classify_branches(rows: Sequence[ScanResult]) -> list:
    """Label each successful row with its branch; rows must be sorted by knob."""
    good = [r for r in rows if r.ok]
    labels = {}
    if len(good) >= 2:
        k = np.array([r.knob for r in good])
        dm = np.gradient(np.array([r.m_param for r in good]), k)
        dmu = np.gradient(np.array([r.mu_max for r in good]), k)
        for r, a, b in zip(good, dm, dmu):
            labels[id(r)] = LOWER_MU if a * b < 0 else HIGHER_MU
    out = []
    for r in rows:
        branch = labels.get(id(r), "")
        out.append(ScanResult(r.knob, r.m_param, r.mu_max, r.fidelity, branch, r.error))
    return out


def scan_sp_family(delta0: float, t_f: float, noise: NoiseConfig, knob_grid,
                   *, workers: int = 1, n_steps: int = DEFAULT_STEPS) -> list:
    """Evaluate the SP family on ``knob_grid``.

    Points are independent and run on ``workers`` processes; the result is
    sorted by knob and identical for any worker count.
    """
    knobs = sorted(float(k) for k in knob_grid)
    tasks = [(delta0, t_f, noise.gamma, k, n_steps) for k in knobs]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_evaluate_args, tasks))
    else:
        rows = [_evaluate_args(t) for t in tasks]
    return classify_branches(rows)


def split_branches(rows: Sequence[ScanResult]) -> dict:
    """Successful rows grouped by branch, each group sorted by M."""
    out = {}
    for r in rows:
        if r.ok and r.branch:
            out.setdefault(r.branch, []).append(r)
    return {b: sorted(v, key=lambda r: r.m_param) for b, v in out.items()}


def m_minimum(delta0: float, t_f: float, n_steps: int = QUADRATURE_STEPS):
    """``(knob_star, M_min)`` at the bottom of the U-shaped M(knob)."""
    lo, hi = sp_knob_bounds(delta0, t_f)
    width = hi - lo
    res = minimize_scalar(lambda k: m_of_knob(delta0, t_f, k, n_steps), method="bounded",
                          bounds=(lo + 0.02 * width, hi - 0.02 * width),
                          options={"xatol": 1e-10 * max(1.0, width)})
    return float(res.x), float(res.fun)


def branch_knob_grid(delta0: float, t_f: float, branch: str, n_points: int = 10,
                     margin: float = 0.15, reach: float = 0.85,
                     n_steps: int = QUADRATURE_STEPS) -> np.ndarray:
    """Evenly spaced knobs on one side of ``knob_star``.

    The grid starts ``margin`` of the way from ``knob_star`` to the edge of
    the valid range and stops at ``reach`` of the way, keeping clear of both
    the flat bottom of M(knob) and the divergence of Omega.
    """
    star, _ = m_minimum(delta0, t_f, n_steps)
    lo, hi = sp_knob_bounds(delta0, t_f)
    edge = hi if branch == LOWER_MU else lo
    if branch not in (LOWER_MU, HIGHER_MU):
        raise ValueError(f"unknown branch {branch!r}")
    a = star + margin * (edge - star)
    b = star + reach * (edge - star)
    return np.sort(np.linspace(a, b, n_points))


def find_protocol_for_m(delta0: float, t_f: float, m_target: float, tolerance: float,
                        *, branch: str = LOWER_MU, reach: float = 0.98,
                        n_steps: int = QUADRATURE_STEPS, self_test: bool = True) -> TlsProtocol:
    """SP whose M is within ``tolerance`` of ``m_target``, by bisection on one branch.

    Args:
        branch: which side of the M minimum to search.
        reach: fraction of the distance from ``knob_star`` to the edge of the
            valid knob range that is searched.

    Raises:
        RangeError: if ``m_target`` lies outside ``[M_min, M(edge)]``.
    """
    star, m_min = m_minimum(delta0, t_f, n_steps)
    lo, hi = sp_knob_bounds(delta0, t_f)
    edge = star + reach * ((hi if branch == LOWER_MU else lo) - star)
    m_max = m_of_knob(delta0, t_f, edge, n_steps)
    if not m_min - tolerance <= m_target <= m_max + tolerance:
        raise RangeError(m_target, m_min, m_max)

    a, b = star, edge  # M(a) <= target <= M(b)
    knob: Optional[float] = None
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid in (a, b):  # no representable midpoint left
            break
        m_mid = m_of_knob(delta0, t_f, mid, n_steps)
        if abs(m_mid - m_target) <= tolerance:
            knob = mid
            break
        if m_mid < m_target:
            a = mid
        else:
            b = mid
    if knob is None:
        for cand in (a, b):
            if abs(m_of_knob(delta0, t_f, cand, n_steps) - m_target) <= tolerance:
                knob = cand
                break
        else:
            raise RangeError(m_target, m_min, m_max)
    return sp_protocol(delta0, t_f, knob, self_test=self_test)
