"""The eleven acceptance checks, shared by ``actionnoise verify`` and the test suite.

Each check returns a ``CheckResult`` holding the measured quantity, the
threshold it was held to and the wall time against its budget.
"""
from __future__ import annotations

import math
import os
import time
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List

import numpy as np

from .core import (
    SIGMA_Z, HamiltonianTrajectory, NoiseConfig, TimeGrid, basis_state, propagate,
    pure_state, stochastic_ensemble, trace_distance,
)
from .metrics import (
    adiabatic_mu, average_coherence, generator_distance, quadrature_grid, relative_decoherence,
    uhlmann_fidelity,
)
from .optimizer import HIGHER_MU, LOWER_MU, branch_knob_grid, scan_sp_family, split_branches
from .oscillator import (
    GaussianState, constant_mu_ramp, ermakov_sp, fock_density, fock_moments, fock_trajectory,
    gaussian_fidelity, propagate_moments,
)
from .tls import INITIAL_STATE, TARGET_STATE, arp_protocol, sp_protocol

__all__ = ["CheckResult", "CHECKS", "QUICK", "run_checks"]

DELTA0 = 150.0
FIG3_TF = 3.464 * math.pi / (2 * DELTA0)
ZENO_GAMMA = 8.0  # min gap ~60 rad/s at this t_f, so gamma * gap^2 * t_f ~ 1.05e3


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s / {self.budget:g}s)"


def _workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def check_static_dephasing():
    gamma = 0.01
    h = 0.5 * DELTA0 * SIGMA_Z
    grid = TimeGrid.uniform(0.1, 200)
    plus = pure_state(np.array([1.0, 1.0]) / math.sqrt(2))
    states = propagate(HamiltonianTrajectory.constant(h, 0.1), plus, NoiseConfig(gamma), grid,
                       rtol=1e-10, atol=1e-16)
    got = np.abs(states.matrices[:, 0, 1])
    want = 0.5 * np.exp(-gamma * DELTA0 ** 2 * grid.times)
    err = float(np.max(np.abs(got - want) / want))
    return err <= 1e-6, f"max relative error {err:.2e} (<= 1e-6)"


def check_diagonal_stationarity():
    h = np.diag([0.7, -1.3, 2.1]).astype(complex) * 100
    rho0 = np.diag([0.5, 0.3, 0.2]).astype(complex)
    grid = TimeGrid.uniform(0.1, 50)
    worst = 0.0
    for gamma in (0.0, 0.01, 10.0):
        states = propagate(HamiltonianTrajectory.constant(h, 0.1), rho0, NoiseConfig(gamma), grid)
        worst = max(worst, float(np.max(np.abs(states.matrices - rho0))))
    return worst <= 1e-9, f"max deviation {worst:.2e} (<= 1e-9)"


def _arp_fidelity(t_f, n_steps=400):
    proto = arp_protocol(DELTA0, t_f)
    final = propagate(proto.trajectory(), INITIAL_STATE, NoiseConfig(0.0),
                      TimeGrid.uniform(t_f, n_steps), rtol=1e-10, atol=1e-12).final
    return uhlmann_fidelity(final, TARGET_STATE)


def check_arp_first_peak():
    offsets = np.linspace(-0.1, 0.1, 21)
    fids = np.array([_arp_fidelity(FIG3_TF * (1 + d)) for d in offsets])
    centre = fids[10]
    is_max = bool(np.all(fids <= centre))
    ok = centre >= 0.9999 and is_max
    return ok, f"F(t_peak) = {centre:.8f} (>= 0.9999), local max over +-10%: {is_max}"


def check_mu_anchors():
    worst_arp = 0.0
    for t_f in (0.01, 0.0363, 0.1):
        traj = arp_protocol(DELTA0, t_f).trajectory()
        want = math.pi / (2 * DELTA0 * t_f)
        got = np.array([adiabatic_mu(traj, t) for t in np.linspace(0, t_f, 41)])
        worst_arp = max(worst_arp, float(np.max(np.abs(got / want - 1))))
    proto = constant_mu_ramp(2.5e6, 2.5e3, 1e-3)
    mu = proto.mu(np.linspace(0, proto.t_f, 1001))
    want = abs(proto.omega_f - proto.omega0) / (proto.omega0 * proto.omega_f * proto.t_f)
    worst_ho = float(np.max(np.abs(mu / want - 1)))
    ok = worst_arp <= 1e-10 and worst_ho <= 1e-10
    return ok, f"ARP rel. error {worst_arp:.1e}, ramp rel. spread {worst_ho:.1e} (<= 1e-10)"


def check_unraveling(n_trajectories=10_000):
    t_f, gamma = 0.05, 0.01
    proto = arp_protocol(DELTA0, t_f)
    traj = proto.trajectory()
    grid = TimeGrid.uniform(t_f, 2000)
    exact = propagate(traj, INITIAL_STATE, NoiseConfig(gamma), grid).final
    mean = stochastic_ensemble(traj, np.array([1.0, 0.0]), NoiseConfig(gamma), grid,
                               n_trajectories, seed=20240611)
    dist = trace_distance(mean.matrix, exact.matrix)
    return dist <= 0.05, f"trace distance {dist:.4f} with N={n_trajectories} (<= 0.05)"


def check_fock_oracle():
    omega0, omega_f, t_f, gamma = 2.0, 0.5, 3.0, 0.8
    s0 = GaussianState(0.4, -0.3, np.diag([1 / 4, 1.0]))
    grid = TimeGrid.uniform(t_f, 61)
    worst = 0.0
    for proto in (constant_mu_ramp(omega0, omega_f, t_f), ermakov_sp(omega0, omega_f, t_f)):
        moments = propagate_moments(proto, s0, NoiseConfig(gamma), grid).raw
        states = propagate(fock_trajectory(proto, 60), fock_density(s0, 60), NoiseConfig(gamma), grid)
        fock = np.array([fock_moments(r) for r in states])
        rel = np.max(np.abs(fock - moments), axis=0) / np.max(np.abs(moments), axis=0)
        worst = max(worst, float(np.max(rel)))
    return worst <= 1e-6, (f"max relative moment error {worst:.1e} (<= 1e-6), "
                           f"gamma w0^2 t_f = {gamma * omega0 ** 2 * t_f:g}")


def fig1_curves(t_fs, gamma=0.8e-3, omega0=2.5e6, omega_f=2.5e3, n_steps=200):
    target = GaussianState.ground(omega_f)
    start = GaussianState.ground(omega0)
    curves = {}
    for name, make in (("sp", ermakov_sp), ("cmu", constant_mu_ramp)):
        for g in (0.0, gamma):
            vals = []
            for t_f in t_fs:
                s = propagate_moments(make(omega0, omega_f, t_f), start, NoiseConfig(g),
                                      TimeGrid.uniform(t_f, n_steps))
                vals.append(gaussian_fidelity(s.final, target))
            curves[(name, g > 0)] = np.array(vals)
    return curves


def check_fig1_shape():
    t_fs = np.geomspace(1e-3, 1e-1, 9)
    c = fig1_curves(t_fs)
    sp_clean = bool(np.all(c[("sp", False)] >= 1 - 1e-6))
    sp_noisy = c[("sp", True)]
    monotone = bool(np.all(np.diff(sp_noisy) >= 0))
    final = sp_noisy[-1] >= 0.99
    below = all(bool(np.all(c[(n, True)] <= c[(n, False)])) for n in ("sp", "cmu"))
    ok = sp_clean and monotone and final and below
    return ok, (f"noise-free SP >= 1-1e-6: {sp_clean}; noisy SP monotone: {monotone}, "
                f"final {sp_noisy[-1]:.5f} (>= 0.99); noisy <= noise-free: {below}")


def check_fig2b():
    gamma = NoiseConfig(0.01)
    t_fs = np.linspace(0.005, 0.14, 12)
    arp = np.array([generator_distance(arp_protocol(DELTA0, t).trajectory(), gamma,
                                       quadrature_grid(t)) for t in t_fs])
    sp = np.array([generator_distance(sp_protocol(DELTA0, t, 0.0).trajectory(), gamma,
                                      quadrature_grid(t)) for t in t_fs])
    spread = float((arp.max() - arp.min()) / arp.mean())
    decreasing = bool(np.all(np.diff(sp) < 0))
    ok = spread <= 1e-6 and decreasing
    return ok, (f"ARP G_D spread {spread:.1e} (<= 1e-6); SP G_D strictly decreasing: "
                f"{decreasing} ({sp[0]:.1f} -> {sp[-1]:.2f})")


def fig3_curves(gammas, knob=0.0, n_steps=400):
    proto = sp_protocol(DELTA0, FIG3_TF, knob)
    traj = proto.trajectory()
    grid = TimeGrid.uniform(FIG3_TF, n_steps)
    ideal = propagate(traj, INITIAL_STATE, NoiseConfig(0.0), grid)
    c_ideal = average_coherence(ideal, traj, grid)
    fid, c_r = [], []
    for g in gammas:
        noisy = propagate(traj, INITIAL_STATE, NoiseConfig(g), grid)
        fid.append(uhlmann_fidelity(noisy.final, TARGET_STATE))
        c_r.append(relative_decoherence(c_ideal, average_coherence(noisy, traj, grid)))
    return np.array(fid), np.array(c_r)


def check_fig3_transition():
    gammas = np.concatenate([[0.0], np.geomspace(1e-4, 1.0, 17)])
    fid, c_r = fig3_curves(gammas)
    zero = abs(c_r[0]) <= 1e-12
    cr_monotone = bool(np.all(np.diff(c_r) >= -1e-12))
    i = int(np.argmin(fid))
    single = bool(np.all(np.diff(fid[:i + 1]) < 0) and np.all(np.diff(fid[i:]) > 0))
    rise = fid[-1] - fid[i]
    cr_at_min = c_r[i]
    ok = zero and cr_monotone and single and 0 < i < len(fid) - 1 and rise >= 0.1 \
        and abs(cr_at_min - 0.6) <= 0.2
    return ok, (f"C_R(0) = {c_r[0]:.1e}, C_R monotone: {cr_monotone}; single minimum: {single} "
                f"at gamma = {gammas[i]:.3g}; rise {rise:.3f} (>= 0.1); "
                f"C_R at minimum {cr_at_min:.3f} (0.6 +- 0.2)")


def check_fig4_branches():
    t_f, noise = 0.1, NoiseConfig(0.01)
    grid = np.concatenate([branch_knob_grid(DELTA0, t_f, b, 10) for b in (LOWER_MU, HIGHER_MU)])
    rows = scan_sp_family(DELTA0, t_f, noise, grid, workers=_workers())
    branches = split_branches(rows)
    parts, ok = [], len(branches) == 2
    for name in (LOWER_MU, HIGHER_MU):
        rs = branches.get(name, [])
        f = np.array([r.fidelity for r in rs])
        good = len(rs) >= 8 and bool(np.all(np.diff(f) > 0))
        ok = ok and good
        span = f"{f[0]:.4f} -> {f[-1]:.4f}" if len(f) else "empty"
        parts.append(f"{name}: {len(rs)} points, F increasing in M: {good} ({span})")
    return ok, "; ".join(parts)


def check_zeno():
    proto = sp_protocol(DELTA0, FIG3_TF, 0.0)
    t = np.linspace(0, FIG3_TF, 20001)
    min_gap = float(np.min(proto.gap(t)))
    gamma = ZENO_GAMMA
    final = propagate(proto.trajectory(), INITIAL_STATE, NoiseConfig(gamma),
                      TimeGrid.uniform(FIG3_TF, 400)).final
    fid = uhlmann_fidelity(final, TARGET_STATE)
    score = gamma * min_gap ** 2 * FIG3_TF
    return score >= 1e3 and fid >= 0.99, f"min Gamma t_f = {score:.0f} at gamma = {gamma:.2f} s: F = {fid:.5f} (>= 0.99)"


CHECKS: Dict[int, tuple] = {
    1: ("analytic dephasing", check_static_dephasing, 1.0),
    2: ("diagonal stationarity", check_diagonal_stationarity, 1.0),
    3: ("ARP first peak", check_arp_first_peak, 10.0),
    4: ("mu anchors", check_mu_anchors, 60.0),
    5: ("unraveling equivalence", check_unraveling, 300.0),
    6: ("Fock-oracle equivalence", check_fock_oracle, 120.0),
    7: ("oscillator fidelity curves", check_fig1_shape, 120.0),
    8: ("generator distance anchors", check_fig2b, 120.0),
    9: ("noise-assisted transition", check_fig3_transition, 300.0),
    10: ("M-controlled branches", check_fig4_branches, 300.0),
    11: ("Zeno limit", check_zeno, 60.0),
}
QUICK = (1, 2, 3, 4, 8)


def run_one(number: int) -> CheckResult:
    name, fn, budget = CHECKS[number]
    start = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed check, reported not raised
        ok, detail = False, f"error: {type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - start
    within = elapsed <= budget
    if not within:
        detail += f"; over the {budget:g}s budget"
    return CheckResult(number, name, bool(ok) and within, detail, elapsed, budget)


def run_checks(numbers=QUICK, on_result: Callable[[CheckResult], None] = None) -> List[CheckResult]:
    out = []
    for n in numbers:
        res = run_one(n)
        if on_result is not None:
            on_result(res)
        out.append(res)
    return out


def as_report(results: List[CheckResult]) -> dict:
    return {"passed": all(r.passed for r in results), "checks": [asdict(r) for r in results]}
