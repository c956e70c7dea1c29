"""Density-operator propagation under the action-noise master equation.

    d rho/dt = -i [H(t), rho] - gamma [H(t), [H(t), rho]]        (hbar = 1)

Frequencies are angular (rad/s) and ``gamma`` carries seconds.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from .integrate import IntegrationError, dopri5, rk4

__all__ = [
    "SIGMA_X", "SIGMA_Y", "SIGMA_Z",
    "DensityOperator", "HamiltonianTrajectory", "NoiseConfig", "TimeGrid",
    "StateSeries", "Eigensystem", "IntegrationError", "DegenerateSpectrumWarning",
    "dissipator", "master_rhs", "propagate", "stochastic_trajectory",
    "stochastic_ensemble", "instantaneous_eigensystem", "eigensystem_series",
    "eigenbasis_populations_coherences", "nonadiabatic_coupling",
    "eigenbasis_equations_of_motion", "basis_state", "pure_state",
    "trace_distance",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10


class DegenerateSpectrumWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, unit-trace, positive semidefinite matrix.

    Construction validates the invariants; ``DensityOperator.trusted``
    skips the checks for states produced by the propagators, whose
    PSD-ness only holds to integrator accuracy.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {tr}, expected 1")
        if np.linalg.eigvalsh(m).min() < -PSD_TOL:
            raise ValueError("density matrix has negative eigenvalues")

    @classmethod
    def trusted(cls, matrix: np.ndarray) -> "DensityOperator":
        obj = object.__new__(cls)
        m = np.asarray(matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(obj, "matrix", m)
        return obj

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def basis_state(dim: int, k: int) -> DensityOperator:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[k, k] = 1.0
    return DensityOperator(rho)


def pure_state(psi) -> DensityOperator:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return DensityOperator(np.outer(psi, psi.conj()))


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    d = np.asarray(a) - np.asarray(b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh((d + d.conj().T) / 2))))


def _central_difference(h_of_t, t_f, step):
    def dh_dt(t):
        lo, hi = t - step, t + step
        if lo < 0.0:
            # second-order one-sided stencil at the left edge
            return (-3 * h_of_t(t) + 4 * h_of_t(t + step) - h_of_t(t + 2 * step)) / (2 * step)
        if hi > t_f:
            return (3 * h_of_t(t) - 4 * h_of_t(t - step) + h_of_t(t - 2 * step)) / (2 * step)
        return (h_of_t(hi) - h_of_t(lo)) / (2 * step)
    return dh_dt


@dataclass(frozen=True)
class HamiltonianTrajectory:
    """A time-dependent Hamiltonian on ``[0, t_f]``.

    If ``dh_dt`` is omitted a central difference with step ``t_f * 1e-6`` is
    substituted and ``metadata["dh_dt"]`` is set to ``"finite-difference"``.
    """

    dim: int
    h_of_t: Callable[[float], np.ndarray]
    t_f: float
    dh_dt: Optional[Callable[[float], np.ndarray]] = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not self.t_f > 0:
            raise ValueError("t_f must be positive")
        if self.dh_dt is None:
            object.__setattr__(
                self, "dh_dt", _central_difference(self.h_of_t, self.t_f, self.t_f * 1e-6))
            self.metadata["dh_dt"] = "finite-difference"
        else:
            self.metadata.setdefault("dh_dt", "analytic")

    def __call__(self, t: float) -> np.ndarray:
        return self.h_of_t(t)

    @classmethod
    def constant(cls, h, t_f: float) -> "HamiltonianTrajectory":
        h = np.array(h, dtype=complex)
        zero = np.zeros_like(h)
        return cls(h.shape[0], lambda t: h, t_f, lambda t: zero)


@dataclass(frozen=True)
class NoiseConfig:
    gamma: float = 0.0

    def __post_init__(self):
        if not (self.gamma >= 0 and np.isfinite(self.gamma)):
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("time grid needs at least two points")
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, t_f: float, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ValueError("n_steps must be positive")
        t = np.linspace(0.0, t_f, n_steps + 1)
        t[-1] = t_f
        return cls(t)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def t_f(self) -> float:
        return float(self.times[-1])

    def __len__(self):
        return len(self.times)


class StateSeries(Sequence):
    """Propagated states on a time grid; indexing yields DensityOperators."""

    def __init__(self, times: np.ndarray, matrices: np.ndarray):
        self.times = np.asarray(times)
        self.matrices = np.asarray(matrices)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return StateSeries(self.times[i], self.matrices[i])
        return DensityOperator.trusted(self.matrices[i])

    @property
    def final(self) -> DensityOperator:
        return self[-1]


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityOperator):
        return rho.matrix
    return np.asarray(rho, dtype=complex)


def dissipator(h, rho, gamma: float) -> np.ndarray:
    """Action-noise dissipator ``-gamma (H H rho - 2 H rho H + rho H H)``."""
    h = np.asarray(h)
    r = _as_matrix(rho)
    if h.shape != r.shape:
        raise ValueError(f"dimension mismatch: H {h.shape} vs rho {r.shape}")
    c = h @ r - r @ h
    return -gamma * (h @ c - c @ h)


def master_rhs(h, rho, gamma: float) -> np.ndarray:
    c = h @ rho - rho @ h
    if gamma == 0:
        return -1j * c
    return -1j * c - gamma * (h @ c - c @ h)


def _symmetrize(rho):
    return 0.5 * (rho + rho.conj().T)


def propagate(
    traj: HamiltonianTrajectory,
    rho0,
    noise: NoiseConfig,
    grid: TimeGrid,
    *,
    method: str = "dopri5",
    rtol: float = 1e-8,
    atol: float = 1e-10,
    rk4_substeps: int = 10,
) -> StateSeries:
    """Integrate the master equation and return rho(t) on every grid time.

    ``method`` is ``"dopri5"`` (adaptive, default) or ``"rk4"`` (fixed step,
    ``rk4_substeps`` per grid interval). The state is re-symmetrized after
    every accepted step.
    """
    r0 = _as_matrix(rho0)
    if r0.shape != (traj.dim, traj.dim):
        raise ValueError(f"rho0 has shape {r0.shape}, trajectory dim is {traj.dim}")
    if abs(grid.t_f - traj.t_f) > 1e-12 * traj.t_f:
        raise ValueError("time grid does not span [0, t_f] of the trajectory")
    gamma = noise.gamma
    h_of_t = traj.h_of_t

    def f(t, rho):
        return master_rhs(h_of_t(t), rho, gamma)

    if method == "dopri5":
        out = dopri5(f, grid.times, r0, rtol=rtol, atol=atol, post_step=_symmetrize)
    elif method == "rk4":
        out = rk4(f, grid.times, r0, substeps=rk4_substeps, post_step=_symmetrize)
    else:
        raise ValueError(f"unknown method {method!r}")
    return StateSeries(grid.times, out)


# --- stochastic unraveling -------------------------------------------------

def _stochastic_batch(traj, state0, gamma, times, seeds):
    """Evolve one batch of trajectories; rows are independent of batching."""
    n_traj = len(seeds)
    n_steps = len(times) - 1
    dts = np.diff(times)
    # per-trajectory streams: identical draws whatever the batch split
    draws = np.stack([np.random.default_rng(s).standard_normal(n_steps) for s in seeds])
    # variance 2*gamma*dt reproduces -gamma [H,[H,.]] on average
    kicks = dts[None, :] + np.sqrt(2.0 * gamma * dts)[None, :] * draws

    vector = state0.ndim == 1
    if vector:
        psi = np.tile(state0, (n_traj, 1))
    else:
        rho = np.tile(state0, (n_traj, 1, 1))
    for n in range(n_steps):
        energies, v = np.linalg.eigh(traj.h_of_t(0.5 * (times[n] + times[n + 1])))
        s = kicks[:, n]
        if vector:
            c = (psi @ v.conj()) * np.exp(-1j * np.outer(s, energies))
            psi = c @ v.T
        else:
            gap = energies[:, None] - energies[None, :]
            r = v.conj().T @ rho @ v
            r = r * np.exp(-1j * s[:, None, None] * gap[None])
            rho = v @ r @ v.conj().T
    if vector:
        return np.einsum("ni,nj->nij", psi, psi.conj())
    return rho


def _check_increment(traj, gamma, times):
    dt = float(np.max(np.diff(times)))
    worst = 0.0
    for t in np.linspace(0.0, traj.t_f, 33):
        e = np.linalg.eigvalsh(traj.h_of_t(t))
        worst = max(worst, e[-1] - e[0])
    if worst * np.sqrt(gamma * dt) >= 0.1:
        raise ValueError(
            f"grid too coarse for the noise increment: max|dE| sqrt(gamma dt) = "
            f"{worst * np.sqrt(gamma * dt):.3g} >= 0.1")


def _initial_array(state0, dim):
    if isinstance(state0, DensityOperator):
        a = state0.matrix
    else:
        a = np.asarray(state0, dtype=complex)
    if a.ndim == 1:
        if a.shape != (dim,):
            raise ValueError("state vector dimension mismatch")
        return a / np.linalg.norm(a)
    if a.shape != (dim, dim):
        raise ValueError("density matrix dimension mismatch")
    return a


def stochastic_trajectory(traj, state0, noise: NoiseConfig, grid: TimeGrid,
                          seed: int) -> DensityOperator:
    """One realization of the noisy-action map, returned at ``t_f``.

    Each step conjugates the state by ``exp(-i H(t_mid) (dt + sqrt(2 gamma) dxi))``
    with Gaussian ``dxi ~ N(0, dt)``, so every realization stays a valid state.
    """
    a = _initial_array(state0, traj.dim)
    _check_increment(traj, noise.gamma, grid.times)
    out = _stochastic_batch(traj, a, noise.gamma, grid.times, [int(seed)])
    return DensityOperator.trusted(out[0])


def _ensemble_chunk(args):
    traj, a, gamma, times, seeds = args
    return _stochastic_batch(traj, a, gamma, times, seeds).sum(axis=0)


def stochastic_ensemble(traj, state0, noise: NoiseConfig, grid: TimeGrid,
                        n_trajectories: int, seed: int, *, workers: int = 1,
                        chunk: int = 500) -> DensityOperator:
    """Mean of ``n_trajectories`` realizations; trajectory ``i`` uses seed ``seed ^ i``.

    Chunks are summed in index order, so the result does not depend on
    ``workers``. With ``workers > 1`` the trajectory callables must be
    picklable.
    """
    a = _initial_array(state0, traj.dim)
    _check_increment(traj, noise.gamma, grid.times)
    seeds = [int(seed) ^ i for i in range(n_trajectories)]
    tasks = [(traj, a, noise.gamma, grid.times, seeds[i:i + chunk])
             for i in range(0, n_trajectories, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_ensemble_chunk, tasks))
    else:
        parts = [_ensemble_chunk(t) for t in tasks]
    total = np.zeros((traj.dim, traj.dim), dtype=complex)
    for p in parts:
        total += p
    return DensityOperator.trusted(total / n_trajectories)


# --- instantaneous eigenbasis -----------------------------------------------

class Eigensystem(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors
    degenerate: bool = False


def instantaneous_eigensystem(h, previous: Optional[Union[Eigensystem, np.ndarray]] = None
                              ) -> Eigensystem:
    """Ascending eigenpairs of ``h`` with a smooth phase convention.

    With ``previous`` every eigenvector is rotated so its overlap with the
    matching previous vector is real and positive; otherwise its largest
    component is made real and positive.
    """
    h = np.asarray(h)
    values, vectors = np.linalg.eigh(h)
    if previous is not None:
        prev = previous.vectors if isinstance(previous, Eigensystem) else np.asarray(previous)
        overlap = np.sum(prev.conj() * vectors, axis=0)
        phase = np.where(np.abs(overlap) > 0, overlap / np.abs(overlap), 1.0)
    else:
        idx = np.argmax(np.abs(vectors), axis=0)
        lead = vectors[idx, np.arange(vectors.shape[1])]
        phase = lead / np.abs(lead)
    vectors = vectors * phase.conj()[None, :]

    degenerate = False
    if len(values) > 1:
        scale = max(np.linalg.norm(h, 2), np.finfo(float).tiny)
        if np.min(np.diff(values)) < 1e-12 * scale:
            degenerate = True
            warnings.warn("degenerate spectrum: intra-block basis is arbitrary",
                          DegenerateSpectrumWarning, stacklevel=2)
    return Eigensystem(values, vectors, degenerate)


def eigensystem_series(traj: HamiltonianTrajectory, times) -> list:
    """Gauge-smoothed eigensystems along ``times``."""
    out = []
    prev = None
    for t in times:
        prev = instantaneous_eigensystem(traj.h_of_t(float(t)), prev)
        out.append(prev)
    return out


def eigenbasis_populations_coherences(rho, eigensystem: Eigensystem):
    """Split ``rho`` in the given eigenbasis into (populations, coherences).

    The coherence matrix carries the off-diagonal elements and a zero diagonal.
    """
    r = _as_matrix(rho)
    v = eigensystem.vectors
    if v.shape != r.shape:
        raise ValueError("dimension mismatch between state and eigenbasis")
    rt = v.conj().T @ r @ v
    pops = np.real(np.diag(rt)).copy()
    coh = rt - np.diag(np.diag(rt))
    return pops, coh


def nonadiabatic_coupling(eigensystem: Eigensystem, dh: np.ndarray,
                          connection: Optional[np.ndarray] = None) -> np.ndarray:
    """Matrix ``W[k, n] = <k | d_t n>`` from ``<k|dH/dt|n> / (E_n - E_k)``.

    The diagonal (the gauge-dependent connection ``<k|d_t k>``) is taken from
    ``connection`` and defaults to zero, which is exact for a smooth real gauge.
    """
    v, e = eigensystem.vectors, eigensystem.values
    dh_eig = v.conj().T @ dh @ v
    gap = e[None, :] - e[:, None]
    np.fill_diagonal(gap, 1.0)
    w = dh_eig / gap
    np.fill_diagonal(w, 0.0 if connection is None else connection)
    return w


def eigenbasis_equations_of_motion(eigensystem: Eigensystem, dh: np.ndarray,
                                   rho_eig: np.ndarray, gamma: float,
                                   connection: Optional[np.ndarray] = None) -> np.ndarray:
    """Time derivative of rho expressed in the moving eigenbasis.

    Returns ``-i[E, r] - gamma [E, [E, r]] - [W, r]``: off-diagonal entries
    carry the dephasing ``-gamma dE_kl^2`` and the population-difference and
    transfer terms, the diagonal gives ``2 Re(rho_nk <d_t k|n>)`` summed over n.
    """
    e = eigensystem.values
    w = nonadiabatic_coupling(eigensystem, dh, connection)
    gap = e[:, None] - e[None, :]
    return (-1j * gap - gamma * gap ** 2) * rho_eig - (w @ rho_eig - rho_eig @ w)
