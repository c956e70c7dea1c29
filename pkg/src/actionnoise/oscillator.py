"""Harmonic trap under action noise, solved through its first and second moments.

With ``H = p^2/2 + w(t)^2 q^2/2`` (m = 1, hbar = 1) the double-commutator
dissipator maps quadratic observables to quadratic observables, so the raw
moments ``<q>, <p>, <q^2>, <p^2>, S = <qp + pq>`` obey a closed linear ODE:

    d<q^2>/dt = S                + 2 g (<p^2> - w^2 <q^2>)
    d<p^2>/dt = -w^2 S           + 2 g w^2 (w^2 <q^2> - <p^2>)
    dS/dt     = 2(<p^2> - w^2 <q^2>) - 4 g w^2 S
    d<q>/dt   = <p>              - g w^2 <q>
    d<p>/dt   = -w^2 <q>         - g w^2 <p>

(``g`` is the noise strength gamma.)  The dissipator terms follow from the
adjoint map ``X -> -g [H, [H, X]]``; the truncated-Fock helpers at the bottom
of this module exist to check them against a direct density-matrix run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TextIO, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .core import DensityOperator, HamiltonianTrajectory, IntegrationError, NoiseConfig, TimeGrid
from .tls import _smoothstep

__all__ = [
    "GaussianState", "FrequencyProtocol", "MomentSeries", "UncertaintyError",
    "constant_mu_ramp", "ermakov_sp", "propagate_moments", "gaussian_fidelity",
    "fock_operators", "fock_density", "fock_moments", "fock_trajectory",
    "write_table", "read_table",
]

UNCERTAINTY_TOL = 1e-10
# integrated moments carry accumulated solver error, so states read back
# from a propagation are held to a looser bound
PROPAGATION_TOL = 1e-9


class UncertaintyError(ValueError):
    """Covariance matrix below the vacuum limit ``det V >= 1/4``."""


def _det_slack(cov, tol=UNCERTAINTY_TOL) -> float:
    # absolute slack for the uncertainty check; the determinant is a
    # difference of products, so its roundoff scales with qq * pp
    return tol * max(1.0, abs(cov[0, 0] * cov[1, 1]))


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Means and central covariance ``[[<q^2>c, <{q,p}>c/2], [., <p^2>c]]``."""

    mean_q: float
    mean_p: float
    cov: np.ndarray
    tol: float = field(default=UNCERTAINTY_TOL, repr=False)

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (2, 2):
            raise ValueError("covariance must be 2x2")
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12 * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean_q", float(self.mean_q))
        object.__setattr__(self, "mean_p", float(self.mean_p))
        if not np.all(np.isfinite(cov)) or cov[0, 0] <= 0 or cov[1, 1] <= 0:
            raise UncertaintyError("covariance must have positive diagonal")
        if self.det < 0.25 - _det_slack(cov, self.tol):
            raise UncertaintyError(f"det(cov) = {self.det!r} violates det >= 1/4")

    @classmethod
    def ground(cls, omega: float, mean_q: float = 0.0, mean_p: float = 0.0) -> "GaussianState":
        return cls(mean_q, mean_p, np.diag([1 / (2 * omega), omega / 2]))

    @classmethod
    def from_raw(cls, q, p, qq, pp, s, tol: float = UNCERTAINTY_TOL) -> "GaussianState":
        """Build from raw moments ``<q>, <p>, <q^2>, <p^2>, <qp+pq>``."""
        cq = qq - q * q
        cp = pp - p * p
        cqp = s / 2 - q * p
        return cls(q, p, np.array([[cq, cqp], [cqp, cp]]), tol)

    @property
    def det(self) -> float:
        return float(self.cov[0, 0] * self.cov[1, 1] - self.cov[0, 1] ** 2)

    @property
    def purity(self) -> float:
        return 1.0 / (2.0 * math.sqrt(self.det))

    def raw(self) -> np.ndarray:
        """Raw moments ``(<q>, <p>, <q^2>, <p^2>, <qp+pq>)``."""
        q, p, c = self.mean_q, self.mean_p, self.cov
        return np.array([q, p, c[0, 0] + q * q, c[1, 1] + p * p, 2 * (c[0, 1] + q * p)])


@dataclass(frozen=True)
class FrequencyProtocol:
    """Trap-frequency schedule ``w^2(t)`` between two positive endpoint frequencies.

    ``kind`` is ``"ConstantMu"`` (constant adiabatic parameter) or
    ``"ErmakovSP"`` (scaling-factor shortcut with a quintic ``b(t)``).
    """

    kind: str
    omega0: float
    omega_f: float
    t_f: float

    def __post_init__(self):
        if self.kind not in ("ConstantMu", "ErmakovSP"):
            raise ValueError(f"unknown frequency protocol {self.kind!r}")
        if not (self.omega0 > 0 and self.omega_f > 0 and self.t_f > 0):
            raise ValueError("endpoint frequencies and t_f must be positive")

    @property
    def endpoints(self):
        return self.omega0, self.omega_f

    def _scaling(self, t):
        """``b`` and its first three time derivatives."""
        tf = self.t_f
        s = np.asarray(t, dtype=float) / tf
        amp = math.sqrt(self.omega0 / self.omega_f) - 1.0
        b = 1.0 + amp * _smoothstep(s)
        b1 = amp * 30 * s ** 2 * (1 - s) ** 2 / tf
        b2 = amp * 60 * s * (1 - s) * (1 - 2 * s) / tf ** 2
        b3 = amp * 60 * (1 - 6 * s + 6 * s ** 2) / tf ** 3
        return b, b1, b2, b3

    def omega_sq(self, t):
        if self.kind == "ConstantMu":
            w0, wf, tf = self.omega0, self.omega_f, self.t_f
            w = w0 * wf * tf / (wf * tf - (wf - w0) * np.asarray(t, dtype=float))
            return w * w
        b, _, b2, _ = self._scaling(t)
        return self.omega0 ** 2 / b ** 4 - b2 / b

    def omega_sq_rate(self, t):
        """``d(w^2)/dt``."""
        if self.kind == "ConstantMu":
            w0, wf, tf = self.omega0, self.omega_f, self.t_f
            w = w0 * wf * tf / (wf * tf - (wf - w0) * np.asarray(t, dtype=float))
            return 2 * w ** 3 * (wf - w0) / (w0 * wf * tf)
        b, b1, b2, b3 = self._scaling(t)
        return -4 * self.omega0 ** 2 * b1 / b ** 5 - b3 / b + b2 * b1 / b ** 2

    def reference_frequency(self, t):
        """Smooth positive frequency ``W(t)`` and ``dW/dt / W`` used to scale
        the moments: the trap frequency itself for the constant-mu ramp, and
        ``omega0 / b^2`` for the shortcut (which equals the trap frequency
        wherever ``b`` is slow, and stays positive if the trap inverts)."""
        if self.kind == "ConstantMu":
            w = np.sqrt(self.omega_sq(t))
            return w, w * (self.omega_f - self.omega0) / (self.omega0 * self.omega_f * self.t_f)
        b, b1, _, _ = self._scaling(t)
        return self.omega0 / b ** 2, -2 * b1 / b

    def mu(self, t):
        """Adiabatic parameter ``|dw/dt| / w^2``, written via ``w^2`` so it
        stays defined (if large) when the trap is momentarily inverted."""
        w2 = np.asarray(self.omega_sq(t))
        return np.abs(self.omega_sq_rate(t)) / (2 * np.abs(w2) ** 1.5)

    def mu_max(self, n: int = 2001) -> float:
        return float(np.max(self.mu(np.linspace(0, self.t_f, n))))

    @property
    def metadata(self) -> dict:
        w2 = self.omega_sq(np.linspace(0, self.t_f, 2001))
        return {"kind": self.kind, "inverted_trap": bool(np.min(w2) < 0),
                "min_omega_sq": float(np.min(w2))}


def constant_mu_ramp(omega0: float, omega_f: float, t_f: float) -> FrequencyProtocol:
    return FrequencyProtocol("ConstantMu", omega0, omega_f, t_f)


def ermakov_sp(omega0: float, omega_f: float, t_f: float) -> FrequencyProtocol:
    return FrequencyProtocol("ErmakovSP", omega0, omega_f, t_f)


_COLUMNS = ("q", "p", "qq", "pp", "qp_sym")


@dataclass(frozen=True, eq=False)
class MomentSeries:
    """Raw moments ``(<q>, <p>, <q^2>, <p^2>, <qp+pq>)`` on a time grid."""

    times: np.ndarray
    raw: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i) -> GaussianState:
        return GaussianState.from_raw(*self.raw[i], tol=PROPAGATION_TOL)

    @property
    def final(self) -> GaussianState:
        return self[-1]

    def determinants(self) -> np.ndarray:
        q, p, qq, pp, s = self.raw.T
        return (qq - q * q) * (pp - p * p) - (s / 2 - q * p) ** 2

    def to_csv(self, dest: Union[str, TextIO]) -> None:
        """Columns ``t, q, p, qq, pp, qp_sym``; second moments are central and
        ``qp_sym = <{q,p}>c / 2``."""
        q, p, qq, pp, s = self.raw.T
        table = np.column_stack([self.times, q, p, qq - q * q, pp - p * p, s / 2 - q * p])
        lines = [f"# {k}: {v}" for k, v in self.metadata.items()]
        lines.append(",".join(("t",) + _COLUMNS))
        lines += [",".join(repr(float(x)) for x in row) for row in table]
        text = "\n".join(lines) + "\n"
        if isinstance(dest, str):
            with open(dest, "w") as fh:
                fh.write(text)
        else:
            dest.write(text)


def _frame_matrix(w2: float, ref: float, rate: float, gamma: float) -> np.ndarray:
    """Generator in the reference-frame variables ``(a, c, e, u, S)``.

    With a positive reference frequency ``W`` (rate ``r = dW/dt / W``):
    ``a = <q> sqrt(W)``, ``c = <p> / sqrt(W)``, ``e = <q^2> W + <p^2> / W``,
    ``u = <q^2> W - <p^2> / W`` and ``S = <qp + pq>``. When ``W^2 = w^2`` the
    noise acts only on ``u`` and ``S`` (energy is conserved by dephasing), so
    the huge stiff rates never multiply the O(1) energy variable and their
    roundoff cannot leak into it.
    """
    g, W, r = gamma, ref, rate
    k = w2 / (W * W)
    lo, hi = 1.0 - k, 1.0 + k
    gw2 = g * W * W
    a = np.zeros((5, 5))
    a[0, 0] = r / 2 - g * w2
    a[0, 1] = W
    a[1, 0] = -W * k
    a[1, 1] = -r / 2 - g * w2
    # rows e, u, S
    a[2, 2:] = [gw2 * lo * lo, r - gw2 * lo * hi, W * lo]
    a[3, 2:] = [r + gw2 * hi * lo, -gw2 * hi * hi, W * hi]
    a[4, 2:] = [W * lo, -W * hi, -4 * gw2 * k]
    return a


def _to_frame(raw, ref):
    q, p, qq, pp, s = raw
    rq = math.sqrt(ref)
    return np.array([q * rq, p / rq, qq * ref + pp / ref, qq * ref - pp / ref, s])


def _from_frame(y, ref):
    a, c, e, u, s = y
    rq = np.sqrt(ref)
    return np.array([a / rq, c * rq, (e + u) / (2 * ref), ref * (e - u) / 2, s])


def propagate_moments(proto: FrequencyProtocol, s0: GaussianState, noise: NoiseConfig,
                      grid: TimeGrid, *, rtol: float = 1e-12, atol: float = 1e-14,
                      method: str = "auto") -> MomentSeries:
    """Integrate the closed moment equations.

    The moments are carried in a frame scaled by the protocol's reference
    frequency (see ``FrequencyProtocol.reference_frequency``), where the
    ground state of the trap is ``(e, u, S) = (1, 0, 0)``. The system is very
    stiff for realistic parameters (``gamma * w^2`` can reach 1e9 /s).
    ``method="auto"`` picks BDF with the exact Jacobian when the damping
    outruns the oscillation (``gamma * w > 1``) and LSODA otherwise; LSODA's
    stiffness switching was seen to stall on the strongly damped runs.

    Raises:
        IntegrationError: if the solver fails or the moments overflow,
            carrying the time reached.
    """
    gamma = noise.gamma
    if method == "auto":
        method = "BDF" if gamma * max(proto.omega0, proto.omega_f) > 1 else "LSODA"

    def jac(t, y):
        ref, rate = proto.reference_frequency(t)
        return _frame_matrix(float(proto.omega_sq(t)), ref, rate, gamma)

    def rhs(t, y):
        return jac(t, y) @ y

    times = np.asarray(grid.times, dtype=float)
    ref0, _ = proto.reference_frequency(times[0])
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(rhs, (times[0], times[-1]), _to_frame(s0.raw(), ref0), method=method,
                        jac=jac, t_eval=times, rtol=rtol, atol=atol)
    if not sol.success or not np.all(np.isfinite(sol.y)):
        reached = float(sol.t[-1]) if len(sol.t) else float(times[0])
        raise IntegrationError(f"moment integration failed: {sol.message}", reached)
    ref, _ = proto.reference_frequency(times)
    raw = _from_frame(sol.y, ref).T
    meta = {"protocol": proto.kind, "omega0": proto.omega0, "omega_f": proto.omega_f,
            "t_f": proto.t_f, "gamma": gamma, "rtol": rtol, "atol": atol,
            "method": method, "inverted_trap": proto.metadata["inverted_trap"]}
    return MomentSeries(times, raw, meta)


def gaussian_fidelity(a: GaussianState, b: GaussianState) -> float:
    """Uhlmann fidelity ``tr sqrt(sqrt(rho_a) rho_b sqrt(rho_a))`` of two
    single-mode Gaussian states (vacuum covariance ``I/2``).

    Uses the closed form ``F^2 = exp(-d^T (Va+Vb)^-1 d / 2) / (sqrt(D + d4) - sqrt(d4))``
    with ``D = det(Va + Vb)`` and ``d4 = 4 (det Va - 1/4)(det Vb - 1/4)``.
    """
    for name, s in (("a", a), ("b", b)):
        if s.det < 0.25 - _det_slack(s.cov, s.tol):
            raise UncertaintyError(f"state {name} violates the uncertainty relation")
    vsum = a.cov + b.cov
    d = np.array([a.mean_q - b.mean_q, a.mean_p - b.mean_p])
    big = float(np.linalg.det(vsum))
    small = 4 * max(a.det - 0.25, 0.0) * max(b.det - 0.25, 0.0)
    expo = -0.5 * float(d @ np.linalg.solve(vsum, d))
    f2 = math.exp(expo) / (math.sqrt(big + small) - math.sqrt(small))
    return float(min(1.0, math.sqrt(f2)))


# -- truncated Fock-basis oracle ---------------------------------------------

def fock_operators(n_levels: int, omega_ref: float = 1.0):
    """Truncated ``(a, q, p)`` with ``a = sqrt(w/2) (q + i p / w)``."""
    a = np.diag(np.sqrt(np.arange(1, n_levels)), 1).astype(complex)
    ad = a.conj().T
    q = (a + ad) / math.sqrt(2 * omega_ref)
    p = 1j * math.sqrt(omega_ref / 2) * (ad - a)
    return a, q, p


def fock_density(state: GaussianState, n_levels: int, omega_ref: float = 1.0,
                 pad: int = 60) -> DensityOperator:
    """Density matrix of a Gaussian state in a truncated Fock basis.

    The state is built in a larger basis as the Gibbs state of
    ``x^T V^-1 x`` at the temperature fixed by ``sqrt(det V)`` (its ground
    state when pure), displaced, then truncated and renormalized.
    """
    n_big = n_levels + pad
    _, q, p = fock_operators(n_big, omega_ref)
    cov = np.asarray(state.cov)
    inv = np.linalg.inv(cov)
    k = 0.5 * (inv[0, 0] * q @ q + inv[1, 1] * p @ p + inv[0, 1] * (q @ p + p @ q))
    k = 0.5 * (k + k.conj().T)
    e, v = np.linalg.eigh(k)
    nu = math.sqrt(state.det)
    if nu - 0.5 < 1e-12:
        weights = np.zeros_like(e)
        weights[0] = 1.0
    else:
        beta = 2 * math.atanh(1 / (2 * nu))
        weights = np.exp(-beta * nu * (e - e[0]))
    rho = (v * weights) @ v.conj().T
    disp = expm(1j * (state.mean_p * q - state.mean_q * p))
    rho = disp @ rho @ disp.conj().T
    rho = rho[:n_levels, :n_levels]
    rho = 0.5 * (rho + rho.conj().T)
    return DensityOperator.trusted(rho / np.trace(rho).real)


def fock_moments(rho, omega_ref: float = 1.0) -> np.ndarray:
    """Raw moments ``(<q>, <p>, <q^2>, <p^2>, <qp+pq>)`` of a truncated-Fock state."""
    m = np.asarray(rho.matrix if isinstance(rho, DensityOperator) else rho)
    _, q, p = fock_operators(m.shape[0], omega_ref)
    ops = (q, p, q @ q, p @ p, q @ p + p @ q)
    return np.array([np.trace(m @ o).real for o in ops])


def fock_trajectory(proto: FrequencyProtocol, n_levels: int,
                    omega_ref: float = 1.0) -> HamiltonianTrajectory:
    _, q, p = fock_operators(n_levels, omega_ref)
    q2 = q @ q
    p2 = 0.5 * (p @ p)
    return HamiltonianTrajectory(
        n_levels,
        lambda t: p2 + 0.5 * float(proto.omega_sq(t)) * q2,
        proto.t_f,
        dh_dt=lambda t: 0.5 * float(proto.omega_sq_rate(t)) * q2,
        metadata={"protocol": proto.kind, "basis_omega": omega_ref},
    )


# -- tabulated form ---------------------------------------------------------------

def write_table(proto: FrequencyProtocol, dest: Union[str, TextIO], n_points: int = 1001) -> None:
    """Header lines ``# key: value`` then rows ``t omega_sq``."""
    t = np.linspace(0, proto.t_f, n_points)
    lines = [f"# kind: {proto.kind}", f"# omega0: {proto.omega0!r}",
             f"# omega_f: {proto.omega_f!r}", f"# t_f: {proto.t_f!r}", "# t omega_sq"]
    lines += [f"{ti!r} {wi!r}" for ti, wi in zip(t.tolist(), proto.omega_sq(t).tolist())]
    text = "\n".join(lines) + "\n"
    if isinstance(dest, str):
        with open(dest, "w") as fh:
            fh.write(text)
    else:
        dest.write(text)


def read_table(src: Union[str, TextIO]):
    """Returns ``(header dict, array of shape (n, 2))``."""
    text = open(src).read() if isinstance(src, str) else src.read()
    header, rows = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, val = line[1:].partition(":")
            if sep:
                header[key.strip()] = val.strip()
        elif line.strip():
            rows.append([float(x) for x in line.split()])
    return header, np.array(rows)
