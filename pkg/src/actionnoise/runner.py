"""Execute sweep plans: one diagnostics CSV per protocol plus a run manifest."""
from __future__ import annotations

import itertools
import json
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy

from . import __version__
from .config import SweepPlan
from .core import NoiseConfig, TimeGrid, propagate
from .metrics import (
    DiagnosticsReport, average_coherence, generator_distance, m_parameter,
    quadrature_grid, relative_decoherence, uhlmann_fidelity,
)
from .optimizer import ScanResult, branch_knob_grid, classify_branches
from .oscillator import FrequencyProtocol, GaussianState, gaussian_fidelity, propagate_moments
from .tls import INITIAL_STATE, TARGET_STATE, arp_first_peak_time, arp_protocol, sp_protocol

__all__ = ["Point", "PointResult", "RunOutcome", "evaluate_point", "expand_points", "run_plan",
           "default_output_root", "OUTPUT_ENV", "TOLERANCES"]

OUTPUT_ENV = "ACTIONNOISE_OUTPUT_DIR"

TOLERANCES = {
    "density_rtol": 1e-8, "density_atol": 1e-10,
    "moment_rtol": 1e-12, "moment_atol": 1e-14,
    "quadrature_steps": quadrature_grid(1.0).n_steps,
}

KEY_COLUMNS = ["protocol", "t_f", "gamma", "knob", "branch"]
COLUMNS = KEY_COLUMNS + DiagnosticsReport.columns() + ["error"]
SCAN_COLUMNS = ["knob", "m_param", "mu_max", "fidelity", "branch"]


@dataclass(frozen=True)
class Point:
    system: str
    protocol: str
    t_f: float
    gamma: float
    knob: float
    params: tuple  # sorted (key, value) pairs of the fixed plan parameters
    n_steps: int
    branch: str = ""


@dataclass(frozen=True)
class PointResult:
    point: Point
    report: Optional[DiagnosticsReport]
    error: str = ""


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "actionnoise-output"))


def _tls_point(p: Point, params: dict) -> DiagnosticsReport:
    delta0 = params["delta0"]
    if p.protocol == "ARP":
        proto = arp_protocol(delta0, p.t_f, int(params.get("n", 0)))
    else:
        proto = sp_protocol(delta0, p.t_f, p.knob)
    traj = proto.trajectory()
    grid = TimeGrid.uniform(p.t_f, p.n_steps)
    noise = NoiseConfig(p.gamma)
    noisy = propagate(traj, INITIAL_STATE, noise, grid)
    ideal = propagate(traj, INITIAL_STATE, NoiseConfig(0.0), grid)
    c_ideal = average_coherence(ideal, traj, grid)
    c_noisy = average_coherence(noisy, traj, grid)
    quad = quadrature_grid(p.t_f)
    return DiagnosticsReport(
        fidelity=uhlmann_fidelity(noisy.final, TARGET_STATE),
        fidelity_ideal=uhlmann_fidelity(ideal.final, TARGET_STATE),
        mu_max=float(np.max(proto.mu(grid.times))),
        g_d=generator_distance(traj, noise, quad),
        c_bar_ideal=c_ideal,
        c_bar_noisy=c_noisy,
        c_r=relative_decoherence(c_ideal, c_noisy) if c_ideal > 0 else None,
        m_param=m_parameter(traj, quad),
    )


def _ho_point(p: Point, params: dict) -> DiagnosticsReport:
    proto = FrequencyProtocol(p.protocol, params["omega0"], params["omega_f"], p.t_f)
    grid = TimeGrid.uniform(p.t_f, p.n_steps)
    start = GaussianState.ground(proto.omega0)
    target = GaussianState.ground(proto.omega_f)
    noisy = propagate_moments(proto, start, NoiseConfig(p.gamma), grid)
    ideal = propagate_moments(proto, start, NoiseConfig(0.0), grid)
    return DiagnosticsReport(
        fidelity=gaussian_fidelity(noisy.final, target),
        fidelity_ideal=gaussian_fidelity(ideal.final, target),
        mu_max=proto.mu_max(),
    )


def evaluate_point(p: Point) -> PointResult:
    """Diagnostics for one sweep point; failures land in ``error``."""
    params = dict(p.params)
    try:
        report = _tls_point(p, params) if p.system == "TLS" else _ho_point(p, params)
        return PointResult(p, report)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return PointResult(p, None, f"{type(exc).__name__}: {exc}")


def expand_points(plan: SweepPlan) -> List[Point]:
    """All sweep points in a fixed order: protocol, then t_f, gamma, knob."""
    params = tuple(sorted(plan.params.items()))
    tf_axis = plan.axis("t_f")
    if tf_axis.symbolic == "first_arp_peak":
        t_fs = (arp_first_peak_time(plan.params["delta0"]),)
    else:
        t_fs = tf_axis.values
    gamma_axis = plan.axis("gamma")
    gammas = gamma_axis.values if gamma_axis else (0.0,)
    knob_axis = plan.axis("knob")
    points = []
    for protocol in plan.protocols:
        for t_f, gamma in itertools.product(t_fs, gammas):
            if knob_axis is None:
                knobs = [(plan.params.get("knob", 0.0), "")]
            elif knob_axis.branches:
                knobs = [(float(k), b) for b in knob_axis.branches
                         for k in branch_knob_grid(plan.params["delta0"], t_f, b, knob_axis.num)]
            else:
                knobs = [(k, "") for k in knob_axis.values]
            for knob, branch in knobs:
                points.append(Point(plan.system, protocol, float(t_f), float(gamma), float(knob),
                                    params, plan.n_steps, branch))
    return points


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _row(res: PointResult) -> list:
    p = res.point
    report = res.report.as_row() if res.report else {c: None for c in DiagnosticsReport.columns()}
    cells = [p.protocol, p.t_f, p.gamma, p.knob if p.system == "TLS" else None, p.branch]
    cells += [report[c] for c in DiagnosticsReport.columns()]
    cells.append(res.error.replace(",", ";").replace("\n", " "))
    return [_fmt(c) for c in cells]


def _write_csv(path: Path, header: list, rows: list, meta: dict) -> None:
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append(",".join(header))
    lines += [",".join(r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _scan_rows(results: List[PointResult]) -> list:
    """ScanResult rows (branch-labelled) for every (t_f, gamma) slice of a knob sweep."""
    out = []
    slices = {}
    for r in results:
        slices.setdefault((r.point.t_f, r.point.gamma, r.point.branch), []).append(r)
    for key in sorted(slices):
        rows = []
        for r in sorted(slices[key], key=lambda r: r.point.knob):
            rep = r.report
            if rep is None:
                rows.append(ScanResult(r.point.knob, math.nan, math.nan, math.nan, error=r.error))
            else:
                rows.append(ScanResult(r.point.knob, rep.m_param, rep.mu_max, rep.fidelity))
        out += [(key, s) for s in classify_branches(rows)]
    return out


@dataclass
class RunOutcome:
    directory: Path
    files: List[Path]
    manifest: Path
    n_points: int
    n_failed: int


def run_plan(plan: SweepPlan, output_root=None, workers: int = 1) -> RunOutcome:
    """Evaluate every point of ``plan`` and write CSVs and ``manifest.json``.

    Output depends only on the plan: points are evaluated independently and
    collected in plan order, so any ``workers`` count gives identical files.
    """
    root = Path(output_root) if output_root is not None else default_output_root()
    directory = root / plan.output
    directory.mkdir(parents=True, exist_ok=True)
    points = expand_points(plan)
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate_point, points))
    else:
        results = [evaluate_point(p) for p in points]

    meta = {"config_sha256": plan.config_hash, "system": plan.system, "seed": plan.seed,
            "n_steps": plan.n_steps, "version": __version__}
    files = []
    for protocol in plan.protocols:
        rows = [_row(r) for r in results if r.point.protocol == protocol]
        path = directory / f"{protocol}.csv"
        _write_csv(path, COLUMNS, rows, dict(meta, protocol=protocol))
        files.append(path)
    if plan.axis("knob") is not None:
        rows = []
        for (t_f, gamma, _), s in _scan_rows(results):
            rows.append([_fmt(t_f), _fmt(gamma)] + [_fmt(getattr(s, c)) for c in SCAN_COLUMNS]
                        + [s.error.replace(",", ";")])
        path = directory / "scan.csv"
        _write_csv(path, ["t_f", "gamma"] + SCAN_COLUMNS + ["error"], rows, meta)
        files.append(path)

    n_failed = sum(1 for r in results if r.error)
    manifest = {
        "version": __version__,
        "config": plan.source,
        "config_sha256": plan.config_hash,
        "seed": plan.seed,
        "tolerances": TOLERANCES,
        "n_steps": plan.n_steps,
        "points": len(results),
        "failed_points": n_failed,
        "files": [f.name for f in files],
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__},
    }
    mpath = directory / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunOutcome(directory, files, mpath, len(results), n_failed)
