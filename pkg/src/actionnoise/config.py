"""Sweep plans read from INI files.

Layout::

    [plan]
    system = TLS                 # TLS or HO
    protocols = ARP, SP          # ARP, SP (TLS); ConstantMu, ErmakovSP (HO)
    delta0 = 150                 # TLS gap scale, rad/s
    n_steps = 400                # propagation grid
    seed = 0
    output = fig2                # sub-directory of the output root

    [axis.t_f]                   # one to three axis sections
    start = 0.005
    stop = 0.14
    num = 12
    spacing = linear             # or log

    [axis.gamma]
    values = 0, 0.01

Any axis may give ``values`` instead of ``start/stop/num``. A TLS ``t_f``
axis also accepts the single value ``first_arp_peak``. A knob axis may use
``branches = LowerMu, HigherMu`` with ``num`` points per branch, placed
automatically on either side of the minimum of M (``[plan] knob`` sets the
knob when there is no knob axis). HO plans take ``omega0`` and ``omega_f``
instead of ``delta0``.
"""
from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

__all__ = ["ConfigError", "SweepPlan", "Axis", "parse_plan", "load_plan"]

SYSTEM_PROTOCOLS = {"TLS": ("ARP", "SP"), "HO": ("ConstantMu", "ErmakovSP")}
AXES = ("t_f", "gamma", "knob")
BRANCHES = ("LowerMu", "HigherMu")

_PLAN_KEYS = {"system", "protocols", "delta0", "omega0", "omega_f", "knob", "n",
              "n_steps", "seed", "output", "description"}
_AXIS_KEYS = {"values", "start", "stop", "num", "spacing", "branches"}


class ConfigError(ValueError):
    """Schema violation; carries the offending line and field where known."""

    def __init__(self, message: str, line: Optional[int] = None, fieldname: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if fieldname is not None:
            where.append(f"field '{fieldname}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = fieldname


@dataclass(frozen=True)
class Axis:
    name: str
    values: Tuple[float, ...] = ()
    branches: Tuple[str, ...] = ()
    num: int = 0
    symbolic: str = ""


@dataclass(frozen=True)
class SweepPlan:
    system: str
    protocols: Tuple[str, ...]
    params: Dict[str, float]
    axes: Tuple[Axis, ...]
    n_steps: int = 400
    seed: int = 0
    output: str = "sweep"
    description: str = ""
    source: str = field(default="", repr=False)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()

    def axis(self, name: str) -> Optional[Axis]:
        for a in self.axes:
            if a.name == name:
                return a
        return None


def _line_index(text: str):
    """Map (section, key) and section names to 1-based line numbers."""
    where, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = i
        elif section and line and line[0] not in "#;":
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            where.setdefault((section, key), i)
    return where


def _floats(raw: str, err):
    try:
        return tuple(float(x) for x in raw.replace(",", " ").split())
    except ValueError:
        raise err(f"expected numbers, got {raw!r}")


def parse_plan(text: str) -> SweepPlan:
    """Validate an INI sweep plan.

    Raises:
        ConfigError: naming the line and field of the first problem found.
    """
    lines = _line_index(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", getattr(exc, "lineno", None))

    def err(section, key=None):
        def make(message):
            return ConfigError(message, lines.get((section, key)) or lines.get((section, None)),
                               f"{section}.{key}" if key else section)
        return make

    if not cp.has_section("plan"):
        raise ConfigError("missing [plan] section")
    plan = cp["plan"]
    for key in plan:
        if key not in _PLAN_KEYS:
            raise err("plan", key)(f"unknown key {key!r}")
    for section in cp.sections():
        if section != "plan" and not section.startswith("axis."):
            raise err(section)(f"unknown section [{section}]")

    system = plan.get("system", "").strip()
    if system not in SYSTEM_PROTOCOLS:
        raise err("plan", "system")(f"system must be one of {sorted(SYSTEM_PROTOCOLS)}")
    protocols = tuple(p.strip() for p in plan.get("protocols", "").split(",") if p.strip())
    if not protocols:
        raise err("plan", "protocols")("at least one protocol is required")
    for p in protocols:
        if p not in SYSTEM_PROTOCOLS[system]:
            raise err("plan", "protocols")(f"protocol {p!r} is not available for {system}")

    params = {}
    required = ("delta0",) if system == "TLS" else ("omega0", "omega_f")
    for key in required:
        if key not in plan:
            raise err("plan")(f"missing required key {key!r}")
    for key in ("delta0", "omega0", "omega_f", "knob", "n"):
        if key in plan:
            vals = _floats(plan[key], err("plan", key))
            if len(vals) != 1:
                raise err("plan", key)("expected a single number")
            if key in ("delta0", "omega0", "omega_f") and not vals[0] > 0:
                raise err("plan", key)("must be positive")
            params[key] = vals[0]
    try:
        n_steps = int(plan.get("n_steps", "400"))
        seed = int(plan.get("seed", "0"))
    except ValueError as exc:
        raise err("plan", "n_steps" if "n_steps" in str(exc) else "seed")(str(exc))
    if n_steps < 2:
        raise err("plan", "n_steps")("n_steps must be at least 2")

    axes = []
    for section in cp.sections():
        if not section.startswith("axis."):
            continue
        name = section[5:]
        e = err(section)
        if name not in AXES:
            raise e(f"unknown axis {name!r}; expected one of {AXES}")
        sec = cp[section]
        for key in sec:
            if key not in _AXIS_KEYS:
                raise err(section, key)(f"unknown key {key!r}")
        if "branches" in sec:
            if name != "knob":
                raise err(section, "branches")("branches are only meaningful for the knob axis")
            branches = tuple(b.strip() for b in sec["branches"].split(",") if b.strip())
            bad = [b for b in branches if b not in BRANCHES]
            if bad or not branches:
                raise err(section, "branches")(f"branches must be drawn from {BRANCHES}")
            num = int(sec.get("num", "10"))
            if num < 2:
                raise err(section, "num")("need at least 2 points per branch")
            axes.append(Axis(name, branches=branches, num=num))
            continue
        if name == "t_f" and sec.get("values", "").strip() == "first_arp_peak":
            if system != "TLS":
                raise err(section, "values")("first_arp_peak is defined for the TLS only")
            axes.append(Axis(name, symbolic="first_arp_peak"))
            continue
        if "values" in sec:
            values = _floats(sec["values"], err(section, "values"))
            key = "values"
        else:
            for key in ("start", "stop", "num"):
                if key not in sec:
                    raise e(f"axis needs 'values' or start/stop/num (missing {key!r})")
            start = _floats(sec["start"], err(section, "start"))[0]
            stop = _floats(sec["stop"], err(section, "stop"))[0]
            num = int(sec["num"])
            spacing = sec.get("spacing", "linear").strip()
            key = "start"
            if spacing == "log":
                if start <= 0 or stop <= 0:
                    raise err(section, "start")("log spacing needs positive endpoints")
                values = tuple(np.geomspace(start, stop, num).tolist())
            elif spacing == "linear":
                values = tuple(np.linspace(start, stop, num).tolist())
            else:
                raise err(section, "spacing")("spacing must be 'linear' or 'log'")
        if not values:
            raise err(section, key)("axis is empty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise err(section, key)("grid must be strictly increasing")
        if name == "t_f" and values[0] <= 0:
            raise err(section, key)("t_f must be positive")
        if name == "gamma" and values[0] < 0:
            raise err(section, key)("gamma must be non-negative")
        axes.append(Axis(name, values=values))

    if not axes:
        raise ConfigError("no axes: add at least one [axis.t_f], [axis.gamma] or [axis.knob]")
    names = [a.name for a in axes]
    if "t_f" not in names:
        raise ConfigError("a [axis.t_f] section is required (it may hold a single value)")
    if "knob" in names and (system != "TLS" or protocols != ("SP",)):
        raise err("axis.knob")("a knob axis needs system = TLS and protocols = SP")

    return SweepPlan(system, protocols, params, tuple(axes), n_steps, seed,
                     plan.get("output", "sweep").strip(), plan.get("description", "").strip(),
                     text)


def load_plan(path) -> SweepPlan:
    with open(path) as fh:
        return parse_plan(fh.read())
