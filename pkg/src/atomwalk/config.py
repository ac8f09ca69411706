"""Run configuration: INI-style ``key = value`` files with sections.

Sections
--------
``[system]``   omega_r, delta, n_trunc, rel_tol, abs_tol, leak_tol
``[initial]``  field (fock|coherent), n, alpha, alpha_phase,
               atom (excited|ground|superposition|inversion|amplitudes),
               z0, atom_phase, amp_excited, amp_ground, x0, p0
``[simulate]`` ``[spectrum]`` ``[lyapunov]`` ``[fidelity]`` ``[sweep]``
``[scatter]`` ``[maps]``  options of the matching subcommand

Every subcommand validates the keys it needs before running; unknown keys
are rejected so typos do not pass silently.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass

import numpy as np

from .model import AtomInit, Coherent, Fock, InitialCondition, SystemParams

__all__ = ["ConfigError", "RunConfig", "load", "loads", "PRESETS", "preset", "SCHEMA"]


class ConfigError(ValueError):
    pass


def _float_list(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


# (type, default); default None means required
SCHEMA = {
    "system": {
        "omega_r": (float, None),
        "delta": (float, None),
        "n_trunc": (int, None),
        "rel_tol": (float, 1e-10),
        "abs_tol": (float, 1e-12),
        "leak_tol": (float, 1e-8),
    },
    "initial": {
        "field": (str, None),
        "n": (int, 0),
        "alpha": (float, 0.0),
        "alpha_phase": (float, 0.0),
        "atom": (str, None),
        "z0": (float, 0.0),
        "atom_phase": (float, 0.0),
        "amp_excited": (complex, 1.0),
        "amp_ground": (complex, 0.0),
        "x0": (float, 0.0),
        "p0": (float, None),
    },
    "simulate": {
        "tau_end": (float, None),
        "sample_dt": (float, 0.1),
        "form": (str, "bloch"),
    },
    "spectrum": {
        "tau_end": (float, None),
        "sample_dt": (float, 0.1),
        "t_min": (float, 0.0),
        "window": (str, "hann"),
        "form": (str, "bloch"),
    },
    "lyapunov": {
        "horizon": (float, 1e5),
        "renorm_interval": (float, 1.0),
        "d0": (float, 1e-8),
        "curve_points": (int, 1000),
    },
    "fidelity": {
        "delta_delta": (float, 1e-4),
        "horizon": (float, 1000.0),
        "sample_dt": (float, 0.1),
        "fit_level": (float, -0.5),
    },
    "sweep": {
        "delta_min": (float, -2.0),
        "delta_max": (float, 2.0),
        "delta_step": (float, 0.1),
        "horizon": (float, 1e4),
        "window_min": (float, 0.0),
        "window_max": (float, 1000.0),
        "sample_dt": (float, 0.1),
        "flatness_threshold": (float, 0.2),
        "f_max": (float, 1.0),
    },
    "scatter": {
        "p0_min": (float, None),
        "p0_max": (float, None),
        "points": (int, None),
        "tau_max": (float, 1e4),
        "p_hyst": (float, 0.1),
    },
    "maps": {
        "kind": (str, None),
        "grid_min": (float, None),
        "grid_max": (float, None),
        "points": (int, None),
        "tau_snap": (_float_list, None),
        "phase": (float, 0.0),
    },
}

COMMANDS = ("simulate", "spectrum", "lyapunov", "fidelity", "sweep", "scatter", "maps")


def _parse_value(typ, text, where):
    try:
        if typ is complex:
            return complex(text.replace(" ", "").replace("i", "j"))
        return typ(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} as {getattr(typ, '__name__', 'list')}") from exc


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one subcommand."""

    command: str
    values: dict  # section -> {key: parsed value}
    source: dict  # section -> {key: raw text}, as resolved

    def section(self, name) -> dict:
        return self.values[name]

    @property
    def params(self) -> SystemParams:
        s = self.values["system"]
        return SystemParams(omega_r=s["omega_r"], delta=s["delta"], n_trunc=s["n_trunc"],
                            rel_tol=s["rel_tol"], abs_tol=s["abs_tol"], leak_tol=s["leak_tol"])

    @property
    def initial(self) -> InitialCondition:
        s = self.values["initial"]
        if s["field"] == "fock":
            fld = Fock(s["n"])
        elif s["field"] == "coherent":
            fld = Coherent(s["alpha"] * complex(math.cos(s["alpha_phase"]), math.sin(s["alpha_phase"])))
        else:
            raise ConfigError(f"initial.field must be fock or coherent, got {s['field']!r}")
        kind = s["atom"]
        if kind == "excited":
            atom = AtomInit.excited()
        elif kind == "ground":
            atom = AtomInit.ground()
        elif kind == "superposition":
            atom = AtomInit.superposition(s["atom_phase"])
        elif kind == "inversion":
            atom = AtomInit.from_inversion(s["z0"], s["atom_phase"])
        elif kind == "amplitudes":
            atom = AtomInit(s["amp_excited"], s["amp_ground"])
        else:
            raise ConfigError(f"unknown initial.atom {kind!r}")
        return InitialCondition(fld, atom, s["x0"], s["p0"])

    def manifest(self) -> str:
        """The resolved configuration as config-file text (rerunnable)."""
        cp = configparser.ConfigParser(interpolation=None)
        for sec in ("system", "initial", self.command):
            cp[sec] = self.source[sec]
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def echo(self) -> dict:
        """Flat ``section.key -> text`` map for CSV headers."""
        out = {"command": self.command}
        for sec in ("system", "initial", self.command):
            for k, v in self.source[sec].items():
                out[f"{sec}.{k}"] = v
        return out


def _raw_sections(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return {sec: dict(cp[sec]) for sec in cp.sections()}


def loads(text: str, command: str, overrides: dict | None = None, base: str | None = None) -> RunConfig:
    """Parse and validate ``text`` for ``command``.

    ``base`` (usually a preset) is read first and ``text`` layered on top;
    ``overrides`` (``"section.key" -> text``) win over both.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    raw = {}
    for layer in (base, text):
        if layer:
            for sec, kv in _raw_sections(layer).items():
                raw.setdefault(sec, {}).update(kv)
    for key, val in (overrides or {}).items():
        sec, _, k = key.partition(".")
        if not k:
            raise ConfigError(f"override {key!r} must look like section.key")
        raw.setdefault(sec, {})[k] = str(val)

    needed = ("system", "initial", command)
    missing, values, source = [], {}, {}
    for sec in needed:
        got = raw.get(sec, {})
        unknown = set(got) - set(SCHEMA[sec])
        if unknown:
            raise ConfigError(f"unknown keys in [{sec}]: {', '.join(sorted(unknown))}")
        values[sec], source[sec] = {}, {}
        for key, (typ, default) in SCHEMA[sec].items():
            if key in got:
                values[sec][key] = _parse_value(typ, got[key], f"{sec}.{key}")
                source[sec][key] = got[key]
            elif default is None:
                missing.append(f"{sec}.{key}")
            else:
                values[sec][key] = default
                source[sec][key] = _fmt_default(default)
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    cfg = RunConfig(command, values, source)
    try:
        cfg.params
        cfg.initial
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    _check_command(cfg)
    return cfg


def _fmt_default(v):
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+}j"
    return repr(v) if isinstance(v, float) else str(v)


def _check_command(cfg: RunConfig):
    c, v = cfg.command, cfg.values[cfg.command]
    positive = {
        "simulate": ("tau_end", "sample_dt"), "spectrum": ("tau_end", "sample_dt"),
        "lyapunov": ("horizon", "renorm_interval"), "fidelity": ("horizon", "sample_dt"),
        "sweep": ("delta_step", "horizon", "sample_dt"), "scatter": ("points", "tau_max"),
        "maps": ("points",),
    }[c]
    for k in positive:
        if not v[k] > 0:
            raise ConfigError(f"{c}.{k} must be positive")
    if "form" in v and v["form"] not in ("bloch", "amplitude"):
        raise ConfigError(f"{c}.form must be bloch or amplitude")
    if c == "maps" and v["kind"] not in ("position", "inversion"):
        raise ConfigError("maps.kind must be position or inversion")
    if c == "sweep" and v["delta_max"] < v["delta_min"]:
        raise ConfigError("sweep.delta_max is below sweep.delta_min")


def load(path, command: str, overrides: dict | None = None, base: str | None = None) -> RunConfig:
    with open(path) as fh:
        return loads(fh.read(), command, overrides, base)


def delta_grid(sweep: dict) -> np.ndarray:
    n = int(math.floor((sweep["delta_max"] - sweep["delta_min"]) / sweep["delta_step"] + 1e-9)) + 1
    return np.round(sweep["delta_min"] + sweep["delta_step"] * np.arange(n), 12)


# --------------------------------------------------------------------------
# presets, one per figure panel
# --------------------------------------------------------------------------

_FOCK = """
[system]
omega_r = 0.001
delta = {delta}
n_trunc = 12
[initial]
field = fock
n = 10
atom = {atom}
x0 = 0.0
p0 = {p0}
"""

_COHERENT = """
[system]
omega_r = 0.001
delta = {delta}
n_trunc = 100
[initial]
field = coherent
alpha = 3.1622776601683795
atom = {atom}
z0 = {z0}
x0 = 0.0
p0 = 25.0
"""

_SIM = """
[simulate]
tau_end = {tau}
sample_dt = {dt}
[spectrum]
tau_end = {tau}
sample_dt = {dt}
[lyapunov]
horizon = 100000
"""

PRESETS = {
    "fig1a": _FOCK.format(delta=0.0, atom="excited", p0=25.0) + _SIM.format(tau=1000, dt=0.1),
    "fig1b": _FOCK.format(delta=32.0, atom="excited", p0=25.0) + _SIM.format(tau=1000, dt=0.01),
    "fig1c": _FOCK.format(delta=32.0, atom="excited", p0=32000.0) + _SIM.format(tau=100, dt=0.01),
    "fig1d": _FOCK.format(delta=0.4, atom="excited", p0=25.0) + _SIM.format(tau=1000, dt=0.1),
    "fig2a": _FOCK.format(delta=0.4, atom="excited", p0=25.0) + """
[scatter]
p0_min = 0
p0_max = 100
points = 1001
tau_max = 10000
""",
    "fig2b": _FOCK.format(delta=0.4, atom="excited", p0=25.0) + """
[scatter]
p0_min = 45.9
p0_max = 46.9
points = 1000
tau_max = 10000
""",
    "fig3": _FOCK.format(delta=0.4, atom="excited", p0=25.0) + """
[maps]
kind = position
grid_min = 0
grid_max = 100
points = 1001
tau_snap = 300, 1000
""",
    "fig4": _FOCK.format(delta=0.4, atom="excited", p0=25.0) + """
[maps]
kind = inversion
grid_min = -1
grid_max = 1
points = 401
tau_snap = 100, 200
""",
    "fig5": _FOCK.format(delta=0.0, atom="superposition", p0=25.0) + """
[sweep]
delta_min = -2
delta_max = 2
delta_step = 0.1
horizon = 10000
[lyapunov]
horizon = 100000
""",
    "fig6": _FOCK.format(delta=0.4, atom="excited", p0=25.0) + """
[fidelity]
delta_delta = 1e-4
horizon = 1000
[lyapunov]
horizon = 100000
""",
    "fig7": _COHERENT.format(delta=0.0, atom="excited", z0=1.0) + """
[sweep]
delta_min = -2
delta_max = 2
delta_step = 0.1
horizon = 10000
""",
    "fig8a": _COHERENT.format(delta=0.4, atom="excited", z0=1.0) + """
[scatter]
p0_min = 20
p0_max = 100
points = 801
tau_max = 10000
""",
    "fig8b": _COHERENT.format(delta=0.4, atom="excited", z0=1.0) + """
[maps]
kind = position
grid_min = 0
grid_max = 100
points = 501
tau_snap = 300, 1000
""",
    "fig8c": _COHERENT.format(delta=0.4, atom="excited", z0=1.0) + """
[maps]
kind = inversion
grid_min = -1
grid_max = 1
points = 201
tau_snap = 100, 200
""",
    "fig9": _COHERENT.format(delta=0.4, atom="inversion", z0=1.0) + """
[fidelity]
delta_delta = 1e-4
horizon = 1000
[lyapunov]
horizon = 100000
""",
}


def preset(name: str) -> str:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
