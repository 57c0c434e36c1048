"""Configuration files and experiment presets.

The on-disk format is sectioned plain text, ``key = value`` per line with
``#`` comments (configparser syntax, no interpolation, no nesting).  Field
data is given as expression strings over t, x, y.  The initial Q-tensor is
specified either through a director (director1, director2), from which
Q0 = d d^T - tr(d d^T)/2 I, or through explicit entries (q11, q12, and the
symmetric trace-free completion).

Presets reproduce the reported experiment table: a=-0.3, b=-4, c=4, M=L=1,
eps1=2.5, eps2=0.5, eps3=0.01, beta1=beta2=8, dt=0.01, T=2, a 30x30 mesh on
[-0.5, 0.5]^2, truncation off.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

import numpy as np

from .expressions import parse_expression
from .qtensor import MaterialParams, TruncationConfig, calibrate_a0
from .stepping import OutputSettings, PicardSettings, SimConfig, SolverSettings

__all__ = [
    "ConfigError",
    "load_config",
    "loads_config",
    "preset_config",
    "preset_text",
    "PRESET_NAMES",
    "SweepSpec",
]

PRESET_NAMES = ("exp1", "exp2", "exp2_exponential", "exp3", "exp3_sweep")

DEFAULT_SNAPSHOT_TIMES = "0, 0.25, 0.5, 0.75, 1, 1.25, 1.5, 1.75, 2"

REQUIRED_KEYS = (
    ("mesh", "nx"),
    ("mesh", "ny"),
    ("time", "dt"),
    ("time", "t_final"),
    ("material", "a"),
    ("material", "b"),
    ("material", "c"),
    ("material", "beta1"),
    ("material", "beta2"),
    ("material", "m"),
    ("material", "l"),
    ("material", "eps1"),
    ("material", "eps2"),
    ("material", "eps3"),
    ("boundary", "g"),
)


class ConfigError(ValueError):
    pass


@dataclass
class SweepSpec:
    """Field-strength sweep: scale the boundary data by s/10 for each s."""

    strengths: tuple[float, ...]
    base_g: str


def _expr_fn(text: str, name: str):
    try:
        tree = parse_expression(text)
    except ValueError as exc:
        raise ConfigError(f"malformed expression for {name}: {exc}") from exc

    def fn(t, x, y):
        out = tree.eval({"t": t, "x": x, "y": y})
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(x), np.shape(out)))

    return fn


def _tensor_fn(q11_text: str, q12_text: str, names: str):
    e11 = _expr_fn(q11_text, f"{names}11")
    e12 = _expr_fn(q12_text, f"{names}12")

    def fn(x, y):
        q11 = np.asarray(e11(0.0, x, y), dtype=float)
        q12 = np.asarray(e12(0.0, x, y), dtype=float)
        out = np.empty(q11.shape + (2, 2))
        out[..., 0, 0] = q11
        out[..., 0, 1] = q12
        out[..., 1, 0] = q12
        out[..., 1, 1] = -q11
        return out

    return fn


def _director_fn(d1_text: str, d2_text: str):
    e1 = _expr_fn(d1_text, "director1")
    e2 = _expr_fn(d2_text, "director2")

    def fn(x, y):
        d1 = np.asarray(e1(0.0, x, y), dtype=float)
        d2 = np.asarray(e2(0.0, x, y), dtype=float)
        out = np.empty(d1.shape + (2, 2))
        out[..., 0, 0] = 0.5 * (d1 * d1 - d2 * d2)
        out[..., 0, 1] = d1 * d2
        out[..., 1, 0] = d1 * d2
        out[..., 1, 1] = -out[..., 0, 0]
        return out

    return fn


def loads_config(text: str) -> tuple[SimConfig, list[str]]:
    """Parse config text into a SimConfig plus WARN lines (never refuses to
    run over violated theorem hypotheses; hard errors raise ConfigError)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparsable config: {exc}") from exc

    missing = [
        f"[{sec}] {key}"
        for sec, key in REQUIRED_KEYS
        if not parser.has_option(sec, key)
    ]
    has_director = parser.has_option("initial", "director1") and parser.has_option(
        "initial", "director2"
    )
    has_entries = parser.has_option("initial", "q11") and parser.has_option(
        "initial", "q12"
    )
    if not (has_director or has_entries):
        missing.append("[initial] director1+director2 or q11+q12")
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))

    def getf(sec, key, default=None):
        if not parser.has_option(sec, key):
            return default
        raw = parser.get(sec, key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"unparsable value for [{sec}] {key}: {raw!r}") from None

    def geti(sec, key, default=None):
        val = getf(sec, key, default)
        if val is None:
            return None
        if val != int(val):
            raise ConfigError(f"[{sec}] {key} must be an integer, got {val}")
        return int(val)

    a0_raw = parser.get("material", "a0", fallback="0").strip()
    material = MaterialParams(
        a=getf("material", "a"),
        b=getf("material", "b"),
        c=getf("material", "c"),
        beta1=getf("material", "beta1"),
        beta2=getf("material", "beta2"),
        m=getf("material", "m"),
        l=getf("material", "l"),
        eps1=getf("material", "eps1"),
        eps2=getf("material", "eps2"),
        eps3=getf("material", "eps3"),
        a0=0.0 if a0_raw == "auto" else getf("material", "a0", 0.0),
    )
    if a0_raw == "auto":
        # shift so the uniaxial bulk minimum sits at zero; dynamics unchanged
        material.a0 = calibrate_a0(material, dim=2)

    mode = parser.get("truncation", "mode", fallback="none").strip()
    eps_t_raw = parser.get("truncation", "eps_t", fallback="default").strip()
    truncation = TruncationConfig(
        mode=mode,
        r=getf("truncation", "r", 0.0) or 0.0,
        eps_t=None if eps_t_raw == "default" else float(eps_t_raw),
    )

    g_text = parser.get("boundary", "g")
    if has_director:
        q0 = _director_fn(
            parser.get("initial", "director1"), parser.get("initial", "director2")
        )
        initial_label = {
            "director1": parser.get("initial", "director1"),
            "director2": parser.get("initial", "director2"),
        }
    else:
        q0 = _tensor_fn(parser.get("initial", "q11"), parser.get("initial", "q12"), "q")
        initial_label = {
            "q11": parser.get("initial", "q11"),
            "q12": parser.get("initial", "q12"),
        }
    qb11 = parser.get("boundary", "q11", fallback="0")
    qb12 = parser.get("boundary", "q12", fallback="0")
    q_boundary_full = _tensor_fn(qb11, qb12, "boundary q")

    snap_raw = parser.get("output", "snapshot_times", fallback="").strip()
    snapshot_times = tuple(
        float(tok) for tok in snap_raw.replace(",", " ").split() if tok
    )

    cfg = SimConfig(
        x_min=getf("mesh", "x_min", -0.5),
        x_max=getf("mesh", "x_max", 0.5),
        y_min=getf("mesh", "y_min", -0.5),
        y_max=getf("mesh", "y_max", 0.5),
        nx=geti("mesh", "nx"),
        ny=geti("mesh", "ny"),
        material=material,
        truncation=truncation,
        dt=getf("time", "dt"),
        t_final=getf("time", "t_final"),
        g=_expr_fn(g_text, "g"),
        q0=q0,
        q_boundary=lambda x, y: q_boundary_full(x, y),
        picard=PicardSettings(
            tol=getf("picard", "tol", 1e-10),
            max_iter=geti("picard", "max_iter", 100),
            relaxation=getf("picard", "relaxation", 1.0),
        ),
        solver=SolverSettings(
            tol=getf("solver", "tol", 1e-12),
            max_iter_factor=geti("solver", "max_iter_factor", 10),
        ),
        output=OutputSettings(
            snapshot_times=snapshot_times,
            csv_every=geti("output", "csv_every", 1),
        ),
        labels={
            "g": g_text,
            "boundary_q11": qb11,
            "boundary_q12": qb12,
            **initial_label,
        },
    )
    try:
        warn = cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if parser.has_section("sweep"):
        strengths_raw = parser.get("sweep", "strengths", fallback="0 1 2 3 4 5 6 7 8 9 10")
        cfg.labels["sweep_strengths"] = strengths_raw
    return cfg, warn


def load_config(path) -> tuple[SimConfig, list[str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_config(fh.read())


def sweep_spec(cfg: SimConfig) -> SweepSpec:
    raw = cfg.labels.get("sweep_strengths", "0 1 2 3 4 5 6 7 8 9 10")
    strengths = tuple(float(tok) for tok in raw.replace(",", " ").split())
    return SweepSpec(strengths=strengths, base_g=cfg.labels["g"])


# -- presets -------------------------------------------------------------------

_COMMON = """\
[mesh]
nx = 30
ny = 30
x_min = -0.5
x_max = 0.5
y_min = -0.5
y_max = 0.5

[time]
dt = 0.01
t_final = 2.0

[material]
a = -0.3
b = -4.0
c = 4.0
beta1 = 8.0
beta2 = 8.0
m = 1.0
l = 1.0
eps1 = 2.5
eps2 = 0.5
eps3 = 0.01

[truncation]
mode = none

[picard]
tol = 1e-10
max_iter = 100
relaxation = 1.0

[solver]
tol = 1e-12
max_iter_factor = 10

[output]
snapshot_times = {snapshots}
"""

_EXP12_INITIAL = """\
[initial]
director1 = (x+0.5)*(x-0.5)*(y+0.5)*(y-0.5)
director2 = (x+0.5)*(x-0.5)*(y+0.5)*(y-0.5)
"""

_EXP3_G = "if(t<0.5, 0, if(t<1, 10*x/3, if(t<1.5, 20*x/3, 10*x)))"


def preset_text(name: str) -> str:
    """Config-file text of a named experiment preset."""
    common = _COMMON.format(snapshots=DEFAULT_SNAPSHOT_TIMES)
    if name == "exp1":
        return (
            common
            + "\n[boundary]\ng = 10*sin(2*pi*t+0.2)*(x+0.5)*sin(pi*y)\n\n"
            + _EXP12_INITIAL
        )
    if name == "exp2":
        return (
            common
            + "\n[boundary]\ng = 10*t*sin(2*pi*t+0.2)*(x+0.5)*sin(pi*y)\n\n"
            + _EXP12_INITIAL
        )
    if name == "exp2_exponential":
        return (
            common
            + "\n[boundary]\ng = 10*exp(t)*sin(2*pi*t+0.2)*(x+0.5)*sin(pi*y)\n\n"
            + _EXP12_INITIAL
        )
    if name in ("exp3", "exp3_sweep"):
        text = (
            common
            + f"\n[boundary]\ng = {_EXP3_G}\nq11 = -0.5\nq12 = 0\n\n"
            + "[initial]\ndirector1 = 0\ndirector2 = 1\n"
        )
        if name == "exp3_sweep":
            text += "\n[sweep]\nstrengths = 0 1 2 3 4 5 6 7 8 9 10\n"
        return text
    raise ConfigError(f"unknown preset {name!r} (known: {', '.join(PRESET_NAMES)})")


def preset_config(name: str) -> tuple[SimConfig, list[str]]:
    return loads_config(preset_text(name))
