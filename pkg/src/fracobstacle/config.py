"""Flat ``key = value`` experiment configs with strict validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .energy import KernelSpec, ScalingParams
from .errors import ConfigInvalid, FracObstacleError
from .point_process import MarkDistribution, ProcessSpec, Window
from .shapes import Ball, BallUnion, Box
from .solvers import SolverOptions

COMMANDS = ("sample", "capacity", "ergodic", "diagnose", "homogenize", "shapes")


def _floats(v):
    return [float(x) for x in v.replace(",", " ").split()]


def _float(v):
    return float(v)


def _int(v):
    return int(v)


def _str(v):
    return v.strip()


# key -> (parser, default); None default means required when used
_COMMON = {
    "n": (_int, 1),
    "s": (_float, 0.25),
    "p": (_float, 2.0),
    "kernel": (_str, "standard"),
    "profile": (_floats, None),
    "c": (_float, 1.0),
    "seed": (_int, 0),
    "tol_rtol": (_float, 1e-10),
    "tol_kkt": (_float, 1e-8),
    "max_iter": (_int, 50_000),
    "solver": (_str, "auto"),
}
_PROCESS = {
    "process": (_str, "poisson"),
    "intensity": (_float, 1.0),
    "marks": (_str, "constant"),
    "mark_params": (_floats, [1.0]),
}
_U = {
    "U_lower": (_floats, [0.0]),
    "U_upper": (_floats, [1.0]),
}
_SCHEMA = {
    "sample": {**_PROCESS, "window_lower": (_floats, [0.0]), "window_upper": (_floats, [1.0]),
               "thin_delta": (_float, 0.0)},
    "capacity": {"target": (_str, "ball 1"), "geometry": (_str, "global"), "R": (_float, 8.0),
                 "r": (_float, 4.0), "h": (_float, 1.0 / 64), "R0": (_float, 0.0)},
    "ergodic": {**_PROCESS, **_U, "eps": (_floats, [2.0 ** -k for k in range(3, 7)]),
                "replicas": (_int, 50), "mark_power": (_float, math.nan),
                "deltas": (_floats, [0.2, 0.1, 0.05, 0.01]), "retention_window": (_float, 10.0),
                "gamma_replicas": (_int, 100), "cap_unit_ball": (_float, 0.0), "h": (_float, 1.0 / 64)},
    "diagnose": {**_PROCESS, **_U, "eps": (_floats, [2.0 ** -k for k in range(3, 7)]),
                 "replicas": (_int, 20), "R": (_float, 8.0), "h": (_float, 1.0 / 64)},
    "homogenize": {**_PROCESS, **_U, "eps": (_floats, [2.0 ** -k for k in range(3, 7)]),
                   "replicas": (_int, 20), "R": (_float, 8.0), "h": (_float, 2.0 ** -12),
                   "f": (_float, 1.0), "gamma_replicas": (_int, 4000), "cap_h": (_float, 1.0 / 64)},
}
_SCHEMA["shapes"] = {**_SCHEMA["homogenize"], "template": (_str, "ball 0.5")}


def parse_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; duplicate keys are errors."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}", "expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        if not key:
            raise ConfigInvalid(f"line {lineno}", "empty key")
        if key in out:
            raise ConfigInvalid(key, "duplicate key")
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    command: str
    values: dict
    raw: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def echo(self) -> dict:
        return {"command": self.command, **{k: self.values[k] for k in sorted(self.values)}}

    # builders --------------------------------------------------------------
    def params(self) -> ScalingParams:
        return _wrap("s", lambda: ScalingParams(self["n"], self["s"], self["p"]))

    def kernel(self) -> KernelSpec:
        params = self.params()
        if self["kernel"] == "standard":
            return KernelSpec(params, c=self["c"])
        if self["kernel"] == "anisotropic":
            if self["profile"] is None:
                raise ConfigInvalid("profile", "required for an anisotropic kernel")
            return _wrap("profile", lambda: KernelSpec(params, self["profile"], self["c"]))
        raise ConfigInvalid("kernel", "must be 'standard' or 'anisotropic'")

    def process(self) -> ProcessSpec:
        fam = self["marks"]
        mp = self["mark_params"]
        makers = {"constant": 1, "uniform": 2, "lognormal": 2, "pareto": 2}
        if fam not in makers:
            raise ConfigInvalid("marks", f"unknown family {fam!r}")
        if len(mp) != makers[fam]:
            raise ConfigInvalid("mark_params", f"{fam} takes {makers[fam]} parameter(s)")
        marks = _wrap("mark_params", lambda: getattr(MarkDistribution, fam)(*mp))
        if self["process"] not in ("poisson", "lattice"):
            raise ConfigInvalid("process", "must be 'poisson' or 'lattice'")
        return _wrap("intensity", lambda: ProcessSpec(self["process"], marks, self["intensity"]))

    def window(self, lo="U_lower", hi="U_upper") -> Window:
        lower, upper = self[lo], self[hi]
        if len(lower) != self["n"] or len(upper) != self["n"]:
            raise ConfigInvalid(lo, f"needs {self['n']} coordinates")
        return _wrap(lo, lambda: Window(tuple(lower), tuple(upper)))

    def solver_options(self):
        return _wrap("solver", lambda: SolverOptions(rtol_decrease=self["tol_rtol"], kkt_tol=self["tol_kkt"],
                                                     max_iter=self["max_iter"], method=self["solver"]))


def _wrap(key, build):
    try:
        return build()
    except ConfigInvalid:
        raise
    except FracObstacleError as err:
        raise ConfigInvalid(key, str(err)) from err


def parse_shape(text: str, n: int):
    """``empty``, ``ball <r> [centre...]``, ``box <w_1..w_n> [centre...]`` or
    ``union <r c_1..c_n>; <r c_1..c_n>; ...``."""
    t = text.strip()
    if t == "empty":
        return None
    kind, _, rest = t.partition(" ")
    try:
        if kind == "ball":
            v = _floats(rest)
            centre = v[1:] if len(v) > 1 else [0.0] * n
            return Ball(tuple(centre), v[0])
        if kind == "box":
            v = _floats(rest)
            widths = v[:n]
            centre = v[n:] if len(v) > n else [0.0] * n
            return Box(tuple(centre), tuple(widths))
        if kind == "union":
            balls = []
            for part in rest.split(";"):
                v = _floats(part)
                balls.append(Ball(tuple(v[1:]), v[0]))
            return BallUnion(tuple(balls))
    except (ValueError, IndexError, FracObstacleError) as err:
        raise ConfigInvalid("target", f"cannot parse shape {text!r}: {err}") from err
    raise ConfigInvalid("target", f"unknown shape kind {kind!r}")


def validate(command: str, raw: dict) -> ExperimentConfig:
    if command not in COMMANDS:
        raise ConfigInvalid("command", f"unknown subcommand {command!r}")
    schema = {**_COMMON, **_SCHEMA[command]}
    values = {}
    for key in raw:
        if key not in schema:
            raise ConfigInvalid(key, f"unknown key for '{command}'")
    for key, (parse, default) in schema.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except ValueError as err:
                raise ConfigInvalid(key, f"cannot parse {raw[key]!r}") from err
        else:
            values[key] = default
    cfg = ExperimentConfig(command, values, dict(raw))
    _check_ranges(cfg)
    return cfg


def _check_ranges(cfg: ExperimentConfig):
    v = cfg.values
    cfg.params()
    if v["seed"] < 0 or v["seed"] >= 2 ** 64:
        raise ConfigInvalid("seed", "must be an unsigned 64-bit integer")
    for key in ("replicas", "gamma_replicas"):
        if key in v and v[key] < 1:
            raise ConfigInvalid(key, "must be >= 1")
    if "replicas" in v and cfg.command in ("ergodic",) and v["replicas"] < 2:
        raise ConfigInvalid("replicas", "standard errors need at least 2 replicas")
    for key in ("h", "cap_h"):
        if key in v and not v[key] > 0:
            raise ConfigInvalid(key, "must be > 0")
    if "eps" in v:
        e = v["eps"]
        if not e or min(e) <= 0 or any(b >= a for a, b in zip(e, e[1:])):
            raise ConfigInvalid("eps", "must be a positive, strictly decreasing ladder")
    if "deltas" in v and (not v["deltas"] or min(v["deltas"]) <= 0):
        raise ConfigInvalid("deltas", "must be positive")
    if "R" in v and not v["R"] > 0:
        raise ConfigInvalid("R", "must be > 0")
    if cfg.command == "capacity" and v["geometry"] not in ("global", "condenser", "relative"):
        raise ConfigInvalid("geometry", "must be global, condenser or relative")
    if "process" in v:
        cfg.process()
    cfg.kernel()
    cfg.solver_options()
