"""Experiment configuration: strict TOML loading and validation.

Every table has a fixed set of keys; unknown keys are errors.  All
problems are collected and reported together.  Example::

    seed = 7
    horizon = 10000
    replications = 20

    [game]
    N = 50
    n = 1
    q = 1.0
    a = 0.5
    b = -1.0                      # scalar, length-n list, or N lists of length n
    set = { kind = "box", lower = 0.0, upper = 1.0 }

    [network]
    kind = "bernoulli"            # bernoulli | uniform | constant
    p = 0.5                       # or matrix = [[...]] for per-pair parameters
    participation = 0.7           # scalar or length-N list, each in (0, 1]

    [schedule]
    kind = "theta"                # theta | alpha
    theta = 0.25
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from .dynamics import AlphaRule, ThetaRule
from .game import Ball, Box, GameSpec, QuadraticCost
from .network import Bernoulli, Constant, NetworkModel, Uniform


class ConfigError(ValueError):
    def __init__(self, path, problems: list[str]):
        self.path = str(path)
        self.problems = list(problems)
        super().__init__(f"{path}: " + "; ".join(self.problems))


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "horizon": 1000,
    "replications": 1,
    "equilibrium_tolerance": 1e-10,
    "output": "out",
    "game": {"N": None, "n": 1, "q": 1.0, "a": 0.0, "b": 0.0, "set": None},
    "network": {"kind": "bernoulli", "p": None, "lo": None, "hi": None, "value": None,
                "matrix": None, "participation": 1.0},
    "schedule": {"kind": "theta", "theta": 0.25, "alpha": 1.0},
    "record": {"noise": False, "regret": False, "profiles": False, "profile_every": 0},
    "verify": {"delta": 0.1, "draws": 10000, "replications": 30, "profiles": 20},
    "sweep": {"param": "N", "values": [], "simulate": False},
}

_SET_KEYS = {"box": {"kind", "lower", "upper"}, "ball": {"kind", "center", "radius"}}
_NET_PARAMS = {"bernoulli": {"p"}, "uniform": {"lo", "hi"}, "constant": {"value"}}
_SWEEP_PARAMS = ("N", "alpha", "theta", "delta", "participation")


@dataclass
class ExperimentConfig:
    """Validated configuration with defaults filled in."""

    data: dict
    source: str = "<memory>"
    game: GameSpec = field(init=False, repr=False)
    schedule: object = field(init=False, repr=False)

    def __post_init__(self):
        self.game = build_game(self.data)
        self.schedule = build_schedule(self.data, self.game)

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def horizon(self) -> int:
        return int(self.data["horizon"])

    @property
    def replications(self) -> int:
        return int(self.data["replications"])

    @property
    def tolerance(self) -> float:
        return float(self.data["equilibrium_tolerance"])

    @property
    def output(self) -> Path:
        return Path(self.data["output"])

    @property
    def record(self) -> dict:
        return self.data["record"]

    @property
    def verify(self) -> dict:
        return self.data["verify"]

    @property
    def sweep(self) -> dict:
        return self.data["sweep"]

    def hash(self) -> str:
        """Digest of everything that determines the numbers (seed and output dir excluded)."""
        d = {k: v for k, v in self.data.items() if k not in ("seed", "output")}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-key overrides, e.g. ``{"game.N": 100}``; revalidated."""
        data = copy.deepcopy(self.data)
        for key, value in changes.items():
            node = data
            *head, last = key.split(".")
            for h in head:
                node = node[h]
            node[last] = value
        _reject_if(validate(data), self.source)
        return ExperimentConfig(data, self.source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(path, [f"parse error: {exc}"]) from None
    return config_from_dict(raw, path)


def config_from_dict(raw: dict, source="<memory>") -> ExperimentConfig:
    data, problems = _fill_defaults(raw)
    problems += validate(data)
    _reject_if(problems, source)
    return ExperimentConfig(data, str(source))


def _reject_if(problems, source):
    if problems:
        raise ConfigError(source, problems)


def _fill_defaults(raw: dict):
    problems = []
    data = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if key not in DEFAULTS:
            problems.append(f"unknown field '{key}'")
        elif isinstance(DEFAULTS[key], dict):
            if not isinstance(value, dict):
                problems.append(f"'{key}' must be a table")
                continue
            for sub, v in value.items():
                if sub not in DEFAULTS[key]:
                    problems.append(f"unknown field '{key}.{sub}'")
                else:
                    data[key][sub] = v
        else:
            data[key] = value
    return data, problems


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _num_array(x, name, problems):
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        problems.append(f"'{name}' must be a number or a (nested) list of numbers")
        return None
    if not np.all(np.isfinite(arr)):
        problems.append(f"'{name}' must be finite")
        return None
    return arr


def validate(data: dict) -> list[str]:
    """All violations of ``data`` (defaults already filled)."""
    p: list[str] = []
    for key in ("seed", "horizon", "replications"):
        if not _is_int(data[key]) or data[key] < 0:
            p.append(f"'{key}' must be a nonnegative integer")
    if _is_int(data["replications"]) and data["replications"] < 1:
        p.append("'replications' must be >= 1")
    if not _is_num(data["equilibrium_tolerance"]) or data["equilibrium_tolerance"] <= 0:
        p.append("'equilibrium_tolerance' must be a positive number")
    if not isinstance(data["output"], str):
        p.append("'output' must be a string")

    g = data["game"]
    N, n = g["N"], g["n"]
    if not _is_int(N) or N < 1:
        p.append("'game.N' is required and must be an integer >= 1")
        N = None
    if not _is_int(n) or n < 1:
        p.append("'game.n' must be an integer >= 1")
        n = None
    for name in ("q", "a", "b"):
        arr = _num_array(g[name], f"game.{name}", p)
        if arr is None:
            continue
        if name == "q" and np.any(arr <= 0):
            p.append("'game.q' must be positive (cost curvature)")
        if N and n:
            shapes = [(), (N,)] if name != "b" else [(), (n,), (N, n)]
            if name == "b" and n == 1:
                shapes.append((N,))
            if arr.shape not in shapes:
                p.append(f"'game.{name}' has shape {list(arr.shape)}; expected one of {[list(s) for s in shapes]}")
    _validate_set(g["set"], n, p)

    net = data["network"]
    kind = net["kind"]
    if kind not in _NET_PARAMS:
        p.append(f"'network.kind' must be one of {sorted(_NET_PARAMS)}, got {kind!r}")
    else:
        _validate_network(net, kind, N, p)
    part = _num_array(net["participation"], "network.participation", p)
    if part is not None:
        if part.shape not in ((),) + (((N,),) if N else ()):
            p.append("'network.participation' must be a scalar or a length-N list")
        else:
            bad = np.nonzero(~((part > 0) & (part <= 1)))[0] if part.ndim else ([0] if not 0 < part <= 1 else [])
            if len(bad):
                who = "all agents" if part.ndim == 0 else f"agents {list(map(int, bad))}"
                p.append(f"participation probability must satisfy 0 < pbar_i <= 1; violated for {who}")

    sch = data["schedule"]
    if sch["kind"] not in ("theta", "alpha"):
        p.append(f"'schedule.kind' must be 'theta' or 'alpha', got {sch['kind']!r}")
    if not _is_num(sch["theta"]) or not 0 < sch["theta"] < 0.5:
        p.append(f"step-size condition: 'schedule.theta' must lie in (0, 1/2), got {sch['theta']!r}")
    if not _is_num(sch["alpha"]) or not 0 < sch["alpha"] <= 1:
        p.append(f"step-size condition: 'schedule.alpha' must lie in (0, 1], got {sch['alpha']!r}")

    rec = data["record"]
    for key in ("noise", "regret", "profiles"):
        if not isinstance(rec[key], bool):
            p.append(f"'record.{key}' must be true or false")
    if not _is_int(rec["profile_every"]) or rec["profile_every"] < 0:
        p.append("'record.profile_every' must be a nonnegative integer (0 = automatic)")

    ver = data["verify"]
    if not _is_num(ver["delta"]) or not 0 < ver["delta"] < 1:
        p.append("'verify.delta' must lie in (0, 1)")
    for key in ("draws", "replications", "profiles"):
        if not _is_int(ver[key]) or ver[key] < 1:
            p.append(f"'verify.{key}' must be a positive integer")
    if _is_int(ver["replications"]) and ver["replications"] < 30:
        p.append("'verify.replications' must be >= 30 for the mean-square check")

    sw = data["sweep"]
    if sw["param"] not in _SWEEP_PARAMS:
        p.append(f"'sweep.param' must be one of {list(_SWEEP_PARAMS)}, got {sw['param']!r}")
    if not isinstance(sw["values"], list) or not all(_is_num(v) for v in sw["values"]):
        p.append("'sweep.values' must be a list of numbers")
    if not isinstance(sw["simulate"], bool):
        p.append("'sweep.simulate' must be true or false")
    return p


def _validate_set(s, n, p):
    if s is None:
        p.append("'game.set' is required")
        return
    if not isinstance(s, dict) or s.get("kind") not in _SET_KEYS:
        p.append("'game.set.kind' must be 'box' or 'ball'")
        return
    allowed = _SET_KEYS[s["kind"]]
    for key in s:
        if key not in allowed:
            p.append(f"unknown field 'game.set.{key}' for a {s['kind']}")
    for key in allowed - {"kind"} - set(s):
        p.append(f"'game.set.{key}' is required for a {s['kind']}")
    if s["kind"] == "box" and "lower" in s and "upper" in s:
        lo = _num_array(s["lower"], "game.set.lower", p)
        hi = _num_array(s["upper"], "game.set.upper", p)
        if lo is not None and hi is not None:
            if n and (lo.shape not in ((), (n,)) or hi.shape not in ((), (n,))):
                p.append("box bounds must be scalars or length-n lists")
            elif np.any(np.broadcast_to(lo, hi.shape if hi.ndim else lo.shape) > hi):
                p.append("box requires lower <= upper componentwise")
    if s["kind"] == "ball" and "radius" in s:
        if not _is_num(s["radius"]) or s["radius"] <= 0:
            p.append("ball radius must be positive")
        if "center" in s:
            c = _num_array(s["center"], "game.set.center", p)
            if c is not None and n and c.shape not in ((), (n,)):
                p.append("ball center must be a scalar or a length-n list")


def _validate_network(net, kind, N, p):
    allowed = _NET_PARAMS[kind]
    for key in ("p", "lo", "hi", "value"):
        if net[key] is not None and key not in allowed:
            p.append(f"'network.{key}' does not apply to {kind} edges")
    if net["matrix"] is not None:
        if kind == "uniform":
            p.append("'network.matrix' is supported for bernoulli and constant edges only")
            return
        if any(net[key] is not None for key in allowed):
            p.append("give either 'network.matrix' or the scalar edge parameter, not both")
        m = _num_array(net["matrix"], "network.matrix", p)
        if m is not None:
            if N and m.shape != (N, N):
                p.append(f"'network.matrix' must be {N}x{N}")
            elif np.any((m < 0) | (m > 1)):
                p.append("'network.matrix' entries must lie in [0, 1]")
        return
    for key in sorted(allowed):
        v = net[key]
        if v is None:
            p.append(f"'network.{key}' is required for {kind} edges")
        elif not _is_num(v) or not 0 <= v <= 1:
            p.append(f"'network.{key}' must lie in [0, 1]")
    if kind == "uniform" and _is_num(net["lo"]) and _is_num(net["hi"]) and net["lo"] > net["hi"]:
        p.append("uniform edges need lo <= hi")


def build_game(data: dict) -> GameSpec:
    g, net = data["game"], data["network"]
    N, n = g["N"], g["n"]
    s = g["set"]
    if s["kind"] == "box":
        S = Box(np.broadcast_to(np.asarray(s["lower"], float), (n,)),
                np.broadcast_to(np.asarray(s["upper"], float), (n,)))
    else:
        S = Ball(np.broadcast_to(np.asarray(s.get("center", 0.0), float), (n,)), float(s["radius"]))
    b = np.asarray(g["b"], dtype=float)
    if n == 1 and b.shape == (N,):
        b = b[:, None]
    cost = QuadraticCost(np.asarray(g["q"], float), np.asarray(g["a"], float), b)
    part = np.asarray(net["participation"], dtype=float)
    if net["matrix"] is not None:
        model = NetworkModel.from_mean_matrix(net["matrix"], part, net["kind"])
    else:
        dist = {"bernoulli": lambda: Bernoulli(net["p"]), "uniform": lambda: Uniform(net["lo"], net["hi"]),
                "constant": lambda: Constant(net["value"])}[net["kind"]]()
        model = NetworkModel(N, dist, part)
    return GameSpec(N, n, S, cost, model)


def build_schedule(data: dict, game: GameSpec):
    sch = data["schedule"]
    if sch["kind"] == "theta":
        return ThetaRule(float(sch["theta"]))
    return AlphaRule.for_game(game, float(sch["alpha"]))
