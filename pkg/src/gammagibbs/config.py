"""Run configuration files (JSON).

Every section is optional; missing fields take the defaults below.  Unknown
and duplicate keys are rejected, and the potential is certified while the
file is parsed.

    {
      "seed": 20240611,
      "out_dir": null,                # falls back to $GAMMAGIBBS_OUT_DIR
      "levy": {"kind": "gamma", "theta": 1.0, "trunc": 1e-6},
      "grid": {"d": 1, "delta": 1.0, "R": null},        # R defaults to delta
      "potential": {"family": "core_shell", "A": 10.0, "b": 1.0,
                    "self_interaction": true},
      "window": {"cubes_per_axis": 4},  # or {"cubes": [[0], [1]]} or {"lower": [..], "upper": [..]}
      "boundary": null,                 # or {"positions": [[..]], "marks": [..]}
      "chain": {"n_steps": 200000, "burn_in": null, "thinning": 10,
                "move_mix": [0.4, 0.4, 0.2], "audit_every": 10000,
                "n_outer": 400, "inner_steps": 2000},
      "verification": {"n_samples": 20000, "eps_h": null},   # null: half the largest admissible value
      "sweep": {"cubes_per_axis": [1, 3, 5], "lam": 1.0},
      "suites": ["free-measure"]
    }
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .interaction import CertificationError, PotentialSpec, certify, max_admissible_eps_h
from .io import default_out_dir
from .lattice import CubeGrid, Window
from .levy import LevySpec
from .measures import DiscreteMeasure

DEFAULTS: dict = {
    "seed": 20240611,
    "out_dir": None,
    "levy": {"kind": "gamma", "theta": 1.0, "trunc": 1e-6},
    "grid": {"d": 1, "delta": 1.0, "R": None},
    "potential": {"family": "core_shell", "A": 10.0, "b": 1.0, "self_interaction": True},
    "window": {"cubes_per_axis": 4},
    "boundary": None,
    "chain": {"n_steps": 200_000, "burn_in": None, "thinning": 10,
              "move_mix": [0.4, 0.4, 0.2], "audit_every": 10_000,
              "n_outer": 400, "inner_steps": 2000},
    "verification": {"n_samples": 20_000, "eps_h": None},
    "sweep": {"cubes_per_axis": [1, 3, 5], "lam": 1.0},
    "suites": ["free-measure"],
}

_POTENTIAL_KEYS = {"step": {"family", "A", "self_interaction"},
                   "core_shell": {"family", "A", "b", "self_interaction"},
                   "zero": {"family"}}
_WINDOW_KEYS = ({"cubes_per_axis"}, {"cubes"}, {"lower", "upper"})


class ConfigError(ValueError):
    """Invalid configuration; ``key_path`` locates the offending entry."""

    def __init__(self, key_path: str, message: str, values: Optional[dict] = None):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path
        self.values = values or {}


@dataclass(frozen=True, eq=False)
class RunConfig:
    levy: LevySpec
    potential: PotentialSpec
    grid: CubeGrid
    window: Window
    boundary: Optional[DiscreteMeasure]
    chain: dict
    n_samples: int
    eps_h: float
    sweep: dict
    suites: list
    seed: int
    out_dir: Path
    raw: dict = field(default_factory=dict)

    def chain_config(self, window: Optional[Window] = None, **overrides):
        from .gibbs import ChainConfig
        c = self.chain
        kw = dict(levy=self.levy, potential=self.potential, window=window or self.window,
                  n_steps=c["n_steps"], burn_in=c["burn_in"], thinning=c["thinning"],
                  move_mix=tuple(c["move_mix"]), seed=self.seed, boundary=self.boundary,
                  audit_every=c["audit_every"])
        kw.update(overrides)
        return ChainConfig(**kw)


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(k, f"duplicate key {k!r}")
        out[k] = v
    return out


def _merge(defaults: Any, given: Any, path: str) -> Any:
    if isinstance(defaults, dict) and given is not None:
        if not isinstance(given, dict):
            raise ConfigError(path, f"expected an object, got {type(given).__name__}")
        free = path in ("potential", "window", "boundary")
        out = copy.deepcopy(defaults)
        if free:
            # these sections choose their own keys; validated later
            return copy.deepcopy(given)
        for k, v in given.items():
            sub = f"{path}.{k}" if path else k
            if k not in defaults:
                raise ConfigError(sub, f"unknown key {k!r}")
            out[k] = _merge(defaults[k], v, sub)
        return out
    return copy.deepcopy(given) if given is not None else copy.deepcopy(defaults)


def _number(v, path, positive=False, integer=False, allow_zero=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if positive and not (v > 0 or (allow_zero and v == 0)):
        raise ConfigError(path, f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _window(spec: dict, grid: CubeGrid) -> Window:
    keys = set(spec)
    if keys not in _WINDOW_KEYS:
        raise ConfigError("window", f"expected one of {[sorted(k) for k in _WINDOW_KEYS]}, "
                          f"got keys {sorted(keys)}")
    if "cubes_per_axis" in spec:
        n = _number(spec["cubes_per_axis"], "window.cubes_per_axis", True, True)
        return centred_cube_window(n, grid)
    if "cubes" in spec:
        try:
            return Window.from_cubes([tuple(k) for k in spec["cubes"]], grid)
        except (TypeError, ValueError) as err:
            raise ConfigError("window.cubes", str(err)) from None
    try:
        w = Window.box(spec["lower"], spec["upper"])
    except (TypeError, ValueError) as err:
        raise ConfigError("window", str(err)) from None
    if w.dimension != grid.dimension:
        raise ConfigError("window", f"dimension {w.dimension} != grid.d {grid.dimension}")
    return w


def centred_cube_window(n: int, grid: CubeGrid) -> Window:
    """``n`` cubes per axis with indices ``-(n-1)//2, ...``, so cube 0 is always included."""
    start = -((n - 1) // 2)
    axis = range(start, start + n)
    return Window.from_cubes(itertools.product(axis, repeat=grid.dimension), grid)


def _potential(spec: dict, grid: CubeGrid) -> PotentialSpec:
    fam = spec.get("family")
    if fam not in _POTENTIAL_KEYS:
        raise ConfigError("potential.family", f"unknown family {fam!r}; "
                          f"choose from {sorted(_POTENTIAL_KEYS)}")
    extra = set(spec) - _POTENTIAL_KEYS[fam]
    if extra:
        k = sorted(extra)[0]
        raise ConfigError(f"potential.{k}", f"unknown key {k!r} for family {fam!r}")
    si = spec.get("self_interaction", True)
    if not isinstance(si, bool):
        raise ConfigError("potential.self_interaction", "expected true or false")
    if fam == "step":
        if grid.range != grid.delta:
            raise ConfigError("grid.R", "the step potential has range delta; set R = delta")
        pot = PotentialSpec.step(_number(spec.get("A"), "potential.A"), grid.delta, si)
    elif fam == "core_shell":
        pot = PotentialSpec.core_shell(_number(spec.get("A"), "potential.A"),
                                       _number(spec.get("b", 0.0), "potential.b"),
                                       grid.delta, grid.range, si)
    else:
        pot = PotentialSpec.zero(grid.delta, grid.range)
    try:
        return certify(pot, grid)
    except CertificationError as err:
        raise ConfigError("potential", str(err), {"clause": err.clause, **err.values}) from None


def parse_config_dict(data: Optional[dict]) -> RunConfig:
    """Validate a config mapping (``None`` gives the defaults)."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("", "the config must be a JSON object")
    merged = _merge(DEFAULTS, data, "")
    levy_d = merged["levy"]
    if levy_d["kind"] != "gamma":
        raise ConfigError("levy.kind", "only the gamma kind can be configured from a file")
    try:
        levy = LevySpec.gamma(_number(levy_d["theta"], "levy.theta", True),
                              _number(levy_d["trunc"], "levy.trunc", True))
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError("levy", str(err)) from None
    g = merged["grid"]
    d = _number(g["d"], "grid.d", True, True)
    delta = _number(g["delta"], "grid.delta", True)
    R = delta if g["R"] is None else _number(g["R"], "grid.R", True)
    if R < delta:
        raise ConfigError("grid.R", f"R = {R} must be >= delta = {delta}")
    grid = CubeGrid(d, delta, R)
    potential = _potential(merged["potential"], grid)
    window = _window(merged["window"], grid)
    boundary = None
    if merged["boundary"] is not None:
        b = merged["boundary"]
        if set(b) != {"positions", "marks"}:
            raise ConfigError("boundary", "expected keys 'positions' and 'marks'")
        try:
            boundary = DiscreteMeasure(np.asarray(b["positions"], float).reshape(-1, d),
                                       b["marks"])
        except (TypeError, ValueError) as err:
            raise ConfigError("boundary", str(err)) from None
    c = merged["chain"]
    for k in ("n_steps", "thinning", "audit_every", "n_outer", "inner_steps"):
        c[k] = _number(c[k], f"chain.{k}", True, True)
    if c["burn_in"] is not None:
        c["burn_in"] = _number(c["burn_in"], "chain.burn_in", True, True, allow_zero=True)
        if c["burn_in"] >= c["n_steps"]:
            raise ConfigError("chain.burn_in", "must be smaller than chain.n_steps")
    mix = c["move_mix"]
    if (not isinstance(mix, list) or len(mix) != 3
            or any(not 0 <= _number(p, "chain.move_mix") <= 1 for p in mix)
            or abs(sum(mix) - 1) > 1e-12):
        raise ConfigError("chain.move_mix", f"three probabilities summing to 1, got {mix}")
    v = merged["verification"]
    n_samples = _number(v["n_samples"], "verification.n_samples", True, True)
    if v["eps_h"] is None:
        eps_h = 0.5 * max_admissible_eps_h(potential, grid, levy.theta)
        if not 0 < eps_h < float("inf"):
            eps_h = 1.0
    else:
        eps_h = _number(v["eps_h"], "verification.eps_h", True)
    sw = merged["sweep"]
    sizes = sw["cubes_per_axis"]
    if not isinstance(sizes, list) or len(sizes) < 2 or sorted(set(sizes)) != sizes:
        raise ConfigError("sweep.cubes_per_axis", "need a strictly increasing list of sizes")
    from .verification import SUITES
    suites = merged["suites"]
    if not isinstance(suites, list) or any(s not in SUITES for s in suites):
        raise ConfigError("suites", f"entries must be among {SUITES}")
    seed = _number(merged["seed"], "seed", integer=True)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    out_dir = Path(merged["out_dir"]) if merged["out_dir"] else default_out_dir()
    return RunConfig(levy=levy, potential=potential, grid=grid, window=window,
                     boundary=boundary, chain=c, n_samples=n_samples, eps_h=eps_h,
                     sweep={"cubes_per_axis": [int(s) for s in sizes],
                            "lam": _number(sw["lam"], "sweep.lam", True, allow_zero=True)},
                     suites=suites, seed=seed, out_dir=out_dir, raw=merged)


def parse_config(path=None) -> RunConfig:
    """Read and validate a JSON config file (``None``: all defaults)."""
    if path is None:
        return parse_config_dict(None)
    path = Path(path)
    if not path.exists():
        raise ConfigError("", f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text(), object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as err:
        raise ConfigError("", f"{path}: JSON parse error at line {err.lineno} "
                          f"column {err.colno}: {err.msg}") from None
    return parse_config_dict(data)
