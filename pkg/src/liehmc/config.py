"""Flat ``section.key = value`` run configuration.

Blank lines and lines starting with ``#`` are ignored.  Values are parsed by
key; lists are comma separated.  :func:`serialize` writes every key in a fixed
order, so ``serialize(parse(serialize(c))) == serialize(c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .hmc import INTEGRATORS, POSITION_STEPS, TRAJECTORY_EXP_CONFIG, HmcConfig
from .matexp import ExpConfig, Strategy
from .potentials import POTENTIALS, Potential, get_potential
from .spaces import SPACES, HomogeneousSpaceSpec, get_space


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "space.name": (str, "s2"),
    "space.n": (int, 3),
    "potential.name": (str, "none"),
    "hmc.dt": (float, 0.1),
    "hmc.tau": (float, 1.0),
    "hmc.n_samples": (int, 1000),
    "hmc.seed": (int, 0),
    "hmc.integrator": (str, "leapfrog"),
    "hmc.randomize_length": (_bool, False),
    "hmc.reproject_every": (int, 1),
    "hmc.position_step": (str, "exact"),
    "hmc.n_chains": (int, 1),
    "exp.taylor_degree": (int, TRAJECTORY_EXP_CONFIG.taylor_degree),
    "exp.target_accuracy": (float, TRAJECTORY_EXP_CONFIG.target_accuracy),
    "exp.safety_factor": (float, TRAJECTORY_EXP_CONFIG.safety_factor),
    "exp.strategy": (str, TRAJECTORY_EXP_CONFIG.strategy.value),
    "output.dir": (str, "out"),
    "output.formats": (_str_list, ["csv", "json"]),
    "geodesic.momentum": (_float_list, []),
    "scan.step_sizes": (_float_list, [0.1, 0.05, 0.025, 0.0125]),
    "scan.n_samples": (int, 100),
    "bench.kinds": (_str_list, ["so3", "so5", "h2-twosheet", "h2-onesheet"]),
    "bench.norms": (_float_list, [0.0, 0.5, 2.0, 10.0]),
    "bench.n_random": (int, 50),
}

#: Spaces that take a dimension parameter.
_SIZED_SPACES = {"sphere-n"}


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and serialize(self) == serialize(other)

    def with_overrides(self, pairs: dict[str, str]) -> "RunConfig":
        out = dict(self.values)
        for k, v in pairs.items():
            out[k] = _parse_value(k, v)
        cfg = RunConfig(out)
        validate(cfg)
        return cfg

    # resolved objects

    @property
    def seed(self) -> int:
        return self.values["hmc.seed"]

    def space(self) -> HomogeneousSpaceSpec:
        name = self.values["space.name"]
        if name in _SIZED_SPACES:
            return get_space(name, n=self.values["space.n"])
        return get_space(name)

    def potential(self) -> Potential:
        return get_potential(self.values["potential.name"])

    def exp_config(self) -> ExpConfig:
        v = self.values
        return ExpConfig(v["exp.taylor_degree"], v["exp.target_accuracy"], v["exp.safety_factor"], v["exp.strategy"])

    def hmc_config(self, seed: int | None = None) -> HmcConfig:
        v = self.values
        return HmcConfig(
            dt=v["hmc.dt"],
            tau=v["hmc.tau"],
            n_samples=v["hmc.n_samples"],
            seed=v["hmc.seed"] if seed is None else seed,
            integrator=v["hmc.integrator"],
            randomize_length=v["hmc.randomize_length"],
            reproject_every=v["hmc.reproject_every"],
            position_step=v["hmc.position_step"],
            exp=self.exp_config(),
        )


def _parse_value(key: str, text: str) -> Any:
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key {key!r}")
    parser, _ = SCHEMA[key]
    try:
        return parser(text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None


def parse(text: str) -> RunConfig:
    """Parse configuration text; missing keys take their defaults, then the result is validated."""
    cfg = RunConfig()
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        cfg.values[key] = _parse_value(key, value)
    validate(cfg)
    return cfg


def serialize(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_fmt(cfg.values[k])}\n" for k in SCHEMA)


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def validate(cfg: RunConfig) -> None:
    """Resolve every reference and build every sub-config; raise :class:`ConfigError` on failure."""
    v = cfg.values
    if v["space.name"] not in SPACES:
        raise ConfigError(f"unknown space {v['space.name']!r}; known: {sorted(SPACES)}")
    if v["potential.name"] not in POTENTIALS:
        raise ConfigError(f"unknown potential {v['potential.name']!r}; known: {sorted(POTENTIALS)}")
    if v["hmc.integrator"] not in INTEGRATORS:
        raise ConfigError(f"hmc.integrator must be one of {INTEGRATORS}")
    if v["hmc.position_step"] not in POSITION_STEPS:
        raise ConfigError(f"hmc.position_step must be one of {POSITION_STEPS}")
    if v["exp.strategy"] not in {s.value for s in Strategy}:
        raise ConfigError(f"exp.strategy must be one of {[s.value for s in Strategy]}")
    if v["hmc.n_chains"] < 1:
        raise ConfigError("hmc.n_chains must be >= 1")
    if v["scan.n_samples"] < 4:
        raise ConfigError("scan.n_samples must be >= 4")
    if v["bench.n_random"] < 1:
        raise ConfigError("bench.n_random must be >= 1")
    bad = [f for f in v["output.formats"] if f not in ("csv", "json")]
    if bad:
        raise ConfigError(f"unsupported output formats {bad}")
    for key in ("scan.step_sizes", "bench.norms", "geodesic.momentum"):
        if not all(math.isfinite(x) for x in v[key]):
            raise ConfigError(f"{key} must contain finite numbers")
    if any(x <= 0 for x in v["scan.step_sizes"]):
        raise ConfigError("scan.step_sizes must be positive")
    try:
        space = cfg.space()
        pot = cfg.potential()
        cfg.hmc_config()
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    if pot.dim is not None and pot.dim != space.n:
        raise ConfigError(f"potential {v['potential.name']!r} lives in R^{pot.dim}, space in R^{space.n}")
    if v["geodesic.momentum"] and len(v["geodesic.momentum"]) != space.dim_p:
        raise ConfigError(f"geodesic.momentum needs {space.dim_p} coefficients")
