"""Experiment configuration: a flat JSON tree with fail-closed parsing.

Five sections (market, reward, solver, girl, io), every key optional with
defaults matching the reference experiment; unknown sections or keys are
errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .girl import FitConfig
from .glearner import SolverConfig
from .market import MarketSpec
from .rewards import RewardParams


@dataclass(frozen=True)
class RewardSection:
    lam: float = 0.001
    eta: float = 1.01
    rho: float = 0.4
    omega: float = 0.15
    benchmark_rate: float = 0.5  # continuous compounding per year
    initial_wealth: float = 1000.0

    def params(self) -> RewardParams:
        return RewardParams(lam=self.lam, eta=self.eta, rho=self.rho, omega=self.omega)


@dataclass(frozen=True)
class SolverSection:
    beta: float = 1000.0
    gamma: float = 0.95
    max_inner_iters: int = 100
    inner_tol: float = 1e-9
    sigma_p_scale: float = 10.0
    omega_in_quu: bool = False

    def config(self) -> SolverConfig:
        return SolverConfig(
            beta=self.beta, gamma=self.gamma, max_inner_iters=self.max_inner_iters,
            inner_tol=self.inner_tol, omega_in_quu=self.omega_in_quu,
        )


@dataclass(frozen=True)
class GirlSection:
    learning_rate: float = 0.1
    stop_tol: float = 1e-8
    max_iters: int = 1000
    fd_step: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    theta0_scale: float = 2.0

    def fit_config(self) -> FitConfig:
        return FitConfig(
            learning_rate=self.learning_rate, stop_tol=self.stop_tol,
            max_iters=self.max_iters, fd_step=self.fd_step,
            adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )


@dataclass(frozen=True)
class IoSection:
    outdir: str = "out"
    seed: int = 7


@dataclass(frozen=True)
class ExperimentConfig:
    market: MarketSpec = field(default_factory=MarketSpec)
    reward: RewardSection = field(default_factory=RewardSection)
    solver: SolverSection = field(default_factory=SolverSection)
    girl: GirlSection = field(default_factory=GirlSection)
    io: IoSection = field(default_factory=IoSection)

    @property
    def outdir(self) -> Path:
        return Path(self.io.outdir)

    @property
    def rf_period(self) -> float:
        return self.market.r_f * self.market.dt


_SECTION_TYPES = {
    "market": MarketSpec,
    "reward": RewardSection,
    "solver": SolverSection,
    "girl": GirlSection,
    "io": IoSection,
}

# tuple-valued MarketSpec fields arrive as JSON lists
_TUPLE_KEYS = {"alpha_range", "beta_range", "price_range"}


def _build_section(name: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"unknown key(s) in section '{name}': {', '.join(sorted(unknown))}"
        )
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_KEYS:
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ConfigError(f"'{name}.{key}' must be a two-element interval")
            value = (float(value[0]), float(value[1]))
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section '{name}': {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(data) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    io_sec = _build_section("io", IoSection, data.get("io", {}))
    market_data = dict(data.get("market", {}))
    market_data.setdefault("seed", io_sec.seed)  # the io seed drives the simulation
    cfg = ExperimentConfig(
        market=_build_section("market", MarketSpec, market_data),
        reward=_build_section("reward", RewardSection, data.get("reward", {})),
        solver=_build_section("solver", SolverSection, data.get("solver", {})),
        girl=_build_section("girl", GirlSection, data.get("girl", {})),
        io=io_sec,
    )
    try:
        cfg.market.validate()
        cfg.reward.params().validate()
        cfg.solver.config().validate()
        cfg.girl.fit_config().validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing input: config file '{path}' not found")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file '{path}' is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def default_config(seed: int | None = None, outdir: str | None = None) -> ExperimentConfig:
    data: dict = {"io": {}}
    if seed is not None:
        data["io"]["seed"] = seed
    if outdir is not None:
        data["io"]["outdir"] = outdir
    return config_from_dict(data)
