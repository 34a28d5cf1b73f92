"""Structured run configuration.

One YAML document drives every command. Each section maps onto a dataclass
below; unknown keys are rejected, every default is visible through
``default_config()`` (and the CLI's --print-defaults), and parse ->
serialize -> parse is the identity.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import yaml

from .association import NEW_TARGET_RULES, AssocPriorConfig
from .filter import FilterConfig
from .oumodel import PARAM_NAMES, ModelParams
from .pmcmc import PriorSpec
from .simulate import ScenarioConfig

__all__ = [
    "ConfigError",
    "RunConfig",
    "default_config",
    "load_config",
    "config_to_dict",
    "config_from_dict",
    "dump_config",
]

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """The configuration file failed validation."""


@dataclass
class ModelSection:
    """True / initial model parameters in sampling parameterization."""

    sqrt_q: float = 10.0
    lam: float = 0.5
    sigma: float = 0.5

    def params(self) -> ModelParams:
        return ModelParams.from_vector([self.sqrt_q, self.lam, self.sigma])

    def validate(self):
        if min(self.sqrt_q, self.lam, self.sigma) <= 0.0:
            raise ConfigError("model parameters must be strictly positive")


@dataclass
class PriorSection:
    """Modes of the Gamma(shape 2) parameter priors."""

    sqrt_q_mode: float = 15.0
    lam_mode: float = 1.0 / 3.0
    sigma_mode: float = 0.75

    def spec(self) -> PriorSpec:
        return PriorSpec((self.sqrt_q_mode, self.lam_mode, self.sigma_mode))

    def validate(self):
        if min(self.sqrt_q_mode, self.lam_mode, self.sigma_mode) <= 0.0:
            raise ConfigError("prior modes must be strictly positive")


@dataclass
class FilterSection:
    """Particle count, resampling trigger, assignment prior and clutter."""

    n_particles: int = 5
    ess_threshold: float = 0.5
    share_kalman_work: bool = True
    birth_block_diagonal: bool = False
    clutter_prob: float = 0.0
    clutter_density: float | None = None
    clutter_window: list[float] | None = None
    death_threshold: float | None = None
    new_target_rule: str = "latent_count"
    fixed_new_prob: float = 0.5
    latent_count_max: int | None = None

    def validate(self):
        if self.n_particles < 1:
            raise ConfigError("filter.n_particles must be >= 1")
        if not 0.0 <= self.ess_threshold <= 1.0:
            raise ConfigError("filter.ess_threshold must be in [0, 1]")
        if not 0.0 <= self.clutter_prob < 1.0:
            raise ConfigError("filter.clutter_prob must be in [0, 1)")
        if self.new_target_rule not in NEW_TARGET_RULES:
            raise ConfigError(
                f"filter.new_target_rule must be one of {NEW_TARGET_RULES}"
            )
        if self.clutter_window is not None and len(self.clutter_window) != 4:
            raise ConfigError("filter.clutter_window must be [x0, x1, y0, y1]")

    def filter_config(self, default_window=None) -> FilterConfig:
        window = self.clutter_window
        if window is None and self.clutter_density is None:
            window = default_window
        assoc = AssocPriorConfig(
            clutter_prob=self.clutter_prob,
            clutter_density=self.clutter_density,
            window=tuple(window) if window is not None else None,
            death_threshold=self.death_threshold,
            new_target_rule=self.new_target_rule,
            fixed_new_prob=self.fixed_new_prob,
            latent_count_max=self.latent_count_max,
        )
        return FilterConfig(
            assoc=assoc,
            ess_threshold=self.ess_threshold,
            birth_block_diagonal=self.birth_block_diagonal,
            share_kalman_work=self.share_kalman_work,
        )


@dataclass
class SamplerSection:
    """MCMC algorithm selection and its knobs."""

    algorithm: str = "pgibbs"
    iterations: int = 10_000
    adapt_start: int = 100
    adapt_end: int | None = None
    adapt_jitter: float = 1e-10
    initial_step_frac: float = 0.1
    refresh: bool = True
    refresh_count: int | None = None
    fix_parameters: bool = False
    sample_params: list[str] = field(
        default_factory=lambda: list(PARAM_NAMES)
    )

    def validate(self):
        if self.algorithm not in ("pgibbs", "pmmh"):
            raise ConfigError("sampler.algorithm must be 'pgibbs' or 'pmmh'")
        if self.iterations < 1:
            raise ConfigError("sampler.iterations must be >= 1")
        unknown = set(self.sample_params) - set(PARAM_NAMES)
        if unknown or not self.sample_params:
            raise ConfigError(
                f"sampler.sample_params must be a nonempty subset of {PARAM_NAMES}"
            )
        if self.initial_step_frac <= 0.0:
            raise ConfigError("sampler.initial_step_frac must be positive")


@dataclass
class ScenarioSection:
    """Simulated-scenario shape and the generator's rejection cap."""

    n_targets: int = 30
    n_obs: int = 150
    window: list[float] = field(default_factory=lambda: [0.0, 100.0, 0.0, 100.0])
    time_span: list[float] = field(default_factory=lambda: [0.0, 1.0])
    max_attempts: int = 1_000_000

    def validate(self):
        if self.n_targets < 1 or self.n_obs < self.n_targets:
            raise ConfigError("scenario needs n_obs >= n_targets >= 1")
        if len(self.window) != 4 or len(self.time_span) != 2:
            raise ConfigError("scenario.window is [x0,x1,y0,y1], time_span [t0,t1]")

    def scenario_config(self, theta: ModelParams) -> ScenarioConfig:
        return ScenarioConfig(
            n_targets=self.n_targets,
            n_obs=self.n_obs,
            window=tuple(self.window),
            time_span=tuple(self.time_span),
            theta=theta,
            max_attempts=self.max_attempts,
        )


@dataclass
class ChainsSection:
    """How many chains to run and the base seed they derive from."""

    count: int = 1
    seed: int = 0

    def validate(self):
        if self.count < 1:
            raise ConfigError("chains.count must be >= 1")
        if self.seed < 0:
            raise ConfigError("chains.seed must be nonnegative")


@dataclass
class OutputSection:
    dir: str = "runs/out"

    def validate(self):
        if not self.dir:
            raise ConfigError("output.dir must be nonempty")


@dataclass
class RunConfig:
    format_version: int = FORMAT_VERSION
    model: ModelSection = field(default_factory=ModelSection)
    prior: PriorSection = field(default_factory=PriorSection)
    filter: FilterSection = field(default_factory=FilterSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    chains: ChainsSection = field(default_factory=ChainsSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "RunConfig":
        if self.format_version != FORMAT_VERSION:
            raise ConfigError(
                f"unsupported format_version {self.format_version}"
            )
        for section in fields(self):
            value = getattr(self, section.name)
            if dataclasses.is_dataclass(value):
                value.validate()
        return self

    def filter_config(self) -> FilterConfig:
        return self.filter.filter_config(default_window=self.scenario.window)


def default_config() -> RunConfig:
    return RunConfig()


def _section_from_dict(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_SECTION_CLASSES = {
    "model": ModelSection,
    "prior": PriorSection,
    "filter": FilterSection,
    "sampler": SamplerSection,
    "scenario": ScenarioSection,
    "chains": ChainsSection,
    "output": OutputSection,
}


def config_from_dict(data: dict) -> RunConfig:
    """Build and validate a RunConfig from a plain mapping; unknown keys
    anywhere are an error."""
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    unknown = set(data) - set(_SECTION_CLASSES) - {"format_version"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {}
    if "format_version" in data:
        kwargs["format_version"] = data["format_version"]
    for name, cls in _SECTION_CLASSES.items():
        if name in data:
            kwargs[name] = _section_from_dict(cls, data[name], name)
    try:
        cfg = RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path) -> RunConfig:
    with open(path) as handle:
        data = yaml.safe_load(handle)
    if data is None:
        data = {}
    return config_from_dict(data)


def dump_config(cfg: RunConfig, path=None) -> str:
    text = yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
    if path is not None:
        with open(path, "w") as handle:
            handle.write(text)
    return text
