"""
JSON configuration documents for experiments and coupling diagnostics
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from analysis import stationary_density_cw
from config import settings
from errors import ConfigError
from integrator import CouplingConfig, InitialLaw, SchemeConfig
from measures import WeightFamily
from metrics import Density1D
from model import (CurieWeissParams, DriftModel, curie_weiss_model, default_truncation_cw,
                   polynomial_model)

logger = logging.getLogger(__name__)

PRESETS: Dict[str, Dict] = {
    "desk": {"dt": 0.1, "n_steps": 20_000, "n_paths": 200},
    "paper": {"dt": 0.1, "n_steps": 50_000, "n_paths": 1000},
}

# The interaction strengths of the reference Curie-Weiss study
STUDY_SWEEP = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2]


class _Doc(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSpec(_Doc):
    """Drift model document; `sweep` values replace K (or the polynomial interaction)"""

    type: Literal["curie_weiss", "custom_polynomial_1d"] = "curie_weiss"
    beta: float = Field(1.0, gt=0)
    K: float = Field(0.2, ge=0)
    truncation_L: Optional[float] = Field(None, gt=0)
    q: float = Field(4.0, gt=1)
    # custom_polynomial_1d: drift sum_i a_i x^i + interaction * mean(mu)
    coefficients: List[float] = Field(default_factory=list)
    kappa_coefficients: List[float] = Field(default_factory=list)
    interaction: float = 0.0
    eta: Optional[float] = Field(None, ge=0)

    @model_validator(mode="after")
    def check_polynomial(self) -> "ModelSpec":
        if self.type == "custom_polynomial_1d":
            if not self.coefficients or not self.kappa_coefficients:
                raise ValueError("custom_polynomial_1d needs coefficients and kappa_coefficients")
        return self

    def build(self, sweep_value: Optional[float] = None) -> DriftModel:
        """
        Build the drift model
        Args:
            sweep_value: Replacement for K (curie_weiss) or interaction (polynomial)
        Returns:
            DriftModel carrying a finite truncation level
        """
        if self.type == "curie_weiss":
            K = self.K if sweep_value is None else sweep_value
            truncation = self.truncation_L or default_truncation_cw(self.beta)
            return curie_weiss_model(CurieWeissParams(self.beta, K), truncation=truncation, q=self.q)
        interaction = self.interaction if sweep_value is None else sweep_value
        eta = self.eta if sweep_value is None else None
        return polynomial_model(self.coefficients, self.kappa_coefficients, interaction=interaction,
                                truncation=self.truncation_L, eta=eta, q=self.q)

    @property
    def sweep_parameter(self) -> str:
        return "K" if self.type == "curie_weiss" else "interaction"


class WeightFamilySpec(_Doc):
    kind: Literal["lebesgue", "discrete", "power"] = "lebesgue"
    tau: Optional[float] = Field(None, gt=0)
    gamma: float = Field(0.0, ge=0)
    eps1: float = Field(0.5, gt=0, le=1)
    eps2: float = Field(0.5, gt=0, le=1)

    def build(self) -> WeightFamily:
        if self.kind == "lebesgue":
            return WeightFamily.lebesgue()
        if self.kind == "discrete":
            if self.tau is None:
                raise ConfigError("discrete weights need tau")
            return WeightFamily.discrete(self.tau)
        return WeightFamily.power(self.gamma)


class InitialLawSpec(_Doc):
    kind: Literal["point", "normal", "samples"] = "normal"
    point: List[float] = Field(default_factory=lambda: [0.0])
    samples: Optional[List[Union[float, List[float]]]] = None

    def build(self) -> InitialLaw:
        if self.kind == "point":
            return InitialLaw.point_mass(self.point)
        if self.kind == "samples":
            rows = tuple(tuple(np.atleast_1d(np.asarray(s, dtype=float)).tolist()) for s in self.samples or [])
            return InitialLaw("samples", samples=rows)
        return InitialLaw("normal")


class SchemeSpec(_Doc):
    dt: float = Field(0.1, gt=0)
    n_steps: int = Field(20_000, ge=1)
    n_paths: int = Field(200, ge=1)
    n0: float = Field(10_000.0, ge=1)
    alpha: float = Field(0.1, gt=0, le=0.5)
    initial: InitialLawSpec = Field(default_factory=InitialLawSpec)

    def build(self, seed: int, initial: Optional[InitialLaw] = None) -> SchemeConfig:
        return SchemeConfig(dt=self.dt, n_steps=self.n_steps, n_paths=self.n_paths, n0=self.n0,
                            alpha=self.alpha, seed=seed, initial=initial or self.initial.build())


class CheckpointSpec(_Doc):
    """Geometric spacing by default; linear mode checkpoints every `every` steps"""

    mode: Literal["geometric", "linear"] = "geometric"
    count: int = Field(40, ge=2)
    first: int = Field(10, ge=1)
    every: int = Field(100, ge=1)

    def steps(self, n_steps: int) -> List[int]:
        if self.first > n_steps:
            raise ConfigError(f"checkpoints.first={self.first} lies beyond the horizon of {n_steps} steps")
        if self.mode == "linear":
            steps = list(range(self.every, n_steps + 1, self.every))
        else:
            steps = np.unique(np.round(np.geomspace(self.first, n_steps, self.count)).astype(int)).tolist()
        if not steps or steps[-1] != n_steps:
            steps.append(n_steps)
        return steps


class ReferenceSpec(_Doc):
    """
    Reference density: the Curie-Weiss stationary density, or the Gibbs density
    exp(2 V) of a one-dimensional polynomial drift V' = b(., delta_0)
    """

    type: Literal["curie_weiss", "gibbs_polynomial"] = "curie_weiss"
    table_size: int = Field(0, ge=0)

    def build(self, model: ModelSpec) -> Density1D:
        if self.type == "curie_weiss":
            if model.type != "curie_weiss":
                raise ConfigError("reference.type curie_weiss needs a curie_weiss model")
            return stationary_density_cw(CurieWeissParams(model.beta, model.K), self.table_size)
        if model.type != "custom_polynomial_1d":
            raise ConfigError("reference.type gibbs_polynomial needs a custom_polynomial_1d model")
        potential = Polynomial(model.coefficients).integ()
        return Density1D(lambda x: 2.0 * potential(x), table_size=self.table_size, name="gibbs_polynomial")


class ExperimentConfig(_Doc):
    name: str = "curie_weiss_study"
    model: ModelSpec = Field(default_factory=ModelSpec)
    scheme: SchemeSpec = Field(default_factory=SchemeSpec)
    weights: WeightFamilySpec = Field(default_factory=WeightFamilySpec)
    eval_weights: Optional[WeightFamilySpec] = None
    checkpoints: CheckpointSpec = Field(default_factory=CheckpointSpec)
    reference: ReferenceSpec = Field(default_factory=ReferenceSpec)
    sweep: List[float] = Field(default_factory=lambda: list(STUDY_SWEEP))
    output_dir: Optional[str] = None
    seed: Optional[int] = None
    threads: Optional[int] = Field(None, ge=1)
    assumption_samples: Optional[int] = Field(None, ge=1)

    @field_validator("sweep")
    @classmethod
    def validate_sweep(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("sweep must list at least one value")
        return v

    @property
    def evaluation_weights(self) -> WeightFamilySpec:
        return self.eval_weights or self.weights

    @property
    def master_seed(self) -> int:
        return settings.default_seed if self.seed is None else self.seed

    def checkpoint_steps(self) -> List[int]:
        return self.checkpoints.steps(self.scheme.n_steps)


class CouplingDoc(_Doc):
    """Markov-versus-Markov coupling run with the measure argument frozen"""

    name: str = "coupling"
    model: ModelSpec = Field(default_factory=ModelSpec)
    frozen: Literal["dirac", "stationary"] = "dirac"
    frozen_point: List[float] = Field(default_factory=lambda: [0.0])
    delta: float = Field(0.01, gt=0, lt=1)
    coalesce: bool = True
    scheme: SchemeSpec = Field(default_factory=lambda: SchemeSpec(dt=0.01, n_steps=2000, n_paths=1000))
    initial_a: InitialLawSpec = Field(default_factory=lambda: InitialLawSpec(kind="point", point=[2.0]))
    initial_b: InitialLawSpec = Field(default_factory=lambda: InitialLawSpec(kind="point", point=[-2.0]))
    checkpoints: CheckpointSpec = Field(default_factory=lambda: CheckpointSpec(mode="linear", every=10))
    output_dir: Optional[str] = None
    seed: Optional[int] = None
    threads: Optional[int] = Field(None, ge=1)

    @property
    def master_seed(self) -> int:
        return settings.default_seed if self.seed is None else self.seed

    def build(self) -> CouplingConfig:
        scheme = self.scheme.build(self.master_seed, initial=self.initial_a.build())
        return CouplingConfig(delta=self.delta, scheme=scheme, initial_b=self.initial_b.build(),
                              coalesce=self.coalesce)


def _field_path(error: Dict) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<document>"


def _validate(cls, document: Dict):
    try:
        return cls.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(f"invalid field {_field_path(first)}: {first.get('msg')}") from e


def _read_json(path: Union[str, Path]) -> Dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return document


def parse_experiment_config(document: Dict) -> ExperimentConfig:
    return _validate(ExperimentConfig, document)


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load an experiment document
    Args:
        path: JSON file
    Returns:
        ExperimentConfig; ConfigError names the first invalid field
    """
    cfg = parse_experiment_config(_read_json(path))
    logger.info(f"Loaded experiment {cfg.name} from {path}")
    return cfg


def load_coupling_config(path: Union[str, Path]) -> CouplingDoc:
    return _validate(CouplingDoc, _read_json(path))


def apply_overrides(cfg: ExperimentConfig, preset: Optional[str] = None, seed: Optional[int] = None,
                    threads: Optional[int] = None, output_dir: Optional[str] = None) -> ExperimentConfig:
    """
    Command-line overrides; a preset replaces the scheme size (dt, steps, paths)
    """
    update = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        update["scheme"] = cfg.scheme.model_copy(update=PRESETS[preset])
    if seed is not None:
        update["seed"] = seed
    if threads is not None:
        if threads < 1:
            raise ConfigError(f"threads must be positive, got {threads}")
        update["threads"] = threads
    if output_dir is not None:
        update["output_dir"] = output_dir
    return cfg.model_copy(update=update)


def default_experiment(preset: str = "desk") -> ExperimentConfig:
    """Curie-Weiss study with beta = 1 over the six K values, standard normal start"""
    return apply_overrides(ExperimentConfig(), preset=preset)
