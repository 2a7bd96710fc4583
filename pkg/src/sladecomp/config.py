"""Experiment configuration (TOML)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .decompose import DecomposeConfig
from .slo import FeatureSpec, SloVector
from .synth import DomainGroundTruth
from .train import MethodKind, TrainConfig

DEFAULT_SAMPLE_SIZES = (50, 100, 150, 200)


@dataclass(frozen=True)
class DomainConfig:
    name: str
    truth: DomainGroundTruth
    spec: FeatureSpec = field(default_factory=FeatureSpec)


def default_domains() -> tuple[DomainConfig, ...]:
    return (
        DomainConfig("access", DomainGroundTruth(0.07, 8.0, 3.0)),
        DomainConfig("transport", DomainGroundTruth(0.06, 10.0, 4.0)),
        DomainConfig("core", DomainGroundTruth(0.08, 6.0, 1.0)),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    domains: tuple[DomainConfig, ...] = field(default_factory=default_domains)
    e2e: SloVector = SloVector(100.0, 0.5)
    sample_sizes: tuple[int, ...] = DEFAULT_SAMPLE_SIZES
    methods: tuple[MethodKind, ...] = tuple(MethodKind)
    repetitions: int = 50
    seed: int = 2024
    train: TrainConfig = field(default_factory=TrainConfig)
    decompose: DecomposeConfig = field(default_factory=DecomposeConfig)
    optimum_grid_resolution: int = 201
    record_timing: bool = True
    workers: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if any(k < 5 for k in self.sample_sizes):
            raise ValueError("sample sizes must be >= 5")
        if not self.domains:
            raise ValueError("need at least one domain")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def truths(self) -> list[DomainGroundTruth]:
        return [d.truth for d in self.domains]

    @property
    def specs(self) -> list[FeatureSpec]:
        return [d.spec for d in self.domains]

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def _sub(cls, table: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**table)


def from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    kw = {}
    exp = dict(raw.pop("experiment", {}))
    if "e2e_delay_ms" in exp or "e2e_throughput_gbps" in exp:
        kw["e2e"] = SloVector(float(exp.pop("e2e_delay_ms", 100.0)), float(exp.pop("e2e_throughput_gbps", 0.5)))
    if "sample_sizes" in exp:
        kw["sample_sizes"] = tuple(int(k) for k in exp.pop("sample_sizes"))
    if "methods" in exp:
        kw["methods"] = tuple(MethodKind.parse(m) for m in exp.pop("methods"))
    for key in ("repetitions", "seed", "optimum_grid_resolution", "workers"):
        if key in exp:
            kw[key] = int(exp.pop(key))
    if "record_timing" in exp:
        kw["record_timing"] = bool(exp.pop("record_timing"))
    if "output_dir" in exp:
        kw["output_dir"] = str(exp.pop("output_dir"))
    if exp:
        raise ValueError(f"unknown [experiment] keys: {sorted(exp)}")

    if "domain" in raw:
        domains = []
        for i, d in enumerate(raw.pop("domain")):
            d = dict(d)
            spec = FeatureSpec(
                tuple(d.pop("delay_interval", (0.0, 100.0))),
                tuple(d.pop("throughput_interval", (0.0, 1.0))),
            )
            name = str(d.pop("name", f"domain{i}"))
            truth = DomainGroundTruth(float(d.pop("a_delay")), float(d.pop("b_thr")), float(d.pop("c_off")),
                                      str(d.pop("form", "logistic-linear")))
            if d:
                raise ValueError(f"unknown [[domain]] keys: {sorted(d)}")
            domains.append(DomainConfig(name, truth, spec))
        kw["domains"] = tuple(domains)
    if "train" in raw:
        kw["train"] = _sub(TrainConfig, raw.pop("train"))
    if "decompose" in raw:
        kw["decompose"] = _sub(DecomposeConfig, raw.pop("decompose"))
    if raw:
        raise ValueError(f"unknown config sections: {sorted(raw)}")
    return ExperimentConfig(**kw)


def load_config(path=None) -> ExperimentConfig:
    """Read a TOML config; ``None`` loads the bundled ``default.toml``."""
    if path is None:
        text = resources.files("sladecomp").joinpath("default.toml").read_text()
    else:
        text = Path(path).read_text()
    return from_dict(tomllib.loads(text))
