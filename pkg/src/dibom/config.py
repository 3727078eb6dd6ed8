"""Experiment configuration schema, validated before any compute starts."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1
PRESET_DIR = Path(__file__).parent / "presets"

ExperimentKind = Literal["train", "compare", "fbe", "landscape", "teleport", "corruption", "params", "barren"]
ModelKindName = Literal["dibom", "hardware_efficient", "ising_born", "dissipative"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSpec(_Strict):
    kind: ModelKindName = "dibom"
    n: int = Field(2, ge=1, le=10)
    L: int = Field(5, ge=0)
    connectivity: Literal["all", "linear"] = "all"
    n_hidden: int = Field(0, ge=0)


class DatasetSpec(_Strict):
    intrinsic: Literal[
        "single_qubit_on_q2",
        "gcz_layer",
        "single_qubit_times_gcz",
        "product_then_gcz",
        "dibom_shape",
        "alternating_stack",
        "haar_random",
        "teleportation",
    ] = "single_qubit_times_gcz"
    L: Optional[int] = Field(None, ge=1)
    N: int = Field(20, ge=2)
    train_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    product_inputs: bool = False
    # added to the run seed to get the data seed
    seed_offset: int = 0


class TrainingSpec(_Strict):
    lam: float = Field(0.5, gt=0)
    epsilon: float = Field(0.1, gt=0)
    max_iters: int = Field(300, ge=0)
    method: Literal["simultaneous", "layer_by_layer", "nesterov", "gradient_descent"] = "simultaneous"
    loss: Literal["global", "local"] = "global"
    convergence_tol: float = Field(1e-6, gt=0)
    schedule: Literal["round_robin", "random"] = "round_robin"
    eta: float = Field(0.1, gt=0)
    fd_epsilon: float = Field(1e-6, gt=0)


class CompareSpec(_Strict):
    kinds: list[ModelKindName] = ["dibom", "hardware_efficient", "ising_born", "dissipative"]
    param_table_L: list[int] = [5, 2241]


class LandscapeSpec(_Strict):
    coords: tuple[int, int] = (0, 1)
    span: float = Field(1.5707963267948966, gt=0)
    points: int = Field(21, ge=3)
    pretrain_iters: int = Field(500, ge=0)

    @field_validator("points")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError("points must be odd so the grid contains its centre")
        return v


class BarrenSpec(_Strict):
    n_values: list[int] = [2, 3, 4, 5]
    loss_kinds: list[Literal["global", "local"]] = ["local", "global"]
    threshold: float = Field(1e-2, gt=0)


class TeleportSpec(_Strict):
    L: int = Field(3, ge=1)


class CorruptionSpec(_Strict):
    ratios: list[float] = [0.0, 0.2, 0.4, 0.6]
    layer_sweep_ratio: float = Field(0.2, ge=0, le=1)
    layer_sweep_L: list[int] = [3, 5, 7]

    @field_validator("ratios")
    @classmethod
    def _in_unit(cls, v):
        if not v or any(not 0.0 <= r <= 1.0 for r in v):
            raise ValueError("ratios must be a nonempty list inside [0, 1]")
        return v


class FBESpec(_Strict):
    n: int = Field(3, ge=1, le=6)
    architectures: list[Literal["dibom", "hardware_efficient", "general", "fixed"]] = ["dibom", "hardware_efficient"]
    L_grid: list[int] = [1, 3, 5, 9, 13, 17, 21]
    k: int = Field(100, ge=1)
    m: int = Field(10, ge=1)
    restarts: int = Field(3, ge=1)
    inner_iters: int = Field(100, ge=1)
    optimizer: Literal["gradient", "k_update"] = "gradient"
    step: float = Field(0.05, gt=0)


class ParamsSpec(_Strict):
    kinds: list[ModelKindName] = ["dibom", "hardware_efficient", "ising_born", "dissipative"]
    n_values: list[int] = [2, 3, 4, 5, 6]
    L_values: list[int] = [5]


class ExperimentConfig(_Strict):
    schema_version: Literal[1]
    experiment: ExperimentKind
    seeds: list[int] = Field(..., min_length=1)
    model: ModelSpec = ModelSpec()
    dataset: DatasetSpec = DatasetSpec()
    training: TrainingSpec = TrainingSpec()
    compare: CompareSpec = CompareSpec()
    landscape: LandscapeSpec = LandscapeSpec()
    barren: BarrenSpec = BarrenSpec()
    teleport: TeleportSpec = TeleportSpec()
    corruption: CorruptionSpec = CorruptionSpec()
    fbe: FBESpec = FBESpec()
    params: ParamsSpec = ParamsSpec()
    note: str = ""

    @model_validator(mode="after")
    def _dataset_matches(self):
        layered = self.dataset.intrinsic in ("dibom_shape", "alternating_stack")
        if layered and self.dataset.L is None:
            raise ValueError(f"dataset.intrinsic={self.dataset.intrinsic} needs dataset.L")
        if not layered and self.dataset.L is not None:
            raise ValueError(f"dataset.intrinsic={self.dataset.intrinsic} takes no dataset.L")
        return self


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def load_config(source: str | Path) -> ExperimentConfig:
    """Read a YAML or JSON file, or a shipped preset by name."""
    path = Path(source)
    if not path.exists():
        candidate = PRESET_DIR / f"{source}.yaml"
        if not candidate.exists():
            raise FileNotFoundError(f"no config file or preset named {source!r} (presets: {', '.join(preset_names())})")
        path = candidate
    data = yaml.safe_load(path.read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path} does not hold a mapping")
    return ExperimentConfig.model_validate(data)
