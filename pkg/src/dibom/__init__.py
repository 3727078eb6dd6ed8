"""Deep Ising Born machines: layered quantum neural networks built from
single-qubit rotations and generalized CZ layers, trained with closed-form
commutator updates."""

from dibom.gates import (
    FixedCZLayer,
    GeneralizedCZLayer,
    GeneralUnitaryLayer,
    HadamardLayer,
    ProductRotationLayer,
    SingleQubitRotation,
)
from dibom.network import (
    Circuit,
    ConditionalModel,
    DissipativeQNN,
    ModelKind,
    build_dibom,
    build_dissipative,
    build_hardware_efficient,
    build_ising_born,
    count_parameters,
)
from dibom.datagen import Dataset, IntrinsicKind, IntrinsicSpec, corrupt, gen_dataset, split
from dibom.training import LossKind, Method, TrainingConfig, TrainTrace, global_loss, local_loss, train
from dibom.expressivity import FBEConfig, fbe_upper_bound

__all__ = [
    "Circuit",
    "ConditionalModel",
    "DissipativeQNN",
    "FixedCZLayer",
    "GeneralUnitaryLayer",
    "GeneralizedCZLayer",
    "HadamardLayer",
    "ModelKind",
    "ProductRotationLayer",
    "SingleQubitRotation",
    "build_dibom",
    "build_dissipative",
    "build_hardware_efficient",
    "build_ising_born",
    "count_parameters",
    "Dataset",
    "IntrinsicKind",
    "IntrinsicSpec",
    "corrupt",
    "gen_dataset",
    "split",
    "LossKind",
    "Method",
    "TrainingConfig",
    "TrainTrace",
    "global_loss",
    "local_loss",
    "train",
    "FBEConfig",
    "fbe_upper_bound",
]

__version__ = "0.1.0"
