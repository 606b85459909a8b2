from forgeguard.model_zoo.activations import relu, sigmoid, softmax
from forgeguard.model_zoo.backbones import (
    Backbone,
    BackboneSpec,
    RegistryError,
    load_backbone,
    reference_spec,
    seeded_backbone,
)
from forgeguard.model_zoo.classifier import (
    DEFAULT_CLASS_NAMES,
    ClassifierModel,
    ParamCount,
    assemble_classifier,
    build_classifier,
    count_params,
    load_checkpoint,
    save_checkpoint,
)
from forgeguard.model_zoo.scaling import (
    InfeasibleBudgetError,
    NetworkSpec,
    ResourceBudget,
    ScalingCoefficients,
    StageSpec,
    apply_scaling,
    compose_network,
    estimate_flops,
    estimate_memory,
    search_scaling,
)

__all__ = [
    "relu",
    "sigmoid",
    "softmax",
    "Backbone",
    "BackboneSpec",
    "RegistryError",
    "load_backbone",
    "reference_spec",
    "seeded_backbone",
    "DEFAULT_CLASS_NAMES",
    "ClassifierModel",
    "ParamCount",
    "assemble_classifier",
    "build_classifier",
    "count_params",
    "load_checkpoint",
    "save_checkpoint",
    "InfeasibleBudgetError",
    "NetworkSpec",
    "ResourceBudget",
    "ScalingCoefficients",
    "StageSpec",
    "apply_scaling",
    "compose_network",
    "estimate_flops",
    "estimate_memory",
    "search_scaling",
]
