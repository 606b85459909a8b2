"""Stage composition and compound depth/width/resolution scaling under resource budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence


class CompositionError(ValueError):
    """Raised when consecutive stage shapes do not chain."""


class InfeasibleBudgetError(ValueError):
    """Raised when no candidate scaling fits the resource budget."""


@dataclass(frozen=True)
class StageSpec:
    """One network stage: an operator applied ``repeats`` times.

    kind is "conv" or "pool"; spatial output shape is declared per stage
    rather than derived from stride, so scaled specs stay valid after
    independent rounding of each dimension.
    """

    kind: str
    kernel: int
    stride: int
    in_channels: int
    repeats: int
    out_shape: tuple[int, int, int]  # (H, W, C)

    def __post_init__(self):
        if self.kind not in ("conv", "pool"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.kernel < 1 or self.stride < 1 or self.in_channels < 1:
            raise ValueError("kernel, stride and in_channels must be >= 1")
        if any(d < 1 for d in self.out_shape):
            raise ValueError(f"out_shape entries must be >= 1, got {self.out_shape}")


@dataclass(frozen=True)
class NetworkSpec:
    stages: tuple[StageSpec, ...]
    input_shape: tuple[int, int, int]


@dataclass(frozen=True)
class ScalingCoefficients:
    """Depth (d), width (w) and resolution (r) multipliers, all > 0."""

    d: float
    w: float
    r: float

    def __post_init__(self):
        if self.d <= 0 or self.w <= 0 or self.r <= 0:
            raise ValueError("scaling coefficients must be strictly positive")


@dataclass(frozen=True)
class ResourceBudget:
    target_memory: int  # bytes
    target_flops: int  # multiply-accumulates

    def __post_init__(self):
        if self.target_memory <= 0 or self.target_flops <= 0:
            raise ValueError("budget targets must be > 0")


def compose_network(stages: Sequence[StageSpec], input_shape: tuple[int, int, int]) -> NetworkSpec:
    """Chain stages into a network, checking that each stage's declared input
    channels equal the previous stage's output channels."""
    if not stages:
        raise CompositionError("a network needs at least one stage")
    prev_c = input_shape[2]
    prev_name = "input"
    for i, stage in enumerate(stages):
        if stage.in_channels != prev_c:
            raise CompositionError(
                f"stage {i} ({stage.kind}) declares {stage.in_channels} input channels "
                f"but {prev_name} emits {prev_c}"
            )
        prev_c = stage.out_shape[2]
        prev_name = f"stage {i} ({stage.kind})"
    return NetworkSpec(stages=tuple(stages), input_shape=tuple(input_shape))


def _round8(x: float) -> int:
    """Round to the nearest multiple of 8, never below 8."""
    return max(8, int(math.floor(x / 8 + 0.5)) * 8)


def _round_dim(x: float) -> int:
    return max(1, int(math.floor(x + 0.5)))


def apply_scaling(base: NetworkSpec, c: ScalingCoefficients) -> NetworkSpec:
    """Scale repeats by ceil(d*L), channels to round8(w*C), spatial dims by r.

    Multipliers of exactly 1 leave the corresponding dimension untouched, so
    the identity coefficients return the spec unchanged even when channel
    counts are not multiples of 8. Input channels are never scaled (they are
    fixed by the data); interior stages rechain to the scaled widths.
    """
    scaled: list[StageSpec] = []
    prev_c = base.input_shape[2]
    for stage in base.stages:
        h, w_dim, ch = stage.out_shape
        new_repeats = stage.repeats if c.d == 1 else max(1, math.ceil(c.d * stage.repeats - 1e-9))
        new_ch = ch if c.w == 1 else _round8(c.w * ch)
        new_h = h if c.r == 1 else _round_dim(c.r * h)
        new_w = w_dim if c.r == 1 else _round_dim(c.r * w_dim)
        scaled.append(
            replace(
                stage,
                in_channels=prev_c,
                repeats=new_repeats,
                out_shape=(new_h, new_w, new_ch),
            )
        )
        prev_c = new_ch
    in_h, in_w, in_c = base.input_shape
    new_input = (
        in_h if c.r == 1 else _round_dim(c.r * in_h),
        in_w if c.r == 1 else _round_dim(c.r * in_w),
        in_c,
    )
    return NetworkSpec(stages=tuple(scaled), input_shape=new_input)


def estimate_flops(spec: NetworkSpec) -> int:
    """Multiply-accumulate count: conv stages cost repeats*H*W*C_out*(k^2*C_in),
    pooling stages repeats*H*W*C*k^2."""
    total = 0
    for stage in spec.stages:
        h, w, c_out = stage.out_shape
        if stage.kind == "conv":
            total += stage.repeats * h * w * c_out * (stage.kernel**2 * stage.in_channels)
        else:
            total += stage.repeats * h * w * c_out * stage.kernel**2
    return total


def _param_count(spec: NetworkSpec) -> int:
    total = 0
    for stage in spec.stages:
        if stage.kind == "conv":
            total += stage.repeats * stage.kernel**2 * stage.in_channels * stage.out_shape[2]
    return total


def estimate_memory(spec: NetworkSpec) -> int:
    """Bytes for float32 parameters plus the peak single-stage activation H*W*C."""
    peak = max(
        math.prod(spec.input_shape),
        max(math.prod(stage.out_shape) for stage in spec.stages),
    )
    return 4 * (_param_count(spec) + peak)


def search_scaling(
    base: NetworkSpec,
    budget: ResourceBudget,
    grid: Sequence[ScalingCoefficients],
    score: Callable[[NetworkSpec], float],
) -> ScalingCoefficients:
    """Pick the grid point maximizing ``score`` among those whose scaled spec
    fits both budget limits; ties go to lower FLOPS, then earlier grid order.

    Raises InfeasibleBudgetError naming the tighter of the two constraints when
    nothing on the grid fits.
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    best = None  # (neg_score, flops, index, coeffs)
    best_flops_ratio = math.inf
    best_mem_ratio = math.inf
    for i, coeffs in enumerate(grid):
        scaled = apply_scaling(base, coeffs)
        flops = estimate_flops(scaled)
        mem = estimate_memory(scaled)
        best_flops_ratio = min(best_flops_ratio, flops / budget.target_flops)
        best_mem_ratio = min(best_mem_ratio, mem / budget.target_memory)
        if flops > budget.target_flops or mem > budget.target_memory:
            continue
        key = (-score(scaled), flops, i)
        if best is None or key < best[0]:
            best = (key, coeffs)
    if best is None:
        name, ratio = max(
            [("flops", best_flops_ratio), ("memory", best_mem_ratio)], key=lambda t: t[1]
        )
        raise InfeasibleBudgetError(
            f"no grid point fits the budget; tightest constraint is {name} "
            f"(best candidate needs {ratio:.2f}x the target)"
        )
    return best[1]
