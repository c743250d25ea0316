"""Core value types: codebooks, token grids, semantic grids, distributions.

All types validate their invariants at construction and are immutable
afterwards (ndarray payloads are marked read-only), so instances can be
shared freely between threads and reused across sampling runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_SUM_TOL = 1e-9


class ValidationError(ValueError):
    """A value violates a structural invariant or an operation precondition."""


class FormatError(ValidationError):
    """A serialized artifact is malformed (bad magic, version, truncation)."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _coerce_grid_values(values, height: int, width: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim == 1:
        if arr.size != height * width:
            raise ValidationError(
                f"{what} length mismatch: expected {height * width} "
                f"({height}x{width}), got {arr.size}"
            )
        arr = arr.reshape(height, width)
    elif arr.shape != (height, width):
        raise ValidationError(
            f"{what} shape mismatch: expected ({height}, {width}), got {arr.shape}"
        )
    return arr.copy()


@dataclass(frozen=True)
class CodebookSpec:
    """A discrete codebook, identified only by its number of entries."""

    size: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValidationError(f"codebook size must be >= 2, got {self.size}")


@dataclass(frozen=True, eq=False)
class TokenGrid:
    """An immutable height x width grid of codebook indices (row-major)."""

    height: int
    width: int
    codebook_size: int
    tokens: np.ndarray

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValidationError(
                f"grid dimensions must be positive, got {self.height}x{self.width}"
            )
        if self.codebook_size < 2:
            raise ValidationError(
                f"codebook size must be >= 2, got {self.codebook_size}"
            )
        arr = _coerce_grid_values(self.tokens, self.height, self.width, "tokens")
        object.__setattr__(self, "tokens", _readonly(arr))
        validate_grid(self)

    @property
    def flat(self) -> np.ndarray:
        """Tokens as a 1-D row-major view."""
        return self.tokens.reshape(-1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TokenGrid):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and self.codebook_size == other.codebook_size
            and bool(np.array_equal(self.tokens, other.tokens))
        )


@dataclass(frozen=True, eq=False)
class SemanticGrid:
    """An immutable height x width grid of semantic labels (row-major)."""

    height: int
    width: int
    label_count: int
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValidationError(
                f"grid dimensions must be positive, got {self.height}x{self.width}"
            )
        if self.label_count < 1:
            raise ValidationError(
                f"label count must be >= 1, got {self.label_count}"
            )
        arr = _coerce_grid_values(self.labels, self.height, self.width, "labels")
        bad = (arr < 0) | (arr >= self.label_count)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValidationError(
                f"label {arr[r, c]} out of range at ({r}, {c}); "
                f"label count is {self.label_count}"
            )
        object.__setattr__(self, "labels", _readonly(arr))

    @property
    def flat(self) -> np.ndarray:
        return self.labels.reshape(-1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SemanticGrid):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and self.label_count == other.label_count
            and bool(np.array_equal(self.labels, other.labels))
        )


def validate_grid(grid: TokenGrid) -> None:
    """Re-check every TokenGrid invariant, raising on the first violation.

    Runs at construction; exposed separately so freshly deserialized grids
    can be re-verified explicitly.
    """
    tokens = np.asarray(grid.tokens)
    if tokens.shape != (grid.height, grid.width):
        raise ValidationError(
            f"tokens length mismatch: expected {grid.height * grid.width} "
            f"({grid.height}x{grid.width}), got {tokens.size}"
        )
    bad = (tokens < 0) | (tokens >= grid.codebook_size)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(
            f"token {tokens[r, c]} out of range at ({r}, {c}); "
            f"codebook size is {grid.codebook_size}"
        )


def require_same_shape(grid: TokenGrid, semantics: SemanticGrid) -> None:
    """Shared precondition for every operation pairing tokens with labels."""
    if (grid.height, grid.width) != (semantics.height, semantics.width):
        raise ValidationError(
            f"grid is {grid.height}x{grid.width} but semantic map is "
            f"{semantics.height}x{semantics.width}"
        )


@dataclass(frozen=True, eq=False)
class CategoricalDistribution:
    """A normalized probability vector over codebook indices.

    ``source_mass`` records how many token observations back the estimate
    (0 for analytic distributions); downstream averaging can weight by it.
    """

    codebook_size: int
    probs: np.ndarray
    source_mass: float = 0.0

    def __post_init__(self) -> None:
        if self.codebook_size < 2:
            raise ValidationError(
                f"codebook size must be >= 2, got {self.codebook_size}"
            )
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size != self.codebook_size:
            raise ValidationError(
                f"probability vector must have length {self.codebook_size}, "
                f"got shape {probs.shape}"
            )
        if not np.all(np.isfinite(probs)):
            raise ValidationError("probability vector contains non-finite entries")
        if np.any(probs < 0.0):
            idx = int(np.argmax(probs < 0.0))
            raise ValidationError(f"negative probability {probs[idx]} at index {idx}")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError(
                f"probabilities sum to {total!r}, outside 1 +/- {PROB_SUM_TOL}"
            )
        mass = float(self.source_mass)
        if not np.isfinite(mass) or mass < 0.0:
            raise ValidationError(f"source mass must be finite and >= 0, got {mass}")
        object.__setattr__(self, "probs", _readonly(probs.copy()))
        object.__setattr__(self, "source_mass", mass)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CategoricalDistribution):
            return NotImplemented
        return (
            self.codebook_size == other.codebook_size
            and self.source_mass == other.source_mass
            and bool(np.array_equal(self.probs, other.probs))
        )


def normalize(
    weights: Sequence[float] | np.ndarray, source_mass: float = 0.0
) -> CategoricalDistribution:
    """Scale a non-negative weight vector so it sums to one.

    Rejects vectors of length < 2 (a degenerate codebook), any negative or
    non-finite entry, and all-zero input.
    """
    arr = np.asarray(weights, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"weights must be 1-D, got shape {arr.shape}")
    if arr.size < 2:
        raise ValidationError(
            f"weights length {arr.size} implies a codebook of size < 2"
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError("weights contain non-finite entries")
    if np.any(arr < 0.0):
        idx = int(np.argmax(arr < 0.0))
        raise ValidationError(f"negative weight {arr[idx]} at index {idx}")
    total = float(arr.sum())
    if total <= 0.0:
        raise ValidationError("zero total mass: cannot normalize")
    return CategoricalDistribution(
        codebook_size=arr.size, probs=arr / total, source_mass=source_mass
    )


def uniform_distribution(codebook_size: int) -> CategoricalDistribution:
    """The uniform distribution over a codebook."""
    return CategoricalDistribution(
        codebook_size=codebook_size,
        probs=np.full(codebook_size, 1.0 / codebook_size),
        source_mass=0.0,
    )
