"""Ratio guidance: turn style and corpus statistics into per-step weights.

The guidance weight vector is the element-wise ratio of a style
distribution to the corpus distribution, optionally raised to a strength
exponent, and is multiplied into the model's per-step prior before
sampling.  Weight vectors are defined up to positive scale; canonical
storage normalizes the maximum entry to 1 so large exponents cannot
overflow.

Three table modes mirror the three ways statistics can be collected:
one global vector, one vector per semantic label (with a global fallback
for labels the style never showed), or one vector per spatial cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CategoricalDistribution, SemanticGrid, ValidationError, _readonly
from .distributions import RegionalDistributions, SpatialDistributions, cell_of_position

MODE_GLOBAL = "global"
MODE_REGIONAL = "regional"
MODE_SPATIAL = "spatial"


@dataclass(frozen=True, eq=False)
class LikelihoodVector:
    """Strictly positive guidance weights over the codebook, max-normalized."""

    codebook_size: int
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.codebook_size < 2:
            raise ValidationError(
                f"codebook size must be >= 2, got {self.codebook_size}"
            )
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size != self.codebook_size:
            raise ValidationError(
                f"weight vector must have length {self.codebook_size}, "
                f"got shape {w.shape}"
            )
        if not np.all(np.isfinite(w)):
            raise ValidationError("guidance weights contain non-finite entries")
        if np.any(w <= 0.0):
            idx = int(np.argmax(w <= 0.0))
            raise ValidationError(
                f"guidance weight {w[idx]} at index {idx} is not strictly positive; "
                "estimate the input distributions with smoothing_alpha > 0"
            )
        object.__setattr__(self, "weights", _readonly(w / w.max()))

    @property
    def is_identity(self) -> bool:
        """True when every weight is 1, i.e. rebalancing is a no-op."""
        return bool(np.all(self.weights == 1.0))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LikelihoodVector):
            return NotImplemented
        return self.codebook_size == other.codebook_size and bool(
            np.array_equal(self.weights, other.weights)
        )


def style_likelihood(
    style: CategoricalDistribution,
    dataset: CategoricalDistribution,
    exponent: float = 1.0,
) -> LikelihoodVector:
    """Weights (style[t] / dataset[t]) ** exponent, max-normalized.

    Both inputs must be strictly positive everywhere (guaranteed by
    smoothed estimation); exponent 0 yields identity guidance.
    """
    if style.codebook_size != dataset.codebook_size:
        raise ValidationError(
            f"codebook size mismatch: style {style.codebook_size} vs "
            f"dataset {dataset.codebook_size}"
        )
    _check_exponent(exponent)
    for name, dist in (("style", style), ("dataset", dataset)):
        if np.any(dist.probs <= 0.0):
            idx = int(np.argmax(dist.probs <= 0.0))
            raise ValidationError(
                f"{name} distribution has zero mass at index {idx}; "
                "re-estimate with smoothing_alpha > 0"
            )
    ratios = (style.probs / dataset.probs) ** float(exponent)
    return LikelihoodVector(codebook_size=style.codebook_size, weights=ratios)


def _check_exponent(exponent: float) -> None:
    if not np.isfinite(exponent) or exponent < 0.0:
        raise ValidationError(
            f"guidance exponent must be finite and >= 0, got {exponent}"
        )


def rebalance_prior(
    prior: CategoricalDistribution, likelihood: LikelihoodVector
) -> CategoricalDistribution:
    """Multiply a per-step prior by guidance weights and renormalize.

    All-ones weight vectors return the prior object unchanged, so identity
    guidance is exact to the bit, not merely within rounding.
    """
    if prior.codebook_size != likelihood.codebook_size:
        raise ValidationError(
            f"codebook size mismatch: prior {prior.codebook_size} vs "
            f"weights {likelihood.codebook_size}"
        )
    if likelihood.is_identity:
        return prior
    scaled = prior.probs * likelihood.weights
    total = float(scaled.sum())
    if total <= 0.0:
        raise ValidationError("rebalanced distribution has zero total mass")
    return CategoricalDistribution(
        codebook_size=prior.codebook_size,
        probs=scaled / total,
        source_mass=prior.source_mass,
    )


@dataclass(frozen=True, eq=False)
class SpatialVectors:
    """Guidance vectors per cell of a fixed tiling."""

    cell_rows: int
    cell_cols: int
    cells: tuple[tuple[LikelihoodVector, ...], ...]

    def __post_init__(self) -> None:
        if self.cell_rows < 1 or self.cell_cols < 1:
            raise ValidationError("cell tiling must be positive")
        rows = tuple(tuple(row) for row in self.cells)
        if len(rows) != self.cell_rows or any(len(r) != self.cell_cols for r in rows):
            raise ValidationError(
                f"cells must form a {self.cell_rows}x{self.cell_cols} grid"
            )
        object.__setattr__(self, "cells", rows)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpatialVectors):
            return NotImplemented
        return (
            self.cell_rows == other.cell_rows
            and self.cell_cols == other.cell_cols
            and self.cells == other.cells
        )


@dataclass(frozen=True, eq=False)
class LikelihoodTable:
    """Guidance weights plus the dispatch rule for picking one per step."""

    mode: str
    exponent: float
    global_vector: LikelihoodVector
    regional: tuple[LikelihoodVector | None, ...] | None = None
    spatial: SpatialVectors | None = None

    def __post_init__(self) -> None:
        if self.mode not in (MODE_GLOBAL, MODE_REGIONAL, MODE_SPATIAL):
            raise ValidationError(f"unknown guidance mode {self.mode!r}")
        _check_exponent(self.exponent)
        if self.mode == MODE_GLOBAL and (
            self.regional is not None or self.spatial is not None
        ):
            raise ValidationError("global mode carries only the global vector")
        if self.mode == MODE_REGIONAL:
            if self.regional is None or self.spatial is not None:
                raise ValidationError("regional mode requires per-label vectors only")
            object.__setattr__(self, "regional", tuple(self.regional))
        if self.mode == MODE_SPATIAL and (
            self.spatial is None or self.regional is not None
        ):
            raise ValidationError("spatial mode requires per-cell vectors only")

    @property
    def codebook_size(self) -> int:
        return self.global_vector.codebook_size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LikelihoodTable):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.exponent == other.exponent
            and self.global_vector == other.global_vector
            and self.regional == other.regional
            and self.spatial == other.spatial
        )


def global_likelihood_table(
    style: CategoricalDistribution,
    dataset: CategoricalDistribution,
    exponent: float = 1.0,
) -> LikelihoodTable:
    """One guidance vector applied at every step."""
    return LikelihoodTable(
        mode=MODE_GLOBAL,
        exponent=float(exponent),
        global_vector=style_likelihood(style, dataset, exponent),
    )


def regional_likelihoods(
    style_regional: RegionalDistributions,
    dataset_regional: RegionalDistributions,
    style_global: CategoricalDistribution,
    dataset_global: CategoricalDistribution,
    exponent: float = 1.0,
) -> LikelihoodTable:
    """Per-label guidance vectors with a global fallback.

    A label gets its own vector only where both the style and the dataset
    observed it; every other label falls back to the global vector at
    selection time.
    """
    if style_regional.label_count != dataset_regional.label_count:
        raise ValidationError(
            f"label count mismatch: style {style_regional.label_count} vs "
            f"dataset {dataset_regional.label_count}"
        )
    fallback = style_likelihood(style_global, dataset_global, exponent)
    vectors: list[LikelihoodVector | None] = []
    for j in range(style_regional.label_count):
        s = style_regional.per_label[j]
        d = dataset_regional.per_label[j]
        if s is None or d is None:
            vectors.append(None)
        else:
            vectors.append(style_likelihood(s, d, exponent))
    return LikelihoodTable(
        mode=MODE_REGIONAL,
        exponent=float(exponent),
        global_vector=fallback,
        regional=tuple(vectors),
    )


def spatial_likelihoods(
    style_spatial: SpatialDistributions,
    dataset_spatial: SpatialDistributions,
    style_global: CategoricalDistribution,
    dataset_global: CategoricalDistribution,
    exponent: float = 1.0,
) -> LikelihoodTable:
    """Per-cell guidance vectors for aligned spatial statistics."""
    if (style_spatial.cell_rows, style_spatial.cell_cols) != (
        dataset_spatial.cell_rows,
        dataset_spatial.cell_cols,
    ):
        raise ValidationError(
            f"cell tiling mismatch: style "
            f"{style_spatial.cell_rows}x{style_spatial.cell_cols} vs dataset "
            f"{dataset_spatial.cell_rows}x{dataset_spatial.cell_cols}"
        )
    fallback = style_likelihood(style_global, dataset_global, exponent)
    cells = tuple(
        tuple(
            style_likelihood(
                style_spatial.per_cell[r][c], dataset_spatial.per_cell[r][c], exponent
            )
            for c in range(style_spatial.cell_cols)
        )
        for r in range(style_spatial.cell_rows)
    )
    return LikelihoodTable(
        mode=MODE_SPATIAL,
        exponent=float(exponent),
        global_vector=fallback,
        spatial=SpatialVectors(
            cell_rows=style_spatial.cell_rows,
            cell_cols=style_spatial.cell_cols,
            cells=cells,
        ),
    )


def select_likelihood(
    table: LikelihoodTable,
    position: tuple[int, int],
    semantics: SemanticGrid | None = None,
    grid_shape: tuple[int, int] | None = None,
) -> LikelihoodVector:
    """The guidance vector governing one generation step.

    Regional mode reads the semantic label at ``position``; spatial mode
    maps ``position`` into the cell tiling, which requires the full grid
    shape.
    """
    row, col = position
    if table.mode == MODE_GLOBAL:
        return table.global_vector
    if table.mode == MODE_REGIONAL:
        if semantics is None:
            raise ValidationError("regional guidance requires a semantic map")
        if not (0 <= row < semantics.height and 0 <= col < semantics.width):
            raise ValidationError(
                f"position ({row}, {col}) outside the "
                f"{semantics.height}x{semantics.width} semantic map"
            )
        label = int(semantics.labels[row, col])
        if label >= len(table.regional):
            raise ValidationError(
                f"label {label} outside the table's {len(table.regional)} labels"
            )
        vector = table.regional[label]
        return vector if vector is not None else table.global_vector
    # spatial
    if grid_shape is None:
        raise ValidationError("spatial guidance requires the generated grid's shape")
    height, width = grid_shape
    if not (0 <= row < height and 0 <= col < width):
        raise ValidationError(
            f"position ({row}, {col}) outside the {height}x{width} grid"
        )
    sp = table.spatial
    cr, cc = cell_of_position(row, col, height, width, sp.cell_rows, sp.cell_cols)
    return sp.cells[cr][cc]


def table_to_dict(table: LikelihoodTable) -> dict:
    """JSON-ready payload: {"mode", "exponent", "global", "regional", "spatial"}."""
    payload: dict = {
        "mode": table.mode,
        "exponent": float(table.exponent),
        "global": [float(w) for w in table.global_vector.weights],
        "regional": None,
        "spatial": None,
    }
    if table.regional is not None:
        payload["regional"] = [
            None if v is None else [float(w) for w in v.weights]
            for v in table.regional
        ]
    if table.spatial is not None:
        payload["spatial"] = {
            "cell_rows": table.spatial.cell_rows,
            "cell_cols": table.spatial.cell_cols,
            "cells": [
                [[float(w) for w in v.weights] for v in row]
                for row in table.spatial.cells
            ],
        }
    return payload


def table_from_dict(payload: dict) -> LikelihoodTable:
    try:
        mode = payload["mode"]
        exponent = float(payload["exponent"])
        size = len(payload["global"])
        g = LikelihoodVector(codebook_size=size, weights=np.asarray(payload["global"]))
        regional = None
        if payload.get("regional") is not None:
            regional = tuple(
                None
                if v is None
                else LikelihoodVector(codebook_size=size, weights=np.asarray(v))
                for v in payload["regional"]
            )
        spatial = None
        if payload.get("spatial") is not None:
            sp = payload["spatial"]
            spatial = SpatialVectors(
                cell_rows=int(sp["cell_rows"]),
                cell_cols=int(sp["cell_cols"]),
                cells=tuple(
                    tuple(
                        LikelihoodVector(codebook_size=size, weights=np.asarray(v))
                        for v in row
                    )
                    for row in sp["cells"]
                ),
            )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed likelihood table payload: {exc}") from exc
    return LikelihoodTable(
        mode=mode, exponent=exponent, global_vector=g, regional=regional, spatial=spatial
    )
