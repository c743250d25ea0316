import numpy as np
import pytest

from gcs.core import CategoricalDistribution, SemanticGrid, ValidationError
from gcs.distributions import RegionalDistributions, SpatialDistributions
from gcs.guidance import (
    LikelihoodTable,
    LikelihoodVector,
    SpatialVectors,
    global_likelihood_table,
    rebalance_prior,
    regional_likelihoods,
    select_likelihood,
    spatial_likelihoods,
    style_likelihood,
    table_from_dict,
    table_to_dict,
)


def dist(probs, mass=0.0):
    return CategoricalDistribution(len(probs), probs, source_mass=mass)


STYLE = dist([0.5, 0.25, 0.25])
DATASET = dist([0.25, 0.5, 0.25])


class TestLikelihoodVector:
    def test_max_normalized_storage(self):
        v = LikelihoodVector(3, np.array([2.0, 0.5, 1.0]))
        assert list(v.weights) == [1.0, 0.25, 0.5]

    def test_non_positive_weight_rejected(self):
        with pytest.raises(ValidationError) as exc:
            LikelihoodVector(3, np.array([1.0, 0.0, 2.0]))
        assert "index 1" in str(exc.value)
        assert "smoothing_alpha" in str(exc.value)

    def test_wrong_length(self):
        with pytest.raises(ValidationError):
            LikelihoodVector(3, np.array([1.0, 2.0]))

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            LikelihoodVector(2, np.array([1.0, np.inf]))

    def test_identity_flag(self):
        assert LikelihoodVector(3, np.ones(3)).is_identity
        assert LikelihoodVector(3, np.full(3, 7.0)).is_identity
        assert not LikelihoodVector(3, np.array([1.0, 2.0, 1.0])).is_identity

    def test_scale_invariance(self):
        w = np.array([0.3, 1.9, 0.04])
        a = LikelihoodVector(3, w)
        b = LikelihoodVector(3, w * 1e8)
        assert np.allclose(a.weights, b.weights, atol=1e-12)


class TestStyleLikelihood:
    def test_ratio_then_max_normalize(self):
        v = style_likelihood(STYLE, DATASET)
        assert np.allclose(v.weights, [1.0, 0.25, 0.5], atol=1e-15)

    def test_exponent_squares_ratios(self):
        v = style_likelihood(STYLE, DATASET, exponent=2.0)
        assert np.allclose(v.weights, [1.0, 0.0625, 0.25], atol=1e-15)

    def test_identical_inputs_give_identity(self):
        v = style_likelihood(STYLE, STYLE, exponent=3.0)
        assert v.is_identity

    def test_zero_exponent_is_identity(self):
        v = style_likelihood(STYLE, DATASET, exponent=0.0)
        assert v.is_identity

    def test_zero_mass_needs_smoothing(self):
        with pytest.raises(ValidationError) as exc:
            style_likelihood(dist([1.0, 0.0]), dist([0.5, 0.5]))
        assert "smoothing_alpha" in str(exc.value)

    def test_codebook_mismatch(self):
        with pytest.raises(ValidationError):
            style_likelihood(dist([0.5, 0.5]), dist([0.4, 0.3, 0.3]))

    def test_negative_exponent(self):
        with pytest.raises(ValidationError):
            style_likelihood(STYLE, DATASET, exponent=-1.0)


class TestRebalancePrior:
    def test_documented_example(self):
        prior = dist([0.25, 0.25, 0.25, 0.25])
        out = rebalance_prior(prior, LikelihoodVector(4, np.array([2.0, 1.0, 1.0, 0.01])))
        expected = np.array([2.0, 1.0, 1.0, 0.01]) / 4.01
        assert np.allclose(out.probs, expected, atol=1e-12)
        assert abs(out.probs.sum() - 1.0) < 1e-12

    def test_identity_returns_prior_object(self):
        prior = dist([0.7, 0.2, 0.1])
        out = rebalance_prior(prior, LikelihoodVector(3, np.full(3, 5.0)))
        assert out is prior

    def test_one_hot_prior_is_fixed_point(self):
        prior = dist([0.0, 1.0, 0.0])
        out = rebalance_prior(prior, LikelihoodVector(3, np.array([9.0, 1.0, 2.0])))
        assert list(out.probs) == [0.0, 1.0, 0.0]

    def test_support_preserved(self):
        prior = dist([0.5, 0.0, 0.5])
        out = rebalance_prior(prior, LikelihoodVector(3, np.array([3.0, 5.0, 1.0])))
        assert out.probs[1] == 0.0
        assert out.probs[0] > 0.0 and out.probs[2] > 0.0

    def test_monotone_influence(self):
        prior = dist([0.4, 0.3, 0.3])
        low = rebalance_prior(prior, LikelihoodVector(3, np.array([1.0, 1.0, 2.0])))
        high = rebalance_prior(prior, LikelihoodVector(3, np.array([1.0, 1.0, 3.0])))
        assert high.probs[2] > low.probs[2]

    def test_codebook_mismatch(self):
        with pytest.raises(ValidationError):
            rebalance_prior(dist([0.5, 0.5]), LikelihoodVector(3, np.ones(3)))

    def test_exponent_continuity(self):
        # The guided posterior matches the closed form at every strength.
        prior = dist([0.1, 0.6, 0.3])
        for lam in (0.0, 0.5, 1.0, 2.0):
            out = rebalance_prior(prior, style_likelihood(STYLE, DATASET, lam))
            direct = prior.probs * (STYLE.probs / DATASET.probs) ** lam
            direct /= direct.sum()
            assert np.allclose(out.probs, direct, atol=1e-12)


class TestLikelihoodTable:
    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            LikelihoodTable("sideways", 1.0, LikelihoodVector(2, np.ones(2)))

    def test_global_mode_rejects_extras(self):
        v = LikelihoodVector(2, np.ones(2))
        with pytest.raises(ValidationError):
            LikelihoodTable("global", 1.0, v, regional=(v,))

    def test_regional_mode_requires_vectors(self):
        v = LikelihoodVector(2, np.ones(2))
        with pytest.raises(ValidationError):
            LikelihoodTable("regional", 1.0, v)

    def test_spatial_mode_requires_cells(self):
        v = LikelihoodVector(2, np.ones(2))
        with pytest.raises(ValidationError):
            LikelihoodTable("spatial", 1.0, v)


class TestSelectLikelihood:
    def build_regional(self):
        style = RegionalDistributions(
            2, (dist([0.75, 0.25], 4.0), None), (4.0, 0.0)
        )
        data = RegionalDistributions(
            2, (dist([0.5, 0.5], 4.0), dist([0.5, 0.5], 4.0)), (4.0, 4.0)
        )
        return regional_likelihoods(style, data, dist([0.6, 0.4]), dist([0.5, 0.5]))

    def test_global_everywhere(self):
        table = global_likelihood_table(STYLE, DATASET)
        a = select_likelihood(table, (0, 0))
        b = select_likelihood(table, (9, 9))
        assert a is b is table.global_vector

    def test_regional_label_lookup_and_fallback(self):
        table = self.build_regional()
        sem = SemanticGrid(1, 4, 2, [0, 0, 1, 1])
        at_label0 = select_likelihood(table, (0, 1), semantics=sem)
        assert np.allclose(at_label0.weights, [1.0, 1 / 3], atol=1e-12)
        # Label 1 was never observed in the style, so fall back globally.
        at_label1 = select_likelihood(table, (0, 3), semantics=sem)
        assert at_label1 is table.global_vector

    def test_regional_needs_semantics(self):
        with pytest.raises(ValidationError) as exc:
            select_likelihood(self.build_regional(), (0, 0))
        assert "semantic map" in str(exc.value)

    def test_regional_position_bounds(self):
        sem = SemanticGrid(1, 4, 2, [0, 0, 1, 1])
        with pytest.raises(ValidationError):
            select_likelihood(self.build_regional(), (1, 0), semantics=sem)

    def test_label_outside_table(self):
        table = self.build_regional()
        sem = SemanticGrid(1, 2, 3, [0, 2])
        with pytest.raises(ValidationError) as exc:
            select_likelihood(table, (0, 1), semantics=sem)
        assert "outside the table's 2 labels" in str(exc.value)

    def build_spatial(self):
        cells = tuple(
            tuple(dist([0.5 + 0.1 * (2 * r + c), 0.5 - 0.1 * (2 * r + c)], 4.0) for c in range(2))
            for r in range(2)
        )
        style = SpatialDistributions(2, 2, cells)
        flat = dist([0.5, 0.5], 4.0)
        data = SpatialDistributions(2, 2, ((flat, flat), (flat, flat)))
        return spatial_likelihoods(style, data, dist([0.5, 0.5]), dist([0.5, 0.5]))

    def test_spatial_cell_dispatch(self):
        table = self.build_spatial()
        # On a 4x4 grid with a 2x2 tiling, (3, 3) lands in cell (1, 1).
        v = select_likelihood(table, (3, 3), grid_shape=(4, 4))
        assert v is table.spatial.cells[1][1]
        v = select_likelihood(table, (0, 2), grid_shape=(4, 4))
        assert v is table.spatial.cells[0][1]

    def test_spatial_needs_grid_shape(self):
        with pytest.raises(ValidationError) as exc:
            select_likelihood(self.build_spatial(), (0, 0))
        assert "grid's shape" in str(exc.value)

    def test_spatial_position_bounds(self):
        with pytest.raises(ValidationError):
            select_likelihood(self.build_spatial(), (4, 0), grid_shape=(4, 4))

    def test_spatial_tiling_mismatch(self):
        flat = dist([0.5, 0.5], 4.0)
        a = SpatialDistributions(1, 2, ((flat, flat),))
        b = SpatialDistributions(2, 1, ((flat,), (flat,)))
        with pytest.raises(ValidationError):
            spatial_likelihoods(a, b, dist([0.5, 0.5]), dist([0.5, 0.5]))


class TestTableSerialization:
    def test_global_round_trip(self):
        table = global_likelihood_table(STYLE, DATASET, exponent=1.5)
        assert table_from_dict(table_to_dict(table)) == table

    def test_regional_round_trip(self):
        table = TestSelectLikelihood().build_regional()
        payload = table_to_dict(table)
        assert payload["regional"][1] is None
        assert table_from_dict(payload) == table

    def test_spatial_round_trip(self):
        table = TestSelectLikelihood().build_spatial()
        payload = table_to_dict(table)
        assert payload["spatial"]["cells"][0][0] == list(
            table.spatial.cells[0][0].weights
        )
        assert table_from_dict(payload) == table

    def test_malformed_payload(self):
        with pytest.raises(ValidationError) as exc:
            table_from_dict({"mode": "global"})
        assert "malformed likelihood table" in str(exc.value)


def test_spatial_vectors_shape_checked():
    v = LikelihoodVector(2, np.ones(2))
    with pytest.raises(ValidationError):
        SpatialVectors(2, 2, ((v, v),))
