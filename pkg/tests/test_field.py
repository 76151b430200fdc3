"""Tests for equilibrium field sampling, partial sums, and rescaling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrvoter.field import (
    microscopic_slice_time,
    partial_sum,
    rescaled,
    sample_equilibrium_field,
)
from lrvoter.steplaw import StepLaw

CANONICAL = StepLaw.canonical(0.5)


def make_field(seed=0, n=64, slices=(0, 3), p=0.5, t_max=200, law=CANONICAL):
    return sample_equilibrium_field(law, p, n, slices, t_max,
                                    np.random.default_rng(seed), seed=seed)


# -- sampling ---------------------------------------------------------------


def test_values_are_plus_minus_one():
    field = make_field()
    assert set(np.unique(field.values)) <= {-1, 1}
    assert field.values.shape == (2, 65)


def test_values_constant_on_components():
    field = make_field(seed=3)
    labels = field.labeling.label.reshape(field.n_slices, -1)
    values = field.values
    for s in range(field.n_slices):
        for comp in np.unique(labels[s]):
            assert len(np.unique(values[s][labels[s] == comp])) == 1


def test_single_site_window_color_frequency():
    # n = 0 gives one site whose value is +1 with probability p
    hits = 0
    reps = 3000
    p = 0.3
    for r in range(reps):
        field = sample_equilibrium_field(CANONICAL, p, 0, [0], 5,
                                         np.random.default_rng(r))
        hits += field.value(0) == 1
    stderr = math.sqrt(p * (1 - p) / reps)
    assert abs(hits / reps - p) < 3 * stderr + 0.005


def test_plus_frequency_matches_p_across_components():
    # the +1 frequency is p across *components*, not across sites
    field = make_field(seed=9, n=1024, slices=(0,), p=0.3, t_max=500)
    labels = field.labeling.label
    values = field.values[0]
    first_site = {}
    for i, lab in enumerate(labels):
        first_site.setdefault(int(lab), i)
    colors = np.array([values[i] for i in first_site.values()])
    freq = (colors == 1).mean()
    stderr = math.sqrt(0.3 * 0.7 / len(colors))
    assert abs(freq - 0.3) < 4 * stderr


def test_determinism_under_fixed_seed():
    a, b = make_field(seed=11), make_field(seed=11)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.labeling.label, b.labeling.label)
    c = make_field(seed=12)
    assert not np.array_equal(a.values, c.values)


def test_joint_sampling_can_merge_across_slices():
    field = make_field(seed=1, n=64, slices=(0, 1), t_max=100)
    labels = field.labeling.label.reshape(2, 65)
    assert len(np.intersect1d(labels[0], labels[1])) > 0


def test_validation_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="p must"):
        sample_equilibrium_field(CANONICAL, 0.0, 4, [0], 5, rng)
    with pytest.raises(ValueError, match="p must"):
        sample_equilibrium_field(CANONICAL, 1.0, 4, [0], 5, rng)
    with pytest.raises(ValueError, match="distinct"):
        sample_equilibrium_field(CANONICAL, 0.5, 4, [0, 0], 5, rng)
    with pytest.raises(ValueError, match=">= 0"):
        sample_equilibrium_field(CANONICAL, 0.5, 4, [-1], 5, rng)
    with pytest.raises(ValueError, match="slice"):
        sample_equilibrium_field(CANONICAL, 0.5, 4, [], 5, rng)
    with pytest.raises(ValueError, match="window"):
        sample_equilibrium_field(CANONICAL, 0.5, -1, [0], 5, rng)


def test_provenance_fields():
    field = make_field(seed=5, p=0.25)
    assert field.seed == 5
    assert field.p == 0.25
    assert field.law is CANONICAL
    assert field.labeling.cutoff_used == 200
    assert field.slice_times == (0, 3)


# -- partial sums ------------------------------------------------------------


def test_partial_sum_matches_direct_summation():
    field = make_field(seed=7, n=97)
    values = field.values
    for s in range(field.n_slices):
        for x in (0.0, 0.01, 0.13, 0.5, 0.77, 0.999, 1.0):
            j = math.floor(x * 97)
            assert partial_sum(field, x, s) == values[s][: j + 1].sum()


def test_partial_sum_at_zero_is_single_site():
    field = make_field(seed=2)
    assert partial_sum(field, 0.0) == field.value(0)
    assert partial_sum(field, 0.0) in (-1, 1)


def test_partial_sum_rejects_x_outside_unit_interval():
    field = make_field()
    with pytest.raises(ValueError, match="x must"):
        partial_sum(field, -0.01)
    with pytest.raises(ValueError, match="x must"):
        partial_sum(field, 1.01)


def test_partial_sum_increments_are_unit_steps():
    field = make_field(seed=4, n=128)
    sums = [partial_sum(field, i / 128) for i in range(129)]
    assert set(abs(b - a) for a, b in zip(sums, sums[1:])) == {1}


@settings(max_examples=20, deadline=None)
@given(x=st.floats(0.0, 1.0), p=st.floats(0.05, 0.95))
def test_rescaled_formula(x, p):
    field = make_field(seed=21, n=50, slices=(0,), p=p, t_max=60)
    sigma = 7.5
    expected = (partial_sum(field, x) - (2 * p - 1) * math.floor(x * 50)) / sigma
    assert rescaled(field, sigma, x) == pytest.approx(expected, rel=1e-12)


def test_rescaled_centering_vanishes_at_half():
    field = make_field(seed=13)
    assert rescaled(field, 4.0, 1.0) == partial_sum(field, 1.0) / 4.0


def test_rescaled_requires_positive_sigma():
    field = make_field()
    with pytest.raises(ValueError, match="sigma"):
        rescaled(field, 0.0, 0.5)


# -- slice-time conversion ----------------------------------------------------


def test_microscopic_slice_time_canonical_pins():
    # canonical law has 2 L(n) = 1, so the clock is floor(t * n**alpha)
    assert microscopic_slice_time(CANONICAL, 0.5, 8192) == 45
    assert microscopic_slice_time(CANONICAL, 1.0, 8192) == 90
    assert microscopic_slice_time(CANONICAL, 2.0, 8192) == 181
    assert microscopic_slice_time(CANONICAL, 0.0, 8192) == 0


def test_microscopic_slice_time_uses_slowly_varying_factor():
    law = StepLaw(alpha=0.45, per_side_tail_constant=0.25,
                  slowly_varying_kind="log_corrected")
    n, t = 4096, 1.5
    expected = math.floor(t * n**0.45 / (2 * law.slowly_varying(n)))
    assert microscopic_slice_time(law, t, n) == expected


def test_microscopic_slice_time_rejects_negative():
    with pytest.raises(ValueError):
        microscopic_slice_time(CANONICAL, -0.5, 64)
