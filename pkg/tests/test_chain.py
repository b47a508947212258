import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xy_disorder.chain import (
    Boundary,
    ChainSpec,
    DisorderSpec,
    DisorderTarget,
    ProbeParams,
    build_quadratic_form,
    homogeneous_chain,
    sample_realization,
)
from xy_disorder.streams import derive_substream

floats = st.floats(-3, 3, allow_nan=False)


def test_field_only_chain_gives_identity():
    f = build_quadratic_form(ChainSpec(3, 0.5, 0.0, 1.0, 1.0))
    np.testing.assert_array_equal(f.a, np.eye(3))
    np.testing.assert_array_equal(f.b, np.zeros((3, 3)))


def test_two_site_open_ising_form():
    f = build_quadratic_form(ChainSpec(2, 1.0, [1.0, 0.0], 0.0, 1.0, Boundary.OPEN))
    np.testing.assert_array_equal(f.a, [[0, 0.5], [0.5, 0]])
    np.testing.assert_array_equal(f.b, [[0, 0.5], [-0.5, 0]])


def test_periodic_four_site_form():
    f = build_quadratic_form(homogeneous_chain(4, 0.5, 1.0, 1.0, 1.0))
    expected_a = np.array(
        [[1, 0.5, 0, 0.5], [0.5, 1, 0.5, 0], [0, 0.5, 1, 0.5], [0.5, 0, 0.5, 1]]
    )
    np.testing.assert_array_equal(f.a, expected_a)
    for i in range(3):
        assert f.b[i, i + 1] == 0.25 and f.b[i + 1, i] == -0.25
    # the wrap bond 4 -> 1 continues the bulk pattern (B_41 = +1/4)
    assert f.b[3, 0] == 0.25 and f.b[0, 3] == -0.25


def test_open_boundary_ignores_last_coupling():
    c = ChainSpec(4, 0.5, [1, 2, 3, 99], 1.0, 1.0, Boundary.OPEN)
    f = build_quadratic_form(c)
    assert f.a[0, 3] == 0 and f.b[0, 3] == 0 and f.b[3, 0] == 0


def test_two_site_periodic_accumulates_both_bonds():
    f = build_quadratic_form(ChainSpec(2, 0.5, [1.0, 2.0], 0.0, 1.0))
    assert f.a[0, 1] == pytest.approx(0.5 + 1.0)
    assert f.b[0, 1] == pytest.approx(0.25 - 0.5)


def test_rejects_bad_chains():
    with pytest.raises(ValueError):
        ChainSpec(1, 0.5, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ChainSpec(4, 0.5, 1.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        ChainSpec(4, 0.5, [1.0, 2.0], 1.0, 1.0)


def test_chain_arrays_are_immutable():
    c = homogeneous_chain(4, 0.5, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        c.couplings[0] = 3.0


@settings(max_examples=50, deadline=None)
@given(
    st.integers(2, 9),
    floats,
    st.lists(floats, min_size=9, max_size=9),
    st.lists(floats, min_size=9, max_size=9),
    st.sampled_from(list(Boundary)),
    floats, floats, floats,
)
def test_form_symmetry_exact(n, gamma, js, hs, boundary, lx, ly, lz):
    c = ChainSpec(n, gamma, js[:n], hs[:n], 1.0, boundary)
    f = build_quadratic_form(c, ProbeParams(lx, ly, lz))
    assert np.max(np.abs(f.a - f.a.T)) == 0
    assert np.max(np.abs(f.b + f.b.T)) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), floats, floats, floats, floats, floats)
def test_probe_linearity(n, gamma, lx, ly, lz, scale):
    rng = np.random.default_rng(n)
    c = ChainSpec(n, gamma, rng.normal(size=n), rng.normal(size=n), 1.0)
    base = build_quadratic_form(c)

    def delta(p):
        f = build_quadratic_form(c, p)
        return np.concatenate([(f.a - base.a).ravel(), (f.b - base.b).ravel()])

    d1 = delta(ProbeParams(lx, ly, lz))
    d2 = delta(ProbeParams(scale * lx, scale * ly, scale * lz))
    np.testing.assert_allclose(d2, scale * d1, atol=1e-12 * (1 + abs(scale)) * (1 + np.abs(d1).max()))


def test_delta_disorder_is_exact_and_stream_independent():
    t = homogeneous_chain(5, 0.5, 1.0, 1.0, 1.0)
    d = DisorderSpec(DisorderTarget.COUPLING, 1.0, 0.0)
    a = sample_realization(t, d, derive_substream(1, 0))
    b = sample_realization(t, d, derive_substream(2, 7))
    assert np.all(a.couplings == 1.0)
    np.testing.assert_array_equal(a.couplings, b.couplings)


def test_gaussian_moments():
    t = ChainSpec(100_000, 0.5, 1.0, 1.0, 1.0)
    r = sample_realization(t, DisorderSpec(DisorderTarget.COUPLING, 1.0, 0.5), derive_substream(3, 0))
    assert abs(r.couplings.mean() - 1.0) < 5e-3
    assert abs(r.couplings.std() - 0.5) < 5e-3
    assert np.all(r.fields == 1.0)
    assert np.any(r.couplings < 0)  # negative draws are kept


def test_field_disorder_keeps_couplings():
    t = ChainSpec(6, 0.5, 1.0, 0.7, 1.0)
    r = sample_realization(t, DisorderSpec(DisorderTarget.FIELD, 0.7, 0.3), derive_substream(0, 0))
    assert np.all(r.couplings == 1.0)
    assert not np.all(r.fields == 0.7)
