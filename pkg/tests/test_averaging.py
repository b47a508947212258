import numpy as np
import pytest

from xy_disorder.averaging import (
    AnnealedMethod,
    BondPolicy,
    Evaluated,
    _check_failures,
    annealed_average_correlators,
    annealed_concurrence_curve,
    annealed_probe_derivative,
    draw_normals,
    draw_weighted_sample,
    homogeneous_concurrence,
    quenched_average_concurrence,
    summarize_annealed,
)
from xy_disorder.chain import Boundary, ChainSpec, DisorderSpec, DisorderTarget, homogeneous_chain
from xy_disorder.ed import oracle_bond, solve_chain
from xy_disorder.estimators import EstimateRefused, normalized_weights
from xy_disorder.fermions import EngineError

T8 = homogeneous_chain(8, 0.5, 1.0, 1.0, 20.0)


def coupling(mean, std):
    return DisorderSpec(DisorderTarget.COUPLING, mean, std)


@pytest.mark.parametrize("policy", list(BondPolicy))
def test_delta_disorder_quenched_equals_homogeneous_exactly(policy):
    q = quenched_average_concurrence(T8, coupling(0.9, 0.0), 50, bond_policy=policy)
    h = homogeneous_concurrence(T8, 0.9, DisorderTarget.COUPLING, bond_policy=policy)
    assert q.mean == h
    assert q.std_error == 0.0 and q.ess == 50


def test_delta_disorder_annealed_equals_quenched():
    a = annealed_average_correlators(T8, coupling(0.9, 0.0), 50, bond_policy=BondPolicy.CENTRAL_BOND)
    q = quenched_average_concurrence(T8, coupling(0.9, 0.0), 50, bond_policy=BondPolicy.CENTRAL_BOND)
    assert a.concurrence == q.mean
    assert a.ess == pytest.approx(50)
    # averaging over bonds before or after the concurrence only differs by rounding
    a = annealed_average_correlators(T8, coupling(0.9, 0.0), 50)
    q = quenched_average_concurrence(T8, coupling(0.9, 0.0), 50)
    assert abs(a.concurrence - q.mean) <= 1e-13


def test_quenched_matches_per_realization_oracle():
    t = homogeneous_chain(6, 0.5, 1.0, 1.0, 5.0, Boundary.OPEN)
    d = coupling(1.0, 0.4)
    est = quenched_average_concurrence(t, d, 12, bond_policy=BondPolicy.CENTRAL_BOND, master_seed=3)
    from xy_disorder.entanglement import concurrence

    normals = draw_normals(3, range(12), 6)
    vals = []
    for z in normals:
        c = ChainSpec(6, 0.5, 1.0 + 0.4 * z, 1.0, 5.0, Boundary.OPEN)
        vals.append(concurrence(oracle_bond(solve_chain(c), 2, 3).rho2))
    assert est.mean == pytest.approx(np.mean(vals), abs=1e-9)


@pytest.mark.parametrize("method", list(AnnealedMethod))
def test_annealed_matches_oracle_weighting(method):
    """Free-fermion weights and correlators against dense ED on the same draws."""
    t = homogeneous_chain(6, 0.5, 1.0, 1.0, 4.0, Boundary.OPEN)
    d = coupling(1.0, 0.3)
    sample = draw_weighted_sample(t, d, 40, bond_policy=BondPolicy.ALL_BONDS_MEAN, master_seed=5, method=method)
    ac = summarize_annealed(sample, refuse=False)
    ln_z, corr = [], []
    for x in sample.values:
        st = solve_chain(ChainSpec(6, 0.5, x, 1.0, 4.0, Boundary.OPEN))
        ln_z.append(st.ln_z)
        bonds = [oracle_bond(st, i, i + 1) for i in range(5)]
        corr.append([[b.m_z_left, b.m_z_right, b.c_xx, b.c_yy] for b in bonds])
    w = normalized_weights(sample.log_weight_base + np.array(ln_z))
    ed = np.tensordot(w, np.array(corr), axes=(0, 0))  # (bond, 4)
    np.testing.assert_allclose(ac.m_left, ed[:, 0], atol=1e-8)
    np.testing.assert_allclose(ac.m_right, ed[:, 1], atol=1e-8)
    np.testing.assert_allclose(ac.c_xx, ed[:, 2], atol=1e-8)
    np.testing.assert_allclose(ac.c_yy, ed[:, 3], atol=1e-8)


def test_wick_reconstruction_of_czz():
    a = annealed_average_correlators(T8, coupling(1.0, 0.3), 200, master_seed=2)
    assert a.c_zz == a.m_z * a.m_z_right - a.c_xx_mean * a.c_yy_mean


def test_prior_refusal_at_low_temperature_strong_disorder():
    t = homogeneous_chain(50, 0.5, 1.0, 1.0, 20.0)
    with pytest.raises(EstimateRefused):
        annealed_average_correlators(t, coupling(1.0, 0.5), 200, method=AnnealedMethod.PRIOR)


def test_tilted_and_prior_agree_where_prior_works():
    t = homogeneous_chain(8, 0.5, 1.0, 1.0, 2.0)
    d = coupling(0.8, 0.3)
    p = annealed_average_correlators(t, d, 4000, method=AnnealedMethod.PRIOR, master_seed=1)
    q = annealed_average_correlators(t, d, 4000, method=AnnealedMethod.TILTED, master_seed=1)
    assert p.ess > 1000
    for key, a, b in [("c_xx", p.c_xx_mean, q.c_xx_mean), ("m_left", p.m_z, q.m_z)]:
        se = np.hypot(p.std_errors[key], q.std_errors[key])
        assert abs(a - b) < 4 * se


@pytest.mark.parametrize("which", ["xx", "yy", "z"])
def test_annealed_probe_consistency(which):
    d = coupling(1.0, 0.4)
    sample = draw_weighted_sample(T8, d, 300, master_seed=9)
    ac = summarize_annealed(sample)
    fd = annealed_probe_derivative(sample, T8, d, which=which)
    g = T8.gamma
    wick = {
        "xx": (1 + g) * ac.c_xx.sum(),
        "yy": (1 - g) * ac.c_yy.sum(),
        "z": ac.m_left.sum(),
    }[which]
    assert abs(fd - wick) <= 1e-5


def test_scheduling_invariance():
    d = coupling(1.0, 0.5)
    q1 = quenched_average_concurrence(T8, d, 300, master_seed=4, workers=1)
    q3 = quenched_average_concurrence(T8, d, 300, master_seed=4, workers=3)
    assert q1.mean == q3.mean and q1.std_error == q3.std_error
    np.testing.assert_array_equal(q1.convergence_trace, q3.convergence_trace)
    a1 = annealed_average_correlators(T8, d, 300, master_seed=4, workers=1)
    a3 = annealed_average_correlators(T8, d, 300, master_seed=4, workers=3)
    assert a1.concurrence == a3.concurrence and a1.ess == a3.ess


def test_engine_failures_are_counted_and_abort():
    n = 2000
    failed = np.zeros(n, dtype=bool)
    ev = Evaluated(np.zeros(n), *(np.zeros((n, 1)) for _ in range(4)), failed)
    failed[:2] = True
    assert _check_failures(ev, "x") == 2
    failed[:3] = True
    with pytest.raises(EngineError):
        _check_failures(ev, "x")


def test_convergence_trace_recorded():
    q = quenched_average_concurrence(T8, coupling(1.0, 0.5), 400, master_seed=1)
    assert len(q.convergence_trace) == 20
    assert q.convergence_trace[-1] == pytest.approx(q.mean, abs=1e-15)


def test_delta_disorder_curve_matches_homogeneous():
    mus = np.linspace(0.0, 2.0, 41)
    mids = 0.5 * (mus[1:] + mus[:-1])
    curve = annealed_concurrence_curve(T8, coupling(1.0, 0.0), mus, 20, eval_points=mids)
    hom = [homogeneous_concurrence(T8, m, DisorderTarget.COUPLING) for m in mids]
    assert np.max(np.abs(curve.eval_concurrence - hom)) <= 1e-3
    assert np.max(np.abs(curve.concurrence - [homogeneous_concurrence(T8, m, DisorderTarget.COUPLING) for m in mus])) <= 1e-13


def test_curve_grid_validation():
    with pytest.raises(ValueError):
        annealed_concurrence_curve(T8, coupling(1.0, 0.0), [0.0, 1.0, 0.5, 2.0], 5)
    with pytest.raises(ValueError):
        annealed_concurrence_curve(T8, coupling(1.0, 0.0), [0.0, 1.0, 2.0], 5)


def _dense_open_batch(couplings, fields, gamma):
    """Batched dense H of short open chains, built from Kronecker products.

    couplings has shape (S, n - 1) and fields (S, n). Returns H and the
    per-bond XX, YY and per-site Z operators.
    """
    n = fields.shape[1]
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    y = np.array([[0.0, -1j], [1j, 0.0]])
    z = np.diag([1.0, -1.0])

    def op(ops):
        out = np.eye(1)
        for k in range(n):
            out = np.kron(out, ops.get(k, np.eye(2)))
        return out

    xx = [op({b: x, b + 1: x}) for b in range(n - 1)]
    yy = [op({b: y, b + 1: y}).real for b in range(n - 1)]
    zs = [op({k: z}) for k in range(n)]
    hs = sum(-0.5 * fields[:, k, None, None] * zs[k] for k in range(n))
    for b in range(n - 1):
        hs = hs + 0.25 * couplings[:, b, None, None] * ((1 + gamma) * xx[b] + (1 - gamma) * yy[b])
    return hs, xx, yy, zs


def _quadrature_annealed(hs, xx, yy, zs, log_prior, beta):
    """Bond-averaged annealed (m_left, m_right, c_xx, c_yy) over quadrature nodes."""
    e, v = np.linalg.eigh(hs)
    ln_z = -beta * e[:, 0] + np.log(np.exp(-beta * (e - e[:, :1])).sum(axis=1))
    log_w = log_prior + ln_z
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    p = np.exp(-beta * (e - e[:, :1]))
    p /= p.sum(axis=1, keepdims=True)

    def thermal(o):
        return (p * np.einsum("kab,bc,kca->ka", v.transpose(0, 2, 1), o, v)).sum(axis=1)

    per_bond = [[w @ thermal(zs[b]), w @ thermal(zs[b + 1]), w @ thermal(xx[b]), w @ thermal(yy[b])] for b in range(len(xx))]
    return np.mean(per_bond, axis=0)


def _grid2(step=0.08, reach=12.0):
    zs_1d = np.arange(-reach, reach + 1e-9, step)
    return (a.ravel() for a in np.meshgrid(zs_1d, zs_1d, indexing="ij"))


@pytest.mark.parametrize("target", list(DisorderTarget))
def test_tilted_matches_quadrature_where_prior_collapses(target):
    """Exact annealed correlators by trapezoid quadrature over two disordered
    parameters, in a regime where sampling from the prior is useless: both
    couplings of an open three-site chain, or both fields of an open pair."""
    gamma, beta, mean, std = 0.5, 20.0, 0.3, 0.7
    z1, z2 = _grid2()
    pair = np.stack([mean + std * z1, mean + std * z2], axis=1)
    if target is DisorderTarget.COUPLING:
        n, ops = 3, _dense_open_batch(pair, np.ones((len(z1), 3)), gamma)
    else:
        n, ops = 2, _dense_open_batch(np.ones((len(z1), 1)), pair, gamma)
    exact = _quadrature_annealed(*ops, -0.5 * (z1**2 + z2**2), beta)

    t = homogeneous_chain(n, gamma, 1.0, 1.0, beta, Boundary.OPEN)
    d = DisorderSpec(target, mean, std)
    with pytest.raises(EstimateRefused):
        annealed_average_correlators(t, d, 4000, method=AnnealedMethod.PRIOR, master_seed=4)
    q = annealed_average_correlators(t, d, 20000, method=AnnealedMethod.TILTED, master_seed=4)
    assert q.ess > 0.4 * 20000
    # bond-averaged values are what the concurrence is assembled from
    got = np.array([q.m_z, q.m_z_right, q.c_xx_mean, q.c_yy_mean])
    se = np.array([q.std_errors[k] for k in ("m_left", "m_right", "c_xx", "c_yy")])
    assert np.all(np.abs(got - exact) < 4 * se + 1e-6), (got, exact, se)


@pytest.mark.parametrize("boundary", list(Boundary))
def test_tilted_ess_holds_on_both_boundaries(boundary):
    # the wrap coupling of an open chain is not in H and must stay untilted
    t = homogeneous_chain(20, 0.5, 1.0, 1.0, 20.0, boundary)
    a = annealed_average_correlators(t, coupling(1.0, 0.5), 1000, master_seed=1)
    assert a.ess > 0.5 * 1000
