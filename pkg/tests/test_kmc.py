import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochdual.analysis import profile_closed_form
from stochdual.kmc import (Engine, SamplePlan, batch_means, compensator_rate, estimate_transport,
                           expected_transport, init_state, local_equilibrium_law, sample_stationary,
                           simulate_dual_absorption, step, total_rate)
from stochdual.models import ModelError, make_spec


def test_total_rate_examples():
    assert total_rate(make_spec("SEP", 1, 1.0, alpha=1, gamma=1, delta=1, beta=1), [1]) == pytest.approx(2.0)
    irw = make_spec("IRW", 4, None, alpha=0.3, gamma=1, delta=0.7, beta=1)
    assert total_rate(irw, [0, 0, 0, 0]) == pytest.approx(1.0)
    th = make_spec("ThIRW", 5, None, alpha=0.3, gamma=1, delta=0.7, beta=1)
    assert total_rate(th, [3, 0, 1, 2, 0]) == 6.0


@settings(max_examples=15, deadline=None)
@given(fam=st.sampled_from(["SIP", "SEP", "IRW"]), seed=st.integers(0, 2 ** 20))
def test_incremental_rate_matches_enumeration(fam, seed):
    from stochdual.generator import enumerate_transitions

    spec = make_spec(fam, 4, None if fam == "IRW" else 2.0, alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)
    eng = Engine(spec, seed=seed)
    eng.run(max_events=500)
    want = sum(r for _, r in enumerate_transitions(spec, tuple(eng.eta)))
    assert eng.total_rate == pytest.approx(want, rel=1e-12)


def test_step_advances_one_event():
    spec = make_spec("SIP", 3, 1.0, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0)
    st_ = init_state(spec, [1, 0, 2], seed=1)
    t0 = st_.time
    step(spec, st_)
    assert st_.engine.n_events == 1 and st_.time > t0
    assert abs(int(np.sum(st_.config)) - 3) <= 1
    with pytest.raises(ModelError):
        step(make_spec("SIP", 3, 2.0, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0), st_)


def test_bulk_currents_count_jumps():
    # closed system: Q on bond (1,2) equals the particle change of site 1
    spec = make_spec("SIP", 3, 1.0, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0, reservoirs=False)
    eng = Engine(spec, [5, 2, 1], seed=2)
    eng.run(50.0)
    assert eng.eta.sum() == 8
    assert 5 - eng.eta[0] == pytest.approx(eng.currents[0])
    assert eng.currents[1] == pytest.approx(eng.eta[2] - 1)


def test_reproducible_and_replica_streams_differ():
    spec = make_spec("SEP", 5, 2.0, alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)
    runs = []
    for rep in (0, 0, 1):
        eng = Engine(spec, seed=9, replica=rep)
        s, _, _ = eng.run(20.0, sample_times=np.linspace(0, 20, 41))
        runs.append(s)
    assert np.array_equal(runs[0], runs[1])
    assert not np.array_equal(runs[0], runs[2])


@pytest.mark.parametrize("fam,shape", [("SEP", 1.0), ("SEP", 2.0), ("ThSEP", 3.0)])
def test_exclusion_bounds_hold_in_debug_mode(fam, shape):
    spec = make_spec(fam, 6, shape, alpha=2.0, gamma=0.1, delta=1.5, beta=0.2)
    eng = Engine(spec, seed=3, debug=True)
    s, _, _ = eng.run(200.0, sample_times=np.linspace(1, 200, 400))
    assert s.min() >= 0 and s.max() <= shape


def test_invalid_initial_configuration():
    spec = make_spec("SEP", 2, 1.0, alpha=1, gamma=1, delta=1, beta=1)
    with pytest.raises(ModelError):
        Engine(spec, [2, 0])
    with pytest.raises(ModelError):
        Engine(make_spec("BEP", 2, 1.0, T_a=1, T_b=1))


def test_local_equilibrium_law_mean():
    spec = make_spec("SIP", 2, 1.5, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0)
    assert local_equilibrium_law(spec, 0.8).mean == pytest.approx(0.8)


def test_batch_means_standard_error_of_iid_data():
    x = np.random.default_rng(0).normal(size=(4, 10_000, 2))
    m, se = batch_means(x)
    assert np.all(np.abs(m) < 4 * se)
    assert np.allclose(se, 1 / np.sqrt(40_000), rtol=0.4)


def test_sip_linear_profile_within_three_se():
    # γ = 2k + α, β = 2k + δ with ρ_a = 2, ρ_b = 1: profile 2 − i/4
    spec = make_spec("SIP", 3, 1.0, alpha=2.0, gamma=3.0, delta=1.0, beta=2.0)
    res = sample_stationary(spec, SamplePlan(n_samples=20_000, replicas=4, base_seed=1), threads=2)
    want = 2 - np.arange(1, 4) / 4
    assert np.allclose(profile_closed_form(spec), want)
    assert np.all(np.abs(res.mean - want) < 3 * res.mean_se)


def test_irw_equilibrium_product_poisson():
    spec = make_spec("IRW", 3, None, alpha=1.0, gamma=1.0, delta=1.0, beta=1.0)
    res = sample_stationary(spec, SamplePlan(n_samples=20_000, replicas=4, base_seed=2))
    assert np.all(np.abs(res.mean - 1) < 3 * res.mean_se)
    off = ~np.eye(3, dtype=bool)
    cov_se = np.sqrt(res.second_se ** 2 + (2 * res.mean_se) ** 2)
    assert np.all(np.abs(res.cov[off]) < 3 * cov_se[off])


def test_sep1_occupations_are_binary():
    spec = make_spec("SEP", 4, 1.0, alpha=1.7, gamma=0.2, delta=0.9, beta=0.5)
    res = sample_stationary(spec, SamplePlan(n_samples=2000, replicas=2, base_seed=3))
    assert set(np.unique(res.samples)) <= {0.0, 1.0}


def test_thermalized_sampler_matches_profile():
    spec = make_spec("ThSIP", 3, 2.0, alpha=0.5, gamma=3.0, delta=0.25, beta=3.0)
    res = sample_stationary(spec, SamplePlan(n_samples=20_000, replicas=4, base_seed=4))
    assert np.all(np.abs(res.mean - profile_closed_form(spec)) < 3 * res.mean_se)


def test_compensator_and_expected_transport():
    spec = make_spec("SIP", 3, 1.5, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0)
    assert compensator_rate(spec) == 1.5
    assert expected_transport("SEP", 2.0, 0.5) == (2.0, 1.5)
    with pytest.raises(ModelError):
        expected_transport("BEP", 1.0, 1.0)


def test_transport_small_run_is_in_the_right_range():
    est = estimate_transport("IRW", None, 1.0, L=20, t=200.0, replicas=8, seed=1, threads=2)
    assert abs(est.D - 1) < 5 * est.D_se + 0.05
    assert abs(est.sigma - 2) < 5 * est.sigma_se + 0.1
    with pytest.raises(ModelError):
        estimate_transport("SEP", 1.0, 0.9, delta_rho=0.5)


def test_dual_absorption_simulation_counts():
    spec = make_spec("IRW", 2, None, alpha=1, gamma=1, delta=1, beta=1)
    counts = simulate_dual_absorption(spec, (0, 1, 1, 0), n_runs=500, seed=0)
    assert counts.sum() == 500 and len(counts) == 3


@pytest.mark.parametrize("fam,shape", [("SIP", 1.0), ("SEP", 2.0)])
def test_jump_count_and_compensator_currents_agree(fam, shape):
    est = estimate_transport(fam, shape, 1.0, L=20, t=200.0, replicas=8, seed=3, threads=2)
    assert abs(est.D - est.D_jump) < 4 * math.hypot(est.D_se, est.D_jump_se)


@pytest.mark.parametrize("fam,shape,b", [
    ("SEP", 3.0, dict(alpha=1.0, gamma=2.0, delta=1.0, beta=2.0)),
    ("SIP", 1.5, dict(alpha=1.0, gamma=2.5, delta=1.0, beta=2.5)),
])
def test_equilibrium_histogram_chi_square(fam, shape, b):
    from scipy.stats import chisquare

    from stochdual.models import equilibrium_marginal

    spec = make_spec(fam, 2, shape, **b)
    # thinning of 3 time units leaves the samples close to independent
    res = sample_stationary(spec, SamplePlan(n_samples=25_000, thinning=3.0, burn_in=20.0, replicas=4,
                                             base_seed=8), threads=2)
    x = res.samples[..., 0].ravel().astype(int)
    law = equilibrium_marginal(spec)
    top = 3 if fam == "SEP" else 6  # pool the tail so expected counts stay large
    obs = np.bincount(np.minimum(x, top), minlength=top + 1)
    p = law.pmf(np.arange(top + 1))
    p[-1] = 1.0 - p[:-1].sum()
    assert chisquare(obs, p * x.size).pvalue > 0.01


def test_current_reverses_with_the_lattice():
    fwd = make_spec("SEP", 4, 1.0, alpha=1.5, gamma=0.3, delta=0.2, beta=1.1)
    rev = make_spec("SEP", 4, 1.0, alpha=0.2, gamma=1.1, delta=1.5, beta=0.3)

    def mean_current(spec):
        J = []
        for r in range(8):
            eng = Engine(spec, seed=6, replica=r)
            _, cQ, _ = eng.run(1020.0, checkpoint_times=[20.0, 1020.0])
            J.append(np.mean(cQ[1, 1:-1] - cQ[0, 1:-1]) / 1000.0)
        return np.mean(J), np.std(J, ddof=1) / np.sqrt(len(J))

    jf, sf = mean_current(fwd)
    jr, sr = mean_current(rev)
    assert jf > 0 > jr
    assert abs(jf + jr) < 4 * math.hypot(sf, sr)
