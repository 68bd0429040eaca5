import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochdual.diffusion import (EnergyJumpEngine, SdeScheme, bep_step, default_dt, estimate_transport_energy,
                                 kmp_step, sample_stationary_energy, simulate_bep)
from stochdual.kmc import SamplePlan
from stochdual.models import ModelError, equilibrium_marginal, kmp_as_thbep, make_spec


def test_scheme_validation():
    with pytest.raises(ValueError):
        SdeScheme(dt=0.0)
    with pytest.raises(ValueError):
        SdeScheme(positivity_policy="absorb")
    spec = make_spec("BEP", 3, 1.0, T_a=4.0, T_b=1.0)
    assert default_dt(spec) < 1e-3


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), policy=st.sampled_from(["full_truncation", "reflection"]),
       shape=st.floats(0.2, 3.0))
def test_bulk_moves_conserve_energy_and_stay_nonnegative(seed, policy, shape):
    spec = make_spec("BEP", 5, shape, T_a=1.0, T_b=1.0).bulk_only()
    z0 = np.random.default_rng(seed).exponential(1.0, 5)
    run = simulate_bep(spec, z0, 2.0, SdeScheme(dt=1e-2, positivity_policy=policy, seed=seed), replicas=3)
    assert np.allclose(run.z.sum(axis=1), z0.sum(), rtol=1e-12)
    assert run.z.min() >= 0.0


def test_small_shape_triggers_positivity_flags():
    spec = make_spec("BEP", 4, 0.05, T_a=1.0, T_b=1.0)
    run = simulate_bep(spec, np.full(4, 0.01), 5.0, SdeScheme(dt=0.05, seed=1), replicas=4)
    assert run.flagged.sum() > 0 and run.z.min() >= 0.0


def test_bep_step_shapes_and_errors():
    spec = make_spec("BEP", 3, 1.0, T_a=1.0, T_b=0.5)
    z, n = bep_step(spec, [1.0, 1.0, 1.0], SdeScheme(dt=1e-3))
    assert z.shape == (3,) and n == 0
    with pytest.raises(ModelError):
        bep_step(spec, [-1.0, 1.0, 1.0], SdeScheme())
    with pytest.raises(ModelError):
        bep_step(make_spec("KMP", 3, T_a=1, T_b=1), [1.0, 1.0, 1.0], SdeScheme())


def test_simulate_bep_is_reproducible():
    spec = make_spec("BEP", 3, 1.0, T_a=1.0, T_b=0.5)
    sch = SdeScheme(dt=1e-2, seed=7)
    a = simulate_bep(spec, np.ones(3), 3.0, sch, sample_times=[1.0, 2.0])
    b = simulate_bep(spec, np.ones(3), 3.0, sch, sample_times=[1.0, 2.0])
    assert np.array_equal(a.samples, b.samples) and a.n_steps == 300


def test_bep_equilibrium_gamma_moments():
    spec = make_spec("BEP", 2, 1.5, T_a=1.0, T_b=1.0)
    law = equilibrium_marginal(spec)
    res = sample_stationary_energy(spec, SamplePlan(n_samples=4000, thinning=1.0, burn_in=20.0, replicas=4,
                                                    base_seed=3), scheme=SdeScheme(dt=2e-3), threads=2)
    for n in (1, 2):
        # weak order 1: bias O(dt) is far below the statistical error here
        assert abs(res.moments[n - 1] - law.moment(n)).max() < 4 * res.moments_se[n - 1].max()


@pytest.mark.parametrize("spec", [make_spec("KMP", 3, T_a=1.2, T_b=1.2),
                                  make_spec("ThBEP", 3, 0.75, T_a=0.8, T_b=0.8)])
def test_jump_models_equilibrium_moments(spec):
    law = equilibrium_marginal(spec)
    res = sample_stationary_energy(spec, SamplePlan(n_samples=20_000, thinning=1.0, burn_in=30.0, replicas=4,
                                                    base_seed=5))
    for n in (1, 2, 3):
        assert np.all(np.abs(res.moments[n - 1] - law.moment(n)) < 4 * res.moments_se[n - 1])
    assert res.flagged == 0


def test_kmp_and_thbep_trajectories_coincide():
    kmp = make_spec("KMP", 4, T_a=2.0, T_b=0.5)
    th = kmp_as_thbep(kmp)
    times = np.linspace(1, 50, 50)
    a, qa, _ = EnergyJumpEngine(kmp, seed=11).run(50.0, sample_times=times, checkpoint_times=times)
    b, qb, _ = EnergyJumpEngine(th, seed=11).run(50.0, sample_times=times, checkpoint_times=times)
    assert np.array_equal(a, b) and np.array_equal(qa, qb)


def test_kmp_step_conserves_bond_energy():
    spec = make_spec("KMP", 3, T_a=1.0, T_b=1.0).bulk_only()
    rng = np.random.default_rng(0)
    z = np.array([1.0, 2.0, 3.0])
    for _ in range(50):
        z, wait, c = kmp_step(spec, z, rng)
        assert wait > 0 and c in (0, 1)
    assert z.sum() == pytest.approx(6.0, rel=1e-12)
    with pytest.raises(ModelError):
        kmp_step(make_spec("BEP", 3, 1.0, T_a=1, T_b=1), z, rng)


def test_energy_engine_errors():
    with pytest.raises(ModelError):
        EnergyJumpEngine(make_spec("KMP", 3, T_a=1, T_b=1).bulk_only())
    with pytest.raises(ModelError):
        EnergyJumpEngine(make_spec("KMP", 2, T_a=1, T_b=1), [-1.0, 1.0])


def test_kmp_transport_small_run():
    est = estimate_transport_energy("KMP", None, 1.0, L=10, t=200.0, replicas=8, seed=2)
    assert abs(est.D - 0.5) < 5 * est.D_se + 0.03
    assert abs(est.sigma - 1.0) < 5 * est.sigma_se + 0.05


def test_dt_refinement_changes_means_by_less_than_the_noise():
    spec = make_spec("BEP", 2, 1.0, T_a=1.0, T_b=0.5)
    plan = SamplePlan(n_samples=250_000, thinning=0.2, burn_in=20.0, replicas=4, base_seed=9)
    a = sample_stationary_energy(spec, plan, scheme=SdeScheme(dt=0.02), n_max=1, threads=2)
    b = sample_stationary_energy(spec, plan, scheme=SdeScheme(dt=0.01), n_max=1, threads=2)
    se = np.hypot(a.mean_se, b.mean_se)
    assert np.all(np.abs(a.mean - b.mean) < 3 * se)


def test_bulk_energy_drift_over_a_million_steps():
    spec = make_spec("BEP", 5, 1.0, T_a=1.0, T_b=1.0).bulk_only()
    z0 = np.array([0.3, 2.0, 1.1, 0.05, 4.0])
    run = simulate_bep(spec, z0, 1000.0, SdeScheme(dt=1e-3, seed=4))
    assert run.n_steps == 1_000_000
    assert abs(run.z.sum() - z0.sum()) < 1e-8
