import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochdual.duality import (EXACT_MAX_PARTICLES, absorption_table, dual_configurations, dual_spec,
                               dual_table, dual_transitions, duality_eval, duality_polynomial,
                               energy_duality_residual, moment_evolution, single_walker_absorption,
                               site_normalisation, stationary_expectation)
from stochdual.generator import build_generator, stationary_distribution
from stochdual.models import ModelError, kmp_as_thbep, make_spec

rate = st.floats(0.1, 3.0)


def _spec(fam, L, a, g, d, b, shape):
    if fam == "SIP":
        g, b = a + g, d + b
    if fam == "BEP":
        return make_spec(fam, L, shape, T_a=a, T_b=d)
    return make_spec(fam, L, None if fam == "IRW" else shape, alpha=a, gamma=g, delta=d, beta=b)


@given(fam=st.sampled_from(["SIP", "SEP", "IRW", "BEP"]), L=st.integers(1, 12), a=rate, g=rate, d=rate,
       b=rate, shape=st.integers(1, 4))
def test_single_walker_closed_form_equals_linear_solve(fam, L, a, g, d, b, shape):
    spec = _spec(fam, L, a, g, d, b, float(shape))
    p = single_walker_absorption(spec, "closed")
    assert np.max(np.abs(p - single_walker_absorption(spec, "linear"))) < 1e-12
    assert p[0] == 1.0 and p[-1] == 0.0
    assert np.all(np.diff(p) < 0)


@settings(max_examples=25, deadline=None)
@given(fam=st.sampled_from(["SIP", "SEP", "IRW", "ThSIP", "ThSEP", "ThIRW", "BEP", "KMP"]),
       L=st.integers(1, 4), n=st.integers(0, 3))
def test_dual_conserves_particles_and_absorption_sums_to_one(fam, L, n):
    if fam in ("BEP", "KMP"):
        spec = make_spec(fam, L, None if fam == "KMP" else 1.5, T_a=1.2, T_b=0.4)
    else:
        spec = make_spec(fam, L, None if "IRW" in fam else 2.0, alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)
    ds = dual_spec(spec)
    for xi in dual_configurations(ds, n):
        for xi2, r in dual_transitions(ds, xi):
            assert sum(xi2) == n and r > 0
            assert xi2[0] >= xi[0] and xi2[-1] >= xi[-1]
    xi = tuple([0] + [n] + [0] * L) if ds.site_cap is None or n <= ds.site_cap else None
    if xi is not None:
        tab = absorption_table(spec, xi)
        assert tab.probability.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(tab.probability >= -1e-15)


def test_single_walker_absorption_equals_one_particle_table():
    spec = make_spec("SEP", 4, 2.0, alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)
    p = single_walker_absorption(spec)
    for i in range(1, 5):
        xi = [0] * 6
        xi[i] = 1
        assert absorption_table(spec, xi).probability[1] == pytest.approx(p[i], abs=1e-13)


def test_absorption_exact_vs_monte_carlo():
    spec = make_spec("SIP", 3, 1.0, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0)
    xi = (0, 1, 1, 1, 0)
    ex = absorption_table(spec, xi)
    mc = absorption_table(spec, xi, "mc", n_runs=20_000, seed=4)
    z = np.abs(ex.probability - mc.probability) / np.maximum(mc.std_error, 1e-12)
    assert np.all(z < 4)
    assert ex.to_csv().splitlines()[0] == "m,probability,std_error"


def test_exact_budget():
    spec = make_spec("IRW", 3, None, alpha=1, gamma=1, delta=1, beta=1)
    with pytest.raises(ModelError, match="budget"):
        absorption_table(spec, (0, EXACT_MAX_PARTICLES + 1, 0, 0, 0))
    with pytest.raises(ModelError):
        absorption_table(spec, (0, 1, 0))


def test_duality_eval_examples():
    s = make_spec("SIP", 1, 1.0, alpha=1, gamma=3, delta=1, beta=2)
    assert duality_eval(s, [3], [0, 2, 0]) == pytest.approx(3.0)  # 3·2 Γ(1)/Γ(3)
    assert duality_eval(s, [1], [0, 2, 0]) == 0.0
    assert duality_eval(s, [5], [2, 0, 1]) == pytest.approx(0.5 ** 2 * 1.0)
    sep = make_spec("SEP", 1, 2.0, alpha=1, gamma=1, delta=1, beta=1)
    assert duality_eval(sep, [2], [0, 2, 0]) == pytest.approx(1.0)
    assert site_normalisation(sep, 3) == 0.0


@pytest.mark.parametrize("fam,shape", [("SIP", 1.5), ("SEP", 3.0), ("IRW", None)])
def test_stationary_expectation_matches_master_equation(fam, shape):
    spec = make_spec(fam, 2, shape, alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)
    G = build_generator(spec, 40 if fam != "SEP" else None)
    pi = stationary_distribution(G)
    for xi in [(0, 1, 1, 0), (0, 2, 0, 0), (0, 1, 2, 0)]:
        want = float(pi @ duality_eval(spec, G.states, xi))
        assert stationary_expectation(spec, xi) == pytest.approx(want, rel=1e-10, abs=1e-13)


def test_moment_evolution_interpolates_between_start_and_stationary():
    spec = make_spec("SIP", 2, 1.0, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0)
    x = np.array([3.0, 0.0])
    xi = (0, 1, 1, 0)
    v0, _, _ = moment_evolution(spec, x, xi, 0.0)
    assert v0 == pytest.approx(duality_eval(spec, x, xi))
    vinf, _, _ = moment_evolution(spec, x, xi, np.inf)
    v_late, _, _ = moment_evolution(spec, x, xi, 200.0)
    assert v_late == pytest.approx(vinf, rel=1e-9)
    assert vinf == pytest.approx(stationary_expectation(spec, xi))


@pytest.mark.parametrize("spec", [make_spec("BEP", 3, 1.5, T_a=1.3, T_b=0.6),
                                  make_spec("BEP", 2, 0.5, T_a=2.0, T_b=0.1),
                                  make_spec("KMP", 3, None, T_a=1.3, T_b=0.6),
                                  make_spec("ThBEP", 3, 1.5, T_a=1.3, T_b=0.6)])
def test_energy_duality(spec):
    assert energy_duality_residual(spec, 3) < 1e-10


def test_energy_duality_polynomial_matches_eval():
    spec = make_spec("BEP", 2, 1.5, T_a=1.3, T_b=0.6)
    P = duality_polynomial(spec, (1, 2, 1, 0))
    z = np.array([0.7, 1.9])
    assert P(z) == pytest.approx(duality_eval(spec, z, (1, 2, 1, 0)), rel=1e-13)


def test_kmp_and_thbep_dual_tables_coincide():
    kmp = make_spec("KMP", 4, None, T_a=2.0, T_b=0.5)
    assert dual_table(kmp, 3) == dual_table(kmp_as_thbep(kmp), 3)
    other = make_spec("ThBEP", 4, 2.0, T_a=1.0, T_b=0.25)
    assert dual_table(kmp, 2) != dual_table(other, 2)


def _dual_matrix(ds, n):
    import scipy.sparse as sp

    confs = list(dual_configurations(ds, n))
    pos = {c: k for k, c in enumerate(confs)}
    rows, cols, vals = [], [], []
    for c in confs:
        for c2, r in dual_transitions(ds, c):
            rows += [pos[c], pos[c]]
            cols += [pos[c2], pos[c]]
            vals += [r, -r]
    return confs, pos, sp.csr_matrix((vals, (rows, cols)), shape=(len(confs), len(confs)))


@pytest.mark.parametrize("fam,shape,cap,b", [
    ("SIP", 1.0, 15, dict(alpha=0.2, gamma=1.4, delta=0.1, beta=1.1)),
    ("SEP", 2.0, None, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("IRW", None, 15, dict(alpha=0.2, gamma=1.4, delta=0.1, beta=1.1)),
])
def test_forward_and_dual_semigroups_agree(fam, shape, cap, b):
    from scipy.sparse.linalg import expm_multiply

    spec = make_spec(fam, 3, shape, **b)
    G = build_generator(spec, cap)
    ds = dual_spec(spec)
    rng = np.random.default_rng(1)
    etas = [tuple(int(v) for v in rng.integers(0, 3, 3)) for _ in range(4)]
    state_pos = {tuple(s): k for k, s in enumerate(G.states)}
    for n in (1, 2):
        confs, pos, Qd = _dual_matrix(ds, n)
        bulk = [c for c in confs if c[0] == 0 and c[-1] == 0]
        for xi in bulk[:4]:
            fwd_f = duality_eval(spec, G.states, xi)
            for t in (0.1, 1.0, 10.0):
                Ptf = expm_multiply(t * G.Q, fwd_f)
                for eta in etas:
                    lhs = Ptf[state_pos[eta]]
                    g = np.array([duality_eval(spec, np.array([eta]), c)[0] for c in confs])
                    rhs = expm_multiply(t * Qd, g)[pos[xi]]
                    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)
