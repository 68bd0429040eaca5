import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochdual.analysis import profile_closed_form
from stochdual.generator import (SolverError, apply_generator, build_generator, check_detailed_balance,
                                 check_duality_identity, enumerate_transitions, marginal_means,
                                 second_moments, stationary_distribution, stationary_residual)
from stochdual.models import ModelError, equilibrium_marginal, make_spec

rate = st.floats(0.1, 3.0)


def _spec(fam, L, a, g, d, b, shape=2.0):
    if fam in ("SIP", "ThSIP"):
        g, b = a + g, d + b
    sh = None if fam in ("IRW", "ThIRW") else shape
    return make_spec(fam, L, sh, alpha=a, gamma=g, delta=d, beta=b)


@settings(max_examples=20, deadline=None)
@given(fam=st.sampled_from(["SIP", "SEP", "IRW", "ThSIP", "ThSEP", "ThIRW"]), L=st.integers(1, 3),
       a=rate, g=rate, d=rate, b=rate)
def test_rows_sum_to_zero_and_rates_nonnegative(fam, L, a, g, d, b):
    G = build_generator(_spec(fam, L, a, g, d, b), 4)
    Q = G.Q
    assert np.allclose(np.asarray(Q.sum(axis=1)).ravel(), 0.0, atol=1e-12)
    off = Q - np.diag(Q.diagonal())
    assert np.all(off[off != 0] > 0)


def test_sep_never_leaves_its_box():
    spec = make_spec("SEP", 3, 2.0, alpha=1, gamma=1, delta=2, beta=0.5)
    G = build_generator(spec)
    assert G.cap == 2 and G.n_states == 27 and not G.truncated.any()
    for eta in G.states:
        for new, _ in enumerate_transitions(spec, eta):
            assert 0 <= min(new) and max(new) <= 2


def test_enumerate_transitions_examples():
    spec = make_spec("SEP", 1, 1.0, alpha=1, gamma=1, delta=1, beta=1)
    tr = dict(enumerate_transitions(spec, (1,)))
    assert tr == {(0,): 2.0}
    irw = make_spec("IRW", 2, None, alpha=0.3, gamma=1, delta=0.7, beta=1)
    tr = dict(enumerate_transitions(irw, (0, 0)))
    assert tr == {(1, 0): pytest.approx(0.3), (0, 1): pytest.approx(0.7)}


def test_apply_generator_matches_matrix():
    spec = make_spec("SIP", 2, 1.5, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0)
    G = build_generator(spec, 6)
    f = lambda e: np.sin(e[:, 0] + 2.0 * e[:, 1])
    inner = ~G.truncated
    direct = (G.Q @ f(G.states))[inner]
    assert np.allclose(apply_generator(spec, f, G.states[inner]), direct, atol=1e-12)


def test_budget_and_cap_errors():
    spec = make_spec("SIP", 3, 1.0, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0)
    with pytest.raises(ModelError, match="cap"):
        build_generator(spec)
    with pytest.raises(ModelError, match="budget"):
        build_generator(spec, 50, budget=1000)


def test_thread_count_does_not_change_the_matrix():
    spec = make_spec("ThSIP", 3, 1.5, alpha=0.5, gamma=1.5, delta=0.2, beta=1.0)
    a, b = build_generator(spec, 5), build_generator(spec, 5, threads=3)
    assert (a.Q != b.Q).nnz == 0


def test_coo_export_format():
    G = build_generator(make_spec("SEP", 2, 1.0, alpha=1, gamma=1, delta=1, beta=1))
    lines = G.to_coo_text().splitlines()
    assert lines[0] == "# states: 4"
    assert len(lines) - 1 == G.Q.nnz
    r, c, v = lines[1].split()
    assert G.Q[int(r), int(c)] == float(v)


@pytest.mark.parametrize("fam,cap", [("SIP", 10), ("SEP", None), ("IRW", 10)])
def test_equilibrium_product_law_and_detailed_balance(fam, cap):
    spec = _spec(fam, 3, 1.0, 2.0, 0.5, 1.0) if fam != "SIP" else make_spec("SIP", 3, 2.0, alpha=1, gamma=2,
                                                                                delta=0.5, beta=1)
    G = build_generator(spec, cap)
    pi = stationary_distribution(G)
    w = equilibrium_marginal(spec).truncated_pmf(G.cap)
    prod = np.prod(w[G.states], axis=1)
    assert np.max(np.abs(pi - prod / prod.sum())) < 1e-12
    assert check_detailed_balance(G, pi) < 1e-12


def test_direct_and_power_solvers_agree():
    G = build_generator(make_spec("SEP", 3, 2.0, alpha=0.7, gamma=1.9, delta=0.4, beta=1.3))
    a = stationary_distribution(G)
    b = stationary_distribution(G, "power", tol=1e-15)
    assert np.max(np.abs(a - b)) < 1e-10
    assert stationary_residual(G, a) < 1e-14
    with pytest.raises(ValueError):
        stationary_distribution(G, "magic")


def test_nonequilibrium_means_match_closed_form():
    spec = make_spec("SEP", 4, 2.0, alpha=1.0, gamma=0.7, delta=0.3, beta=1.6)
    G = build_generator(spec)
    pi = stationary_distribution(G)
    assert np.allclose(marginal_means(G, pi), profile_closed_form(spec), atol=1e-12)
    S = second_moments(G, pi)
    assert np.allclose(S, S.T)
    assert check_detailed_balance(G, pi) > 1e-6  # reservoirs at different densities break reversibility


@pytest.mark.parametrize("fam,shape", [("SIP", 1.5), ("SEP", 2.0), ("IRW", None),
                                       ("ThSIP", 1.5), ("ThSEP", 2.0), ("ThIRW", None)])
def test_duality_identity(fam, shape):
    spec = make_spec(fam, 2, shape, alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)
    r = check_duality_identity(spec, max_dual=3, cap=7)
    assert r.residual < 1e-10 * max(1.0, r.scale)
    assert r.n_pairs > 0


def test_duality_identity_detects_a_wrong_dual():
    # perturb the SIP reservoir rates of the forward model only
    from stochdual import duality

    spec = make_spec("SIP", 2, 1.5, alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)
    wrong = make_spec("SIP", 2, 1.5, alpha=0.7, gamma=2.0, delta=0.4, beta=1.3)
    ds = duality.dual_spec(wrong)
    G = build_generator(spec, 6)
    etas = G.states[~G.truncated]
    xi = (0, 1, 0, 0)
    fwd = apply_generator(spec, lambda e: duality.duality_eval(spec, e, xi), etas)
    dual = sum(r * (duality.duality_eval(spec, etas, x2) - duality.duality_eval(spec, etas, xi))
               for x2, r in duality.dual_transitions(ds, xi))
    assert np.max(np.abs(fwd - dual)) > 1e-3


def test_solver_error_type():
    assert issubclass(SolverError, RuntimeError)
