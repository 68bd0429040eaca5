import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochdual.mft import (BVPError, MacroProfile, TransportCoefficients, irw_functional_via_limit,
                           ld_functional, macro_correlations, micro_macro_compare, npoint_prefactor_check,
                           ode_residual, physical_range, scaling_relation_check, solve_auxiliary_profile,
                           transport_coefficients)
from stochdual.models import ModelError, make_spec

TC = {
    "SIP": transport_coefficients("SIP", 1.0),
    "SEP": transport_coefficients("SEP", 1.0),
    "SEP2": transport_coefficients("SEP", 2.0),
    "BEP": transport_coefficients("BEP", 0.5),
    "KMP": transport_coefficients("KMP"),
    "IRW": transport_coefficients("IRW"),
}


def _bump(rho_a, rho_b, eps):
    return MacroProfile.from_function(lambda x: rho_a + (rho_b - rho_a) * x + eps * np.sin(np.pi * x),
                                      rho_a, rho_b)


def test_coefficients_and_ranges():
    sep = TC["SEP2"]
    assert (sep.A, sep.B, sep.C) == (1.0, 2.0, 2.0)
    assert sep.sigma(0.5) == pytest.approx(2 * 0.5 * 1.5)
    assert TC["KMP"].sigma(2.0) == 8.0 and TC["IRW"].sigma(2.0) == 4.0
    assert physical_range(sep) == (0.0, 2.0)
    assert physical_range(TC["SIP"]) == (0.0, math.inf)
    with pytest.raises(ModelError):
        transport_coefficients("ThSIP", 1.0)


@pytest.mark.parametrize("name", ["SIP", "SEP", "BEP", "KMP"])
def test_typical_profile_gives_zero(name):
    prof = MacroProfile.typical(0.7, 0.3)
    aux = solve_auxiliary_profile(TC[name], prof)
    assert np.max(np.abs(aux.F - prof.rho)) < 1e-8
    assert abs(ld_functional(TC[name], prof, aux)) < 1e-10


@settings(max_examples=12, deadline=None)
@given(name=st.sampled_from(["SIP", "SEP", "BEP", "KMP"]), eps=st.floats(-0.2, 0.2).filter(lambda e: abs(e) > 0.01))
def test_functional_is_positive_off_the_typical_profile(name, eps):
    prof = _bump(0.7, 0.3, eps)
    aux = solve_auxiliary_profile(TC[name], prof)
    assert ode_residual(TC[name], prof, aux.x, aux.F, aux.dF) < 1e-6
    assert np.all(aux.dF < 0)
    assert ld_functional(TC[name], prof, aux) > 0


def test_bvp_residual_is_small():
    prof = _bump(0.8, 0.2, 0.1)
    aux = solve_auxiliary_profile(TC["SEP"], prof)
    assert aux.residual < 1e-8
    assert aux.F[0] == pytest.approx(0.8) and aux.F[-1] == pytest.approx(0.2)


def test_irw_closed_form_agrees_with_large_B_limit():
    prof = _bump(1.5, 0.5, 0.3)
    direct = ld_functional(TC["IRW"], prof)
    assert direct > 0
    assert irw_functional_via_limit(prof) == pytest.approx(direct, rel=1e-6)


@pytest.mark.parametrize("name", ["SIP", "SEP2"])
def test_scaling_relation(name):
    prof = _bump(0.7, 0.3, 0.1)
    direct, scaled = scaling_relation_check(TC[name], prof)
    assert direct == pytest.approx(scaled, rel=1e-8)


def test_correlation_signs():
    pts = (0.2, 0.5, 0.8)
    assert macro_correlations(TC["SIP"], 1.0, 0.5, 100, pts).two_point > 0
    assert macro_correlations(TC["SEP"], 1.0, 0.5, 100, pts).two_point < 0
    assert macro_correlations(TC["IRW"], 1.0, 0.5, 100, pts).two_point == 0.0
    assert macro_correlations(TC["SEP"], 0.5, 0.5, 100, pts).two_point == 0.0
    with pytest.raises(ValueError):
        macro_correlations(TC["SEP"], 1.0, 0.5, 100, (0.5, 0.2))


@pytest.mark.parametrize("name", ["SIP", "SEP2"])
def test_npoint_prefactor(name):
    assert npoint_prefactor_check(TC[name], 0.7, 0.2, 50, (0.1, 0.4, 0.9)) < 1e-15
    with pytest.raises(ModelError):
        npoint_prefactor_check(TC["BEP"], 0.7, 0.2, 50, (0.1, 0.4, 0.9))


@pytest.mark.parametrize("spec", [
    make_spec("SIP", 3, 1.0, alpha=0.5, gamma=1.5, delta=0.2, beta=1.2),
    make_spec("SEP", 3, 2.0, alpha=1.5, gamma=0.5, delta=0.4, beta=1.6),
    make_spec("BEP", 3, 0.5, T_a=2.0, T_b=0.5),
])
def test_micro_to_macro_converges(spec):
    rows = micro_macro_compare(spec, (20, 50, 100))
    errs = [r.max_abs for r in rows]
    assert errs[0] > errs[1] > errs[2]
    assert rows[-1].max_rel < 0.05


def test_range_and_degenerate_errors():
    with pytest.raises(ModelError):
        solve_auxiliary_profile(TC["SEP"], MacroProfile.typical(0.5, 1.5))
    with pytest.raises(ModelError):
        ld_functional(TC["SEP"], _bump(0.6, 0.4, 0.6))
    with pytest.raises(ModelError):
        ld_functional(TC["SEP"], MacroProfile.typical(0.5, 0.5))


def test_bvp_error_carries_best_residual():
    err = BVPError("no bracket", 0.25)
    assert err.best_residual == 0.25 and "0.25" in str(err)
    assert isinstance(err, RuntimeError)


def test_coefficients_compare_by_value():
    assert TransportCoefficients("SEP", 1.0, 1.0, 1.0) == TC["SEP"]
