"""Named invariant suites run over built-in parameter grids.

Every suite returns a list of :class:`Check` records; a suite passes when
all of its checks do.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import (assemble_appendix_system, covariance_closed_form, fit_bilinear_ansatz,
                       profile_closed_form, scaling_limit_check, solve_appendix_system,
                       stationary_moments_from_generator, th_moments_L1, th_moments_L1_exact)
from .duality import (dual_table, energy_duality_residual, single_walker_absorption)
from .generator import (build_generator, check_detailed_balance, check_duality_identity,
                        stationary_distribution)
from .models import Family, equilibrium_marginal, kmp_as_thbep, make_spec


@dataclass
class Check:
    name: str
    inputs: dict
    value: float
    reference: float
    deviation: float
    tolerance: float
    passed: bool
    extra: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def as_dict(self):
        d = asdict(self)
        d["verdict"] = self.verdict
        return d


def _check(name, inputs, value, reference, tol, relative=False, **extra):
    dev = abs(value - reference)
    if relative:
        dev /= max(abs(reference), 1e-300)
    return Check(name, inputs, float(value), float(reference), float(dev), tol, bool(dev < tol), extra)


# ---------------------------------------------------------------------------
# duality


DUALITY_GRID = [
    ("SIP", 1.5, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("SEP", 2.0, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("IRW", None, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("ThSIP", 1.5, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("ThSEP", 2.0, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("ThIRW", None, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("BEP", 1.5, dict(T_a=1.3, T_b=0.6)),
    ("KMP", None, dict(T_a=1.3, T_b=0.6)),
    ("ThBEP", 1.5, dict(T_a=1.3, T_b=0.6)),
]


def suite_duality(L: int = 3, max_dual: int = 2, cap: int = 8, seed: int = 0) -> list[Check]:
    out = []
    for fam, shape, bnd in DUALITY_GRID:
        spec = make_spec(fam, L, shape, **bnd)
        inputs = spec.as_dict() | {"max_dual": max_dual}
        if spec.family.is_discrete:
            r = check_duality_identity(spec, max_dual=max_dual, cap=cap)
            out.append(_check(f"duality/{fam}", inputs | {"cap": cap}, r.residual, 0.0, 1e-10,
                              scale=r.scale, pairs=r.n_pairs))
        else:
            out.append(_check(f"duality/{fam}", inputs, energy_duality_residual(spec, max_dual), 0.0, 1e-10))
    kmp = make_spec("KMP", L, T_a=1.3, T_b=0.6)
    same = dual_table(kmp, 3) == dual_table(kmp_as_thbep(kmp), 3)
    out.append(_check("duality/KMP-vs-ThBEP(2k=1)-dual-table", kmp.as_dict(), float(not same), 0.0, 0.5))
    return out


# ---------------------------------------------------------------------------
# absorption


def _random_spec(rng, fam):
    L = int(rng.integers(2, 9))
    if fam == "BEP":
        return make_spec(fam, L, float(rng.uniform(0.2, 3)), T_a=float(rng.uniform(0.1, 3)),
                         T_b=float(rng.uniform(0.1, 3)))
    a, d = rng.uniform(0.1, 2, size=2)
    g, b = rng.uniform(0.1, 2, size=2)
    if fam == "SIP":
        g, b = a + g, d + b
    shape = {"SIP": float(rng.uniform(0.2, 3)), "SEP": float(rng.integers(1, 5)), "IRW": None}[fam]
    return make_spec(fam, L, shape, alpha=float(a), gamma=float(g), delta=float(d), beta=float(b))


def suite_absorption(n_sets: int = 10, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for fam in ("SIP", "SEP", "IRW", "BEP"):
        for _ in range(n_sets):
            spec = _random_spec(rng, fam)
            dev = float(np.max(np.abs(single_walker_absorption(spec, "closed")
                                      - single_walker_absorption(spec, "linear"))))
            out.append(_check(f"absorption/{fam}", spec.as_dict(), dev, 0.0, 1e-12))
    return out


# ---------------------------------------------------------------------------
# equilibrium product measures


EQUILIBRIUM_GRID = [
    ("SIP", 1.0, dict(alpha=1.0, gamma=2.0, delta=0.5, beta=1.0), 12),
    ("SEP", 2.0, dict(alpha=1.0, gamma=2.0, delta=0.5, beta=1.0), None),
    ("IRW", None, dict(alpha=1.0, gamma=2.0, delta=0.5, beta=1.0), 12),
    ("ThSIP", 1.0, dict(alpha=1.0, gamma=2.0, delta=0.5, beta=1.0), 12),
    ("ThSEP", 3.0, dict(alpha=1.0, gamma=2.0, delta=0.5, beta=1.0), None),
    ("ThIRW", None, dict(alpha=1.0, gamma=2.0, delta=0.5, beta=1.0), 12),
]


def suite_equilibrium(L: int = 3, seed: int = 0) -> list[Check]:
    """Exact π against the truncated product law (discrete) and Gamma moments (energy).

    Detailed balance survives truncation to a box, so for reversible
    dynamics the truncated product law is the exact stationary law of the
    truncated chain.  The thermalized models are not reversible in general;
    only their product law is checked, with the truncation tail as tolerance.
    """
    out = []
    for fam, shape, bnd, cap in EQUILIBRIUM_GRID:
        spec = make_spec(fam, L, shape, **bnd)
        G = build_generator(spec, cap)
        pi = stationary_distribution(G)
        law = equilibrium_marginal(spec)
        w = law.truncated_pmf(G.cap)
        prod = np.prod(w[G.states], axis=1)
        prod /= prod.sum()
        tail = law.tail(G.cap) * L if hasattr(law, "tail") else 0.0
        tol = 1e-10 if not spec.family.is_thermalized else max(1e-10, 10 * tail)
        out.append(_check(f"equilibrium/{fam}/product-law", spec.as_dict() | {"cap": G.cap},
                          float(np.max(np.abs(pi - prod))), 0.0, tol))
        if not spec.family.is_thermalized:
            out.append(_check(f"equilibrium/{fam}/detailed-balance", spec.as_dict() | {"cap": G.cap},
                              check_detailed_balance(G, pi), 0.0, 1e-10))
    for fam, shape in (("BEP", 1.5), ("KMP", None), ("ThBEP", 1.5)):
        spec = make_spec(fam, L, shape, T_a=0.8, T_b=0.8)
        law = equilibrium_marginal(spec)
        mom = stationary_moments_from_generator(spec, 2)
        for m, v in mom.items():
            if sum(m) != 2:
                ref = law.mean
            elif max(m) == 2:
                ref = law.moment(2)
            else:
                ref = law.mean ** 2
            out.append(_check(f"equilibrium/{fam}/moment{m}", spec.as_dict(), v, ref, 1e-10, relative=True))
    return out


# ---------------------------------------------------------------------------
# two-point correlation systems


APPENDIX_GRID = [
    ("SIP", 1.0, dict(alpha=0.5, gamma=1.5, delta=0.25, beta=1.25)),   # γ−α = β−δ = 2k
    ("SEP", 2.0, dict(alpha=1.5, gamma=0.5, delta=0.5, beta=1.5)),     # γ+α = β+δ = 2j
    ("SEP", 1.0, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),     # 2j = 1, any rates
    ("BEP", 0.5, dict(T_a=2.0, T_b=0.5)),
]
GENERIC_GRID = [
    ("SIP", 1.5, dict(alpha=0.5, gamma=1.4, delta=0.3, beta=2.2)),
    ("SEP", 2.0, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("BEP", 1.5, dict(T_a=2.0, T_b=0.5)),
]


def suite_appendix(L_list=(4, 6, 10), seed: int = 0) -> list[Check]:
    out = []
    for L in L_list:
        for fam, shape, bnd in APPENDIX_GRID:
            spec = make_spec(fam, L, shape, **bnd)
            sysm = solve_appendix_system(spec)
            cov = sysm.covariance()
            dev = max(abs(cov[i - 1, l - 1] - covariance_closed_form(spec, i, l))
                      for i in range(1, L + 1) for l in range(i + 1, L + 1))
            prof = float(np.max(np.abs(sysm.x - profile_closed_form(spec))))
            out.append(_check(f"appendix/{fam}({shape})/L={L}", spec.as_dict(), dev, 0.0, 1e-10,
                              solver_residual=sysm.residual(), profile_deviation=prof))
        for fam, shape, bnd in GENERIC_GRID:
            spec = make_spec(fam, L, shape, **bnd)
            fit = fit_bilinear_ansatz(assemble_appendix_system(spec))
            # bilinearity must fail: the check passes when the residual is large
            out.append(Check(f"appendix/generic-{fam}({shape})/L={L}", spec.as_dict(), fit.residual,
                             1e-6, fit.residual, 1e-6, bool(fit.residual > 1e-6),
                             {"rule": "residual > 1e-6"}))
    return out


# ---------------------------------------------------------------------------
# thermalized single-site moments


THERMAL_GRID = [
    ("ThSIP", 1.5, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("ThSEP", 3.0, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("ThIRW", None, dict(alpha=0.7, gamma=1.9, delta=0.4, beta=1.3)),
    ("ThBEP", 1.5, dict(T_a=1.3, T_b=0.6)),
    ("KMP", None, dict(T_a=1.3, T_b=0.6)),
]


def suite_thermalized(n_max: int = 4, seed: int = 0) -> list[Check]:
    """Relative tolerance 1e-10: the moments grow like n! and reach O(10²)."""
    out = []
    for fam, shape, bnd in THERMAL_GRID:
        spec = make_spec(fam, 1, shape, **bnd)
        exact = th_moments_L1_exact(spec, n_max, tail=1e-18)
        for n in range(1, n_max + 1):
            out.append(_check(f"thermalized/{fam}/n={n}", spec.as_dict(), exact[n], th_moments_L1(spec, n),
                              1e-10, relative=True))
    return out


# ---------------------------------------------------------------------------
# scaling limits


def suite_scaling(N_list=(100, 1000, 10_000), seed: int = 0) -> list[Check]:
    out = []
    rep = scaling_limit_check("SIP->BEP", N_list)
    out.append(Check("scaling/SIP->BEP/monotone", {"N": list(N_list)}, rep.discrepancy[-1], 0.0,
                     rep.discrepancy[-1], 0.0, rep.monotone, {"discrepancy": rep.discrepancy}))
    rep = scaling_limit_check("IRW->DEP", N_list)
    dev = max(rep.discrepancy)
    out.append(_check("scaling/IRW->DEP", {"N": list(N_list)}, dev, 0.0, 1e-10,
                      discrepancy=rep.discrepancy))
    return out


SUITES = {
    "duality": suite_duality,
    "equilibrium": suite_equilibrium,
    "absorption": suite_absorption,
    "appendix": suite_appendix,
    "thermalized": suite_thermalized,
    "scaling": suite_scaling,
}


def run_suite(name: str, seed: int = 0) -> list[Check]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r} (expected one of {', '.join(SUITES)})")
    return SUITES[name](seed=seed)
