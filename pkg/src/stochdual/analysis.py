"""Closed-form profiles and covariances, two-point correlation systems,
multilinearity tests, thermalized single-site moments, the IRW product
measure check and scaling-limit checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .duality import (dual_spec, single_walker_absorption, site_normalisation,
                      stationary_expectation, _bep_forward, _thermal_energy_forward)
from .generator import build_generator, stationary_distribution, stationary_residual
from .models import (Family, ModelError, ModelSpec, make_spec, reservoir_densities,
                     reservoir_laws)
from .polynomial import Poly, monomials_upto

REL_TOL = 1e-12


def _close(a, b):
    return math.isclose(a, b, rel_tol=REL_TOL, abs_tol=REL_TOL)


# ---------------------------------------------------------------------------
# profiles and covariances


def profile_closed_form(spec: ModelSpec) -> np.ndarray:
    """Stationary ⟨η_i⟩ (or ⟨z_i⟩), i = 1..L, from single dual walker absorption."""
    ds = dual_spec(spec)
    p = single_walker_absorption(spec)[1:-1]
    return (ds.w_a * p + ds.w_b * (1 - p)) / ds.g1


def bilinearity_condition(spec: ModelSpec) -> str | None:
    """Which closed-form covariance applies, or ``None``.

    Returns 'sep1' (SEP with 2j = 1, any rates), 'sep' (γ+α = β+δ = 2j),
    'sip' (γ−α = β−δ = 2k), 'bep' (2k = 1/2) or 'irw' (product measure).
    """
    fam, b = spec.family, spec.boundary
    if fam == Family.IRW:
        return "irw"
    if fam == Family.SEP:
        if spec.two_j == 1:
            return "sep1"
        if _close(b.gamma + b.alpha, spec.shape) and _close(b.beta + b.delta, spec.shape):
            return "sep"
    if fam == Family.SIP and _close(b.gamma - b.alpha, spec.shape) and _close(b.beta - b.delta, spec.shape):
        return "sip"
    if fam == Family.BEP and _close(spec.shape, 0.5):
        return "bep"
    return None


def covariance_closed_form(spec: ModelSpec, i: int, l: int) -> float:
    """Connected two-point function ⟨η_i η_ℓ⟩ − ⟨η_i⟩⟨η_ℓ⟩ for 1 ≤ i < ℓ ≤ L."""
    if not 1 <= i < l <= spec.L:
        raise ModelError("need 1 ≤ i < ℓ ≤ L")
    cond = bilinearity_condition(spec)
    if cond is None:
        raise ModelError("no closed form for these parameters")
    L = spec.L
    rd = reservoir_densities(spec)
    d2 = (rd.rho_a - rd.rho_b) ** 2
    if cond == "irw":
        return 0.0
    if cond == "sip":
        return i * (L + 1 - l) / ((L + 1) ** 2 * (spec.shape * (L + 1) + 1)) * d2
    if cond == "sep":
        return -i * (L + 1 - l) / ((L + 1) ** 2 * (spec.shape * (L + 1) - 1)) * d2
    if cond == "bep":
        return 2 * i * (L + 1 - l) / ((L + 3) * (L + 1) ** 2) * d2
    # SEP(1) with arbitrary rates: boundary lengths a = 1/(α+γ), b = 1/(β+δ)
    b = spec.boundary
    a_, b_ = 1.0 / (b.alpha + b.gamma), 1.0 / (b.beta + b.delta)
    S = L + a_ + b_ - 1
    return -d2 * (i - 1 + a_) * (L + b_ - l) / (S ** 2 * (S - 1))


# ---------------------------------------------------------------------------
# two-point correlation systems


def pair_index(L: int):
    """Map (i, ℓ), 1 ≤ i ≤ ℓ ≤ L, to consecutive integers."""
    idx = {}
    for i in range(1, L + 1):
        for l in range(i, L + 1):
            idx[(i, l)] = len(idx)
    return idx


@dataclass
class CorrelationSystem:
    """Linear system M X = rhs for X_{i,ℓ} = ⟨η_i η_ℓ⟩ given the profile x."""

    spec: ModelSpec
    x: np.ndarray
    index: dict
    M: np.ndarray
    rhs: np.ndarray
    X: np.ndarray | None = None

    def matrix(self) -> np.ndarray:
        L = self.spec.L
        out = np.zeros((L, L))
        for (i, l), k in self.index.items():
            out[i - 1, l - 1] = out[l - 1, i - 1] = self.X[k]
        return out

    def covariance(self) -> np.ndarray:
        return self.matrix() - np.outer(self.x, self.x)

    def residual(self, X=None) -> float:
        X = self.X if X is None else X
        return float(np.max(np.abs(self.M @ X - self.rhs)))


def assemble_appendix_system(spec: ModelSpec) -> CorrelationSystem:
    """The ten families of equations for X, written out term by term.

    SIP and SEP share one set with the sign s = +1 (inclusion) or −1
    (exclusion) and H = 2h the shape; BEP has its own set.  The profile x
    is taken from :func:`profile_closed_form`.
    """
    fam = spec.family
    if fam not in (Family.SIP, Family.SEP, Family.BEP):
        raise ModelError("correlation system available for SIP, SEP and BEP")
    L = spec.L
    if L < 3:
        raise ModelError("the two-point system is written for L ≥ 3")
    x = profile_closed_form(spec)
    idx = pair_index(L)
    n = len(idx)
    M = np.zeros((n, n))
    rhs = np.zeros(n)
    X = lambda i, l: idx[(min(i, l), max(i, l))]
    xv = lambda i: x[i - 1]
    row = [0]

    def eq(terms, const):
        r = row[0]
        for (i, l), c in terms:
            M[r, X(i, l)] += c
        rhs[r] = -const
        row[0] += 1

    if fam == Family.BEP:
        k, Ta, Tb = spec.k, spec.T_a, spec.T_b
        for i in range(1, L + 1):
            for l in range(i, L + 1):
                if i == l:
                    if 1 < i < L:
                        eq([((i - 1, i), 2 * k + 1), ((i, i + 1), 2 * k + 1), ((i, i), -4 * k)], 0.0)
                    elif i == 1:
                        eq([((1, 2), 2 * (2 * k + 1)), ((1, 1), -(4 * k + 1))], 2 * (2 * k + 1) * Ta * xv(1))
                    else:
                        eq([((L - 1, L), 2 * (2 * k + 1)), ((L, L), -(4 * k + 1))], 2 * (2 * k + 1) * Tb * xv(L))
                elif l == i + 1:
                    if 1 < i < L - 1:
                        eq([((i, i), 2 * k), ((i + 1, i + 1), 2 * k), ((i, i + 1), -2 * (4 * k + 1)),
                            ((i - 1, i + 1), 2 * k), ((i, i + 2), 2 * k)], 0.0)
                    elif i == 1:
                        eq([((1, 1), 4 * k), ((2, 2), 4 * k), ((1, 2), -(12 * k + 5)), ((1, 3), 4 * k)],
                           4 * k * Ta * xv(2))
                    else:
                        eq([((L, L), 4 * k), ((L - 1, L - 1), 4 * k), ((L - 1, L), -(12 * k + 5)),
                            ((L - 2, L), 4 * k)], 4 * k * Tb * xv(L - 1))
                elif i == 1 and l == L:
                    eq([((1, L), -2 * (1 + 4 * k)), ((2, L), 4 * k), ((1, L - 1), 4 * k)],
                       4 * k * Ta * xv(L) + 4 * k * Tb * xv(1))
                elif i == 1:
                    eq([((1, l - 1), 4 * k), ((1, l + 1), 4 * k), ((2, l), 4 * k), ((1, l), -(1 + 12 * k))],
                       4 * k * Ta * xv(l))
                elif l == L:
                    eq([((i - 1, L), 4 * k), ((i + 1, L), 4 * k), ((i, L - 1), 4 * k), ((i, L), -(12 * k + 1))],
                       4 * k * Tb * xv(i))
                else:
                    eq([((i - 1, l), 1.0), ((i + 1, l), 1.0), ((i, l - 1), 1.0), ((i, l + 1), 1.0),
                        ((i, l), -4.0)], 0.0)
        return CorrelationSystem(spec, x, idx, M, rhs)

    s = 1.0 if fam == Family.SIP else -1.0
    h = 0.5 * spec.shape
    b = spec.boundary
    al, ga, de, be = b.alpha, b.gamma, b.delta, b.beta
    for i in range(1, L + 1):
        for l in range(i, L + 1):
            if i == l:
                if 1 < i < L:  # 7)
                    eq([((i - 1, i), 2 * h + s), ((i, i), -4 * h), ((i, i + 1), 2 * h + s)],
                       h * (xv(i - 1) + 2 * xv(i) + xv(i + 1)))
                elif i == 1:  # 8)
                    eq([((1, 1), 2 * (2 * h + (-s * al + ga))), ((1, 2), -2 * (2 * h + s))],
                       -(2 * h * (2 * al + 1) + ga + s * al) * xv(1) - 2 * h * xv(2) - 2 * h * al)
                else:  # 9)
                    eq([((L, L), 2 * (2 * h + (be - s * de))), ((L - 1, L), -2 * (2 * h + s))],
                       -(2 * h * (2 * de + 1) + be + s * de) * xv(L) - 2 * h * xv(L - 1) - 2 * h * de)
            elif l == i + 1:
                if 1 < i < L - 1:  # 4)
                    eq([((i, i), h), ((i + 1, i + 1), h), ((i, i + 1), -s - 4 * h),
                        ((i - 1, i + 1), h), ((i, i + 2), h)], -h * (xv(i) + xv(i + 1)))
                elif i == 1:  # 5)
                    eq([((1, 1), 2 * h), ((2, 2), 2 * h), ((1, 2), -(2 * (3 * h + s) + (-s * al + ga))),
                        ((1, 3), 2 * h)], -2 * h * xv(1) - 2 * h * (1 - al) * xv(2))
                else:  # 6)
                    eq([((L, L), 2 * h), ((L - 1, L - 1), 2 * h),
                        ((L - 1, L), -(2 * (3 * h + s) + (be - s * de))), ((L - 2, L), 2 * h)],
                       -2 * h * xv(L) - 2 * h * (1 - de) * xv(L - 1))
            elif i == 1 and l == L:  # 10)
                eq([((1, L), -(4 * h + ga - s * de - s * al + be)), ((2, L), 2 * h), ((1, L - 1), 2 * h)],
                   2 * h * (de * xv(1) + al * xv(L)))
            elif i == 1:  # 2)
                eq([((2, l), 2 * h), ((1, l - 1), 2 * h), ((1, l + 1), 2 * h), ((1, l), -(6 * h - s * al + ga))],
                   2 * h * al * xv(l))
            elif l == L:  # 3)
                eq([((i, L - 1), 2 * h), ((i + 1, L), 2 * h), ((i - 1, L), 2 * h), ((i, L), -(6 * h + be - s * de))],
                   2 * h * de * xv(i))
            else:  # 1)
                eq([((i - 1, l), 1.0), ((i + 1, l), 1.0), ((i, l - 1), 1.0), ((i, l + 1), 1.0),
                    ((i, l), -4.0)], 0.0)
    return CorrelationSystem(spec, x, idx, M, rhs)


def solve_appendix_system(spec: ModelSpec) -> CorrelationSystem:
    """Solve the two-point system; raises on a singular matrix."""
    sysm = assemble_appendix_system(spec)
    cond = np.linalg.cond(sysm.M)
    if not np.isfinite(cond) or cond > 1e14:
        raise ModelError(f"singular correlation system (condition number {cond:.3g})")
    sysm.X = np.linalg.solve(sysm.M, sysm.rhs)
    return sysm


@dataclass
class BilinearAnsatz:
    """X_{iℓ} = A iℓ + B i + C ℓ + D (i < ℓ) and X_ii = E i² + F i + G."""

    A: float
    B: float
    C: float
    D: float
    E: float
    F: float
    G: float
    residual: float

    @property
    def bilinear(self) -> bool:
        return self.residual < 1e-9


def fit_bilinear_ansatz(system: CorrelationSystem) -> BilinearAnsatz:
    """Least-squares fit of the ansatz to the equations (not to a solution)."""
    B = np.zeros((len(system.index), 7))
    for (i, l), k in system.index.items():
        if i < l:
            B[k, :4] = (i * l, i, l, 1.0)
        else:
            B[k, 4:] = (i * i, i, 1.0)
    K = system.M @ B
    theta, *_ = np.linalg.lstsq(K, system.rhs, rcond=None)
    res = float(np.max(np.abs(K @ theta - system.rhs)))
    return BilinearAnsatz(*theta, residual=res)


def expected_bilinear_coefficients(spec: ModelSpec) -> tuple[float, float, float, float]:
    """(A, B, C, D) implied by a linear profile and covariance κ i(L+1−ℓ)."""
    L = spec.L
    kappa = covariance_closed_form(spec, 1, L)  # = κ · 1 · 1
    rd = reservoir_densities(spec)
    slope = (rd.rho_b - rd.rho_a) / (L + 1)
    return (slope ** 2 - kappa, rd.rho_a * slope + kappa * (L + 1), rd.rho_a * slope, rd.rho_a ** 2)


# ---------------------------------------------------------------------------
# moment equations straight from the generator (independent of the hand-assembled system)


def _rate_factor(spec, var):
    base = spec.family.base
    L = spec.L
    if base == Family.SIP:
        return Poly.const(L, spec.shape) + Poly.var(L, var)
    if base == Family.SEP:
        return Poly.const(L, spec.shape) - Poly.var(L, var)
    return Poly.const(L, 1.0)


def forward_on_poly(spec: ModelSpec, P: Poly) -> Poly:
    """Generator of SIP, SEP, IRW or BEP applied to a polynomial observable."""
    if spec.family == Family.BEP:
        return _bep_forward(spec, P)
    if spec.family in (Family.KMP, Family.ThBEP):
        return _thermal_energy_forward(spec, P)
    if spec.family not in (Family.SIP, Family.SEP, Family.IRW):
        raise ModelError("polynomial action implemented for SIP, SEP, IRW, BEP, KMP, ThBEP")
    L = spec.L
    eta = [Poly.var(L, i) for i in range(L)]
    out = Poly(L)
    for b in range(L - 1):
        for s, d in ((b, b + 1), (b + 1, b)):
            rate = eta[s] * _rate_factor(spec, d)
            out = out + rate * (P.shift(s, -1).shift(d, 1) - P)
    if spec.reservoirs:
        bnd = spec.boundary
        for site, cr, an in ((0, bnd.alpha, bnd.gamma), (L - 1, bnd.delta, bnd.beta)):
            out = out + _rate_factor(spec, site) * (P.shift(site, 1) - P) * cr
            out = out + eta[site] * (P.shift(site, -1) - P) * an
    return out


def moment_matrix(spec: ModelSpec, degree: int = 2):
    """Matrix A with ℒ m_a = Σ_b A_ab m_b over monomials of degree ≤ ``degree``.

    Raises if the generator does not close on that space.
    """
    basis = monomials_upto(spec.L, degree)
    pos = {m: i for i, m in enumerate(basis)}
    A = np.zeros((len(basis), len(basis)))
    for a, m in enumerate(basis):
        img = forward_on_poly(spec, Poly.monomial(m))
        for e, c in img.terms.items():
            if e not in pos:
                if abs(c) > 1e-12:
                    raise ModelError(f"moment equations do not close at degree {degree}")
                continue
            A[a, pos[e]] += c
    return basis, A


def stationary_moments_from_generator(spec: ModelSpec, degree: int = 2) -> dict:
    """Solve ⟨ℒ m⟩ = 0 for all monomials of degree ≤ ``degree``."""
    basis, A = moment_matrix(spec, degree)
    # unknowns: all non-constant monomials; the constant has expectation 1
    K = A[1:, 1:]
    rhs = -A[1:, 0]
    sol = np.linalg.solve(K, rhs)
    return {m: v for m, v in zip(basis[1:], sol)}


# ---------------------------------------------------------------------------
# multilinearity experiment


def _connected3(E1, E2, E3, i, j, k):
    return (E3[i, j, k] - E1[i] * E2[j, k] - E1[j] * E2[i, k] - E1[k] * E2[i, j]
            + 2 * E1[i] * E1[j] * E1[k])


@dataclass
class MultilinearityResult:
    two_j: int
    d: np.ndarray
    e: np.ndarray
    solver_residual: float
    d_spread: float
    e_spread: float
    d_verdict: str
    e_verdict: str
    n_states: int

    @property
    def d_relative_spread(self):
        return self.d_spread / max(np.max(np.abs(self.d)), 1e-300)

    @property
    def e_relative_spread(self):
        return self.e_spread / max(np.max(np.abs(self.e)), 1e-300)


def _verdict(spread, residual):
    if spread < 1e3 * residual:
        return "constant"
    if spread > 1e6 * residual:
        return "non-constant"
    return "inconclusive"


def multilinearity_experiment(spec: ModelSpec) -> MultilinearityResult:
    """Differences d_i and e_i of connected 2- and 3-point functions from the exact π.

    d_i = ⟨η_1η_{i+1}⟩_c − ⟨η_1η_i⟩_c (i = 2..L−1),
    e_i = ⟨η_1η_2η_{i+1}⟩_c − ⟨η_1η_2η_i⟩_c (i = 3..L−1).
    The solver residual used for the verdict is ‖πᵀQ‖_∞ divided by the
    largest exit rate, i.e. the residual of the uniformized balance equations.
    """
    if spec.family != Family.SEP:
        raise ModelError("the multilinearity experiment is defined for SEP")
    G = build_generator(spec)
    pi = stationary_distribution(G)
    S = G.states.astype(float)
    L = spec.L
    E1 = pi @ S
    E2 = (S * pi[:, None]).T @ S
    E3 = np.einsum("n,ni,nj,nk->ijk", pi, S, S, S)
    c2 = lambda i, l: E2[i, l] - E1[i] * E1[l]
    d = np.array([c2(0, i) - c2(0, i - 1) for i in range(2, L)])
    e = np.array([_connected3(E1, E2, E3, 0, 1, i) - _connected3(E1, E2, E3, 0, 1, i - 1)
                  for i in range(3, L)])
    res = stationary_residual(G, pi) / float(np.max(-G.Q.diagonal()))
    res = max(res, np.finfo(float).eps * float(np.max(np.abs(np.concatenate([d, e])))))
    ds, es = float(np.ptp(d)), float(np.ptp(e))
    return MultilinearityResult(spec.two_j, d, e, res, ds, es, _verdict(ds, res), _verdict(es, res),
                                G.n_states)


def fig1_specs(L: int = 6):
    """SEP specs behind the multilinearity figure: α=1, γ=1, β=1/2, δ=3/2."""
    return [make_spec(Family.SEP, L, tj, alpha=1.0, gamma=1.0, delta=1.5, beta=0.5) for tj in (1, 2, 3, 4)]


# ---------------------------------------------------------------------------
# thermalized single-site moments


def th_moments_L1(spec: ModelSpec, n: int) -> float:
    """Stationary factorial moment ⟨(η)_n⟩ (or ⟨z^n⟩) of a thermalized model at L = 1.

    The site is resampled from either bath with equal rates, so the moment
    is the average of the two bath moments.
    """
    if not spec.family.is_thermalized or spec.L != 1:
        raise ModelError("th_moments_L1 needs a thermalized spec with L = 1")
    b = spec.boundary
    fam = spec.family
    if fam == Family.ThSIP:
        ga = math.exp(math.lgamma(spec.shape + n) - math.lgamma(spec.shape))
        return ga / 2 * ((b.alpha / (b.gamma - b.alpha)) ** n + (b.delta / (b.beta - b.delta)) ** n)
    if fam == Family.ThSEP:
        if n > spec.two_j:
            return 0.0
        ff = math.exp(math.lgamma(spec.shape + 1) - math.lgamma(spec.shape + 1 - n))
        return ff / 2 * ((b.alpha / (b.alpha + b.gamma)) ** n + (b.delta / (b.delta + b.beta)) ** n)
    if fam == Family.ThIRW:
        return 0.5 * ((b.alpha / b.gamma) ** n + (b.delta / b.beta) ** n)
    if fam == Family.ThBEP:
        ga = math.exp(math.lgamma(spec.shape + n) - math.lgamma(spec.shape))
        return ga / 2 * ((2 * b.T_a) ** n + (2 * b.T_b) ** n)
    # KMP: exponential baths with means T_a, T_b
    return math.factorial(n) / 2 * (b.T_a ** n + b.T_b ** n)


def th_moments_L1_exact(spec: ModelSpec, n_max: int = 4, tail: float = 1e-14) -> np.ndarray:
    """Moments 0..n_max at L = 1 from an exact stationary solve.

    Discrete families: master equation on {0..M} with M chosen so both bath
    laws have tail < ``tail``.  Energy families: the moment equations
    ⟨ℒ z^n⟩ = 0, which are closed and triangular.
    """
    if spec.L != 1 or not spec.family.is_thermalized:
        raise ModelError("need a thermalized spec with L = 1")
    if spec.family.is_discrete:
        laws = reservoir_laws(spec)
        M = max(getattr(l, "n", None) or l.support_cap(tail) for l in laws)
        M = max(M, n_max)
        G = build_generator(spec, M)
        pi = stationary_distribution(G)
        eta = G.states[:, 0].astype(float)
        out = []
        for n in range(n_max + 1):
            ff = np.ones_like(eta)
            for r in range(n):
                ff = ff * (eta - r)
            out.append(float(pi @ ff))
        return np.array(out)
    out = [1.0]
    for n in range(1, n_max + 1):
        img = forward_on_poly(spec, Poly.monomial((n,)))
        # img = c_n z^n + Σ_{m<n} c_m z^m ; solve ⟨img⟩ = 0
        acc = sum(c * out[e[0]] for e, c in img.terms.items() if e[0] < n)
        out.append(-acc / img.coeff((n,)))
    return np.array(out)


# ---------------------------------------------------------------------------
# product measure check


def _bulk_configurations(L, n):
    def rec(prefix, left, i):
        if i == L - 1:
            yield tuple(prefix + [left])
            return
        for e in range(left + 1):
            yield from rec(prefix + [e], left - e, i + 1)
    yield from rec([], n, 0)


@dataclass
class ProductCheck:
    max_deviation: float
    deviations: dict = field(default_factory=dict)


def irw_product_check(spec: ModelSpec, max_order: int = 3) -> ProductCheck:
    """Compare stationary factorial moments with ∏ λ_i^{ξ_i}, λ the profile.

    Exact for IRW; for SIP/SEP the deviation of a split pair (i, ℓ) is the
    covariance of η_i and η_ℓ.
    """
    lam = profile_closed_form(spec)
    devs = {}
    for n in range(1, max_order + 1):
        for bulk in _bulk_configurations(spec.L, n):
            xi = (0,) + bulk + (0,)
            norm = np.prod([site_normalisation(spec, b) for b in bulk])
            if norm == 0:
                continue
            lhs = stationary_expectation(spec, xi) / norm
            rhs = float(np.prod(lam ** np.array(bulk)))
            devs[bulk] = lhs - rhs
    worst = max((abs(v) for v in devs.values()), default=0.0)
    return ProductCheck(worst, devs)


# ---------------------------------------------------------------------------
# scaling limits


@dataclass
class ScalingReport:
    pair: str
    N: list
    discrepancy: list
    limit_values: np.ndarray
    monotone: bool
    details: dict = field(default_factory=dict)


def _moments_at(spec: ModelSpec, x0, t: float, degree: int = 2):
    basis, A = moment_matrix(spec, degree)
    m0 = np.array([np.prod(np.asarray(x0, float) ** np.array(m)) for m in basis])
    return basis, expm(A * t) @ m0


def _split(N, fractions):
    f = np.asarray(fractions, float)
    f = f / f.sum()
    eta = np.floor(N * f).astype(int)
    eta[np.argmax(f)] += N - eta.sum()
    return eta


def scaling_limit_check(pair: str, N_list=(100, 1000, 10_000), *, L: int = 3, shape: float = 1.0,
                        energy: float = 1.0, t: float = 1.0, fractions=(0.5, 0.3, 0.2)) -> ScalingReport:
    """Moment trajectories of the rescaled bulk process against the limit.

    The moments of bulk SIP, IRW and BEP close at every order, so both sides
    are computed exactly from the moment equations (matrix exponential);
    Monte Carlo cross-checks live in the simulation modules.

    ``pair='SIP->BEP'`` compares ε² E[η_iη_ℓ](t) with E[z_i z_ℓ](t) for
    z(0) = ε η(0), ε = energy / N.  ``pair='IRW->DEP'`` compares ε E[η_i](t)
    with the solution of ẏ = Δy (reflecting ends), integrated by an ODE
    solver.
    """
    fractions = tuple(fractions)[:L] if len(fractions) >= L else tuple(np.ones(L))
    disc, details = [], {}
    if pair == "SIP->BEP":
        bep = make_spec(Family.BEP, L, shape, T_a=1.0, T_b=1.0, reservoirs=False)
        sip = make_spec(Family.SIP, L, shape, alpha=1.0, gamma=2.0, delta=1.0, beta=2.0, reservoirs=False)
        limit = None
        for N in N_list:
            eta0 = _split(N, fractions)
            eps = energy / N
            basis, m_bep = _moments_at(bep, eps * eta0, t)
            _, m_sip = _moments_at(sip, eta0, t)
            second = [k for k, m in enumerate(basis) if sum(m) == 2]
            scaled = np.array([m_sip[k] * eps ** 2 for k in second])
            target = np.array([m_bep[k] for k in second])
            disc.append(float(np.max(np.abs(scaled - target))))
            details[N] = {"eta0": eta0.tolist(), "scaled": scaled.tolist(), "target": target.tolist()}
            limit = target
    elif pair == "IRW->DEP":
        irw = make_spec(Family.IRW, L, None, alpha=1.0, gamma=1.0, delta=1.0, beta=1.0, reservoirs=False)
        lap = np.zeros((L, L))
        for i in range(L):
            if i > 0:
                lap[i, i - 1] += 1
                lap[i, i] -= 1
            if i < L - 1:
                lap[i, i + 1] += 1
                lap[i, i] -= 1
        limit = None
        for N in N_list:
            eta0 = _split(N, fractions)
            eps = energy / N
            basis, m = _moments_at(irw, eta0, t, degree=1)
            first = [k for k, mm in enumerate(basis) if sum(mm) == 1]
            scaled = np.array([m[k] * eps for k in first])
            ode = solve_ivp(lambda _, y: lap @ y, (0.0, t), eps * eta0, method="DOP853",
                            rtol=1e-13, atol=1e-15).y[:, -1]
            disc.append(float(np.max(np.abs(scaled - ode))))
            details[N] = {"eta0": eta0.tolist(), "scaled": scaled.tolist(), "target": ode.tolist()}
            limit = ode
    else:
        raise ValueError("pair must be 'SIP->BEP' or 'IRW->DEP'")
    mono = all(b < a for a, b in zip(disc, disc[1:]))
    return ScalingReport(pair, list(N_list), disc, limit, mono, details)
