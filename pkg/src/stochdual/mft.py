"""Macroscopic fluctuation theory for constant diffusivity and quadratic mobility.

The families are parametrized by D(ρ) = C and σ(ρ) = 2Aρ(B − ρ):

=====  ===================  ==========================
SIP    (A, B, C) = (−1, −2k, 2k)
SEP    (1, 2j, 2j)
BEP    (−1, 0, 2k)           σ = 2ρ², B → 0 closed forms used
IRW    A = 1/B → 0, C = 1    σ = 2ρ, closed forms used
KMP    (−1, 0, 1)            σ = 2ρ², B → 0 closed forms used
=====  ===================  ==========================

The stationary large-deviation functional is evaluated at the monotone
solution F of

    ρ(x) = F + F (B − F) F″ / F′²,   F(0) = ρ_a,  F(1) = ρ_b,

(``F (B − F)`` becomes ``−F²`` when B = 0 and the equation degenerates to
F″ = 0 for IRW) as

    ℱ(ρ) = C/(AB) ∫ [ρ log(ρ/F) + (B − ρ) log((B − ρ)/(B − F))
                    + B log(F′/(ρ_b − ρ_a))] dx.

KMP normalization: the mobility 2ρ² and diffusivity 1 are the values in
the MFT literature.  A unit-rate bond simulation measures D = 1/2 and
σ = ρ²; only σ/D enters the functional and the correlations, and it agrees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson, solve_bvp, solve_ivp
from scipy.interpolate import CubicSpline

from .analysis import covariance_closed_form
from .models import Family, ModelError, ModelSpec, reservoir_densities

CLAMP = 1e-10


class BVPError(RuntimeError):
    def __init__(self, msg, best_residual=float("nan")):
        super().__init__(f"{msg} (best residual {best_residual:.3g})")
        self.best_residual = best_residual


# ---------------------------------------------------------------------------
# transport coefficients


@dataclass(frozen=True)
class TransportCoefficients:
    """D(ρ) = C and σ(ρ) = 2Aρ(B − ρ), with IRW and KMP as explicit limits."""

    family: str
    A: float | None
    B: float | None
    C: float
    kind: str = "quadratic"  # 'quadratic', 'irw' or 'b0' (B = 0)

    def D(self, rho):
        return self.C * np.ones_like(np.asarray(rho, float))

    def sigma(self, rho):
        rho = np.asarray(rho, float)
        if self.kind == "irw":
            return 2.0 * rho
        if self.kind == "b0":
            return 2.0 * rho ** 2
        return 2.0 * self.A * rho * (self.B - rho)

    @property
    def A_over_C(self) -> float:
        if self.kind == "irw":
            return 0.0
        return self.A / self.C


def transport_coefficients(family, shape: float | None = None) -> TransportCoefficients:
    fam = Family(family)
    if fam == Family.SIP:
        return TransportCoefficients("SIP", -1.0, -shape, shape)
    if fam == Family.SEP:
        return TransportCoefficients("SEP", 1.0, shape, shape)
    if fam == Family.BEP:
        return TransportCoefficients("BEP", -1.0, 0.0, shape, "b0")
    if fam == Family.IRW:
        return TransportCoefficients("IRW", None, None, 1.0, "irw")
    if fam == Family.KMP:
        return TransportCoefficients("KMP", -1.0, 0.0, 1.0, "b0")
    raise ModelError(f"no macroscopic coefficients for {fam.value}")


def physical_range(tc: TransportCoefficients) -> tuple[float, float]:
    if tc.kind == "quadratic" and tc.A > 0:
        return 0.0, tc.B
    return 0.0, math.inf


# ---------------------------------------------------------------------------
# correlations


@dataclass
class MacroCorrelations:
    mean: np.ndarray
    two_point: float
    three_point: float


def macro_correlations(tc: TransportCoefficients, rho_a: float, rho_b: float, L: float,
                       points) -> MacroCorrelations:
    """Leading-order correlations at ordered points.

    ``points`` holds 3 values 0 < x < y < z < 1 (2 suffice for the
    two-point value; the three-point value is then ``nan``).
    """
    pts = np.asarray(points, float)
    if np.any(np.diff(pts) <= 0) or pts[0] <= 0 or pts[-1] >= 1:
        raise ValueError("points must satisfy 0 < x < y < z < 1")
    d = rho_a - rho_b
    ac = tc.A_over_C
    x, y = pts[0], pts[1]
    two = -ac * d ** 2 * x * (1 - y) / L
    three = math.nan
    if len(pts) >= 3:
        three = -2 * ac ** 2 * d ** 3 * x * (1 - 2 * y) * (1 - pts[2]) / L ** 2
    return MacroCorrelations(rho_a * (1 - pts) + rho_b * pts, two, three)


def npoint_prefactor_check(tc: TransportCoefficients, rho_a, rho_b, L, points) -> float:
    """Compare the family's correlations with B^n (A/C)^{n−1} times SEP(1) at ρ/B.

    Returns the largest absolute mismatch of the 2- and 3-point values.
    Only meaningful for quadratic families with B ≠ 0.
    """
    if tc.kind != "quadratic" or tc.B == 0:
        raise ModelError("rescaling to SEP(1) needs a finite nonzero B")
    sep1 = TransportCoefficients("SEP", 1.0, 1.0, 1.0)
    base = macro_correlations(sep1, rho_a / tc.B, rho_b / tc.B, L, points)
    fam = macro_correlations(tc, rho_a, rho_b, L, points)
    ac = tc.A / tc.C
    e2 = abs(fam.two_point - tc.B ** 2 * ac * base.two_point)
    e3 = abs(fam.three_point - tc.B ** 3 * ac ** 2 * base.three_point)
    return max(e2, e3)


# ---------------------------------------------------------------------------
# auxiliary profile


@dataclass
class MacroProfile:
    x: np.ndarray
    rho: np.ndarray
    rho_a: float
    rho_b: float

    @classmethod
    def from_function(cls, f: Callable, rho_a, rho_b, n: int = 401):
        x = np.linspace(0.0, 1.0, n)
        return cls(x, np.asarray(f(x), float), float(rho_a), float(rho_b))

    @classmethod
    def typical(cls, rho_a, rho_b, n: int = 401):
        return cls.from_function(lambda x: rho_a + (rho_b - rho_a) * x, rho_a, rho_b, n)

    def check_range(self, tc: TransportCoefficients, value_range=None):
        lo, hi = value_range or physical_range(tc)
        vals = np.append(self.rho, (self.rho_a, self.rho_b))
        if np.any(vals < lo - 1e-12) or np.any(vals > hi + 1e-12):
            raise ModelError(f"profile leaves the physical range [{lo}, {hi}]")

    def clamped(self, tc: TransportCoefficients, value_range=None) -> "MacroProfile":
        lo, hi = value_range or physical_range(tc)
        r = np.clip(self.rho, lo + CLAMP if math.isfinite(lo) else None,
                    hi - CLAMP if math.isfinite(hi) else None)
        return MacroProfile(self.x, r, self.rho_a, self.rho_b)


@dataclass
class AuxiliaryProfile:
    x: np.ndarray
    F: np.ndarray
    dF: np.ndarray
    residual: float
    slope0: float
    method: str
    details: dict = field(default_factory=dict)


def _g(tc: TransportCoefficients, F):
    if tc.kind == "b0":
        return -F * F
    return F * (tc.B - F)


def _rhs(tc, rho_fun):
    def f(x, y):
        F, dF = y
        return np.array([dF, (rho_fun(x) - F) * dF * dF / _g(tc, F)])
    return f


def ode_residual(tc: TransportCoefficients, profile: MacroProfile, x, F, dF) -> float:
    """max |ρ − F − g(F) F″/F′²| with F″ from 5-point differences of F′."""
    h = x[1] - x[0]
    d2 = np.empty_like(dF)
    d2[2:-2] = (-dF[4:] + 8 * dF[3:-1] - 8 * dF[1:-3] + dF[:-4]) / (12 * h)
    # one-sided 5-point stencils at the ends
    d2[0] = (-25 * dF[0] + 48 * dF[1] - 36 * dF[2] + 16 * dF[3] - 3 * dF[4]) / (12 * h)
    d2[1] = (-3 * dF[0] - 10 * dF[1] + 18 * dF[2] - 6 * dF[3] + dF[4]) / (12 * h)
    d2[-1] = (25 * dF[-1] - 48 * dF[-2] + 36 * dF[-3] - 16 * dF[-4] + 3 * dF[-5]) / (12 * h)
    d2[-2] = (3 * dF[-1] + 10 * dF[-2] - 18 * dF[-3] + 6 * dF[-4] - dF[-5]) / (12 * h)
    rho = np.interp(x, profile.x, profile.rho)
    if tc.kind == "irw":
        return float(np.max(np.abs(d2)))
    return float(np.max(np.abs(rho - F - _g(tc, F) * d2 / dF ** 2)))


def solve_auxiliary_profile(tc: TransportCoefficients, profile: MacroProfile, *, rtol: float = 1e-13,
                            max_bisect: int = 200, polish: bool = True,
                            value_range=None) -> AuxiliaryProfile:
    """Monotone solution F of the auxiliary boundary value problem.

    Shooting on F′(0) = λ(ρ_b − ρ_a), bisecting on log λ against the
    terminal value F(1), followed by a ``solve_bvp`` pass seeded with the
    shooting solution; the result with the smaller residual is returned.
    ``value_range`` overrides the family's physical range for F.
    """
    value_range = value_range or physical_range(tc)
    profile.check_range(tc, value_range)
    prof = profile.clamped(tc, value_range)
    x = prof.x
    ra, rb = prof.rho_a, prof.rho_b
    delta = rb - ra
    if tc.kind == "irw" or delta == 0:
        F = ra + delta * x
        dF = np.full_like(x, delta)
        return AuxiliaryProfile(x, F, dF, 0.0, delta, "closed")
    spline = CubicSpline(prof.x, prof.rho)
    rho_fun = lambda t: spline(t)
    lo_r, hi_r = value_range
    sgn = 1.0 if delta > 0 else -1.0

    def shoot(lam, dense=False):
        def past_target(t, y):
            return sgn * (y[0] - rb) - 1e-9 * max(1.0, abs(rb))
        past_target.terminal = True

        def out_of_range(t, y):
            return min(y[0] - lo_r, hi_r - y[0])
        out_of_range.terminal = True

        def blowup(t, y):
            return 1e8 - abs(y[1])
        blowup.terminal = True

        sol = solve_ivp(_rhs(tc, rho_fun), (0.0, 1.0), [ra, lam * delta], method="DOP853",
                        rtol=rtol, atol=1e-14, events=[past_target, out_of_range, blowup],
                        dense_output=dense)
        if sol.status == 1:
            return 1.0, sol  # overshoot
        return sgn * (sol.y[0, -1] - rb), sol

    lo, hi = 0.0, 0.0  # bracket in log λ
    f_lo, _ = shoot(1.0)
    if f_lo < 0:
        hi = 1.0
        while shoot(math.exp(hi))[0] < 0:
            lo, hi = hi, hi + 1.0
            if hi > 40:
                raise BVPError("no overshooting slope found")
    else:
        lo = -1.0
        while shoot(math.exp(lo))[0] >= 0:
            hi, lo = lo, lo - 1.0
            if lo < -40:
                raise BVPError("no undershooting slope found")
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        val, _ = shoot(math.exp(mid))
        if val < 0:
            lo = mid
        else:
            hi = mid
    lam = math.exp(lo)
    val, sol = shoot(lam, dense=True)
    if sol.status == 1 or sol.t[-1] < 1.0:
        raise BVPError("shooting did not reach x = 1")
    Y = sol.sol(x)
    F, dF = Y[0].copy(), Y[1].copy()
    # the bisection lands within rounding of the target; pin the end value
    F[-1] = rb
    res = ode_residual(tc, prof, x, F, dF)
    best = AuxiliaryProfile(x, F, dF, res, lam * delta, "shooting", {"terminal_error": float(val)})
    if polish:
        def bc(ya, yb):
            return np.array([ya[0] - ra, yb[0] - rb])

        def f_vec(t, y):
            return np.vstack([y[1], (spline(t) - y[0]) * y[1] ** 2 / _g(tc, y[0])])

        try:
            pb = solve_bvp(f_vec, bc, x, np.vstack([F, dF]), tol=1e-10, max_nodes=100_000)
            if pb.success:
                Yp = pb.sol(x)
                Fp, dFp = Yp[0], Yp[1]
                if np.all(sgn * dFp > 0):
                    rp = ode_residual(tc, prof, x, Fp, dFp)
                    best.details["collocation_residual"] = rp
                    if rp < res:
                        best = AuxiliaryProfile(x, Fp, dFp, rp, float(dFp[0]), "collocation", best.details)
        except (ValueError, FloatingPointError):
            pass
    if not np.all(sgn * best.dF > 0):
        raise BVPError("non-monotone solution", best.residual)
    return best


# ---------------------------------------------------------------------------
# the functional


def _xlogx_ratio(a, b):
    """a log(a/b), with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a == 0, 0.0, a * np.log(a / b))


def ld_integrand(tc: TransportCoefficients, rho, F, dF, rho_a, rho_b):
    delta = rho_b - rho_a
    if tc.kind == "irw":
        return _xlogx_ratio(rho, F) - rho + F
    if tc.kind == "b0":
        # B → 0 limit of the quadratic integrand
        return tc.C / tc.A * (1 - rho / F + np.log(rho / F) + np.log(dF / delta))
    A, B, C = tc.A, tc.B, tc.C
    pre = C / (A * B)
    if abs(B) > 1e6:
        # large B: (B − ρ) log((B − ρ)/(B − F)) via log1p and B log(F′/Δ) with
        # its zero-mean linear part removed (∫F′ = Δ exactly)
        u = (dF - delta) / delta
        t2 = (B - rho) * np.log1p((F - rho) / (B - F))
        t3 = B * (np.log1p(u) - u)
        return pre * (_xlogx_ratio(rho, F) + t2 + t3)
    t2 = (B - rho) * np.log((B - rho) / (B - F))
    return pre * (_xlogx_ratio(rho, F) + t2 + B * np.log(dF / delta))


def ld_functional(tc: TransportCoefficients, profile: MacroProfile, aux: AuxiliaryProfile | None = None) -> float:
    """ℱ(ρ) by composite Simpson quadrature at the optimal F."""
    if profile.rho_a == profile.rho_b and tc.kind != "irw":
        raise ModelError("the functional needs ρ_a ≠ ρ_b")
    profile.check_range(tc)
    prof = profile.clamped(tc)
    if tc.kind == "irw":
        F = prof.rho_a + (prof.rho_b - prof.rho_a) * prof.x
        return float(simpson(ld_integrand(tc, prof.rho, F, None, prof.rho_a, prof.rho_b), x=prof.x))
    aux = aux or solve_auxiliary_profile(tc, prof)
    vals = ld_integrand(tc, prof.rho, aux.F, aux.dF, prof.rho_a, prof.rho_b)
    return float(simpson(vals, x=prof.x))


def irw_functional_via_limit(profile: MacroProfile, B: float = 1e9) -> float:
    """IRW functional from the generic expression at A = 1/B, C = 1, large B."""
    tc = TransportCoefficients("IRW-limit", 1.0 / B, B, 1.0)
    return ld_functional(tc, profile)


def scaling_relation_check(tc: TransportCoefficients, profile: MacroProfile) -> tuple[float, float]:
    """(ℱ_family(ρ), (C/A) ℱ_SEP(1)(ρ/B)) computed by separate BVP solves."""
    direct = ld_functional(tc, profile)
    sep1 = TransportCoefficients("SEP1", 1.0, 1.0, 1.0)
    B = tc.B
    scaled = MacroProfile(profile.x, profile.rho / B, profile.rho_a / B, profile.rho_b / B)
    # ρ/B is negative when B < 0 (SIP); the SEP(1) expression is evaluated as is
    rng = (-math.inf, 0.0) if B < 0 else (0.0, 1.0)
    aux = solve_auxiliary_profile(sep1, scaled, value_range=rng)
    vals = ld_integrand(sep1, scaled.rho, aux.F, aux.dF, scaled.rho_a, scaled.rho_b)
    return direct, tc.C / tc.A * float(simpson(vals, x=scaled.x))


# ---------------------------------------------------------------------------
# micro to macro


@dataclass
class MicroMacroRow:
    L: int
    max_abs: float
    max_rel: float


def micro_macro_compare(spec: ModelSpec, L_list=(20, 50, 100)) -> list[MicroMacroRow]:
    """max over pairs of |L·cov(i, ℓ) − macro(i/(L+1), ℓ/(L+1))| for each L."""
    tc = transport_coefficients(spec.family, spec.shape)
    rd = reservoir_densities(spec)
    rows = []
    for L in L_list:
        s = ModelSpec(spec.family, L, spec.shape, spec.boundary, spec.reservoirs)
        i, l = np.triu_indices(L, 1)
        micro = np.array([covariance_closed_form(s, a + 1, b + 1) for a, b in zip(i, l)]) * L
        x, y = (i + 1) / (L + 1), (l + 1) / (L + 1)
        macro = -tc.A_over_C * (rd.rho_a - rd.rho_b) ** 2 * x * (1 - y)
        err = np.abs(micro - macro)
        rows.append(MicroMacroRow(L, float(err.max()), float(err.max() / np.max(np.abs(macro)))))
    return rows
