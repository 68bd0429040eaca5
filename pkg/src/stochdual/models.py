"""Model families, parameters, reservoir densities and equilibrium marginals.

A model is described by an immutable :class:`ModelSpec`.  Particle models
(SIP, SEP, IRW and their thermalized versions) carry four boundary rate
constants ``alpha, gamma, delta, beta``; energy models (BEP, KMP, ThBEP)
carry two temperatures ``T_a, T_b``.

Conventions
-----------
``shape`` is ``2k`` for SIP, BEP, ThSIP and ThBEP, and ``2j`` for SEP and
ThSEP.  The stationary law of the left BEP reservoir is Gamma(2k, 2 T_a), and
the thermalized BEP resamples from that same law.  KMP uses its own
temperature convention: the bath resamples an exponential variable with mean
``T_a``.  Hence KMP(T_a, T_b) has the same dynamics as ThBEP(2k=1) with
temperatures (T_a / 2, T_b / 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import special


class ModelError(ValueError):
    """Raised when a model specification violates a domain constraint."""


class NotAtEquilibrium(ModelError):
    """Raised when an equilibrium-only quantity is requested off equilibrium."""


class Family(str, Enum):
    SIP = "SIP"
    SEP = "SEP"
    IRW = "IRW"
    BEP = "BEP"
    KMP = "KMP"
    ThSIP = "ThSIP"
    ThSEP = "ThSEP"
    ThIRW = "ThIRW"
    ThBEP = "ThBEP"

    @classmethod
    def _missing_(cls, value):
        # accept 'sip', 'thsep', ... from the command line
        if isinstance(value, str):
            for f in cls:
                if f.value.lower() == value.lower():
                    return f
        return None

    @property
    def is_discrete(self) -> bool:
        return self in _DISCRETE

    @property
    def is_thermalized(self) -> bool:
        return self in _THERMAL

    @property
    def uses_temperatures(self) -> bool:
        return self in (Family.BEP, Family.KMP, Family.ThBEP)

    @property
    def base(self) -> "Family":
        """Underlying non-thermalized family (KMP maps to BEP)."""
        return _BASE[self]

    @property
    def shape_kind(self) -> str | None:
        """``'2k'``, ``'2j'`` or ``None`` when the family has no shape."""
        if self in (Family.SIP, Family.BEP, Family.ThSIP, Family.ThBEP):
            return "2k"
        if self in (Family.SEP, Family.ThSEP):
            return "2j"
        return None


_DISCRETE = {Family.SIP, Family.SEP, Family.IRW, Family.ThSIP, Family.ThSEP, Family.ThIRW}
_THERMAL = {Family.ThSIP, Family.ThSEP, Family.ThIRW, Family.ThBEP, Family.KMP}
_BASE = {
    Family.SIP: Family.SIP, Family.SEP: Family.SEP, Family.IRW: Family.IRW,
    Family.BEP: Family.BEP, Family.KMP: Family.BEP, Family.ThSIP: Family.SIP,
    Family.ThSEP: Family.SEP, Family.ThIRW: Family.IRW, Family.ThBEP: Family.BEP,
}

RATE_KEYS = ("alpha", "gamma", "delta", "beta")
TEMP_KEYS = ("T_a", "T_b")


@dataclass(frozen=True)
class BoundaryParams:
    """Either four rate constants or two temperatures.

    ``alpha``/``gamma`` are creation/annihilation at the left end,
    ``delta``/``beta`` creation/annihilation at the right end.
    """

    alpha: float | None = None
    gamma: float | None = None
    delta: float | None = None
    beta: float | None = None
    T_a: float | None = None
    T_b: float | None = None

    @property
    def has_rates(self) -> bool:
        return all(getattr(self, k) is not None for k in RATE_KEYS)

    @property
    def has_temperatures(self) -> bool:
        return all(getattr(self, k) is not None for k in TEMP_KEYS)

    def as_dict(self) -> dict:
        keys = RATE_KEYS if self.has_rates else TEMP_KEYS
        return {k: float(getattr(self, k)) for k in keys}


@dataclass(frozen=True)
class ModelSpec:
    """Full description of one model instance.

    Parameters
    ----------
    family : Family
    L : int
        Number of bulk sites.
    shape : float or None
        ``2k`` or ``2j`` depending on the family; ``None`` for IRW, ThIRW, KMP.
    boundary : BoundaryParams
    reservoirs : bool
        If False the boundary mechanism is switched off (closed bulk system).
    """

    family: Family
    L: int
    shape: float | None
    boundary: BoundaryParams = field(default_factory=BoundaryParams)
    reservoirs: bool = True

    # convenience accessors
    def __getattr__(self, name):
        if name in RATE_KEYS or name in TEMP_KEYS:
            return getattr(self.boundary, name)
        raise AttributeError(name)

    @property
    def k(self) -> float:
        return 0.5 * self.shape

    @property
    def two_j(self) -> int:
        return int(round(self.shape))

    def with_boundary(self, **kw) -> "ModelSpec":
        return validate(replace(self, boundary=replace(self.boundary, **kw)))

    def bulk_only(self) -> "ModelSpec":
        return replace(self, reservoirs=False)

    def as_dict(self) -> dict:
        out = {"family": self.family.value, "L": int(self.L)}
        if self.shape is not None:
            out["shape"] = float(self.shape)
        out.update(self.boundary.as_dict())
        if not self.reservoirs:
            out["reservoirs"] = False
        return out


def make_spec(family, L, shape=None, *, alpha=None, gamma=None, delta=None,
              beta=None, T_a=None, T_b=None, reservoirs=True) -> ModelSpec:
    """Build and validate a :class:`ModelSpec`."""
    try:
        fam = Family(family) if not isinstance(family, Family) else family
    except ValueError:
        names = ", ".join(f.value for f in Family)
        raise ModelError(f"family: unknown family {family!r} (expected one of {names})") from None
    bnd = BoundaryParams(
        alpha=_opt_float(alpha), gamma=_opt_float(gamma), delta=_opt_float(delta),
        beta=_opt_float(beta), T_a=_opt_float(T_a), T_b=_opt_float(T_b),
    )
    return validate(ModelSpec(fam, L, _opt_float(shape), bnd, bool(reservoirs)))


def spec_from_dict(d: dict) -> ModelSpec:
    """Inverse of :meth:`ModelSpec.as_dict`; unknown keys are rejected."""
    allowed = {"family", "L", "shape", "reservoirs", *RATE_KEYS, *TEMP_KEYS}
    extra = sorted(set(d) - allowed)
    if extra:
        raise ModelError(f"{extra[0]}: unknown model field")
    if "family" not in d:
        raise ModelError("family: missing required field")
    if "L" not in d:
        raise ModelError("L: missing required field")
    return make_spec(d["family"], d["L"], d.get("shape"),
                     **{k: d.get(k) for k in (*RATE_KEYS, *TEMP_KEYS)},
                     reservoirs=d.get("reservoirs", True))


def _opt_float(x):
    if x is None:
        return None
    if isinstance(x, bool):
        raise ModelError(f"expected a number, got {x!r}")
    return float(x)


def validate(spec: ModelSpec) -> ModelSpec:
    """Check every domain constraint; return ``spec`` unchanged or raise."""
    fam = spec.family
    if not isinstance(fam, Family):
        raise ModelError(f"family: not a Family: {fam!r}")
    if isinstance(spec.L, bool) or not isinstance(spec.L, (int, np.integer)) or spec.L < 1:
        raise ModelError(f"L: must be a positive integer, got {spec.L!r}")

    kind = fam.shape_kind
    if kind is None:
        if spec.shape is not None:
            raise ModelError(f"shape: not used by {fam.value}")
    else:
        if spec.shape is None or not math.isfinite(spec.shape) or spec.shape <= 0:
            raise ModelError(f"shape: {kind} must be a positive real for {fam.value}")
        if kind == "2j" and abs(spec.shape - round(spec.shape)) > 0:
            raise ModelError(f"shape: 2j must be integer, got {spec.shape}")

    b = spec.boundary
    if fam.uses_temperatures:
        if not b.has_temperatures or any(getattr(b, k) is not None for k in RATE_KEYS):
            raise ModelError(f"boundary: {fam.value} needs T_a and T_b (and no rate constants)")
        for k in TEMP_KEYS:
            if not getattr(b, k) > 0:
                raise ModelError(f"{k}: temperature must be > 0")
    else:
        if not b.has_rates or any(getattr(b, k) is not None for k in TEMP_KEYS):
            raise ModelError(f"boundary: {fam.value} needs alpha, gamma, delta, beta (and no temperatures)")
        for k in RATE_KEYS:
            v = getattr(b, k)
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"{k}: rate must be > 0")
        if fam in (Family.SIP, Family.ThSIP):
            if b.gamma <= b.alpha:
                raise ModelError("gamma: SIP needs γ > α (γ ≤ α)")
            if b.beta <= b.delta:
                raise ModelError("beta: SIP needs β > δ (β ≤ δ)")
    return spec


# ---------------------------------------------------------------------------
# reservoir densities


@dataclass(frozen=True)
class ReservoirDensities:
    rho_a: float
    rho_b: float


def reservoir_densities(spec: ModelSpec) -> ReservoirDensities:
    """Densities (or mean energies) imposed by the two reservoirs."""
    fam = spec.family.base if spec.family != Family.KMP else Family.KMP
    b = spec.boundary
    if fam == Family.SIP:
        return ReservoirDensities(spec.shape * b.alpha / (b.gamma - b.alpha),
                                  spec.shape * b.delta / (b.beta - b.delta))
    if fam == Family.SEP:
        return ReservoirDensities(spec.shape * b.alpha / (b.gamma + b.alpha),
                                  spec.shape * b.delta / (b.beta + b.delta))
    if fam == Family.IRW:
        return ReservoirDensities(b.alpha / b.gamma, b.delta / b.beta)
    if fam == Family.BEP:
        return ReservoirDensities(2.0 * spec.shape * b.T_a, 2.0 * spec.shape * b.T_b)
    return ReservoirDensities(b.T_a, b.T_b)


def boundary_for_densities(family, shape, rho_a, rho_b, u=None, v=None) -> BoundaryParams:
    """Rate constants realising densities ``rho_a, rho_b``.

    ``u`` and ``v`` are the single dual walker absorption rates at the two
    ends (γ−α and β−δ for SIP, γ+α and β+δ for SEP, γ and β for IRW).  They
    default to twice the single walker hop rate, which makes the stationary
    profile exactly linear with slope (ρ_b − ρ_a)/L.
    """
    fam = Family(family).base
    h = {Family.SIP: shape, Family.SEP: shape, Family.IRW: 1.0}[fam]
    u = 2.0 * h if u is None else float(u)
    v = 2.0 * h if v is None else float(v)
    if fam == Family.SIP:
        a, d = rho_a * u / shape, rho_b * v / shape
        return BoundaryParams(alpha=a, gamma=a + u, delta=d, beta=d + v)
    if fam == Family.SEP:
        a, d = rho_a * u / shape, rho_b * v / shape
        return BoundaryParams(alpha=a, gamma=u - a, delta=d, beta=v - d)
    return BoundaryParams(alpha=rho_a * u, gamma=u, delta=rho_b * v, beta=v)


# ---------------------------------------------------------------------------
# single-site laws


class _Discrete:
    """Common helpers for the discrete marginals."""

    def pmf(self, n):
        lp = self.logpmf(np.asarray(n))
        return np.where(np.isfinite(lp), np.exp(lp), 0.0)

    def support_cap(self, tol: float = 1e-12) -> int:
        """Smallest cap M with tail mass P(N > M) < tol (doubling, then bisection)."""
        hi = 8
        while self.tail(hi) >= tol:
            hi *= 2
            if hi > 1 << 40:
                raise ModelError("support cap search diverged")
        lo = hi // 2 if hi > 8 else 0
        while lo < hi:
            mid = (lo + hi) // 2
            if self.tail(mid) < tol:
                hi = mid
            else:
                lo = mid + 1
        return hi

    def truncated_pmf(self, M: int) -> np.ndarray:
        return self.pmf(np.arange(M + 1))

    def sample(self, rng, size=None):
        raise NotImplementedError


@dataclass(frozen=True)
class NegativeBinomial(_Discrete):
    """P(n) = Γ(r+n)/(Γ(r) n!) p^n (1−p)^r, the SIP single-site law."""

    r: float
    p: float

    def logpmf(self, n):
        n = np.asarray(n, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (special.gammaln(self.r + n) - special.gammaln(self.r) - special.gammaln(n + 1)
                   + n * math.log(self.p) + self.r * math.log1p(-self.p))
        return np.where(n >= 0, out, -np.inf)

    @property
    def mean(self):
        return self.r * self.p / (1 - self.p)

    @property
    def var(self):
        return self.r * self.p / (1 - self.p) ** 2

    def factorial_moment(self, n: int) -> float:
        return math.exp(math.lgamma(self.r + n) - math.lgamma(self.r)) * (self.p / (1 - self.p)) ** n

    def tail(self, M: int) -> float:
        return float(special.betainc(M + 1, self.r, self.p))

    def sample(self, rng, size=None):
        return rng.negative_binomial(self.r, 1 - self.p, size=size)


@dataclass(frozen=True)
class Binomial(_Discrete):
    """Binomial(n, p), the SEP single-site law with n = 2j."""

    n: int
    p: float

    def logpmf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 0) & (x <= self.n)
        xs = np.where(inside, x, 0.0)
        with np.errstate(divide="ignore"):
            out = (special.gammaln(self.n + 1) - special.gammaln(xs + 1) - special.gammaln(self.n - xs + 1)
                   + special.xlogy(xs, self.p) + special.xlog1py(self.n - xs, -self.p))
        return np.where(inside, out, -np.inf)

    @property
    def mean(self):
        return self.n * self.p

    @property
    def var(self):
        return self.n * self.p * (1 - self.p)

    def factorial_moment(self, m: int) -> float:
        if m > self.n:
            return 0.0
        return math.exp(math.lgamma(self.n + 1) - math.lgamma(self.n - m + 1)) * self.p ** m

    def tail(self, M: int) -> float:
        if M >= self.n:
            return 0.0
        return float(special.betainc(M + 1, self.n - M, self.p))

    def sample(self, rng, size=None):
        return rng.binomial(self.n, self.p, size=size)


@dataclass(frozen=True)
class Poisson(_Discrete):
    lam: float

    def logpmf(self, n):
        n = np.asarray(n, dtype=float)
        with np.errstate(invalid="ignore"):
            out = special.xlogy(n, self.lam) - self.lam - special.gammaln(n + 1)
        return np.where(n >= 0, out, -np.inf)

    @property
    def mean(self):
        return self.lam

    @property
    def var(self):
        return self.lam

    def factorial_moment(self, n: int) -> float:
        return self.lam ** n

    def tail(self, M: int) -> float:
        return float(special.gammainc(M + 1, self.lam))

    def sample(self, rng, size=None):
        return rng.poisson(self.lam, size=size)


@dataclass(frozen=True)
class GammaLaw:
    """Gamma(shape, scale); the BEP single-site law is Gamma(2k, θ)."""

    shape: float
    scale: float

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = ((self.shape - 1) * np.log(z) - z / self.scale
                  - special.gammaln(self.shape) - self.shape * math.log(self.scale))
        return np.where(z > 0, np.exp(lp), 0.0)

    @property
    def mean(self):
        return self.shape * self.scale

    @property
    def var(self):
        return self.shape * self.scale ** 2

    def moment(self, n: int) -> float:
        return math.exp(math.lgamma(self.shape + n) - math.lgamma(self.shape)) * self.scale ** n

    def tail(self, z: float) -> float:
        return float(special.gammaincc(self.shape, z / self.scale))

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size=size)


EquilibriumMarginal = NegativeBinomial | Binomial | Poisson | GammaLaw


def _is_equilibrium(spec: ModelSpec) -> bool:
    b = spec.boundary
    if spec.family.uses_temperatures:
        return math.isclose(b.T_a, b.T_b, rel_tol=1e-12, abs_tol=0.0)
    lhs, rhs = b.alpha * b.beta, b.gamma * b.delta
    return abs(lhs - rhs) <= 1e-12 * max(lhs, rhs)


def equilibrium_marginal(spec: ModelSpec, parameter: float | None = None):
    """Single-site marginal of the product stationary measure.

    With ``parameter=None`` the parameter is read off the reservoirs, which
    requires equilibrium (αβ = γδ, or T_a = T_b).  Otherwise ``parameter`` is
    p (SIP, SEP), λ (IRW) or the Gamma scale θ (BEP, ThBEP) or the
    exponential mean (KMP), and the reservoirs are ignored.
    """
    fam = spec.family
    b = spec.boundary
    if parameter is None:
        if spec.reservoirs and not _is_equilibrium(spec):
            raise NotAtEquilibrium(f"{fam.value}: not at equilibrium (reservoirs impose different densities)")
        if not spec.reservoirs:
            raise ModelError("bulk-only spec: the equilibrium parameter must be given")
        base = fam.base if fam != Family.KMP else Family.KMP
        parameter = {
            Family.SIP: lambda: b.alpha / b.gamma,
            Family.SEP: lambda: b.alpha / (b.alpha + b.gamma),
            Family.IRW: lambda: b.alpha / b.gamma,
            Family.BEP: lambda: 2.0 * b.T_a,
            Family.KMP: lambda: b.T_a,
        }[base]()
    return _marginal(spec, float(parameter))


def _marginal(spec, parameter):
    fam = spec.family
    if fam == Family.KMP:
        return GammaLaw(1.0, parameter)
    base = fam.base
    if base == Family.SIP:
        return NegativeBinomial(spec.shape, parameter)
    if base == Family.SEP:
        return Binomial(spec.two_j, parameter)
    if base == Family.IRW:
        return Poisson(parameter)
    return GammaLaw(spec.shape, parameter)


def reservoir_laws(spec: ModelSpec):
    """Laws resampled by the left and right baths of a thermalized model.

    These are the stationary laws of the corresponding base reservoirs:
    NegBin(2k, α/γ), Binomial(2j, α/(α+γ)), Poisson(α/γ), Gamma(2k, 2T) and,
    for KMP, the exponential law with mean T.
    """
    b = spec.boundary
    fam = spec.family
    if fam == Family.KMP:
        return GammaLaw(1.0, b.T_a), GammaLaw(1.0, b.T_b)
    base = fam.base
    if base == Family.SIP:
        return _marginal(spec, b.alpha / b.gamma), _marginal(spec, b.delta / b.beta)
    if base == Family.SEP:
        return _marginal(spec, b.alpha / (b.alpha + b.gamma)), _marginal(spec, b.delta / (b.delta + b.beta))
    if base == Family.IRW:
        return _marginal(spec, b.alpha / b.gamma), _marginal(spec, b.delta / b.beta)
    return _marginal(spec, 2.0 * b.T_a), _marginal(spec, 2.0 * b.T_b)


def kmp_as_thbep(spec: ModelSpec) -> ModelSpec:
    """The ThBEP(2k=1) spec with the same dynamics as a KMP spec."""
    if spec.family != Family.KMP:
        raise ModelError("expected a KMP spec")
    return make_spec(Family.ThBEP, spec.L, 1.0, T_a=spec.T_a / 2, T_b=spec.T_b / 2,
                     reservoirs=spec.reservoirs)
