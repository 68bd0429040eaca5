"""Dual processes with absorbing ends, duality functions and absorption solvers.

A dual configuration ξ has L+2 entries; ξ_0 and ξ_{L+1} count particles
absorbed at the left and right ends.  Dual particles move with the bulk rule
of the forward model (SIP-type for BEP) and are absorbed at rate u (left)
or v (right) per particle; thermalized duals absorb the whole content of the
boundary site in one rate-1 event.

The stationary expectation of a duality function follows from the
absorption probabilities a_m(ξ) of the dual:

    ⟨D(·, ξ)⟩ = Σ_m w_a^m w_b^{|ξ|−m} a_m(ξ)

with w_a, w_b the weights carried by the absorbing slots of D.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, lgamma

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import special

from .kernels import RedistributionKernel
from .models import Family, ModelError, ModelSpec, reservoir_laws
from .polynomial import Poly

EXACT_MAX_PARTICLES = 4
EXACT_MAX_L = 12


@dataclass(frozen=True)
class DualSpec:
    """Dual of a boundary-driven model.

    Attributes
    ----------
    bulk : {'SIP', 'SEP', 'IRW', 'thermal'}
    shape : float or None
        Bulk shape (2k or 2j) of the hop rates.
    kernel : RedistributionKernel or None
        Bond kernel of a thermalized dual.
    u, v : float
        Per-particle absorption rates (rate of the whole-site event for
        thermalized duals).
    hop : float
        Hop rate of a single isolated walker in each direction.
    w_a, w_b : float
        Weights of the absorbing slots in the duality function.
    g1 : float
        D(η, δ_i) / η_i, so that ⟨η_i⟩ = ⟨D(·, δ_i)⟩ / g1.
    """

    family: Family
    L: int
    bulk: str
    shape: float | None
    kernel: RedistributionKernel | None
    u: float
    v: float
    hop: float
    w_a: float
    w_b: float
    g1: float

    @property
    def thermal(self) -> bool:
        return self.bulk == "thermal"

    @property
    def site_cap(self) -> int | None:
        if self.bulk == "SEP":
            return int(round(self.shape))
        if self.thermal and self.kernel.kind == "hypergeom":
            return int(round(self.kernel.param))
        return None


def dual_spec(spec: ModelSpec) -> DualSpec:
    """Dual model of ``spec`` (absorption rates of the dual table, weights of D)."""
    if not spec.reservoirs:
        raise ModelError("the absorbing dual needs reservoirs")
    fam = spec.family
    b = spec.boundary
    L = spec.L
    if fam == Family.SIP:
        return DualSpec(fam, L, "SIP", spec.shape, None, b.gamma - b.alpha, b.beta - b.delta,
                        spec.shape, b.alpha / (b.gamma - b.alpha), b.delta / (b.beta - b.delta),
                        1.0 / spec.shape)
    if fam == Family.SEP:
        return DualSpec(fam, L, "SEP", spec.shape, None, b.gamma + b.alpha, b.beta + b.delta,
                        spec.shape, b.alpha / (b.gamma + b.alpha), b.delta / (b.beta + b.delta),
                        1.0 / spec.shape)
    if fam == Family.IRW:
        return DualSpec(fam, L, "IRW", None, None, b.gamma, b.beta, 1.0,
                        b.alpha / b.gamma, b.delta / b.beta, 1.0)
    if fam == Family.BEP:
        return DualSpec(fam, L, "SIP", spec.shape, None, 0.5, 0.5, spec.shape,
                        2.0 * b.T_a, 2.0 * b.T_b, 1.0 / spec.shape)
    # thermalized duals: every bond and both ends carry a unit-rate clock
    if fam == Family.KMP:
        kern, w, g1 = RedistributionKernel("neghypergeom", 1.0), (b.T_a, b.T_b), 1.0
    elif fam == Family.ThSIP:
        kern = RedistributionKernel("neghypergeom", spec.shape)
        w, g1 = (b.alpha / (b.gamma - b.alpha), b.delta / (b.beta - b.delta)), 1.0 / spec.shape
    elif fam == Family.ThSEP:
        kern = RedistributionKernel("hypergeom", float(spec.two_j))
        w, g1 = (b.alpha / (b.gamma + b.alpha), b.delta / (b.beta + b.delta)), 1.0 / spec.shape
    elif fam == Family.ThIRW:
        kern, w, g1 = RedistributionKernel("binomial"), (b.alpha / b.gamma, b.delta / b.beta), 1.0
    else:
        kern, w, g1 = RedistributionKernel("neghypergeom", spec.shape), (2 * b.T_a, 2 * b.T_b), 1.0 / spec.shape
    return DualSpec(fam, L, "thermal", None, kern, 1.0, 1.0, 0.5, w[0], w[1], g1)


# ---------------------------------------------------------------------------
# duality functions


def _log_site_factor(fam: Family, shape, x, xi):
    """log of the single-site factor; x is η (discrete) or z (energy)."""
    base = fam.base
    if fam == Family.KMP:
        return xi * np.log(x) - special.gammaln(xi + 1)
    if base == Family.BEP:
        return xi * np.log(x) + special.gammaln(shape) - special.gammaln(shape + xi)
    ff = special.gammaln(x + 1) - special.gammaln(x - xi + 1)
    if base == Family.SIP:
        return ff + special.gammaln(shape) - special.gammaln(shape + xi)
    if base == Family.SEP:
        return ff + special.gammaln(shape + 1 - xi) - special.gammaln(shape + 1)
    return ff


def duality_eval(spec: ModelSpec, x, xi) -> np.ndarray | float:
    """D(η, ξ) (or D(z, ξ)) for a configuration or a stack of configurations.

    Discrete families return 0 when ξ_i > η_i.

    Examples
    --------
    >>> from stochdual.models import make_spec
    >>> s = make_spec("SIP", 1, 1, alpha=1, gamma=3, delta=1, beta=2)
    >>> round(float(duality_eval(s, [3], [0, 2, 0])), 12)
    3.0
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    xi = np.asarray(xi, dtype=np.int64)
    if xi.shape[0] != spec.L + 2 or X.shape[1] != spec.L:
        raise ModelError("dimension mismatch between configuration and dual configuration")
    ds = dual_spec(spec)
    logv = np.full(X.shape[0], 0.0)
    if xi[0]:
        logv += xi[0] * np.log(ds.w_a)
    if xi[-1]:
        logv += xi[-1] * np.log(ds.w_b)
    zero = np.zeros(X.shape[0], dtype=bool)
    discrete = spec.family.is_discrete
    for i in range(spec.L):
        n = int(xi[i + 1])
        if n == 0:
            continue
        col = X[:, i]
        bad = col < n if discrete else col <= 0
        zero |= bad
        safe = np.where(bad, float(n) if discrete else 1.0, col)
        logv += _log_site_factor(spec.family, spec.shape, safe, n)
    out = np.where(zero, 0.0, np.exp(logv))
    return float(out[0]) if single else out


def site_normalisation(spec: ModelSpec, n: int) -> float:
    """Factor g(n) with D(η, n δ_i) = g(n) (η_i)_n (falling factorial) or g(n) z_i^n."""
    fam = spec.family
    if fam == Family.KMP:
        return 1.0 / np.exp(lgamma(n + 1))
    base = fam.base
    if base in (Family.SIP, Family.BEP):
        return np.exp(lgamma(spec.shape) - lgamma(spec.shape + n))
    if base == Family.SEP:
        if n > spec.two_j:
            return 0.0
        return np.exp(lgamma(spec.shape + 1 - n) - lgamma(spec.shape + 1))
    return 1.0


# ---------------------------------------------------------------------------
# dual transitions and sectors


def dual_transitions(ds: DualSpec, xi) -> list[tuple[tuple, float]]:
    """Transitions of the dual out of ``xi`` (self-loops omitted)."""
    xi = tuple(int(v) for v in xi)
    L = ds.L
    out: dict[tuple, float] = {}

    def add(new, rate):
        if rate > 0 and new != xi:
            out[new] = out.get(new, 0.0) + rate

    if ds.thermal:
        for i in range(1, L):
            E = xi[i] + xi[i + 1]
            if E == 0:
                continue
            pmf = ds.kernel.pmf(E)
            for r in range(E + 1):
                new = list(xi)
                new[i], new[i + 1] = r, E - r
                add(tuple(new), float(pmf[r]))
        if xi[1]:
            new = list(xi)
            new[0] += new[1]
            new[1] = 0
            add(tuple(new), ds.u)
        if xi[L]:
            new = list(xi)
            new[L + 1] += new[L]
            new[L] = 0
            add(tuple(new), ds.v)
        return sorted(out.items())

    def factor(n_dest):
        if ds.bulk == "SIP":
            return ds.shape + n_dest
        if ds.bulk == "SEP":
            return ds.shape - n_dest
        return 1.0

    for i in range(1, L):
        for s, d in ((i, i + 1), (i + 1, i)):
            if xi[s]:
                new = list(xi)
                new[s] -= 1
                new[d] += 1
                add(tuple(new), xi[s] * factor(xi[d]))
    for s, d, rate in ((1, 0, ds.u), (L, L + 1, ds.v)):
        if xi[s]:
            new = list(xi)
            new[s] -= 1
            new[d] += 1
            add(tuple(new), rate * xi[s])
    return sorted(out.items())


def dual_table(spec: ModelSpec, max_dual: int = 3) -> dict:
    """{ξ: transitions} of the dual over all |ξ| ≤ ``max_dual``."""
    ds = dual_spec(spec)
    return {xi: dual_transitions(ds, xi) for n in range(max_dual + 1) for xi in dual_configurations(ds, n)}


def dual_configurations(ds: DualSpec, n: int):
    """All ξ with |ξ| = n, lexicographic, bulk sites capped for exclusion duals."""
    L = ds.L
    cap = ds.site_cap
    slots = L + 2

    def rec(prefix, left, i):
        if i == slots - 1:
            yield tuple(prefix + [left])
            return
        hi = left if (i == 0 or cap is None) else min(left, cap)
        for e in range(hi + 1):
            yield from rec(prefix + [e], left - e, i + 1)

    for xi in rec([], n, 0):
        if cap is None or all(v <= cap for v in xi[1:-1]):
            yield xi


@dataclass
class DualSector:
    ds: DualSpec
    n: int
    states: list
    index: dict
    Q: sp.csr_matrix

    @property
    def absorbed(self) -> np.ndarray:
        return np.array([sum(s[1:-1]) == 0 for s in self.states])


def _check_budget(ds: DualSpec, n: int):
    if n > EXACT_MAX_PARTICLES or ds.L > EXACT_MAX_L:
        raise ModelError(f"exact dual budget exceeded (|ξ|={n} > {EXACT_MAX_PARTICLES} "
                         f"or L={ds.L} > {EXACT_MAX_L})")


@lru_cache(maxsize=64)
def dual_sector(ds: DualSpec, n: int, check_budget: bool = True) -> DualSector:
    """Generator of the dual restricted to the sector |ξ| = n."""
    if check_budget:
        _check_budget(ds, n)
    states = list(dual_configurations(ds, n))
    index = {s: i for i, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for i, s in enumerate(states):
        for t, r in dual_transitions(ds, s):
            rows.append(i)
            cols.append(index[t])
            vals.append(r)
    N = len(states)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr()
    Q = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
    return DualSector(ds, n, states, index, Q)


@lru_cache(maxsize=64)
def _absorption_matrix(ds: DualSpec, n: int) -> np.ndarray:
    """H[s, m] = P(m particles end at slot 0 | start in state s)."""
    sec = dual_sector(ds, n)
    absorbed = sec.absorbed
    T = np.flatnonzero(~absorbed)
    A = np.flatnonzero(absorbed)
    H = np.zeros((len(sec.states), n + 1))
    for a in A:
        H[a, sec.states[a][0]] = 1.0
    if len(T):
        QTT = sec.Q[T][:, T].tocsc()
        rhs = -(sec.Q[T][:, A] @ H[A])
        sol = spla.splu(QTT).solve(np.ascontiguousarray(rhs))
        H[T] = sol
    H.setflags(write=False)
    return H


@dataclass
class AbsorptionTable:
    """a_m(ξ) for m = 0..|ξ| with standard errors (zero for exact solves)."""

    xi: tuple
    probability: np.ndarray
    std_error: np.ndarray
    method: str

    def to_csv(self) -> str:
        lines = ["m,probability,std_error"]
        lines += [f"{m},{p:.17g},{e:.17g}" for m, (p, e) in enumerate(zip(self.probability, self.std_error))]
        return "\n".join(lines) + "\n"


def absorption_table(spec: ModelSpec, xi, method: str = "exact", *, n_runs: int = 10_000,
                     seed: int = 0) -> AbsorptionTable:
    """Absorption probabilities of the dual started from ``xi``."""
    ds = dual_spec(spec)
    xi = tuple(int(v) for v in xi)
    if len(xi) != spec.L + 2:
        raise ModelError("dual configuration must have L+2 entries")
    n = sum(xi)
    if method == "exact":
        H = _absorption_matrix(ds, n)
        sec = dual_sector(ds, n)
        p = np.array(H[sec.index[xi]])
        return AbsorptionTable(xi, p, np.zeros_like(p), "exact")
    if method == "mc":
        from .kmc import simulate_dual_absorption

        counts = simulate_dual_absorption(spec, xi, n_runs=n_runs, seed=seed)
        p = counts / n_runs
        return AbsorptionTable(xi, p, np.sqrt(p * (1 - p) / n_runs), "mc")
    raise ValueError(f"unknown method {method!r}")


def stationary_expectation(spec: ModelSpec, xi) -> float:
    """⟨D(·, ξ)⟩ in the nonequilibrium steady state."""
    ds = dual_spec(spec)
    tab = absorption_table(spec, xi)
    n = len(tab.probability) - 1
    m = np.arange(n + 1)
    return float(np.sum(ds.w_a ** m * ds.w_b ** (n - m) * tab.probability))


def single_walker_absorption(spec: ModelSpec, method: str = "closed") -> np.ndarray:
    """p_0..p_{L+1}: probability that one dual walker started at i exits left.

    ``method='closed'`` uses p_i = (L + h/v − i)/(L + h/u + h/v − 1) with h
    the single-walker hop rate; ``method='linear'`` solves the first-step
    equations of the walker.
    """
    ds = dual_spec(spec)
    L, h, u, v = ds.L, ds.hop, ds.u, ds.v
    p = np.zeros(L + 2)
    p[0] = 1.0
    if method == "closed":
        i = np.arange(1, L + 1)
        p[1:-1] = (L + h / v - i) / (L + h / u + h / v - 1)
        return p
    if method != "linear":
        raise ValueError(f"unknown method {method!r}")
    A = np.zeros((L, L))
    rhs = np.zeros(L)
    for i in range(L):
        left = u if i == 0 else h
        right = v if i == L - 1 else h
        A[i, i] = left + right
        if i > 0:
            A[i, i - 1] = -h
        if i < L - 1:
            A[i, i + 1] = -h
    rhs[0] = u
    p[1:-1] = np.linalg.solve(A, rhs)
    return p


def moment_evolution(spec: ModelSpec, x, xi0, t: float):
    """G(η, ξ, t) = E_ξ[D(η, ξ_t)] for all ξ in the sector of ``xi0``.

    Returns ``(value_at_xi0, G, states)``.  ``t = inf`` gives the stationary
    version, which does not depend on η.
    """
    ds = dual_spec(spec)
    xi0 = tuple(int(v) for v in xi0)
    n = sum(xi0)
    sec = dual_sector(ds, n)
    if np.isinf(t):
        m = np.arange(n + 1)
        G = _absorption_matrix(ds, n) @ (ds.w_a ** m * ds.w_b ** (n - m))
    else:
        D = np.array([duality_eval(spec, x, s) for s in sec.states])
        G = D if t == 0 else spla.expm_multiply(t * sec.Q, D)
    return float(G[sec.index[xi0]]), np.asarray(G), sec.states


# ---------------------------------------------------------------------------
# energy models: exact action of the generators on polynomial duality functions


def duality_polynomial(spec: ModelSpec, xi) -> Poly:
    """D(z, ξ) of an energy model as a polynomial in z_1..z_L."""
    ds = dual_spec(spec)
    coef = ds.w_a ** xi[0] * ds.w_b ** xi[-1]
    for n in xi[1:-1]:
        coef *= site_normalisation(spec, int(n))
    return Poly.monomial(xi[1:-1], coef)


def _bep_forward(spec: ModelSpec, P: Poly) -> Poly:
    L, a = spec.L, spec.shape
    z = [Poly.var(L, i) for i in range(L)]
    out = Poly(L)
    for i in range(L - 1):
        dP = P.diff(i) - P.diff(i + 1)
        d2P = dP.diff(i) - dP.diff(i + 1)
        out = out + z[i] * z[i + 1] * d2P - (z[i] - z[i + 1]) * dP * a
    if spec.reservoirs:
        for site, T in ((0, spec.T_a), (L - 1, spec.T_b)):
            d1 = P.diff(site)
            out = out + (d1 * a + z[site] * d1.diff(site)) * T - z[site] * d1 * 0.5
    return out


def _thermal_energy_forward(spec: ModelSpec, P: Poly) -> Poly:
    from .kernels import kernel_for

    L = spec.L
    kern = kernel_for(spec)
    out = Poly(L)
    for mono, c in P.terms.items():
        for i in range(L - 1):
            a, b = mono[i], mono[i + 1]
            w = kern.beta_moment(a, b)
            for cc in range(a + b + 1):
                e = list(mono)
                e[i], e[i + 1] = cc, a + b - cc
                out = out + Poly.monomial(e, c * w * comb(a + b, cc))
            out = out - Poly.monomial(mono, c)
        if spec.reservoirs:
            for site, law in zip((0, L - 1), reservoir_laws(spec)):
                e = list(mono)
                m = e[site]
                e[site] = 0
                out = out + Poly.monomial(e, c * law.moment(m)) - Poly.monomial(mono, c)
    return out


def energy_forward_on_poly(spec: ModelSpec, P: Poly) -> Poly:
    """Forward generator of BEP, KMP or ThBEP applied to a polynomial."""
    if spec.family == Family.BEP:
        return _bep_forward(spec, P)
    if spec.family in (Family.KMP, Family.ThBEP):
        return _thermal_energy_forward(spec, P)
    raise ModelError("not an energy model")


def energy_duality_residual(spec: ModelSpec, max_dual: int = 2) -> float:
    """max coefficient of ℒD(·,ξ) − ℒ_dual D(z,·)(ξ) over |ξ| ≤ max_dual."""
    ds = dual_spec(spec)
    worst = 0.0
    for n in range(max_dual + 1):
        for xi in dual_configurations(ds, n):
            P = duality_polynomial(spec, xi)
            fwd = energy_forward_on_poly(spec, P)
            dual = Poly(spec.L)
            for xi2, rate in dual_transitions(ds, xi):
                dual = dual + (duality_polynomial(spec, xi2) - P) * rate
            worst = max(worst, (fwd - dual).max_abs_coeff())
    return worst
