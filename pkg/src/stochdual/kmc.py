"""Continuous-time kinetic Monte Carlo for the discrete models.

One engine covers SIP, SEP and IRW (local hops plus boundary birth/death)
and their thermalized versions (unit-rate bond clocks that redistribute the
bond content, unit-rate boundary clocks that resample the end site).

Conventions
-----------
* ``eta`` has length L; sites are 0-based internally.
* ``Q`` has length L+1: ``Q[0]`` is the flow from the left reservoir into
  site 1, ``Q[b+1]`` the flow across bulk bond (b, b+1) and ``Q[L]`` the flow
  into the right reservoir.  Left-to-right is positive.
* ``I[i]`` is the time integral of ``eta[i]``; it is updated lazily when a
  site changes and flushed at checkpoints.
* Every event consumes exactly three uniforms (waiting time, channel,
  outcome), drawn from a per-replica ``numpy`` generator seeded by
  ``SeedSequence([base_seed, replica])``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .analysis import profile_closed_form
from .duality import dual_spec, dual_transitions
from .kernels import kernel_for
from .models import (Binomial, Family, ModelError, ModelSpec, NegativeBinomial, Poisson,
                     boundary_for_densities, make_spec, reservoir_laws)

_CODES = {Family.SIP: 0, Family.SEP: 1, Family.IRW: 2,
          Family.ThSIP: 3, Family.ThSEP: 4, Family.ThIRW: 5}
_KERNEL_KIND = {"neghypergeom": 0, "hypergeom": 1, "binomial": 2}

RECOMPUTE_EVERY = 1_000_000
CHUNK = 1 << 16
RESERVOIR_TAIL = 1e-16


class KmcError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# numba core


@nb.njit(cache=True)
def _factor(code, shape, n):
    if code == 0:
        return shape + n
    if code == 1:
        return shape - n
    return 1.0


@nb.njit(cache=True)
def _site_channels(code, shape, par, res, eta, rates, j, L):
    """Recompute every channel touching site j; returns the change in total rate."""
    delta = 0.0
    for b in (j - 1, j):
        if 0 <= b < L - 1:
            new_r = eta[b] * _factor(code, shape, eta[b + 1])
            new_l = eta[b + 1] * _factor(code, shape, eta[b])
            delta += new_r - rates[2 * b] + new_l - rates[2 * b + 1]
            rates[2 * b] = new_r
            rates[2 * b + 1] = new_l
    if res:
        base = 2 * (L - 1)
        if j == 0:
            nb_ = par[0] * _factor(code, shape, eta[0])
            nd = par[1] * eta[0]
            delta += nb_ - rates[base] + nd - rates[base + 1]
            rates[base] = nb_
            rates[base + 1] = nd
        if j == L - 1:
            nb_ = par[2] * _factor(code, shape, eta[L - 1])
            nd = par[3] * eta[L - 1]
            delta += nb_ - rates[base + 2] + nd - rates[base + 3]
            rates[base + 2] = nb_
            rates[base + 3] = nd
    return delta


@nb.njit(cache=True)
def _full_rates(code, shape, par, res, eta, rates, L):
    rates[:] = 0.0
    for j in range(L):
        _site_channels(code, shape, par, res, eta, rates, j, L)
    return rates.sum()


@nb.njit(cache=True)
def _kernel_draw(kind, param, E, u, cdf):
    """Left share r of a bond with content E, by inverse CDF."""
    if E < cdf.shape[0]:
        r = np.searchsorted(cdf[E, : E + 1], u, side="right")
        return min(r, E)
    # on-the-fly weights above the tabulated range
    lw = np.empty(E + 1)
    mx = -np.inf
    for r in range(E + 1):
        s = E - r
        if kind == 0:
            v = (math.lgamma(param + r) - math.lgamma(r + 1.0)
                 + math.lgamma(param + s) - math.lgamma(s + 1.0))
        elif kind == 1:
            if r > param or s > param:
                v = -np.inf
            else:
                v = -(math.lgamma(r + 1.0) + math.lgamma(param - r + 1.0)
                      + math.lgamma(s + 1.0) + math.lgamma(param - s + 1.0))
        else:
            v = -(math.lgamma(r + 1.0) + math.lgamma(s + 1.0))
        lw[r] = v
        if v > mx:
            mx = v
    tot = 0.0
    for r in range(E + 1):
        lw[r] = math.exp(lw[r] - mx) if lw[r] > -np.inf else 0.0
        tot += lw[r]
    acc = 0.0
    target = u * tot
    for r in range(E + 1):
        acc += lw[r]
        if acc > target:
            return r
    return E


@nb.njit(cache=True)
def _res_draw(cdf, u):
    r = np.searchsorted(cdf, u, side="right")
    return min(r, cdf.shape[0] - 1)


@nb.njit(cache=True)
def _touch(I, last, eta, j, t):
    I[j] += eta[j] * (t - last[j])
    last[j] = t


@nb.njit(cache=True, nogil=True)
def _advance(code, shape, par, res, eta, Q, I, last, st, rates,
             kind, kparam, kcdf, rcdf_a, rcdf_b,
             u, upos, t_stop, max_events,
             s_times, samples, s_pos, c_times, c_Q, c_I, c_pos, debug):
    """Run events until time ``t_stop``, ``max_events`` or the uniforms run out.

    ``st`` = [t, R, events since the last full recompute, total events].
    Returns (new upos, status) with status 0 = reached t_stop,
    1 = needs more uniforms, 2 = max_events done.
    """
    L = eta.shape[0]
    thermal = code >= 3
    nch = (L - 1) + (2 if res else 0)
    t = st[0]
    R = st[1]
    done = 0
    while True:
        if done >= max_events:
            st[0] = t
            st[1] = R
            return upos, 2
        if upos + 3 > u.shape[0]:
            st[0] = t
            st[1] = R
            return upos, 1
        if thermal:
            R = float(nch)
        if R <= 0.0:
            raise RuntimeError("total rate vanished (absorbing state)")
        t_new = t - math.log(1.0 - u[upos]) / R
        u1 = u[upos + 1]
        u2 = u[upos + 2]
        upos += 3
        # observations in (t, t_new] see the current state
        while s_pos[0] < s_times.shape[0] and s_times[s_pos[0]] <= min(t_new, t_stop):
            samples[s_pos[0], :] = eta
            s_pos[0] += 1
        while c_pos[0] < c_times.shape[0] and c_times[c_pos[0]] <= min(t_new, t_stop):
            tc = c_times[c_pos[0]]
            for j in range(L):
                _touch(I, last, eta, j, tc)
            c_Q[c_pos[0], :] = Q
            c_I[c_pos[0], :] = I
            c_pos[0] += 1
        if t_new > t_stop:
            # memoryless clock: the overshooting draw is discarded
            for j in range(L):
                _touch(I, last, eta, j, t_stop)
            st[0] = t_stop
            st[1] = R
            return upos, 0
        t = t_new
        done += 1
        st[3] += 1
        if thermal:
            c = min(int(u1 * nch), nch - 1)
            if c < L - 1:
                b = c
                E = int(eta[b] + eta[b + 1])
                if E > 0:
                    r = _kernel_draw(kind, kparam, E, u2, kcdf)
                    _touch(I, last, eta, b, t)
                    _touch(I, last, eta, b + 1, t)
                    Q[b + 1] += (E - r) - eta[b + 1]
                    eta[b] = r
                    eta[b + 1] = E - r
            elif c == L - 1:
                n = _res_draw(rcdf_a, u2)
                _touch(I, last, eta, 0, t)
                Q[0] += n - eta[0]
                eta[0] = n
            else:
                n = _res_draw(rcdf_b, u2)
                _touch(I, last, eta, L - 1, t)
                Q[L] += eta[L - 1] - n
                eta[L - 1] = n
        else:
            target = u1 * R
            acc = 0.0
            n_ch = rates.shape[0]
            c = n_ch - 1
            for i in range(n_ch):
                acc += rates[i]
                if acc > target:
                    c = i
                    break
            while rates[c] <= 0.0:  # guard against round-off at the top end
                c -= 1
            base = 2 * (L - 1)
            if c < base:
                b = c // 2
                if c % 2 == 0:
                    s_, d_ = b, b + 1
                    Q[b + 1] += 1
                else:
                    s_, d_ = b + 1, b
                    Q[b + 1] -= 1
                _touch(I, last, eta, s_, t)
                _touch(I, last, eta, d_, t)
                eta[s_] -= 1
                eta[d_] += 1
                R += _site_channels(code, shape, par, res, eta, rates, s_, L)
                R += _site_channels(code, shape, par, res, eta, rates, d_, L)
            else:
                k = c - base
                j = 0 if k < 2 else L - 1
                _touch(I, last, eta, j, t)
                if k == 0:
                    eta[0] += 1
                    Q[0] += 1
                elif k == 1:
                    eta[0] -= 1
                    Q[0] -= 1
                elif k == 2:
                    eta[L - 1] += 1
                    Q[L] -= 1
                else:
                    eta[L - 1] -= 1
                    Q[L] += 1
                R += _site_channels(code, shape, par, res, eta, rates, j, L)
            st[2] += 1
            if st[2] >= 1_000_000:
                fresh = _full_rates(code, shape, par, res, eta, rates, L)
                if abs(fresh - R) > 1e-9 * max(1.0, fresh):
                    raise RuntimeError("incremental total rate drifted from recomputation")
                R = fresh
                st[2] = 0
        if debug:
            for j in range(L):
                if eta[j] < 0 or ((code == 1 or code == 4) and eta[j] > shape):
                    raise RuntimeError("occupation left the state space")


# ---------------------------------------------------------------------------
# engine


def _stream(base_seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(base_seed), int(replica)])))


def local_equilibrium_law(spec: ModelSpec, rho: float):
    """Product-measure marginal with mean ``rho``."""
    base = spec.family.base
    if base == Family.SIP:
        return NegativeBinomial(spec.shape, rho / (spec.shape + rho))
    if base == Family.SEP:
        return Binomial(spec.two_j, rho / spec.two_j)
    if base == Family.IRW:
        return Poisson(rho)
    raise ModelError(f"{spec.family.value} is not a particle model")


class Engine:
    """Mutable KMC state for one replica.

    Parameters
    ----------
    spec : ModelSpec
        A discrete family.
    eta0 : array_like, optional
        Initial configuration; defaults to a draw from the local equilibrium
        product measure at the closed-form profile.
    seed, replica : int
        Stream identifiers.
    kernel_table : int
        Largest bond content with a tabulated redistribution CDF.
    """

    def __init__(self, spec: ModelSpec, eta0=None, *, seed: int = 0, replica: int = 0,
                 kernel_table: int = 512, debug: bool = False):
        if spec.family not in _CODES:
            raise ModelError(f"KMC covers discrete families, not {spec.family.value}")
        self.spec = spec
        self.code = _CODES[spec.family]
        self.L = L = spec.L
        self.rng = _stream(seed, replica)
        self.debug = debug
        self.shape = float(spec.shape) if spec.shape is not None else 1.0
        b = spec.boundary
        self.res = bool(spec.reservoirs)
        self.par = np.array([b.alpha or 0.0, b.gamma or 0.0, b.delta or 0.0, b.beta or 0.0])
        if eta0 is None:
            prof = profile_closed_form(spec) if self.res else np.ones(L)
            eta0 = np.array([local_equilibrium_law(spec, max(r, 1e-12)).sample(self.rng)
                             for r in prof], dtype=np.int64)
        self.eta = np.array(eta0, dtype=np.int64).copy()
        if self.eta.shape != (L,):
            raise ModelError(f"configuration must have length {L}")
        if np.any(self.eta < 0) or (self.code in (1, 4) and np.any(self.eta > spec.two_j)):
            raise ModelError("configuration outside the state space")
        self.Q = np.zeros(L + 1)
        self.I = np.zeros(L)
        self.last = np.zeros(L)
        self.st = np.zeros(4)
        self.rates = np.zeros(max(2 * (L - 1) + 4, 1))
        if self.code >= 3:
            ker = kernel_for(spec)
            self.kind = _KERNEL_KIND[ker.kind]
            self.kparam = float(ker.param) if ker.param is not None else 0.0
            emax = kernel_table if self.code != 4 else 2 * spec.two_j
            self.kcdf = ker.cdf_table(emax)
            if self.res:
                la, lb = reservoir_laws(spec)
                self.rcdf_a = self._law_cdf(la)
                self.rcdf_b = self._law_cdf(lb)
            else:
                self.rcdf_a = self.rcdf_b = np.ones(1)
        else:
            self.kind, self.kparam = 0, 0.0
            self.kcdf = np.ones((1, 1))
            self.rcdf_a = self.rcdf_b = np.ones(1)
            self.st[1] = _full_rates(self.code, self.shape, self.par, self.res, self.eta, self.rates, L)
        self.u = np.empty(0)
        self.upos = 0

    @staticmethod
    def _law_cdf(law):
        M = law.n if isinstance(law, Binomial) else law.support_cap(RESERVOIR_TAIL)
        c = np.cumsum(law.pmf(np.arange(M + 1)))
        c[-1] = 1.0
        return c

    @property
    def time(self) -> float:
        return float(self.st[0])

    @property
    def n_events(self) -> int:
        return int(self.st[3])

    @property
    def total_rate(self) -> float:
        if self.code >= 3:
            return float((self.L - 1) + (2 if self.res else 0))
        return float(self.st[1])

    @property
    def currents(self) -> np.ndarray:
        """Bulk bond currents Q_{i,i+1}, i = 1..L−1."""
        return self.Q[1:-1].copy()

    def _refill(self):
        rest = self.u[self.upos:]
        self.u = np.concatenate([rest, self.rng.random(CHUNK)])
        self.upos = 0

    def run(self, t_stop: float = np.inf, *, max_events: int = np.iinfo(np.int64).max,
            sample_times=None, checkpoint_times=None):
        """Advance; returns (samples, checkpoint Q, checkpoint I)."""
        L = self.L
        s_times = np.asarray(sample_times if sample_times is not None else [], float)
        c_times = np.asarray(checkpoint_times if checkpoint_times is not None else [], float)
        samples = np.zeros((len(s_times), L), dtype=np.int64)
        c_Q = np.zeros((len(c_times), L + 1))
        c_I = np.zeros((len(c_times), L))
        s_pos = np.zeros(1, np.int64)
        c_pos = np.zeros(1, np.int64)
        remaining = max_events
        while True:
            start = self.st[3]
            self.upos, status = _advance(
                self.code, self.shape, self.par, self.res, self.eta, self.Q, self.I, self.last,
                self.st, self.rates, self.kind, self.kparam, self.kcdf, self.rcdf_a, self.rcdf_b,
                self.u, self.upos, float(t_stop), remaining,
                s_times, samples, s_pos, c_times, c_Q, c_I, c_pos, self.debug)
            remaining -= int(self.st[3] - start)
            if status == 1:
                self._refill()
                continue
            break
        return samples, c_Q, c_I

    def flush(self):
        """Bring the occupation integrals up to the current time."""
        t = self.st[0]
        self.I += self.eta * (t - self.last)
        self.last[:] = t


@dataclass
class KmcState:
    """Snapshot view used by :func:`step`."""

    engine: Engine

    @property
    def config(self):
        return self.engine.eta.copy()

    @property
    def time(self):
        return self.engine.time

    @property
    def currents(self):
        return self.engine.currents


def init_state(spec: ModelSpec, eta0=None, seed: int = 0, replica: int = 0) -> KmcState:
    return KmcState(Engine(spec, eta0, seed=seed, replica=replica))


def step(spec: ModelSpec, state: KmcState) -> KmcState:
    """Perform exactly one event."""
    if state.engine.spec != spec:
        raise ModelError("state belongs to a different spec")
    state.engine.run(max_events=1)
    return state


def total_rate(spec: ModelSpec, eta) -> float:
    """Total event rate out of ``eta`` as maintained by the engine."""
    return Engine(spec, eta).total_rate


# ---------------------------------------------------------------------------
# stationary sampling


@dataclass
class SamplePlan:
    """Sampling schedule; ``burn_in=None`` means 10 L²."""

    n_samples: int = 10_000
    thinning: float = 1.0
    burn_in: float | None = None
    replicas: int = 4
    base_seed: int = 0

    def __post_init__(self):
        if self.n_samples <= 0 or self.thinning <= 0 or self.replicas <= 0:
            raise ValueError("n_samples, thinning and replicas must be positive")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass
class StationarySample:
    samples: np.ndarray  # (replicas, n_samples, L)
    mean: np.ndarray
    mean_se: np.ndarray
    second: np.ndarray
    second_se: np.ndarray
    cov: np.ndarray
    seeds: list = field(default_factory=list)

    def as_dict(self):
        return {"mean": self.mean.tolist(), "mean_se": self.mean_se.tolist(),
                "second": self.second.tolist(), "second_se": self.second_se.tolist(),
                "cov": self.cov.tolist(), "seeds": self.seeds}


def batch_means(x: np.ndarray, n_batches: int = 20):
    """Mean and batch-means standard error along axis 1 of (replicas, n, ...)."""
    R, n = x.shape[:2]
    nb_ = max(1, min(n_batches, n))
    usable = (n // nb_) * nb_
    xb = x[:, :usable].reshape(R, nb_, usable // nb_, *x.shape[2:]).mean(axis=2)
    xb = xb.reshape(R * nb_, *x.shape[2:])
    m = x.reshape(R * n, *x.shape[2:]).mean(axis=0)
    se = xb.std(axis=0, ddof=1) / np.sqrt(xb.shape[0]) if xb.shape[0] > 1 else np.full_like(m, np.nan)
    return m, se


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def sample_stationary(spec: ModelSpec, plan: SamplePlan, *, threads: int = 1) -> StationarySample:
    """Stationary means and second moments with batch-means errors."""
    burn = 10.0 * spec.L ** 2 if plan.burn_in is None else plan.burn_in
    times = burn + plan.thinning * np.arange(plan.n_samples)

    def one(r):
        eng = Engine(spec, seed=plan.base_seed, replica=r)
        s, _, _ = eng.run(times[-1], sample_times=times)
        return s

    S = np.stack(_map(one, range(plan.replicas), threads)).astype(float)
    mean, mse = batch_means(S)
    P = S[..., :, None] * S[..., None, :]
    second, sse = batch_means(P)
    cov = second - np.outer(mean, mean)
    return StationarySample(S, mean, mse, second, sse, cov,
                            [[plan.base_seed, r] for r in range(plan.replicas)])


# ---------------------------------------------------------------------------
# transport coefficients


def compensator_rate(spec: ModelSpec) -> float:
    """κ in E[dQ_b] = κ (η_b − η_{b+1}) dt."""
    fam = spec.family
    if fam in (Family.SIP, Family.SEP):
        return float(spec.shape)
    if fam == Family.IRW:
        return 1.0
    return 0.5  # thermalized bond: mean new share is half the content


def expected_transport(family, shape, rho):
    """(D, σ) of SIP, SEP and IRW."""
    fam = Family(family)
    if fam == Family.SIP:
        return shape, 2 * rho * (rho + shape)
    if fam == Family.SEP:
        return shape, 2 * rho * (shape - rho)
    if fam == Family.IRW:
        return 1.0, 2 * rho
    raise ModelError("closed-form transport coefficients for SIP, SEP, IRW")


@dataclass
class TransportEstimate:
    D: float
    D_se: float
    sigma: float
    sigma_se: float
    sigma_literal_jump: float
    sigma_literal_int: float
    D_jump: float
    D_jump_se: float
    details: dict = field(default_factory=dict)


def _jackknife(values, estimator=None):
    """Estimate and jackknife error; ``estimator`` maps replica indices to a value."""
    v = np.asarray(values, float)
    n = len(v)
    est = estimator or (lambda idx: v[idx].mean())
    full = float(est(np.arange(n)))
    if n < 2:
        return full, float("nan")
    loo = np.array([est(np.delete(np.arange(n), i)) for i in range(n)])
    return full, float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def estimate_transport(family, shape, rho: float, *, delta_rho: float | None = None, L: int = 50,
                       t: float = 1000.0, replicas: int = 16, seed: int = 0, window: float = 1.0,
                       burn_in: float | None = None, threads: int = 1) -> TransportEstimate:
    """Diffusivity and mobility from integrated bond currents.

    σ̂ comes from an equilibrium run at density ρ.  The martingale part of
    each bulk bond current, M_b = Q_b − κ∫(η_b − η_{b+1}), has E[M_b(t)²] =
    σ t; σ̂ sums its squared increments over windows of length ``window``
    and averages over bonds.  The literal ⟨Q_b²⟩/t with either the jump
    count or the integrated-occupation form of Q is reported alongside.

    D̂ comes from a run with densities ρ ± δρ/2 (default δρ = ρ, capped
    inside (0, 2j) for SEP) imposed by reservoirs whose
    profile is exactly linear with slope −δρ/L: D̂ = L J/δρ, where J is the
    mean bulk current measured by its compensator κ(I_1 − I_L)/(L−1) (and,
    for comparison, by jump counts).
    """
    fam = Family(family)
    if delta_rho is None:
        # D is density independent for these families, so a wide gap is exact and less noisy
        delta_rho = min(rho, shape - rho) if fam == Family.SEP else rho
    if fam == Family.SEP and not (0 < rho - delta_rho / 2 and rho + delta_rho / 2 < shape):
        raise ModelError("densities must stay inside (0, 2j)")
    kappa_spec = make_spec(fam, L, shape, **boundary_for_densities(fam, shape, rho, rho).as_dict())
    kappa = compensator_rate(kappa_spec)
    burn = float(L) if burn_in is None else burn_in
    n_win = int(round(t / window))
    cps = burn + window * np.arange(n_win + 1)

    def run(spec, r):
        eng = Engine(spec, seed=seed, replica=r)
        _, cQ, cI = eng.run(cps[-1], checkpoint_times=cps)
        return cQ - cQ[0], cI - cI[0]

    eq = kappa_spec
    rho_a, rho_b = rho + delta_rho / 2, rho - delta_rho / 2
    neq = make_spec(fam, L, shape, **boundary_for_densities(fam, shape, rho_a, rho_b).as_dict())

    sig, dens, sig_jump, sig_int = [], [], [], []
    for Qc, Ic in _map(lambda r: run(eq, r), range(replicas), threads):
        Qb = Qc[:, 1:-1]
        Ib = kappa * (Ic[:, :-1] - Ic[:, 1:])
        dM = np.diff(Qb - Ib, axis=0)
        sig.append(np.mean(np.sum(dM ** 2, axis=0)) / t)
        dens.append(np.mean(Ic[-1]) / t)
        sig_jump.append(np.mean(Qb[-1] ** 2) / t)
        sig_int.append(np.mean(Ib[-1] ** 2) / t)
    sig, dens = np.array(sig), np.array(dens)

    def controlled(idx):
        # the bulk density relaxes on the L² time scale; its exact mean ρ
        # makes it an unbiased control variate for the slow part of σ̂
        x, y = dens[idx], sig[idx]
        if len(idx) < 3 or np.var(x) == 0:
            return y.mean()
        b = np.cov(x, y)[0, 1] / np.var(x, ddof=1)
        return y.mean() - b * (x.mean() - rho)

    Dc, Dj = [], []
    for Qc, Ic in _map(lambda r: run(neq, r + replicas), range(replicas), threads):
        J = kappa * (Ic[-1, 0] - Ic[-1, -1]) / (L - 1) / t
        Dc.append(L * J / delta_rho)
        Dj.append(L * np.mean(Qc[-1, 1:-1]) / t / delta_rho)
    s, s_se = _jackknife(sig, controlled)
    D, D_se = _jackknife(Dc)
    Dj_, Dj_se = _jackknife(Dj)
    return TransportEstimate(D, D_se, s, s_se, float(np.mean(sig_jump)), float(np.mean(sig_int)),
                             Dj_, Dj_se, {"L": L, "t": t, "replicas": replicas, "rho": rho,
                                          "delta_rho": delta_rho, "kappa": kappa, "window": window})


# ---------------------------------------------------------------------------
# dual absorption by simulation


def simulate_dual_absorption(spec: ModelSpec, xi, n_runs: int = 10_000, seed: int = 0) -> np.ndarray:
    """Counts of runs ending with m walkers absorbed on the left, m = 0..|ξ|."""
    ds = dual_spec(spec)
    xi = tuple(int(v) for v in xi)
    if len(xi) != ds.L + 2:
        raise ModelError(f"ξ must have length L+2 = {ds.L + 2}")
    n = sum(xi[1:-1])
    rng = _stream(seed, 0)
    cache: dict = {}
    counts = np.zeros(n + 1, dtype=np.int64)
    for _ in range(n_runs):
        state = (0,) + xi[1:-1] + (0,)
        while sum(state[1:-1]) > 0:
            tr = cache.get(state)
            if tr is None:
                out = dual_transitions(ds, state)
                tr = ([s for s, _ in out], np.cumsum([r for _, r in out]))
                cache[state] = tr
            targets, cum = tr
            state = targets[min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")),
                                len(targets) - 1)]
        counts[state[0]] += 1
    return counts
