"""Simulation of the energy models.

BEP(2k) is integrated with an Euler–Maruyama scheme read off its generator.
For a bulk bond (i, i+1) the generator term

    z_i z_{i+1} (∂_i − ∂_{i+1})² − 2k (z_i − z_{i+1}) (∂_i − ∂_{i+1})

is the diffusion that moves an amount d between the two sites with

    d = −2k (z_i − z_{i+1}) dt + sqrt(2 z_i z_{i+1} dt) N(0, 1),
    z_i ← z_i + d,  z_{i+1} ← z_{i+1} − d,

so bond moves conserve z_i + z_{i+1} exactly.  The left reservoir term
T_a (2k ∂_1 + z_1 ∂_1²) − z_1 ∂_1 / 2 is a square-root (CIR) diffusion

    dz_1 = (2k T_a − z_1 / 2) dt + sqrt(2 T_a z_1) dW,

whose stationary law is Gamma(2k, 2T_a); the right end is the mirror
image.  Bonds are updated one after the other within a step, which keeps
each move positivity-checkable.  The scheme has weak order 1.

Positivity policies: ``full_truncation`` clips a bond move to
[−z_i, z_{i+1}] and a boundary site at 0; ``reflection`` reflects the
offending coordinate at 0 (and clips if reflection still overshoots).
Every intervention is counted.

KMP and ThBEP are pure jump processes with a constant total rate
(L − 1 bonds + 2 baths, each at rate 1) and are sampled exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .kmc import SamplePlan, _jackknife, _map, _stream, batch_means
from .models import Family, GammaLaw, ModelError, ModelSpec, reservoir_laws

POLICIES = ("full_truncation", "reflection")


@dataclass(frozen=True)
class SdeScheme:
    """Euler–Maruyama settings; ``dt=None`` selects the default for the model."""

    dt: float | None = None
    positivity_policy: str = "full_truncation"
    seed: int = 0

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.positivity_policy not in POLICIES:
            raise ValueError(f"positivity_policy must be one of {POLICIES}")


def default_dt(spec: ModelSpec) -> float:
    Tmax = max(spec.T_a or 0.0, spec.T_b or 0.0) if spec.reservoirs else 0.0
    return 1e-3 * min(1.0, 1.0 / (4 * spec.k * Tmax)) if Tmax > 0 else 1e-3


# ---------------------------------------------------------------------------
# BEP


@nb.njit(cache=True, nogil=True)
def _bep_chunk(z, normals, dt, two_k, Ta, Tb, res, reflect, flags):
    """Apply normals.shape[0] Euler steps to every replica row of z."""
    R, L = z.shape
    sq = math.sqrt(dt)
    for s in range(normals.shape[0]):
        for r in range(R):
            for b in range(L - 1):
                x, y = z[r, b], z[r, b + 1]
                d = -two_k * (x - y) * dt + math.sqrt(2.0 * x * y) * sq * normals[s, r, b]
                if x + d < 0.0 or y - d < 0.0:
                    flags[r] += 1
                    if reflect:
                        if x + d < 0.0:
                            d = -2.0 * x - d
                        elif y - d < 0.0:
                            d = 2.0 * y - d
                    d = min(max(d, -x), y)
                z[r, b] = x + d
                z[r, b + 1] = y - d
            if res:
                for site, T, col in ((0, Ta, L - 1), (L - 1, Tb, L)):
                    x = z[r, site]
                    nx = x + (two_k * T - 0.5 * x) * dt + math.sqrt(2.0 * T * x) * sq * normals[s, r, col]
                    if nx < 0.0:
                        flags[r] += 1
                        nx = -nx if reflect else 0.0
                    z[r, site] = nx


@nb.njit(cache=True, nogil=True)
def _bep_chunk_sampled(z, normals, dt, two_k, Ta, Tb, res, reflect, flags, step0, sample_steps, samples, kpos):
    """As :func:`_bep_chunk`, copying z into ``samples`` at the requested step counts."""
    for s in range(normals.shape[0]):
        _bep_chunk(z, normals[s:s + 1], dt, two_k, Ta, Tb, res, reflect, flags)
        done = step0 + s + 1
        while kpos[0] < sample_steps.shape[0] and sample_steps[kpos[0]] <= done:
            samples[:, kpos[0], :] = z
            kpos[0] += 1


def bep_step(spec: ModelSpec, z, scheme: SdeScheme, rng: np.random.Generator | None = None):
    """One Euler–Maruyama step; ``z`` is (L,) or (replicas, L).  Returns (z′, n_flagged)."""
    if spec.family != Family.BEP:
        raise ModelError("bep_step needs a BEP spec")
    rng = rng or _stream(scheme.seed, 0)
    zz = np.array(z, dtype=float, ndmin=2)
    if np.any(zz < 0):
        raise ModelError("energies must be nonnegative")
    dt = scheme.dt or default_dt(spec)
    flags = np.zeros(zz.shape[0], np.int64)
    normals = rng.standard_normal((1, zz.shape[0], spec.L + 1))
    _bep_chunk(zz, normals, dt, float(spec.shape), spec.T_a or 0.0, spec.T_b or 0.0,
               bool(spec.reservoirs), scheme.positivity_policy == "reflection", flags)
    return (zz[0] if np.ndim(z) == 1 else zz), int(flags.sum())


@dataclass
class BepRun:
    z: np.ndarray  # final state (replicas, L)
    samples: np.ndarray  # (replicas, n_samples, L)
    flagged: np.ndarray  # interventions per replica
    n_steps: int
    dt: float


def simulate_bep(spec: ModelSpec, z0, t_end: float, scheme: SdeScheme, *, replicas: int = 1,
                 sample_times=None, chunk_steps: int = 4096, replica_offset: int = 0) -> BepRun:
    """Integrate ``replicas`` independent copies to ``t_end``.

    Samples are taken at the first grid time ≥ each requested time.  All
    copies share one normal stream derived from (seed, replica_offset), so a
    run is reproducible for fixed arguments.
    """
    dt = scheme.dt or default_dt(spec)
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    rng = _stream(scheme.seed, replica_offset)
    z = np.array(np.broadcast_to(np.asarray(z0, float), (replicas, spec.L)))
    st = np.asarray(sample_times if sample_times is not None else [], float)
    sample_steps = np.ceil(st / dt - 1e-9).astype(np.int64)
    samples = np.zeros((replicas, len(st), spec.L))
    flags = np.zeros(replicas, np.int64)
    reflect = scheme.positivity_policy == "reflection"
    kpos = np.zeros(1, np.int64)
    while kpos[0] < len(st) and sample_steps[kpos[0]] <= 0:
        samples[:, kpos[0]] = z
        kpos[0] += 1
    total = max(n_steps, int(sample_steps.max()) if len(st) else 0)
    done = 0
    while done < total:
        m = min(chunk_steps, total - done)
        normals = rng.standard_normal((m, replicas, spec.L + 1))
        _bep_chunk_sampled(z, normals, dt, float(spec.shape), spec.T_a or 0.0, spec.T_b or 0.0,
                           bool(spec.reservoirs), reflect, flags, done, sample_steps, samples, kpos)
        done += m
    return BepRun(z, samples, flags, n_steps, dt)


# ---------------------------------------------------------------------------
# KMP and ThBEP


def _fraction_param(spec):
    return 1.0 if spec.family == Family.KMP else float(spec.shape)


def _bath_laws(spec):
    la, lb = reservoir_laws(spec)
    return la, lb


def kmp_step(spec: ModelSpec, z, rng: np.random.Generator):
    """One event of KMP or ThBEP; returns (z′, waiting time, channel)."""
    if spec.family not in (Family.KMP, Family.ThBEP):
        raise ModelError("kmp_step needs a KMP or ThBEP spec")
    L = spec.L
    z = np.array(z, dtype=float)
    n_ch = (L - 1) + (2 if spec.reservoirs else 0)
    wait = rng.exponential(1.0 / n_ch)
    c = int(rng.integers(n_ch))
    if c < L - 1:
        a = _fraction_param(spec)
        E = z[c] + z[c + 1]
        x = rng.beta(a, a)
        z[c], z[c + 1] = x * E, E - x * E
    else:
        law = _bath_laws(spec)[c - (L - 1)]
        z[0 if c == L - 1 else L - 1] = law.sample(rng)
    return z, wait, c


@nb.njit(cache=True, nogil=True)
def _energy_events(z, Q, I, last, st, waits, chans, fracs, baths_a, baths_b, res,
                   t_stop, s_times, samples, s_pos, c_times, c_Q, c_I, c_pos):
    """Consume pre-drawn event randomness until t_stop or the buffers end.

    ``st`` = [t, buffer position].  Returns 0 when t_stop was reached.
    """
    L = z.shape[0]
    n_ch = (L - 1) + (2 if res else 0)
    t = st[0]
    p = int(st[1])
    while p < waits.shape[0]:
        t_new = t + waits[p]
        lim = min(t_new, t_stop)
        while s_pos[0] < s_times.shape[0] and s_times[s_pos[0]] <= lim:
            samples[s_pos[0], :] = z
            s_pos[0] += 1
        while c_pos[0] < c_times.shape[0] and c_times[c_pos[0]] <= lim:
            tc = c_times[c_pos[0]]
            for j in range(L):
                I[j] += z[j] * (tc - last[j])
                last[j] = tc
            c_Q[c_pos[0], :] = Q
            c_I[c_pos[0], :] = I
            c_pos[0] += 1
        if t_new > t_stop:
            for j in range(L):
                I[j] += z[j] * (t_stop - last[j])
                last[j] = t_stop
            st[0] = t_stop
            st[1] = p + 1
            return 0
        t = t_new
        c = min(int(chans[p] * n_ch), n_ch - 1)
        if c < L - 1:
            for j in (c, c + 1):
                I[j] += z[j] * (t - last[j])
                last[j] = t
            E = z[c] + z[c + 1]
            left = fracs[p] * E
            Q[c + 1] += z[c] - left
            z[c] = left
            z[c + 1] = E - left
        elif c == L - 1:
            I[0] += z[0] * (t - last[0])
            last[0] = t
            Q[0] += baths_a[p] - z[0]
            z[0] = baths_a[p]
        else:
            I[L - 1] += z[L - 1] * (t - last[L - 1])
            last[L - 1] = t
            Q[L] += z[L - 1] - baths_b[p]
            z[L - 1] = baths_b[p]
        p += 1
    st[0] = t
    st[1] = p
    return 1


class EnergyJumpEngine:
    """Exact event-driven sampler of KMP/ThBEP for one replica.

    Tracks bond flows Q (length L+1, left-to-right positive, boundary
    bonds included) and occupation integrals I, as the KMC engine does.
    """

    def __init__(self, spec: ModelSpec, z0=None, *, seed: int = 0, replica: int = 0, chunk: int = 1 << 15):
        if spec.family not in (Family.KMP, Family.ThBEP):
            raise ModelError("EnergyJumpEngine needs KMP or ThBEP")
        self.spec = spec
        self.L = spec.L
        self.rng = _stream(seed, replica)
        self.res = bool(spec.reservoirs)
        self.n_ch = (self.L - 1) + (2 if self.res else 0)
        if self.n_ch == 0:
            raise ModelError("no events: single site without baths")
        self.a = _fraction_param(spec)
        self.laws = _bath_laws(spec) if self.res else None
        if z0 is None:
            if not self.res:
                raise ModelError("bulk-only run needs an initial configuration")
            la, lb = self.laws
            w = (np.arange(self.L) + 0.5) / self.L
            z0 = [GammaLaw(la.shape, (1 - x) * la.scale + x * lb.scale).sample(self.rng) for x in w]
        self.z = np.array(z0, float)
        if self.z.shape != (self.L,) or np.any(self.z < 0):
            raise ModelError("invalid energy configuration")
        self.Q = np.zeros(self.L + 1)
        self.I = np.zeros(self.L)
        self.last = np.zeros(self.L)
        self.st = np.zeros(2)
        self.chunk = chunk
        self._buf = None

    def _draw(self):
        n = self.chunk
        waits = self.rng.exponential(1.0 / self.n_ch, n)
        chans = self.rng.random(n)
        fracs = self.rng.beta(self.a, self.a, n)
        if self.res:
            la, lb = self.laws
            ba = self.rng.gamma(la.shape, la.scale, n)
            bb = self.rng.gamma(lb.shape, lb.scale, n)
        else:
            ba = bb = np.zeros(n)
        self._buf = (waits, chans, fracs, ba, bb)
        self.st[1] = 0

    def run(self, t_stop: float, *, sample_times=None, checkpoint_times=None):
        s_times = np.asarray(sample_times if sample_times is not None else [], float)
        c_times = np.asarray(checkpoint_times if checkpoint_times is not None else [], float)
        samples = np.zeros((len(s_times), self.L))
        c_Q = np.zeros((len(c_times), self.L + 1))
        c_I = np.zeros((len(c_times), self.L))
        s_pos = np.zeros(1, np.int64)
        c_pos = np.zeros(1, np.int64)
        while True:
            if self._buf is None or self.st[1] >= len(self._buf[0]):
                self._draw()
            status = _energy_events(self.z, self.Q, self.I, self.last, self.st, *self._buf, self.res,
                                    float(t_stop), s_times, samples, s_pos, c_times, c_Q, c_I, c_pos)
            if status == 0:
                return samples, c_Q, c_I

    @property
    def time(self):
        return float(self.st[0])


# ---------------------------------------------------------------------------
# stationary sampling


@dataclass
class EnergySample:
    samples: np.ndarray
    mean: np.ndarray
    mean_se: np.ndarray
    moments: np.ndarray  # (n_max, L) single-site moments ⟨z^n⟩, n = 1..n_max
    moments_se: np.ndarray
    second: np.ndarray
    second_se: np.ndarray
    flagged: int = 0
    seeds: list = field(default_factory=list)

    @property
    def cov(self):
        return self.second - np.outer(self.mean, self.mean)

    def as_dict(self):
        return {"mean": self.mean.tolist(), "mean_se": self.mean_se.tolist(),
                "moments": self.moments.tolist(), "moments_se": self.moments_se.tolist(),
                "second": self.second.tolist(), "second_se": self.second_se.tolist(),
                "flagged": self.flagged, "seeds": self.seeds}


def _summarise(S, n_max, flagged, seeds):
    mean, mse = batch_means(S)
    mom, mom_se = [], []
    for n in range(1, n_max + 1):
        m, e = batch_means(S ** n)
        mom.append(m)
        mom_se.append(e)
    second, sse = batch_means(S[..., :, None] * S[..., None, :])
    return EnergySample(S, mean, mse, np.array(mom), np.array(mom_se), second, sse, flagged, seeds)


def sample_stationary_energy(spec: ModelSpec, plan: SamplePlan, *, scheme: SdeScheme | None = None,
                             n_max: int = 3, threads: int = 1) -> EnergySample:
    """Stationary moments of BEP, KMP or ThBEP with batch-means errors."""
    burn = 10.0 * spec.L ** 2 if plan.burn_in is None else plan.burn_in
    times = burn + plan.thinning * np.arange(plan.n_samples)
    seeds = [[plan.base_seed, r] for r in range(plan.replicas)]
    if spec.family == Family.BEP:
        scheme = scheme or SdeScheme(seed=plan.base_seed)
        z0 = np.full(spec.L, 2 * spec.shape * 0.5 * ((spec.T_a or 1.0) + (spec.T_b or 1.0)))

        def one(r):
            run = simulate_bep(spec, z0, times[-1], SdeScheme(scheme.dt, scheme.positivity_policy,
                                                              plan.base_seed),
                               replicas=1, sample_times=times, replica_offset=r)
            return run.samples[0], int(run.flagged.sum())

        out = _map(one, range(plan.replicas), threads)
        S = np.stack([o[0] for o in out])
        return _summarise(S, n_max, sum(o[1] for o in out), seeds)
    if spec.family not in (Family.KMP, Family.ThBEP):
        raise ModelError("energy sampling covers BEP, KMP and ThBEP")

    def one(r):
        eng = EnergyJumpEngine(spec, seed=plan.base_seed, replica=r)
        s, _, _ = eng.run(times[-1], sample_times=times)
        return s

    S = np.stack(_map(one, range(plan.replicas), threads))
    return _summarise(S, n_max, 0, seeds)


# ---------------------------------------------------------------------------
# transport of the jump energy models


@dataclass
class EnergyTransport:
    D: float
    D_se: float
    sigma: float
    sigma_se: float


def estimate_transport_energy(spec_family, shape, T: float, *, L: int = 50, t: float = 1000.0,
                              replicas: int = 16, seed: int = 0, window: float = 1.0,
                              threads: int = 1) -> EnergyTransport:
    """(D, σ) of KMP or ThBEP at mean energy ρ = 2·shape·T (ρ = T for KMP).

    σ̂ sums the squared increments of the bond martingales
    Q_b − κ∫(z_b − z_{b+1}), κ = 1/2, in an equilibrium run.  D̂ divides the
    mean jump flow of a run between temperatures 1.5T and 0.5T by the
    measured energy gradient per site.  With unit-rate bond clocks one
    expects D = 1/2 and σ = ρ²/(2k), i.e. σ = ρ² for KMP.
    """
    from .models import make_spec

    fam = Family(spec_family)
    sh = None if fam == Family.KMP else shape
    eq = make_spec(fam, L, sh, T_a=T, T_b=T)
    neq = make_spec(fam, L, sh, T_a=1.5 * T, T_b=0.5 * T)
    kappa = 0.5
    cps = L + window * np.arange(int(round(t / window)) + 1)

    def run(spec, r):
        eng = EnergyJumpEngine(spec, seed=seed, replica=r)
        _, cQ, cI = eng.run(cps[-1], checkpoint_times=cps)
        return cQ - cQ[0], cI - cI[0]

    sig = []
    for Qc, Ic in _map(lambda r: run(eq, r), range(replicas), threads):
        M = Qc[:, 1:-1] - kappa * (Ic[:, :-1] - Ic[:, 1:])
        sig.append(np.mean(np.sum(np.diff(M, axis=0) ** 2, axis=0)) / t)
    Ds = []
    for Qc, Ic in _map(lambda r: run(neq, r + replicas), range(replicas), threads):
        J = np.mean(Qc[-1, 1:-1]) / t
        grad = (Ic[-1, 0] - Ic[-1, -1]) / t / (L - 1)
        Ds.append(J / grad)
    s, s_se = _jackknife(sig)
    D, D_se = _jackknife(Ds)
    return EnergyTransport(D, D_se, s, s_se)
