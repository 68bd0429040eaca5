"""Redistribution kernels of the thermalized models.

A bond event of a thermalized model replaces the pair (η_i, η_{i+1}) with
total E by (r, E − r), where r is drawn from the conditional law of one site
given the sum under the equilibrium product measure:

=========  ==================================
ThSIP      negative hypergeometric (E, 4k−1, 2k)
ThSEP      hypergeometric (E, 4j, 2j)
ThIRW      binomial (E, 1/2)
ThBEP      energy fraction x ~ Beta(2k, 2k)
=========  ==================================
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .models import Family, ModelError, ModelSpec


@dataclass(frozen=True)
class RedistributionKernel:
    """Bond redistribution law.

    Parameters
    ----------
    kind : {'neghypergeom', 'hypergeom', 'binomial', 'beta'}
    param : float or None
        ``2k`` for 'neghypergeom' and 'beta', ``2j`` for 'hypergeom'.
    """

    kind: str
    param: float | None = None

    @property
    def discrete(self) -> bool:
        return self.kind != "beta"

    def logweights(self, E: int) -> np.ndarray:
        """Unnormalised log-weights of r = 0..E (``-inf`` off support)."""
        r = np.arange(E + 1, dtype=float)
        s = E - r
        if self.kind == "neghypergeom":
            a = self.param
            return (special.gammaln(a + r) - special.gammaln(r + 1)
                    + special.gammaln(a + s) - special.gammaln(s + 1))
        if self.kind == "hypergeom":
            n = self.param
            ok = (r <= n) & (s <= n)
            rr, ss = np.where(ok, r, 0), np.where(ok, s, 0)
            lw = (-special.gammaln(rr + 1) - special.gammaln(n - rr + 1)
                  - special.gammaln(ss + 1) - special.gammaln(n - ss + 1))
            return np.where(ok, lw, -np.inf)
        if self.kind == "binomial":
            return -special.gammaln(r + 1) - special.gammaln(s + 1)
        raise ModelError("continuous kernel has no pmf")

    def pmf(self, E: int) -> np.ndarray:
        """ν(·|E) as an array of length E+1, summing to 1."""
        return _pmf_cached(self, int(E)).copy()

    def cdf_table(self, E_max: int) -> np.ndarray:
        """Row E holds the cumulative sums of ν(·|E); padded with 1."""
        tab = np.ones((E_max + 1, E_max + 1))
        for E in range(E_max + 1):
            c = np.cumsum(_pmf_cached(self, E))
            c[-1] = 1.0
            tab[E, : E + 1] = c
        return tab

    def mean_fraction(self) -> float:
        return 0.5

    def beta_moment(self, a: int, b: int) -> float:
        """E[x^a (1−x)^b] for x ~ Beta(2k, 2k)."""
        p = self.param
        return float(np.exp(special.betaln(p + a, p + b) - special.betaln(p, p)))

    def sample_fraction(self, rng, size=None):
        return rng.beta(self.param, self.param, size=size)


@lru_cache(maxsize=4096)
def _pmf_cached(kernel: RedistributionKernel, E: int) -> np.ndarray:
    lw = kernel.logweights(E)
    w = np.exp(lw - np.max(lw))
    w /= w.sum()
    w.setflags(write=False)
    return w


def kernel_for(spec: ModelSpec) -> RedistributionKernel:
    """The bond kernel of a thermalized spec (KMP uses Beta(1, 1))."""
    fam = spec.family
    if fam == Family.ThSIP:
        return RedistributionKernel("neghypergeom", spec.shape)
    if fam == Family.ThSEP:
        return RedistributionKernel("hypergeom", float(spec.two_j))
    if fam == Family.ThIRW:
        return RedistributionKernel("binomial")
    if fam == Family.ThBEP:
        return RedistributionKernel("beta", spec.shape)
    if fam == Family.KMP:
        return RedistributionKernel("beta", 1.0)
    raise ModelError(f"{fam.value} has no redistribution kernel")
