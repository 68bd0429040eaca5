"""Explicit rate matrices on truncated state spaces and exact stationary solves.

States are enumerated lexicographically in η (η_1 most significant).  For
SIP and IRW the per-site occupation is capped at ``M``; transitions leaving
the box are dropped and the rate that was dropped is recorded per state
(``clipped_rate``).  SEP spaces need no cap.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kernels import kernel_for
from .models import Family, ModelError, ModelSpec, reservoir_laws

DEFAULT_BUDGET = 5_000_000
RESAMPLE_TAIL = 1e-17


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# transitions


def _occupancy_factor(spec: ModelSpec, eta_dest):
    """Second factor of a hop/birth rate: 2k+η (SIP), 2j−η (SEP), 1 (IRW)."""
    base = spec.family.base
    if base == Family.SIP:
        return spec.shape + eta_dest
    if base == Family.SEP:
        return spec.two_j - eta_dest
    return np.ones_like(eta_dest, dtype=float)


def _resample_support(law, tail=RESAMPLE_TAIL):
    cap = law.n if hasattr(law, "n") else law.support_cap(tail)
    return law.truncated_pmf(cap)


def _channels(spec: ModelSpec, states: np.ndarray):
    """Yield ``(rows, targets, rates)`` blocks for every transition out of ``states``.

    ``rows`` indexes into ``states``.  Thermalized families include the
    outcome that leaves the pair unchanged (it carries a rate but no move).
    """
    L = spec.L
    st = np.asarray(states, dtype=np.int64)
    n = st.shape[0]
    rows_all = np.arange(n)

    def emit(rates, targets, rows=rows_all):
        rates = np.asarray(rates, dtype=float)
        keep = rates > 0
        if np.any(keep):
            yield rows[keep], targets[keep], rates[keep]

    if spec.family.is_thermalized:
        kern = kernel_for(spec)
        for b in range(L - 1):
            E = st[:, b] + st[:, b + 1]
            Emax = int(E.max()) if n else 0
            table = np.zeros((Emax + 1, Emax + 1))
            for e in np.unique(E):
                table[e, : e + 1] = kern.pmf(int(e))
            for r in range(Emax + 1):
                ok = E >= r
                if not np.any(ok):
                    continue
                rows = rows_all[ok]
                tgt = st[ok].copy()
                tgt[:, b] = r
                tgt[:, b + 1] = E[ok] - r
                yield from emit(table[E[ok], r], tgt, rows)
        if spec.reservoirs:
            for site, law in zip((0, L - 1), reservoir_laws(spec)):
                pmf = _resample_support(law)
                for r, w in enumerate(pmf):
                    if w <= 0:
                        continue
                    tgt = st.copy()
                    tgt[:, site] = r
                    yield from emit(np.full(n, w), tgt)
        return

    for b in range(L - 1):
        for src, dst in ((b, b + 1), (b + 1, b)):
            rate = st[:, src] * _occupancy_factor(spec, st[:, dst])
            tgt = st.copy()
            tgt[:, src] -= 1
            tgt[:, dst] += 1
            yield from emit(rate, tgt)
    if spec.reservoirs:
        bnd = spec.boundary
        for site, create, annihilate in ((0, bnd.alpha, bnd.gamma), (L - 1, bnd.delta, bnd.beta)):
            tgt = st.copy()
            tgt[:, site] += 1
            yield from emit(create * _occupancy_factor(spec, st[:, site]), tgt)
            tgt = st.copy()
            tgt[:, site] -= 1
            yield from emit(annihilate * st[:, site], tgt)


def _require_discrete(spec):
    if not spec.family.is_discrete:
        raise ModelError(f"{spec.family.value} is a continuous model; no discrete generator")


def enumerate_transitions(spec: ModelSpec, eta) -> list[tuple[tuple, float]]:
    """All transitions out of ``eta`` with their rates.

    Duplicate targets are merged.  For thermalized models the list includes
    the outcome equal to ``eta`` itself, so the rates sum to the total event
    rate (L − 1 + 2).

    Examples
    --------
    >>> from stochdual.models import make_spec
    >>> s = make_spec("SEP", 2, 1, alpha=1, gamma=1, delta=1, beta=1, reservoirs=False)
    >>> enumerate_transitions(s, (1, 1))
    []
    """
    _require_discrete(spec)
    eta = np.asarray(eta, dtype=np.int64).reshape(1, -1)
    if eta.shape[1] != spec.L:
        raise ModelError("configuration length does not match L")
    out: dict[tuple, float] = {}
    for _, tgt, rate in _channels(spec, eta):
        for t, r in zip(tgt, rate):
            key = tuple(int(v) for v in t)
            out[key] = out.get(key, 0.0) + float(r)
    return sorted(out.items())


def apply_generator(spec: ModelSpec, f, states) -> np.ndarray:
    """[ℒf](η) for every row of ``states``; ``f`` maps an (n, L) array to (n,)."""
    _require_discrete(spec)
    st = np.asarray(states, dtype=np.int64)
    f0 = f(st)
    acc = np.zeros(st.shape[0])
    for rows, tgt, rate in _channels(spec, st):
        acc += np.bincount(rows, weights=rate * (f(tgt) - f0[rows]), minlength=st.shape[0])
    return acc


# ---------------------------------------------------------------------------
# sparse generator


@dataclass
class SparseGenerator:
    """Rate matrix ``Q`` (CSR, rows sum to zero) on an enumerated state space."""

    spec: ModelSpec
    cap: int
    states: np.ndarray
    Q: sp.csr_matrix
    clipped_rate: np.ndarray

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def truncated(self) -> np.ndarray:
        return self.clipped_rate > 0

    def index_of(self, eta) -> int:
        eta = np.asarray(eta, dtype=np.int64)
        if np.any(eta < 0) or np.any(eta > self.cap):
            raise KeyError(tuple(eta))
        return int(eta @ _radix(self.spec.L, self.cap))

    def to_coo_text(self) -> str:
        C = self.Q.tocoo()
        order = np.lexsort((C.col, C.row))
        lines = [f"# states: {self.n_states}"]
        lines += [f"{C.row[i]} {C.col[i]} {C.data[i]:.17g}" for i in order]
        return "\n".join(lines) + "\n"


def _radix(L, M):
    return (M + 1) ** np.arange(L - 1, -1, -1, dtype=np.int64)


def default_cap(spec: ModelSpec) -> int | None:
    if spec.family.base == Family.SEP:
        return spec.two_j
    return None


def build_generator(spec: ModelSpec, cap: int | None = None, *, budget: int = DEFAULT_BUDGET,
                    threads: int = 1) -> SparseGenerator:
    """Assemble the generator on {0..cap}^L.

    Parameters
    ----------
    cap : int, optional
        Per-site cap.  Required for SIP/IRW families; SEP uses 2j.
    budget : int
        Maximum number of states.
    threads : int
        Source states are split into contiguous blocks processed in a
        thread pool; the result does not depend on the number of threads.
    """
    _require_discrete(spec)
    sep_cap = default_cap(spec)
    if sep_cap is not None:
        cap = sep_cap if cap is None else min(cap, sep_cap)
    if cap is None:
        raise ModelError(f"{spec.family.value}: a per-site cap is required")
    cap = int(cap)
    L = spec.L
    n = (cap + 1) ** L
    if n > budget:
        raise ModelError(f"state space of {n} states exceeds budget {budget}")
    states = np.indices((cap + 1,) * L).reshape(L, -1).T.astype(np.int64)
    radix = _radix(L, cap)

    def block(lo_hi):
        lo, hi = lo_hi
        rows_l, cols_l, vals_l = [], [], []
        clipped = np.zeros(hi - lo)
        for rows, tgt, rate in _channels(spec, states[lo:hi]):
            inside = np.all(tgt <= cap, axis=1)
            np.add.at(clipped, rows[~inside], rate[~inside])
            r, t, w = rows[inside] + lo, tgt[inside] @ radix, rate[inside]
            move = r != t
            rows_l.append(r[move]); cols_l.append(t[move]); vals_l.append(w[move])
        cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dt)
        return cat(rows_l, np.int64), cat(cols_l, np.int64), cat(vals_l, float), clipped

    nblocks = max(1, int(threads))
    edges = np.linspace(0, n, nblocks + 1).astype(int)
    parts = list(zip(edges[:-1], edges[1:]))
    if nblocks == 1:
        results = [block(parts[0])]
    else:
        with ThreadPoolExecutor(nblocks) as ex:
            results = list(ex.map(block, parts))
    rows = np.concatenate([r[0] for r in results])
    cols = np.concatenate([r[1] for r in results])
    vals = np.concatenate([r[2] for r in results])
    clipped = np.concatenate([r[3] for r in results])
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    Q = (off + sp.diags(diag)).tocsr()
    return SparseGenerator(spec, cap, states, Q, clipped)


# ---------------------------------------------------------------------------
# stationary solves


def stationary_residual(G: SparseGenerator | sp.spmatrix, pi) -> float:
    Q = G.Q if isinstance(G, SparseGenerator) else G
    return float(np.max(np.abs(Q.T @ pi)))


def stationary_distribution(G: SparseGenerator | sp.spmatrix, method: str = "direct", *,
                            tol: float = 1e-13, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary law π of the (truncated) chain.

    ``method='direct'`` fixes π at one state, solves the remaining balance
    equations by sparse LU with one step of iterative refinement, and
    normalises; when the LU solve fails it falls back to least squares on
    the stacked system [Qᵀ; 1ᵀ].
    ``method='power'`` iterates the uniformized chain and serves as an
    independent oracle.
    """
    Q = (G.Q if isinstance(G, SparseGenerator) else sp.csr_matrix(G)).astype(float)
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)
    if method == "power":
        return _power(Q, tol, max_iter)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    QT = Q.T.tocsc()
    try:
        pi = _pinned_solve(QT, int(np.argmin(-Q.diagonal())))  # π = 1 there
        k = int(np.argmax(pi))
        if pi[k] > 1e3:
            # re-pin at a heavy state so the solve is well scaled
            pi = _pinned_solve(QT, k)
    except (RuntimeError, SolverError):
        B = sp.vstack([Q.T, sp.csr_matrix(np.ones((1, n)))]).tocsr()
        b = np.zeros(n + 1)
        b[-1] = 1.0
        pi = spla.lsqr(B, b, atol=1e-15, btol=1e-15, iter_lim=20 * n)[0]
    return _clean(pi)


def _pinned_solve(QT, k):
    """Balance equations with π_k = 1, solved by sparse LU plus one refinement."""
    n = QT.shape[0]
    keep = np.r_[0:k, k + 1:n]
    A = QT[keep][:, keep].tocsc()
    rhs = -QT[keep][:, [k]].toarray().ravel()
    lu = spla.splu(A)
    x = lu.solve(rhs)
    x = x + lu.solve(rhs - A @ x)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite LU solution")
    pi = np.empty(n)
    pi[keep] = x
    pi[k] = 1.0
    return pi


def _clean(pi):
    if pi.min() < -1e-10 * max(pi.max(), 1e-300):
        raise SolverError("stationary solve produced significantly negative mass (reducible chain?)")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _power(Q, tol, max_iter):
    n = Q.shape[0]
    lam = 1.05 * float(np.max(-Q.diagonal()))
    P = (sp.identity(n, format="csr") + Q / lam).T.tocsr()
    pi = np.full(n, 1.0 / n)
    QT = Q.T.tocsr()
    for _ in range(max_iter):
        for _ in range(64):  # convergence is checked every 64 sweeps
            pi = P @ pi
        pi /= pi.sum()
        if np.max(np.abs(QT @ pi)) < tol:
            return _clean(pi)
    raise SolverError(f"power iteration did not converge in {max_iter} sweeps")


def check_detailed_balance(G: SparseGenerator, pi) -> float:
    """max |Q(η,η′)π(η) − Q(η′,η)π(η′)| over pairs of distinct states."""
    off = G.Q - sp.diags(G.Q.diagonal())
    F = sp.diags(pi) @ off
    return float(np.max(np.abs((F - F.T).data), initial=0.0))


def marginal_means(G: SparseGenerator, pi) -> np.ndarray:
    return pi @ G.states


def second_moments(G: SparseGenerator, pi) -> np.ndarray:
    S = G.states.astype(float)
    return (S * pi[:, None]).T @ S


# ---------------------------------------------------------------------------
# duality identity


@dataclass
class DualityCheck:
    residual: float
    scale: float
    n_pairs: int


def check_duality_identity(spec: ModelSpec, max_dual: int = 2, cap: int = 8) -> DualityCheck:
    """Compare [ℒ D(·,ξ)](η) with [ℒ_dual D(η,·)](ξ) on a box of η.

    The forward side is evaluated from the exact transition list of each η,
    so every η in {0..cap}^L is exact (nothing is clipped); ξ ranges over all
    dual configurations with |ξ| ≤ ``max_dual``.
    """
    from .duality import dual_spec, dual_transitions, duality_eval, dual_configurations

    _require_discrete(spec)
    cap = min(cap, default_cap(spec)) if default_cap(spec) is not None else cap
    L = spec.L
    etas = np.indices((cap + 1,) * L).reshape(L, -1).T.astype(np.int64)
    ds = dual_spec(spec)
    worst, scale, count = 0.0, 0.0, 0
    for n in range(max_dual + 1):
        for xi in dual_configurations(ds, n):
            fwd = apply_generator(spec, lambda e: duality_eval(spec, e, xi), etas)
            base = duality_eval(spec, etas, xi)
            dual = np.zeros(etas.shape[0])
            for xi2, rate in dual_transitions(ds, xi):
                dual += rate * (duality_eval(spec, etas, xi2) - base)
            worst = max(worst, float(np.max(np.abs(fwd - dual))))
            scale = max(scale, float(np.max(np.abs(fwd))))
            count += etas.shape[0]
    return DualityCheck(worst, scale, count)
