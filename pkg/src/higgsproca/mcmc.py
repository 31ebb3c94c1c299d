"""Metropolis samplers for the joint (U, phi) measure and the gauge-fixed measure.

Both chains target ``exp(-E)`` with the energy of :func:`ym_model.energy`:

    E = w/g^2 sum_p (1 - Re U_p) + alpha^2 sum_e (1 - Re phi_x^* U_e phi_y)

(``w = 2`` for SU(2), 1 for U(1)).  In gauge-fixed mode ``phi`` is frozen at
the identity.  A sweep visits every edge in order, then (joint mode) every
site.  A proposal left-multiplies the current value by ``exp(step * n)``
with ``n`` a standard Gaussian Lie-algebra vector; the law of ``n`` is
symmetric so the proposal is reversible w.r.t. Haar measure.

Random numbers: sweep ``s`` reads block ``s // BLOCK`` of a Philox stream whose
key is derived from ``SeedSequence(seed, spawn_key=(chain,))`` and whose
counter has the block index in its second 64-bit word (the first word
is the one Philox increments while drawing).  Within a block the draws
are, in order, edge normals ``(BLOCK, E, 3)``, edge uniforms ``(BLOCK, E)``, site normals and
site uniforms.  The trajectory therefore depends only on (seed, chain) and
not on how a run is split into calls or checkpoints.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import group_geometry as gg
from . import ym_model as ym
from .errors import IntegrityError, InvalidParameterError
from .stats import diagnostics  # noqa: F401  (re-exported)

BLOCK = 64


def accept_probability(delta_H: float) -> float:
    """``min(1, exp(-delta_H))``."""
    if delta_H != delta_H:
        raise InvalidParameterError("energy difference is NaN")
    if delta_H <= 0:
        return 1.0
    return math.exp(-delta_H)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _qmul(a0, a1, a2, a3, b0, b1, b2, b3):
    return (a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0)


@njit(cache=True, inline="always")
def _one_minus_re(q0, q1, q2, q3):
    if q0 > 0.0:
        return (q1 * q1 + q2 * q2 + q3 * q3) / (1.0 + q0)
    return 1.0 - q0


@njit(cache=True)
def _plaq_defect(U, pl):
    e1, e2, e3, e4 = pl[0], pl[1], pl[2], pl[3]
    a = _qmul(U[e1, 0], U[e1, 1], U[e1, 2], U[e1, 3], U[e2, 0], U[e2, 1], U[e2, 2], U[e2, 3])
    a = _qmul(a[0], a[1], a[2], a[3], U[e3, 0], -U[e3, 1], -U[e3, 2], -U[e3, 3])
    a = _qmul(a[0], a[1], a[2], a[3], U[e4, 0], -U[e4, 1], -U[e4, 2], -U[e4, 3])
    return _one_minus_re(a[0], a[1], a[2], a[3])


@njit(cache=True)
def _link_defect(U, phi, e, tail, head):
    x = tail[e]
    y = head[e]
    a = _qmul(phi[x, 0], -phi[x, 1], -phi[x, 2], -phi[x, 3], U[e, 0], U[e, 1], U[e, 2], U[e, 3])
    a = _qmul(a[0], a[1], a[2], a[3], phi[y, 0], phi[y, 1], phi[y, 2], phi[y, 3])
    return _one_minus_re(a[0], a[1], a[2], a[3])


@njit(cache=True)
def _rotation(n0, n1, n2, step):
    v0, v1, v2 = step * n0, step * n1, step * n2
    r = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    s = math.sin(r) / r if r > 0 else 1.0
    return math.cos(r), s * v0, s * v1, s * v2


@njit(cache=True)
def _normalize_row(A, i):
    n = math.sqrt(A[i, 0] ** 2 + A[i, 1] ** 2 + A[i, 2] ** 2 + A[i, 3] ** 2)
    for k in range(4):
        A[i, k] /= n


@njit(cache=True)
def _sweep_kernel(U, phi, joint, noise_e, unif_e, noise_v, unif_v, step_e, step_v,
                  tail, head, plaqs, pptr, pidx, vptr, vidx, cp, a2):
    """One sweep in place.  Returns (energy change, edge accepts, site accepts)."""
    n_e = U.shape[0]
    dE_total = 0.0
    acc_e = 0
    acc_v = 0
    old = np.empty(4)
    for e in range(n_e):
        r = _rotation(noise_e[e, 0], noise_e[e, 1], noise_e[e, 2], step_e)
        for k in range(4):
            old[k] = U[e, k]
        before = 0.0
        for j in range(pptr[e], pptr[e + 1]):
            before += _plaq_defect(U, plaqs[pidx[j]])
        lb = _link_defect(U, phi, e, tail, head)
        nq = _qmul(r[0], r[1], r[2], r[3], old[0], old[1], old[2], old[3])
        U[e, 0], U[e, 1], U[e, 2], U[e, 3] = nq
        _normalize_row(U, e)
        after = 0.0
        for j in range(pptr[e], pptr[e + 1]):
            after += _plaq_defect(U, plaqs[pidx[j]])
        la = _link_defect(U, phi, e, tail, head)
        dE = cp * (after - before) + a2 * (la - lb)
        if dE <= 0.0 or unif_e[e] < math.exp(-dE):
            dE_total += dE
            acc_e += 1
        else:
            for k in range(4):
                U[e, k] = old[k]
    if joint:
        n_v = phi.shape[0]
        for x in range(n_v):
            r = _rotation(noise_v[x, 0], noise_v[x, 1], noise_v[x, 2], step_v)
            for k in range(4):
                old[k] = phi[x, k]
            before = 0.0
            for j in range(vptr[x], vptr[x + 1]):
                before += _link_defect(U, phi, vidx[j], tail, head)
            nq = _qmul(r[0], r[1], r[2], r[3], old[0], old[1], old[2], old[3])
            phi[x, 0], phi[x, 1], phi[x, 2], phi[x, 3] = nq
            _normalize_row(phi, x)
            after = 0.0
            for j in range(vptr[x], vptr[x + 1]):
                after += _link_defect(U, phi, vidx[j], tail, head)
            dE = a2 * (after - before)
            if dE <= 0.0 or unif_v[x] < math.exp(-dE):
                dE_total += dE
                acc_v += 1
            else:
                for k in range(4):
                    phi[x, k] = old[k]
    return dE_total, acc_e, acc_v


@njit(cache=True)
def _discrete_toy_kernel(energy, steps, jumps, unif, start):
    n = energy.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    k = start
    for t in range(steps):
        k2 = (k + jumps[t]) % n
        dH = energy[k2] - energy[k]
        if dH <= 0.0 or unif[t] < math.exp(-dH):
            k = k2
        counts[k] += 1
    return counts


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------

@dataclass
class SamplerConfig:
    """Sweeps, step sizes and seeding of one chain.

    ``step`` is the scale of the Gaussian rotation angle for links,
    ``higgs_step`` the same for Higgs rotations (defaults to ``step``).
    Step sizes are tuned toward ``target_accept`` during burn-in only.
    """

    sweeps: int
    burn_in: int = 0
    step: float = 0.5
    higgs_step: float | None = None
    thin: int = 1
    seed: int = 0
    chain: int = 0
    tune: bool = True
    target_accept: float = 0.45
    accept_window: tuple = (0.3, 0.6)
    tune_every: int = 25
    drift_every: int = 1000
    drift_tol: float = 1e-6
    checkpoint_every: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidParameterError("step size must be positive")
        if self.higgs_step is None:
            self.higgs_step = self.step
        if not self.higgs_step > 0:
            raise InvalidParameterError("Higgs step size must be positive")
        if self.sweeps < 1 or self.thin < 1:
            raise InvalidParameterError("sweeps and thin must be positive")
        if not 0 <= self.burn_in < self.sweeps:
            raise InvalidParameterError("need 0 <= burn_in < sweeps")
        if not 0 <= self.seed < 2**64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")


@dataclass
class ChainState:
    """Configuration, cached energy, sweep counter and the stream position.

    ``phi`` is ``None`` for the gauge-fixed chain.  The random stream is
    counter based, so ``(seed, chain, sweep)`` is the complete RNG state.
    """

    U: np.ndarray
    phi: np.ndarray | None
    energy: float
    sweep: int
    seed: int
    chain: int
    step: float
    higgs_step: float
    accepted_edges: int = 0
    accepted_sites: int = 0
    proposed_edges: int = 0
    proposed_sites: int = 0
    _block: tuple = field(default=(-1, None), repr=False)

    @property
    def joint(self) -> bool:
        return self.phi is not None

    def copy(self) -> "ChainState":
        return ChainState(self.U.copy(), None if self.phi is None else self.phi.copy(), self.energy,
                          self.sweep, self.seed, self.chain, self.step, self.higgs_step,
                          self.accepted_edges, self.accepted_sites, self.proposed_edges,
                          self.proposed_sites)

    def reset_counters(self):
        self.accepted_edges = self.accepted_sites = 0
        self.proposed_edges = self.proposed_sites = 0


def stream_key(seed: int, chain: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed), spawn_key=(int(chain),)).generate_state(2, np.uint64)


def _block_draws(state: ChainState, n_e: int, n_v: int, group: str, block: int):
    bits = np.random.Philox(key=stream_key(state.seed, state.chain), counter=[0, block, 0, 0])
    rng = np.random.Generator(bits)
    k = 3 if group == "su2" else 1
    ne = rng.standard_normal((BLOCK, n_e, k))
    ue = rng.random((BLOCK, n_e))
    nv = rng.standard_normal((BLOCK, n_v, k))
    uv = rng.random((BLOCK, n_v))
    if k == 1:
        pad = lambda a: np.concatenate([a, np.zeros(a.shape[:-1] + (2,))], axis=-1)  # noqa: E731
        ne, nv = pad(ne), pad(nv)
    return ne, ue, nv, uv


def _site_links(lat):
    """CSR list of the edges touching each site."""
    ends = np.concatenate([lat.edge_tail, lat.edge_head])
    eids = np.concatenate([np.arange(lat.n_edges), np.arange(lat.n_edges)])
    order = np.argsort(ends, kind="stable")
    ptr = np.zeros(lat.n_vertices + 1, dtype=np.int64)
    np.add.at(ptr, ends + 1, 1)
    return np.cumsum(ptr), eids[order].astype(np.int64)


class _Geometry:
    def __init__(self, lat):
        self.tail = lat.edge_tail.astype(np.int64)
        self.head = lat.edge_head.astype(np.int64)
        self.plaqs = lat.plaquettes.astype(np.int64)
        self.pptr = lat.edge_plaq_ptr.astype(np.int64)
        self.pidx = lat.edge_plaq_idx.astype(np.int64)
        self.vptr, self.vidx = _site_links(lat)
        self.identity_phi = np.tile(gg.IDENTITY, (lat.n_vertices, 1))


_GEOM_CACHE: dict = {}


def _geometry(lat) -> _Geometry:
    g = _GEOM_CACHE.get(id(lat))
    if g is None or g[0] is not lat:
        g = (lat, _Geometry(lat))
        _GEOM_CACHE[id(lat)] = g
    return g[1]


def init_state(params: ym.ModelParams, cfg: SamplerConfig, joint: bool = False,
               start: str = "cold") -> ChainState:
    """Cold (identity) or hot (Haar-random) start."""
    lat = params.lattice
    if start == "cold":
        U = np.tile(gg.IDENTITY, (lat.n_edges, 1))
        phi = np.tile(gg.IDENTITY, (lat.n_vertices, 1)) if joint else None
    elif start == "hot":
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(cfg.chain, 1)))
        U = gg.haar_random(rng, lat.n_edges, params.group)
        phi = gg.haar_random(rng, lat.n_vertices, params.group) if joint else None
    else:
        raise InvalidParameterError(f"unknown start {start!r}")
    return ChainState(U, phi, ym.energy(U, phi, params), 0, cfg.seed, cfg.chain,
                      cfg.step, cfg.higgs_step)


def metropolis_sweep(state: ChainState, params: ym.ModelParams, cfg: SamplerConfig | None = None) -> ChainState:
    """One full Metropolis pass (edges, then sites in joint mode), in place."""
    lat = params.lattice
    geo = _geometry(lat)
    block, off = divmod(state.sweep, BLOCK)
    if state._block[0] != block:
        state._block = (block, _block_draws(state, lat.n_edges, lat.n_vertices, params.group, block))
    ne, ue, nv, uv = state._block[1]
    phi = state.phi if state.joint else geo.identity_phi
    dE, ae, av = _sweep_kernel(state.U, phi, state.joint, ne[off], ue[off], nv[off], uv[off],
                               state.step, state.higgs_step, geo.tail, geo.head, geo.plaqs,
                               geo.pptr, geo.pidx, geo.vptr, geo.vidx,
                               ym.plaquette_weight(params.group) / params.g**2, params.alpha**2)
    state.energy += dE
    state.sweep += 1
    state.accepted_edges += ae
    state.proposed_edges += lat.n_edges
    if state.joint:
        state.accepted_sites += av
        state.proposed_sites += lat.n_vertices
    if cfg is not None and cfg.drift_every and state.sweep % cfg.drift_every == 0:
        check_energy(state, params, cfg.drift_tol)
    return state


def check_energy(state: ChainState, params: ym.ModelParams, tol: float = 1e-6) -> float:
    """Compare the cached energy with a recomputation and resynchronize."""
    fresh = ym.energy(state.U, state.phi, params)
    drift = abs(fresh - state.energy)
    if drift > tol * max(1.0, abs(fresh)):
        raise IntegrityError(f"energy drift {drift:.3e} at sweep {state.sweep}")
    state.energy = fresh
    return drift


def _tune(state: ChainState, cfg: SamplerConfig):
    if state.proposed_edges:
        rate = state.accepted_edges / state.proposed_edges
        state.step *= math.exp(rate - cfg.target_accept)
        state.step = min(state.step, math.pi)
    if state.joint and state.proposed_sites:
        rate = state.accepted_sites / state.proposed_sites
        state.higgs_step *= math.exp(rate - cfg.target_accept)
        state.higgs_step = min(state.higgs_step, math.pi)
    state.reset_counters()


@dataclass
class ChainResult:
    state: ChainState
    series: dict
    accept_edges: float
    accept_sites: float | None
    step: float
    higgs_step: float
    wall_clock: float


def run_chain(state: ChainState, params: ym.ModelParams, cfg: SamplerConfig,
              observe=None, on_checkpoint=None) -> ChainResult:
    """Run ``cfg.sweeps - state.sweep`` sweeps; tune during burn-in; record after it.

    ``observe(state) -> dict[str, float | array]`` is called every ``thin``
    sweeps after burn-in; its outputs are stacked into ``series``.
    """
    t0 = time.perf_counter()
    rec: dict = {}
    burned = state.sweep >= cfg.burn_in
    while state.sweep < cfg.sweeps:
        metropolis_sweep(state, params, cfg)
        if state.sweep <= cfg.burn_in:
            if cfg.tune and state.sweep % cfg.tune_every == 0:
                _tune(state, cfg)
            if state.sweep == cfg.burn_in:
                state.reset_counters()
                burned = True
            continue
        if observe is not None and (state.sweep - cfg.burn_in) % cfg.thin == 0:
            for k, v in observe(state).items():
                rec.setdefault(k, []).append(v)
        if on_checkpoint is not None and cfg.checkpoint_every and state.sweep % cfg.checkpoint_every == 0:
            on_checkpoint(state)
    if not burned:
        state.reset_counters()
    series = {k: np.asarray(v) for k, v in rec.items()}
    acc_e = state.accepted_edges / state.proposed_edges if state.proposed_edges else float("nan")
    acc_v = (state.accepted_sites / state.proposed_sites) if state.proposed_sites else None
    return ChainResult(state, series, acc_e, acc_v, state.step, state.higgs_step,
                       time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def gauge_fixed_links(state: ChainState, params: ym.ModelParams) -> np.ndarray:
    """The links in unitary gauge (a copy in gauge-fixed mode)."""
    if state.joint:
        return gg.gauge_fix(state.U, state.phi, params.lattice, params.group)
    return state.U.copy()


def mean_retr_observables(state: ChainState, params: ym.ModelParams) -> dict:
    """Averages of ``Re chi(V_p)`` and ``Re chi(V_e)`` in unitary gauge."""
    V = gauge_fixed_links(state, params)
    w = ym.plaquette_weight(params.group)
    hp = ym.holonomies(V, params.lattice)
    return {"retr_plaq": w * float(np.mean(hp[:, 0])), "retr_link": w * float(np.mean(V[:, 0]))}


# ---------------------------------------------------------------------------
# discrete toy chain
# ---------------------------------------------------------------------------

def toy_energy(n_states: int, beta: float) -> np.ndarray:
    """Single-edge U(1) energy ``beta |1 - e^{i theta}|^2 / 2`` on a grid of angles."""
    theta = 2 * np.pi * np.arange(n_states) / n_states
    return beta * (1.0 - np.cos(theta))


def exact_toy_distribution(n_states: int = 64, beta: float = 1.0) -> np.ndarray:
    h = toy_energy(n_states, beta)
    w = np.exp(-(h - h.min()))
    return w / w.sum()


def discrete_toy_chain(n_states: int = 64, beta: float = 1.0, steps: int = 1_000_000,
                       seed: int = 0, start: int = 0) -> np.ndarray:
    """Empirical law of a Metropolis chain on ``n_states`` angles.

    Proposals shift the state by a uniform nonzero amount modulo
    ``n_states``, which is symmetric.
    """
    rng = np.random.Generator(np.random.Philox(key=stream_key(seed, 0)))
    jumps = rng.integers(1, n_states, size=steps)
    unif = rng.random(steps)
    counts = _discrete_toy_kernel(toy_energy(n_states, beta), steps, jumps, unif, start)
    return counts / steps


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))
