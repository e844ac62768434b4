"""Trajectory sampling of the full heralded protocol.

Each trajectory carries one pure state through the actual event
sequence: elementary attempts on a discrete clock, pairwise races with
lazy memory decay, heralded merges sampled from the exact outcome
distribution, regeneration on failure, optional age filtering, and a
Russian-roulette guard against unbounded runs. Decay is applied only
when a memory is next touched, over the wall time it sat idle, by
sampling the per-mode loss Kraus branches.

The estimator averages weighted pure-state projectors, so it converges
to the same density operator the other engines compute; the per-merge
communication delay convention (2 span / v_c + pulse, survivors decay
over it) matches the Laplace recursion event for event.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import __version__
from .analysis import ghz_state
from .channels import ImperfectionSet, _pattern_kernel_cached
from .elementary import ElementaryResult, generate_elementary
from .fock import DensityOperator, ModeSpace, PureState
from .network import CANONICAL_ORIENTATION, NetworkSpec

__all__ = [
    "TrajectoryConfig",
    "SegmentSample",
    "TrajectoryResult",
    "McEstimate",
    "sample_elementary",
    "run_trajectory",
    "estimate",
]


@dataclass(frozen=True)
class TrajectoryConfig:
    """Sampling controls for the trajectory engine.

    ``filter_window_s`` of None defers to the imperfection set's
    window; the roulette threshold is wall time inside the simulated
    protocol, not host time.
    """

    seed: int = 0
    n_trajectories: int = 1000
    roulette_threshold_s: float = math.inf
    roulette_survival: float = 0.5
    filter_window_s: float | None = None

    def __post_init__(self) -> None:
        if self.n_trajectories < 1:
            raise ValueError("need at least one trajectory")
        if not 0.0 < self.roulette_survival <= 1.0:
            raise ValueError("roulette survival must be in (0, 1]")
        if self.roulette_threshold_s <= 0:
            raise ValueError("roulette threshold must be positive")


@dataclass(frozen=True)
class SegmentSample:
    """One sampled elementary segment: eigenstate and completion age."""

    state: PureState
    birth_age: float
    level: int = 0


@dataclass(frozen=True)
class TrajectoryResult:
    """Outcome of one trajectory; ``state`` is None when roulette fired."""

    state: PureState | None
    time: float | None
    weight: float
    killed: bool = False


class _Killed(Exception):
    pass


@lru_cache(maxsize=None)
def _branch_vectors(
    d0: int, pattern: tuple[int, int], f: float, d: float, v: float
) -> np.ndarray:
    """Pure-state branch vectors of one detection pattern.

    The pattern kernel K[b,c,d,e], read as a matrix over the two merged
    modes, is positive semidefinite; its scaled eigenvectors contract
    directly with a ket's merged axes to give the unnormalized branch
    amplitudes, one row per Kraus branch.
    """
    k = _pattern_kernel_cached(d0, pattern, f, d, v)
    e = np.asarray(k).reshape(d0 * d0, d0 * d0)
    w, u = np.linalg.eigh((e + e.conj().T) / 2.0)
    keep = w > 1e-14
    phi = (u[:, keep] * np.sqrt(w[keep])).T
    phi.setflags(write=False)
    return phi


def _loss_coefficients(d0: int, g: float) -> np.ndarray:
    """c[n, j]: amplitude for |n> to drop j photons under loss exp{g D[a]}."""
    s = math.exp(-g)
    c = np.zeros((d0, d0))
    for n in range(d0):
        for j in range(n + 1):
            c[n, j] = math.sqrt(math.comb(n, j) * s ** (n - j) * (1 - s) ** j)
    return c


def _eigenensemble(rho: DensityOperator) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and kets of the eigendecomposition ensemble."""
    w, vecs = np.linalg.eigh(rho.matrix)
    w = np.clip(w.real, 0.0, None)
    total = w.sum()
    if total <= 0:
        raise ValueError("state has no population to sample")
    return w / total, vecs.T.copy()


def sample_elementary(
    elem: ElementaryResult, rng: np.random.Generator, level: int = 0
) -> SegmentSample:
    """Draw one elementary segment: eigenstate plus geometric birth age."""
    probs, kets = _eigenensemble(elem.rho_e)
    k = int(rng.geometric(elem.q1))
    idx = int(np.searchsorted(np.cumsum(probs), rng.random()))
    idx = min(idx, len(probs) - 1)
    ket = kets[idx]
    state = PureState(elem.rho_e.space, ket / np.linalg.norm(ket))
    return SegmentSample(state, k * elem.attempt_duration, level)


class _Obj:
    """A live register in one trajectory: flat ket, mode count, ready time."""

    __slots__ = ("ket", "modes", "t")

    def __init__(self, ket: np.ndarray, modes: int, t: float):
        self.ket = ket
        self.modes = modes
        self.t = t


class _Run:
    """Per-trajectory context: parameters, caches, clock, and weight."""

    def __init__(
        self,
        spec: NetworkSpec,
        cfg: TrajectoryConfig,
        elem: ElementaryResult,
        rng: np.random.Generator,
        n_max: int,
    ):
        imp = spec.imp
        self.spec = spec
        self.rng = rng
        self.d0 = n_max + 1
        self.q1 = elem.q1
        self.dt0 = elem.attempt_duration
        self.eprobs, self.ekets = _eigenensemble(elem.rho_e)
        self.ecum = np.cumsum(self.eprobs)
        self.T_coh = imp.T_coh
        self.v_c = imp.v_c
        self.pulse = imp.pulse
        self.f, self.dd, self.v = imp.f, imp.d, imp.v
        tau = cfg.filter_window_s
        self.tau_f = imp.filter_window if tau is None else tau
        self.ori = spec.orientation or CANONICAL_ORIENTATION
        self.parity = np.array([(-1.0) ** n for n in range(self.d0)])
        self.ghz_ket = ghz_state(n_max).amplitudes.ravel()
        self.weight = 1.0
        self.rr_step = cfg.roulette_threshold_s
        self.rr_surv = cfg.roulette_survival
        self.next_rr = self.rr_step

    # -- clock ----------------------------------------------------------

    def check(self, t: float) -> None:
        while t >= self.next_rr:
            if self.rng.random() >= self.rr_surv:
                raise _Killed
            self.weight /= self.rr_surv
            self.next_rr += self.rr_step

    def delay(self, span_km: float) -> float:
        return 2.0 * span_km / self.v_c + self.pulse

    # -- state transformations -------------------------------------------

    def decay(self, ket: np.ndarray, modes: int, dt: float) -> np.ndarray:
        if dt <= 0.0 or math.isinf(self.T_coh):
            return ket
        d0 = self.d0
        c = _loss_coefficients(d0, dt / self.T_coh)
        c2 = c * c
        t = ket.reshape((d0,) * modes)
        for m in range(modes):
            v = np.moveaxis(t, m, 0).reshape(d0, -1)
            wn = np.einsum("nr,nr->n", v, v.conj()).real
            pj = c2.T @ wn
            j = int(np.searchsorted(np.cumsum(pj), self.rng.random() * pj.sum()))
            j = min(j, d0 - 1)
            out = np.zeros_like(v)
            out[: d0 - j] = c[j:, j, None] * v[j:]
            out /= np.linalg.norm(out)
            t = np.moveaxis(out.reshape((d0,) + t.shape[:m] + t.shape[m + 1:]), 0, m)
        return t.ravel()

    def permute(self, obj: _Obj, perm: tuple[int, ...]) -> _Obj:
        if perm == (0, 1, 2):
            return obj
        d0 = self.d0
        ket = obj.ket.reshape((d0,) * obj.modes).transpose(perm).ravel()
        return _Obj(ket, obj.modes, obj.t)

    def sample_merge(self, ket: np.ndarray, modes: int, pair: tuple[int, int]):
        """Sample the heralded merge outcome; None means failure.

        Success branches are the two single-click patterns; the (0, 1)
        branch gets the parity frame fix on the first surviving mode.
        """
        d0 = self.d0
        i, j = pair
        rest = [ax for ax in range(modes) if ax not in (i, j)]
        t = ket.reshape((d0,) * modes).transpose([i, j] + rest)
        t = t.reshape(d0 * d0, -1)
        u = self.rng.random()
        acc = 0.0
        for pattern, flip in (((1, 0), False), ((0, 1), True)):
            phi = _branch_vectors(d0, pattern, self.f, self.dd, self.v)
            if phi.shape[0] == 0:
                continue
            amps = phi @ t
            pr = np.einsum("kr,kr->k", amps, amps.conj()).real
            cum = acc + np.cumsum(pr)
            if u < cum[-1]:
                k = int(np.searchsorted(cum, u))
                vec = amps[k]
                if flip:
                    vec = (self.parity[:, None] * vec.reshape(d0, -1)).ravel()
                return vec / np.linalg.norm(vec)
            acc = float(cum[-1])
        return None

    # -- protocol events ---------------------------------------------------

    def elementary(self, start: float) -> _Obj:
        k = int(self.rng.geometric(self.q1))
        t = start + k * self.dt0
        self.check(t)
        idx = int(np.searchsorted(self.ecum, self.rng.random()))
        idx = min(idx, len(self.eprobs) - 1)
        ket = self.ekets[idx]
        modes = 3 if self.spec.scheme == "2D" else 2
        return _Obj(ket, modes, t)

    def race(self, make_a, make_b, a: _Obj, b: _Obj) -> tuple[_Obj, _Obj]:
        """Hold until both sides are alive within the filter window."""
        while True:
            if a.t <= b.t:
                gap = b.t - a.t
                if gap <= self.tau_f:
                    return a, b
                a = make_a(a.t + self.tau_f)
            else:
                gap = a.t - b.t
                if gap <= self.tau_f:
                    return a, b
                b = make_b(b.t + self.tau_f)

    def pair_merge(
        self,
        make_a,
        make_b,
        a: _Obj,
        b: _Obj,
        pair: tuple[int, int],
        span_km: float,
    ) -> _Obj:
        delta = self.delay(span_km)
        while True:
            a, b = self.race(make_a, make_b, a, b)
            t0 = max(a.t, b.t)
            ka = self.decay(a.ket, a.modes, t0 - a.t)
            kb = self.decay(b.ket, b.modes, t0 - b.t)
            joint = np.multiply.outer(ka, kb).ravel()
            modes = a.modes + b.modes
            t1 = t0 + delta
            self.check(t1)
            ket = self.sample_merge(joint, modes, pair)
            if ket is not None:
                return _Obj(self.decay(ket, modes - 2, delta), modes - 2, t1)
            a = make_a(t1)
            b = make_b(t1)

    def oriented(self, base):
        return [
            (lambda t, p=tuple(self.ori[s]): self.permute(base(t), p))
            for s in range(3)
        ]

    def triangle(self, facs, span_km: float, start: float) -> _Obj:
        delta = self.delay(span_km)
        t = start
        while True:
            def make12(tt):
                return self.pair_merge(
                    facs[0], facs[1], facs[0](tt), facs[1](tt), (2, 4), span_km
                )

            obj5 = self.pair_merge(
                make12, facs[2], make12(t), facs[2](t), (3, 5), span_km
            )
            t1 = obj5.t + delta
            self.check(t1)
            ket = self.sample_merge(obj5.ket, 5, (4, 1))
            if ket is not None:
                return _Obj(self.decay(ket, 3, delta), 3, t1)
            t = t1

    def child2d(self, level: int, start: float) -> _Obj:
        if level == 0:
            return self.elementary(start)
        facs = self.oriented(lambda t: self.child2d(level - 1, t))
        return self.triangle(facs, 2**level * self.spec.L0, start)

    def link(self, level: int, start: float) -> _Obj:
        if level == 0:
            return self.elementary(start)
        make = lambda t: self.link(level - 1, t)
        span = 2**level * (2 * self.spec.L0)
        return self.pair_merge(make, make, make(start), make(start), (1, 2), span)

    def corner(self, start: float) -> _Obj:
        t = start
        while True:
            lk = self.link(self.spec.n - 1, t)
            joint = np.multiply.outer(self.ghz_ket, lk.ket).ravel()
            t1 = lk.t + self.pulse
            self.check(t1)
            ket = self.sample_merge(joint, 5, (2, 3))
            if ket is not None:
                return _Obj(self.decay(ket, 3, self.pulse), 3, t1)
            t = t1

    def final(self) -> _Obj:
        if self.spec.scheme == "2D":
            return self.child2d(self.spec.n, 0.0)
        facs = self.oriented(self.corner)
        return self.triangle(facs, self.spec.L_total, 0.0)


def run_trajectory(
    spec: NetworkSpec,
    cfg: TrajectoryConfig,
    rng: np.random.Generator,
    elem: ElementaryResult | None = None,
    n_max: int = 2,
) -> TrajectoryResult:
    """Simulate one full delivery of the network's target state."""
    if elem is None:
        elem = _default_elem(spec, n_max)
    run = _Run(spec, cfg, elem, rng, n_max)
    try:
        obj = run.final()
    except _Killed:
        return TrajectoryResult(None, None, 0.0, killed=True)
    space = ModeSpace(obj.modes, n_max)
    return TrajectoryResult(PureState(space, obj.ket), obj.t, run.weight)


def _default_elem(spec: NetworkSpec, n_max: int) -> ElementaryResult:
    if spec.scheme == "2D":
        return generate_elementary("2D", spec.imp, spec.L0, n_max=n_max)
    return generate_elementary("1D", spec.imp, 2 * spec.L0, n_max=n_max)


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, index]))


@dataclass(frozen=True)
class McEstimate:
    """Weighted trajectory averages with componentwise uncertainties."""

    state: DensityOperator | None
    state_stderr: np.ndarray | None
    time_mean: float | None
    time_stderr: float | None
    fidelity: float | None
    fidelity_stderr: float | None
    n_success: int
    n_killed: int
    weight_sum: float
    manifest: dict


def estimate(
    spec: NetworkSpec,
    cfg: TrajectoryConfig,
    n_max: int = 2,
    elem: ElementaryResult | None = None,
    threads: int = 1,
) -> McEstimate:
    """Run the configured number of trajectories and average them.

    Weighted ratio estimators keep the roulette unbiased; reductions
    run in trajectory-index order so the result is identical for any
    thread count. Zero surviving trajectories is reported, not raised.
    """
    if elem is None:
        elem = _default_elem(spec, n_max)
    n = cfg.n_trajectories
    ghz = ghz_state(n_max).amplitudes.ravel()
    dim = (n_max + 1) ** 3
    kets = np.zeros((n, dim), dtype=complex)
    weights = np.zeros(n)
    times = np.zeros(n)
    alive = np.zeros(n, dtype=bool)

    def worker(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            res = run_trajectory(spec, cfg, _stream(cfg.seed, i), elem, n_max)
            if res.killed:
                continue
            alive[i] = True
            weights[i] = res.weight
            times[i] = res.time
            kets[i] = res.state.amplitudes.ravel()

    if threads <= 1:
        worker(0, n)
    else:
        step = -(-n // threads)
        bounds = [(lo, min(lo + step, n)) for lo in range(0, n, step)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: worker(*b), bounds))

    n_success = int(alive.sum())
    manifest = {
        "engine": "mc",
        "seed": cfg.seed,
        "n_trajectories": n,
        "code_version": __version__,
        "scheme": spec.scheme,
        "n": spec.n,
        "L_total_km": spec.L_total,
    }
    if n_success == 0:
        return McEstimate(
            None, None, None, None, None, None, 0, n - n_success, 0.0, manifest
        )
    w = weights[alive]
    k = kets[alive]
    t = times[alive]
    wsum = float(w.sum())
    neff = wsum**2 / float((w**2).sum())
    rho = np.einsum("i,ij,ik->jk", w, k, k.conj()) / wsum
    p2 = np.abs(k) ** 2
    m2 = np.einsum("i,ij,ik->jk", w, p2, p2) / wsum
    var = np.maximum(m2 - np.abs(rho) ** 2, 0.0)
    state_stderr = np.sqrt(var / max(neff - 1.0, 1.0))
    tbar = float(np.dot(w, t) / wsum)
    tvar = float(np.dot(w, (t - tbar) ** 2) / wsum)
    t_stderr = math.sqrt(tvar / max(neff - 1.0, 1.0))
    ov = np.abs(k @ ghz.conj()) ** 2
    obar = float(np.dot(w, ov) / wsum)
    ovar = float(np.dot(w, (ov - obar) ** 2) / wsum)
    o_stderr = math.sqrt(ovar / max(neff - 1.0, 1.0))
    fid = math.sqrt(max(obar, 0.0))
    fid_stderr = o_stderr / (2 * fid) if fid > 0 else o_stderr
    space = ModeSpace(3, n_max)
    return McEstimate(
        DensityOperator(space, rho),
        state_stderr,
        tbar,
        t_stderr,
        fid,
        fid_stderr,
        n_success,
        n - n_success,
        wsum,
        manifest,
    )
