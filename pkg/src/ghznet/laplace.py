"""Laplace-domain recursion for generation time and decayed state.

The static engine answers "what state comes out"; the trajectory engine
answers it by brute force sampling. This module gets both the mean
generation time and the memory-decay-averaged state in one pass by
tracking, for every stage of the protocol, the Laplace image of the
(completion time, output state) pair. Around s = 0 the image is kept as
a jet of alternating-sign derivatives,

    rho~(s) = jets[0] - s * jets[1] + s^2/2! * jets[2] - ...

so that for a normalized image trace(jets[k]) is the k-th raw moment of
the completion time. Waiting periods turn into resolvents of the decay
generator, heralded retries into geometric series, and both collapse to
closed-form jet arithmetic evaluated at s = 0.

Every finished stage feeds the next one as a renewal source. A bare
exponential source reproduces the stage's mean time but overstates its
spread, which inflates the waiting-time tail and with it the decay
suffered by whichever register arrives first. The recursion therefore
re-models each stage as a signed two-phase exponential mixture matched
to the stage's first two time moments (a hypoexponential sum for
under-dispersed stages, a hyperexponential split for over-dispersed
ones, a plain exponential in between). All race and filter integrals
stay closed-form because they are bilinear in the component densities.
The trajectory engine is the reference for the residual error of this
moment closure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .channels import (
    ImperfectionSet,
    _annihilator,
    _apply_kernel,
    _dissipator,
    _loss_kernel,
    merge,
)
from .elementary import ElementaryResult, generate_elementary
from .fock import DensityOperator, ModeSpace, _joined_space, tensor
from .network import (
    CANONICAL_ORIENTATION,
    NetworkSpec,
    _oriented_children,
)
from .analysis import ghz_state

__all__ = [
    "LaplaceDual",
    "DecayGenerator",
    "LevelImage",
    "LaplaceDivergenceError",
    "RateMixture",
    "OperatorMixture",
    "single_image",
    "pair_image",
    "close_geometric",
    "recurse_levels",
]

# retained derivative order of every image; order 3 keeps three raw
# time moments, one more than the mixture fit consumes
_ORDER = 3


class LaplaceDivergenceError(ArithmeticError):
    """A closure has zero success probability: the mean time diverges."""


# ---------------------------------------------------------------------------
# jet arithmetic: a jet is a list of _ORDER + 1 coefficients, scalars or
# arrays, holding (-d/ds)^k f(s) at s = 0; products follow Leibniz


def _jet_mul(a: Sequence, b: Sequence) -> list:
    return [
        sum(math.comb(k, j) * a[j] * b[k - j] for j in range(k + 1))
        for k in range(_ORDER + 1)
    ]


def _jet_quot(n: Sequence, d: Sequence[float]) -> list:
    # solve n = q * d order by order; d is a scalar jet with d[0] != 0
    q: list = []
    for k in range(_ORDER + 1):
        acc = n[k]
        for j in range(k):
            acc = acc - math.comb(k, j) * d[k - j] * q[j]
        q.append(acc / d[0])
    return q


def _rate_jet(total: float) -> list[float]:
    # jet of 1/(s + total)
    return [math.factorial(k) / total ** (k + 1) for k in range(_ORDER + 1)]


def _delay_jet(delta: float) -> list[float]:
    # jet of e^(-s delta)
    return [delta**k for k in range(_ORDER + 1)]


def _window_jet(rate: float, tau: float) -> list[float]:
    # jet of e^(-(s + rate) tau)
    surv = math.exp(-rate * tau)
    return [surv * tau**k for k in range(_ORDER + 1)]


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateMixture:
    """Signed exponential mixture modelling one renewal source.

    The inter-arrival density is sum_i weights[i] * rates[i] *
    exp(-rates[i] t). Weights sum to one but single weights may be
    negative: a hypoexponential sum of two exponentials, the natural
    model for an under-dispersed stage, has exactly that form after
    partial fractions.
    """

    weights: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.rates) or not self.rates:
            raise ValueError("weights and rates must pair up")
        if any(r <= 0 or not math.isfinite(r) for r in self.rates):
            raise ValueError("rate must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to one")

    @classmethod
    def exponential(cls, nu: float) -> "RateMixture":
        return cls((1.0,), (float(nu),))

    @classmethod
    def from_moments(cls, m1: float, m2: float) -> "RateMixture":
        """Two-phase fit to the first two raw moments.

        cv^2 below 1/2 is not reachable with two phases; such a source
        is clamped to the nearly-degenerate edge of the hypoexponential
        family, which keeps the mean exact and understates the variance
        by the clamped amount.
        """
        if m1 <= 0 or not math.isfinite(m1):
            raise ValueError("mean must be positive and finite")
        cv2 = m2 / (m1 * m1) - 1.0
        if abs(cv2 - 1.0) < 1e-7:
            return cls.exponential(1.0 / m1)
        if cv2 > 1.0:
            # balanced-load hyperexponential
            r = math.sqrt((cv2 - 1.0) / (cv2 + 1.0))
            p1 = 0.5 * (1.0 + r)
            p2 = 0.5 * (1.0 - r)
            return cls((p1, p2), (2.0 * p1 / m1, 2.0 * p2 / m1))
        cv2 = max(cv2, 0.5 + 1e-4)
        root = m1 * math.sqrt(2.0 * cv2 - 1.0)
        u = 0.5 * (m1 + root)
        w = 0.5 * (m1 - root)
        alpha, beta = 1.0 / u, 1.0 / w
        return cls(
            (beta / (beta - alpha), -alpha / (beta - alpha)), (alpha, beta)
        )

    def moment(self, k: int) -> float:
        return math.factorial(k) * sum(
            w / r**k for w, r in zip(self.weights, self.rates)
        )

    @property
    def mean(self) -> float:
        return self.moment(1)


def _as_mixture(source) -> RateMixture:
    if isinstance(source, RateMixture):
        return source
    return RateMixture.exponential(source)


@dataclass(frozen=True, eq=False)
class OperatorMixture:
    """Renewal source whose delivered state depends on the firing time.

    Each component pairs an exponential rate with the normalized state
    handed over when that component fires. Matching the zeroth and
    first operator moments of a completion image keeps not just the
    average delivered state but the covariance between completion time
    and state quality; a shared-state :class:`RateMixture` discards
    that covariance, which overweights decay downstream because slow
    completions arrive both more decayed and with less left to wait.
    """

    weights: tuple[float, ...]
    rates: tuple[float, ...]
    states: tuple[DensityOperator, ...]

    def __post_init__(self):
        if len(self.states) != len(self.weights):
            raise ValueError("one delivered state per component")
        RateMixture(self.weights, self.rates)  # reuse the scalar checks

    @property
    def scalar(self) -> RateMixture:
        return RateMixture(self.weights, self.rates)

    def moment(self, k: int) -> float:
        return self.scalar.moment(k)

    @property
    def mean(self) -> float:
        return self.scalar.moment(1)

    def map_states(self, fn) -> "OperatorMixture":
        """Same mixture with ``fn`` applied to every component state."""
        return OperatorMixture(
            self.weights, self.rates, tuple(fn(s) for s in self.states)
        )

    @classmethod
    def from_dual(cls, dual: "LaplaceDual") -> "OperatorMixture":
        """Two-moment refit that keeps the time-state covariance.

        The scalar part matches the first two completion-time moments.
        The component states then solve sum_i A_i = J0 and
        sum_i A_i / nu_i = J1 for the weighted numerators A_i, where J0
        and J1 are the normalized operator jets, so the refit source
        reproduces both exactly. Degenerate fits (equal rates or a
        vanishing weight) fall back to the shared average state.
        """
        base = RateMixture.from_moments(dual.moment(1), dual.moment(2))
        tr = dual.trace_value
        j0 = dual.jets[0] / tr
        avg = DensityOperator(dual.space, j0)
        if len(base.rates) == 1:
            return cls(base.weights, base.rates, (avg,))
        n1, n2 = 1.0 / base.rates[0], 1.0 / base.rates[1]
        w1, w2 = base.weights
        if abs(n1 - n2) < 1e-9 * dual.moment(1) or min(
            abs(w1), abs(w2)
        ) < 1e-9:
            return cls(base.weights, base.rates, (avg, avg))
        j1 = dual.jets[1] / tr
        a1 = (j1 - n2 * j0) / (n1 - n2)
        a2 = j0 - a1
        return cls(
            base.weights,
            base.rates,
            (
                DensityOperator(dual.space, a1 / w1),
                DensityOperator(dual.space, a2 / w2),
            ),
        )


def _components(source, rho: DensityOperator) -> list:
    """Flatten a source into (weight, rate, delivered-matrix) triples.

    Plain rates and :class:`RateMixture` sources deliver ``rho`` from
    every component; an :class:`OperatorMixture` brings its own states.
    """
    if isinstance(source, OperatorMixture):
        return [
            (w, r, s.matrix)
            for w, r, s in zip(source.weights, source.rates, source.states)
        ]
    mix = _as_mixture(source)
    return [(w, r, rho.matrix) for w, r in zip(mix.weights, mix.rates)]


@dataclass(frozen=True)
class LaplaceDual:
    """Laplace-image jet of a timed state-valued process.

    ``value0`` is rho~(0), the completion-averaged (sub)normalized
    state; ``deriv0`` is -d rho~/ds at 0, whose trace carries the mean
    completion time when the image is normalized. ``deriv2`` and
    ``deriv3`` continue the alternating-derivative jet and hold the
    higher time moments; hand-built duals may omit them, in which case
    they read as zero.
    """

    space: ModeSpace
    value0: np.ndarray
    deriv0: np.ndarray
    deriv2: np.ndarray | None = None
    deriv3: np.ndarray | None = None

    def __post_init__(self):
        for name in ("deriv2", "deriv3"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros_like(self.value0))

    @property
    def jets(self) -> tuple[np.ndarray, ...]:
        return (self.value0, self.deriv0, self.deriv2, self.deriv3)

    @property
    def trace_value(self) -> float:
        return float(np.trace(self.value0).real)

    @property
    def trace_deriv(self) -> float:
        return float(np.trace(self.deriv0).real)

    @property
    def mean_time(self) -> float:
        return self.trace_deriv / self.trace_value

    def moment(self, k: int) -> float:
        return float(np.trace(self.jets[k]).real) / self.trace_value

    def state(self) -> DensityOperator:
        return DensityOperator(self.space, self.value0).normalized()


@lru_cache(maxsize=None)
def _decay_eigensystem(d0: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spectral factorization of the vectorized single-mode dissipator.

    D[a] restricted to one mode is diagonalizable: every chain
    (n, m) -> (n+1, m+1) climbs strictly in -(n+m)/2, so no Jordan
    blocks appear and eig is safe.
    """
    gen = _dissipator(_annihilator(d0))
    lam, v = np.linalg.eig(gen)
    vinv = np.linalg.inv(v)
    lam.setflags(write=False)
    v.setflags(write=False)
    vinv.setflags(write=False)
    return lam, v, vinv


def _apply_along(mat: np.ndarray, t: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(mat, np.moveaxis(t, axis, 0), axes=(1, 0))
    return np.moveaxis(out, 0, axis)


class DecayGenerator:
    """Sum of single-mode loss dissipators scaled by 1 / T_coh.

    Resolvent powers (x - L)^-k are applied through the per-mode
    eigenbasis of the vectorized dissipator: the joint generator is a
    Kronecker sum, so the product eigenbasis diagonalizes it and a
    resolvent power is one basis change, pointwise divisions, and the
    change back.
    """

    def __init__(self, d0: int, T_coh: float):
        if d0 < 1:
            raise ValueError("d0 must be at least 1")
        if T_coh <= 0:
            raise ValueError("T_coh must be positive (use math.inf)")
        self.d0 = d0
        self.T_coh = float(T_coh)

    @property
    def trivial(self) -> bool:
        return math.isinf(self.T_coh)

    def resolvent_powers(
        self,
        x: float,
        mat: np.ndarray,
        space: ModeSpace,
        modes: Sequence[int],
        kmax: int,
    ) -> list[np.ndarray]:
        """Return [(x - L)^-p mat for p = 1..kmax], L on ``modes``."""
        modes = tuple(modes)
        if self.trivial or not modes:
            return [mat / float(x) ** p for p in range(1, kmax + 1)]
        d0 = self.d0
        M = space.num_modes
        lam, v, vinv = _decay_eigensystem(d0)
        t = mat.reshape((d0,) * (2 * M))
        perm = [ax for m in range(M) for ax in (m, M + m)]
        inv_perm = np.argsort(perm)
        t = t.transpose(perm).reshape((d0 * d0,) * M)
        for ax in modes:
            t = _apply_along(vinv, t, ax)
        denom = np.full((1,) * M, complex(x))
        for ax in modes:
            sh = [1] * M
            sh[ax] = d0 * d0
            denom = denom - lam.reshape(sh) / self.T_coh
        outs = []
        cur = t
        for _ in range(kmax):
            cur = cur / denom
            back = cur
            for ax in modes:
                back = _apply_along(v, back, ax)
            back = back.reshape((d0,) * (2 * M)).transpose(inv_perm)
            outs.append(back.reshape(mat.shape))
        return outs

    def resolvent(
        self,
        x: float,
        mat: np.ndarray,
        space: ModeSpace,
        modes: Sequence[int] = (),
    ) -> np.ndarray:
        """Apply (x - L)^-1 with L acting on ``modes`` only."""
        return self.resolvent_powers(x, mat, space, modes, 1)[0]

    def evolve(
        self,
        dt: float,
        mat: np.ndarray,
        space: ModeSpace,
        modes: Sequence[int] | None = None,
    ) -> np.ndarray:
        """Apply exp(L dt), i.e. idle decay over ``dt``, to ``modes``."""
        if self.trivial or dt == 0.0:
            return mat
        if modes is None:
            modes = range(space.num_modes)
        d0 = self.d0
        M = space.num_modes
        kernel = _loss_kernel(d0, dt / self.T_coh)
        t = mat.reshape((d0,) * (2 * M))
        for m in modes:
            t = _apply_kernel(t, kernel, (m,))
        return t.reshape(mat.shape)


def single_image(source, rho: DensityOperator) -> LaplaceDual:
    """Image of one renewal source firing once, state fresh on arrival.

    No decay applies because nothing waits: the process ends the moment
    the source fires. ``source`` is a rate, a :class:`RateMixture`, or
    an :class:`OperatorMixture` whose component states live on
    ``rho``'s space.
    """
    comps = _components(source, rho)
    jets = [
        sum(w * (math.factorial(k) / r**k) * m for w, r, m in comps)
        for k in range(_ORDER + 1)
    ]
    return LaplaceDual(rho.space, *jets)


def _unfiltered_pair(
    comps1: list,
    comps2: list,
    rho1: DensityOperator,
    rho2: DensityOperator,
    decay: DecayGenerator,
) -> LaplaceDual:
    # every term decays only the waiting side, so the jet algebra runs
    # on the per-side spaces and the joint image is assembled at the
    # end, one kron per component of the fresh side
    comps = (comps1, comps2)
    rhos = (rho1, rho2)
    acc: dict = {}
    for x in (0, 1):
        sp_a = rhos[x].space
        modes_a = tuple(range(sp_a.num_modes))
        for j, (cb, b, _) in enumerate(comps[1 - x]):
            slot = [np.zeros_like(rhos[x].matrix) for _ in range(_ORDER + 1)]
            for ca, a, mat_a in comps[x]:
                rp = decay.resolvent_powers(b, mat_a, sp_a, modes_a, _ORDER + 1)
                h = [b * math.factorial(k) * rp[k] for k in range(_ORDER + 1)]
                g = [a * c for c in _rate_jet(a + b)]
                term = _jet_mul(g, h)
                for k in range(_ORDER + 1):
                    slot[k] += (ca * cb) * term[k]
            acc[(x, j)] = slot
    dim = rho1.space.dim * rho2.space.dim
    jets = [np.zeros((dim, dim), complex) for _ in range(_ORDER + 1)]
    for j, (_, _, mat2) in enumerate(comps2):
        for k in range(_ORDER + 1):
            jets[k] += np.kron(acc[(0, j)][k], mat2)
    for i, (_, _, mat1) in enumerate(comps1):
        for k in range(_ORDER + 1):
            jets[k] += np.kron(mat1, acc[(1, i)][k])
    return LaplaceDual(_joined_space(rho1.space, rho2.space), *jets)


def _filtered_pair(
    comps1: list,
    comps2: list,
    rho1: DensityOperator,
    rho2: DensityOperator,
    decay: DecayGenerator,
    tau: float,
) -> LaplaceDual:
    """Pair image with the waiting side discarded past age ``tau``.

    Between regenerations the pending side is exponential within its
    mixture component, so the race is a finite-state renewal process
    over (pending side, component). Solving the linear system order by
    order in s gives the image jet exactly within the mixture model.
    Decay only ever touches the side that waits, so each operator is
    carried in per-side slots, one per component of the fresh side,
    and the joint image is assembled at the end.
    """
    comps = (comps1, comps2)
    rhos = (rho1, rho2)

    # done-term kernels: gdone[x][i][j] is the small-space image of
    # "side x delivered component i first and waits, the other side's
    # component j lands inside the window"
    gdone: list = []
    for x in (0, 1):
        sp = rhos[x].space
        modes = tuple(range(sp.num_modes))
        per_comp = []
        for _, _, mat in comps[x]:
            evolved = decay.evolve(tau, mat, sp, modes)
            per_rate = []
            for _, r, _ in comps[1 - x]:
                p = decay.resolvent_powers(r, mat, sp, modes, _ORDER + 1)
                q = decay.resolvent_powers(r, evolved, sp, modes, _ORDER + 1)
                pj = [math.factorial(k) * p[k] for k in range(_ORDER + 1)]
                qj = _jet_mul(
                    _window_jet(r, tau),
                    [math.factorial(k) * q[k] for k in range(_ORDER + 1)],
                )
                per_rate.append(
                    [r * (pj[k] - qj[k]) for k in range(_ORDER + 1)]
                )
            per_comp.append(per_rate)
        gdone.append(per_comp)

    # states: one per (pending side x, component index of x); slots:
    # one per (waited side x, landing component of the fresh side)
    states = [(x, i) for x in (0, 1) for i in range(len(comps[x]))]
    index = {st: u for u, st in enumerate(states)}
    S = len(states)
    slots = [(x, j) for x in (0, 1) for j in range(len(comps[1 - x]))]
    sindex = {sl: c for c, sl in enumerate(slots)}
    C = len(slots)

    def slot_jets():
        return [
            [np.zeros_like(rhos[x].matrix) for _ in range(_ORDER + 1)]
            for x, _ in slots
        ]

    tmat = [[[0.0] * (_ORDER + 1) for _ in range(S)] for _ in range(S)]
    vvec = [slot_jets() for _ in range(S)]
    for x, qi in states:
        u = index[(x, qi)]
        q = comps[x][qi][1]
        for j, (wj, bj, _) in enumerate(comps[1 - x]):
            c = _rate_jet(q + bj)
            tx = _jet_mul(c, gdone[x][qi][j])
            ty = _jet_mul(c, gdone[1 - x][j][qi])
            sx = sindex[(x, j)]
            sy = sindex[(1 - x, qi)]
            for k in range(_ORDER + 1):
                vvec[u][sx][k] += wj * q * tx[k]
                vvec[u][sy][k] += wj * bj * ty[k]
            hop = _jet_mul(c, _window_jet(bj, tau))
            stay = _jet_mul(c, _window_jet(q, tau))
            v_hop = index[(1 - x, j)]
            for k in range(_ORDER + 1):
                tmat[u][v_hop][k] += wj * q * hop[k]
                tmat[u][u][k] += wj * bj * stay[k]

    t0 = np.array([[tmat[u][v][0] for v in range(S)] for u in range(S)])
    a0 = np.eye(S) - t0
    if abs(np.linalg.det(a0)) < 1e-12:
        raise LaplaceDivergenceError("filter window rejects every pairing")
    ainv = np.linalg.inv(a0)
    ujets = [[[] for _ in range(C)] for _ in range(S)]
    for k in range(_ORDER + 1):
        for slot in range(C):
            rhs = []
            for u in range(S):
                acc = vvec[u][slot][k]
                for v in range(S):
                    for m in range(1, k + 1):
                        acc = acc + (
                            math.comb(k, m)
                            * tmat[u][v][m]
                            * ujets[v][slot][k - m]
                        )
                rhs.append(acc)
            for u in range(S):
                ujets[u][slot].append(
                    sum(ainv[u, v] * rhs[v] for v in range(S))
                )

    # entry: both sides drawn fresh together
    ent = slot_jets()
    coef = [[0.0] * (_ORDER + 1) for _ in range(S)]
    for i, (vi, ai, _) in enumerate(comps1):
        for j, (wj, bj, _) in enumerate(comps2):
            c = _rate_jet(ai + bj)
            t0j = _jet_mul(c, gdone[0][i][j])
            t1j = _jet_mul(c, gdone[1][j][i])
            s0 = sindex[(0, j)]
            s1 = sindex[(1, i)]
            for k in range(_ORDER + 1):
                ent[s0][k] += vi * wj * ai * t0j[k]
                ent[s1][k] += vi * wj * bj * t1j[k]
            hop = _jet_mul(c, _window_jet(bj, tau))
            stay = _jet_mul(c, _window_jet(ai, tau))
            for k in range(_ORDER + 1):
                coef[index[(1, j)]][k] += vi * wj * ai * hop[k]
                coef[index[(0, i)]][k] += vi * wj * bj * stay[k]
    for u in range(S):
        for slot in range(C):
            for k in range(_ORDER + 1):
                for m in range(k + 1):
                    ent[slot][k] = ent[slot][k] + (
                        math.comb(k, m) * coef[u][m] * ujets[u][slot][k - m]
                    )
    dim = rho1.space.dim * rho2.space.dim
    jets = [np.zeros((dim, dim), complex) for _ in range(_ORDER + 1)]
    for (x, j), cslot in sindex.items():
        fresh = comps[1 - x][j][2]
        for k in range(_ORDER + 1):
            if x == 0:
                jets[k] += np.kron(ent[cslot][k], fresh)
            else:
                jets[k] += np.kron(fresh, ent[cslot][k])
    out = LaplaceDual(_joined_space(rho1.space, rho2.space), *jets)
    if out.trace_value <= 0:
        raise LaplaceDivergenceError("filter window rejects every pairing")
    return out


def pair_image(
    src1,
    rho1: DensityOperator,
    src2,
    rho2: DensityOperator,
    decay: DecayGenerator,
    filter_window: float = math.inf,
) -> LaplaceDual:
    """Image of two independent renewal sources completing together.

    Each side fires once from its source (a rate, a
    :class:`RateMixture`, or an :class:`OperatorMixture`); the earlier
    one idles under ``decay`` (restricted to its own modes) until the
    later one arrives. Both birth orders are summed. A finite
    ``filter_window`` discards the waiting side when its age exceeds
    the window and restarts it, which truncates the waiting kernel and
    renormalizes the image by the renewal series.
    """
    comps1 = _components(src1, rho1)
    comps2 = _components(src2, rho2)
    if filter_window <= 0:
        raise ValueError("filter window must be positive (use math.inf)")
    if not rho1.space.compatible(rho2.space):
        tensor(rho1, rho2)  # raises with the canonical message
    if math.isinf(filter_window):
        return _unfiltered_pair(comps1, comps2, rho1, rho2, decay)
    return _filtered_pair(comps1, comps2, rho1, rho2, decay, filter_window)


def close_geometric(
    prep: LaplaceDual,
    merge_map: Callable[[DensityOperator], tuple[DensityOperator, float]],
    delay_s: float = 0.0,
    decay: DecayGenerator | None = None,
) -> LaplaceDual:
    """Heralded retry loop: repeat ``prep`` until ``merge_map`` succeeds.

    Every attempt pays ``delay_s`` of wall time before the outcome is
    known, over which the surviving register idles under ``decay``. The
    geometric series over failures reduces, in the jet algebra, to one
    quotient; the mean time always comes out as
    (T_prep + delay) / p_success.
    """
    if delay_s < 0:
        raise ValueError("delay must be nonnegative")
    merged = [
        merge_map(DensityOperator(prep.space, j)) for j in prep.jets
    ]
    p = merged[0][1]
    if p <= 0:
        raise LaplaceDivergenceError(
            "merge success probability is zero; generation time diverges"
        )
    out_space = merged[0][0].space
    mats = [m.matrix for m, _ in merged]
    if decay is not None and delay_s > 0:
        mats = [decay.evolve(delay_s, m, out_space) for m in mats]
    n = _jet_mul(_delay_jet(delay_s), mats)
    prep_tr = [float(np.trace(j).real) for j in prep.jets]
    merged_tr = [float(np.trace(m.matrix).real) for m, _ in merged]
    fail = [prep_tr[k] - merged_tr[k] for k in range(_ORDER + 1)]
    f = _jet_mul(_delay_jet(delay_s), fail)
    d = [1.0 - f[0]] + [-f[k] for k in range(1, _ORDER + 1)]
    return LaplaceDual(out_space, *_jet_quot(n, d))


@dataclass(frozen=True)
class LevelImage:
    """Per-level output of the recursion."""

    level: int
    state: DensityOperator
    mean_time: float

    @property
    def rate(self) -> float:
        return 1.0 / self.mean_time


def _comm_delay(span_km: float, imp: ImperfectionSet) -> float:
    return 2.0 * span_km / imp.v_c + imp.pulse


def _refit(dual: LaplaceDual) -> OperatorMixture:
    return OperatorMixture.from_dual(dual)


def _triangle_image(
    children: Sequence[DensityOperator],
    src_child: RateMixture,
    spec: NetworkSpec,
    span_km: float,
    decay: DecayGenerator,
) -> LaplaceDual:
    """Image of one triangle closure fed by three renewal children.

    The first two children pair up and close the first corner; the
    result is re-modeled as a two-phase renewal source from its time
    moments and paired with the third child for the second corner. The
    redundant third merge is chained directly on the second closure's
    image, so a failure there restarts the whole triangle, which is
    what the trajectory engine does as well.
    """
    imp = spec.imp
    delta = _comm_delay(span_km, imp)
    fw = imp.filter_window
    c1, c2, c3 = _oriented_children(list(children), spec.orientation)
    ori = spec.orientation or CANONICAL_ORIENTATION
    if isinstance(src_child, OperatorMixture):
        # component states must take each child's corner role too
        s1, s2, s3 = (
            src_child.map_states(
                lambda st, p=tuple(ori[k]): st.permute_modes(p)
            )
            for k in range(3)
        )
    else:
        s1 = s2 = s3 = src_child

    def merger(pair: tuple[int, int]):
        return lambda rho: merge(rho, pair, imp)

    prep12 = pair_image(s1, c1, s2, c2, decay, fw)
    d12 = close_geometric(prep12, merger((2, 4)), delta, decay)
    prep3 = pair_image(_refit(d12), d12.state(), s3, c3, decay, fw)
    d5 = close_geometric(prep3, merger((3, 5)), delta, decay)
    return close_geometric(d5, merger((4, 1)), delta, decay)


def recurse_levels(
    spec: NetworkSpec,
    n_max: int = 2,
    elem: ElementaryResult | None = None,
) -> list[LevelImage]:
    """Run the diagrammatic recursion over all nesting levels.

    Returns one :class:`LevelImage` per level from the elementary
    segment (level 0) up to ``spec.n``. Level k feeds level k+1 as a
    renewal source matched to level k's first two completion-time
    moments in its completion-averaged state; the elementary entry uses
    the exact moments of its geometric attempt count.
    """
    imp = spec.imp
    if elem is None:
        if spec.scheme == "2D":
            elem = generate_elementary("2D", imp, spec.L0, n_max=n_max)
        else:
            elem = generate_elementary("1D", imp, 2 * spec.L0, n_max=n_max)
    d0 = elem.rho_e.space.dim_per_mode
    decay = DecayGenerator(d0, imp.T_coh)
    dt, q1 = elem.attempt_duration, elem.q1
    src = RateMixture.from_moments(dt / q1, dt * dt * (2.0 - q1) / (q1 * q1))
    levels = [LevelImage(0, elem.rho_e, dt / q1)]
    state = elem.rho_e
    if spec.scheme == "2D":
        for k in range(1, spec.n + 1):
            dual = _triangle_image(
                [state] * 3, src, spec, 2**k * spec.L0, decay
            )
            state = dual.state().with_labels(("A", "B", "C"))
            src = _refit(dual)
            levels.append(LevelImage(k, state, dual.mean_time))
        return levels
    seg = 2 * spec.L0
    for k in range(1, spec.n):
        prep = pair_image(src, state, src, state, decay, imp.filter_window)
        dual = close_geometric(
            prep,
            lambda rho: merge(rho, (1, 2), imp),
            _comm_delay(2**k * seg, imp),
            decay,
        )
        state = dual.state().with_labels(("A", "C"))
        src = _refit(dual)
        levels.append(LevelImage(k, state, dual.mean_time))
    # final step, stage one: merge each link with an on-demand corner
    # state; no waiting, so a plain renewal prep in the link's source
    corner = ghz_state(n_max).to_density()
    joint = tensor(corner, state)
    src_joint = (
        src.map_states(lambda st: tensor(corner, st))
        if isinstance(src, OperatorMixture)
        else src
    )
    prep = single_image(src_joint, joint)
    dual = close_geometric(
        prep,
        lambda rho: merge(rho, (2, 3), imp),
        _comm_delay(0.0, imp),
        decay,
    )
    # stage two: the corner children close the triangle over the full span
    final = _triangle_image(
        [dual.state()] * 3, _refit(dual), spec, spec.L_total, decay
    )
    levels.append(
        LevelImage(
            spec.n,
            final.state().with_labels(("A", "B", "C")),
            final.mean_time,
        )
    )
    return levels
