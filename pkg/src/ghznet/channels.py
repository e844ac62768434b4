"""Bosonic channels and the heralded merging instrument.

All channels act on truncated Fock registers. Generators (Lindblad
dissipators, beamsplitter rotation) are built on the truncated space and
exponentiated there, so every kernel is exactly linear, Hermiticity
preserving, and trace preserving on the truncated space; the truncation
itself is the only approximation, and it only matters once the top Fock
level is populated.

Composition order inside a merge is fixed: read-out loss, beamsplitter,
detector loss, dark counts, photon-number-resolving projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .fock import DensityOperator, ModeSpace, PureState, project

__all__ = [
    "ImperfectionSet",
    "Superoperator",
    "loss_channel",
    "dark_count_channel",
    "beamsplitter",
    "detection_channel",
    "memory_decay",
    "merge",
    "merge_branch",
    "merge_outcome_probabilities",
    "node_b_gate",
    "parity_flip",
]


@dataclass(frozen=True)
class ImperfectionSet:
    """Device parameters shared across the protocol stack.

    Parameters
    ----------
    f : float
        Detector loss probability.
    v : float
        Memory read-out loss probability.
    d : float
        Dark-count probability per detection window.
    eta : float
        Node-B gate efficiency.
    eps_a : float
        Squeezing parameter of the A-side two-mode squeezed source.
    eps_c : float or None
        C-side squeezing parameter. None selects the balancing choice
        sqrt(eta) * eps_a that equalizes the two heralded amplitudes.
    L_att : float
        Fiber attenuation length in km.
    T_coh : float
        Memory excitation lifetime in seconds (may be math.inf).
    v_c : float
        Speed of light in fiber, km/s.
    pulse : float
        Photon pulse duration in seconds.
    filter_window : float
        Temporal-filter cutoff in seconds (math.inf disables filtering).
    """

    f: float = 0.05
    v: float = 0.05
    d: float = 0.001
    eta: float = 0.6
    eps_a: float = 0.1
    eps_c: float | None = None
    L_att: float = 22.0
    T_coh: float = math.inf
    v_c: float = 2.0e5
    pulse: float = 1.0e-4
    filter_window: float = math.inf

    def __post_init__(self) -> None:
        for name in ("f", "v", "d", "eta"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        for name in ("eps_a",):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name}={p} outside [0, 1)")
        if self.eps_c is not None and not 0.0 <= self.eps_c < 1.0:
            raise ValueError(f"eps_c={self.eps_c} outside [0, 1)")
        for name in ("L_att", "v_c", "pulse"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("T_coh", "filter_window"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive (use math.inf)")

    @property
    def eps_c_effective(self) -> float:
        if self.eps_c is not None:
            return self.eps_c
        return math.sqrt(self.eta) * self.eps_a

    def with_eps_a(self, eps_a: float) -> "ImperfectionSet":
        return replace(self, eps_a=eps_a)


# -- kernels on small registers ---------------------------------------------
#
# A kernel is a matrix acting on the row-major vectorization of a density
# operator: vec index (r_1..r_k, c_1..c_k) for k bound modes.


@lru_cache(maxsize=None)
def _annihilator(d0: int) -> np.ndarray:
    a = np.zeros((d0, d0), dtype=complex)
    for n in range(1, d0):
        a[n - 1, n] = math.sqrt(n)
    a.setflags(write=False)
    return a


def _dissipator(A: np.ndarray) -> np.ndarray:
    d0 = A.shape[0]
    eye = np.eye(d0)
    AdA = A.conj().T @ A
    return (
        np.kron(A, A.conj())
        - 0.5 * (np.kron(AdA, eye) + np.kron(eye, AdA.T))
    )


@lru_cache(maxsize=None)
def _loss_kernel(d0: int, g: float) -> np.ndarray:
    if math.isinf(g):
        # total loss: rho -> |0><0| tr(rho)
        k = np.zeros((d0 * d0, d0 * d0), dtype=complex)
        for n in range(d0):
            k[0, n * d0 + n] = 1.0
    else:
        k = expm(g * _dissipator(_annihilator(d0)))
    k.setflags(write=False)
    return k


@lru_cache(maxsize=None)
def _dc_kernel(d0: int, d: float) -> np.ndarray:
    a = _annihilator(d0)
    k = expm(d * (_dissipator(a) + _dissipator(a.conj().T)))
    k.setflags(write=False)
    return k


@lru_cache(maxsize=None)
def _det_kernel(d0: int, f: float, d: float) -> np.ndarray:
    k = _dc_kernel(d0, d) @ _loss_kernel(d0, -math.log1p(-f))
    k.setflags(write=False)
    return k


@lru_cache(maxsize=None)
def _bs_unitary(d0: int) -> np.ndarray:
    a = _annihilator(d0)
    gen = np.kron(a.conj().T, a) - np.kron(a, a.conj().T)
    u = expm(math.pi / 4.0 * gen)
    u.setflags(write=False)
    return u


def _unitary_kernel(u: np.ndarray) -> np.ndarray:
    # conjugation rho -> U rho U^dag; valid for row-major vec
    return np.kron(u, u.conj())


@dataclass(frozen=True)
class Superoperator:
    """A channel bound to specific modes of a register.

    ``kernel`` acts on the vectorized reduced register of ``bound_modes``
    only; :meth:`apply` embeds it in the full space by tensor contraction,
    so wide registers never materialize a full-space kernel.
    """

    space: ModeSpace
    bound_modes: tuple[int, ...]
    kernel: np.ndarray
    trace_preserving: bool = True

    def __post_init__(self) -> None:
        k = len(self.bound_modes)
        dim = self.space.dim_per_mode**k
        if self.kernel.shape != (dim * dim, dim * dim):
            raise ValueError(
                f"kernel shape {self.kernel.shape} does not match "
                f"{k} bound modes at n_max={self.space.n_max}"
            )
        for m in self.bound_modes:
            if not 0 <= m < self.space.num_modes:
                raise IndexError(f"bound mode {m} outside space")

    def apply(self, rho: DensityOperator) -> DensityOperator:
        if rho.space.n_max != self.space.n_max or (
            rho.space.num_modes != self.space.num_modes
        ):
            raise ValueError("operator space does not match channel space")
        out = _apply_kernel(rho.as_tensor(), self.kernel, self.bound_modes)
        return DensityOperator(
            rho.space, out.reshape(rho.space.dim, rho.space.dim)
        )

    def compose(self, inner: "Superoperator") -> "Superoperator":
        """self after ``inner``; requires identical binding."""
        if inner.bound_modes != self.bound_modes or inner.space != self.space:
            raise ValueError("can only compose channels bound to the same modes")
        return Superoperator(
            self.space,
            self.bound_modes,
            self.kernel @ inner.kernel,
            self.trace_preserving and inner.trace_preserving,
        )

    def kraus_operators(self, tol: float = 1e-12) -> list[np.ndarray]:
        """Kraus decomposition via the Choi eigensystem.

        Only meaningful for completely positive kernels (all channels
        here are CP). Returned operators act on the bound subregister.
        """
        k = len(self.bound_modes)
        dk = self.space.dim_per_mode**k
        s = self.kernel.reshape(dk, dk, dk, dk)  # [r_out, c_out, r_in, c_in]
        choi = s.transpose(0, 2, 1, 3).reshape(dk * dk, dk * dk)
        w, vecs = np.linalg.eigh((choi + choi.conj().T) / 2.0)
        ops = []
        for lam, v in zip(w, vecs.T):
            if lam > tol:
                ops.append(math.sqrt(lam) * v.reshape(dk, dk))
        return ops


def _apply_kernel(
    t: np.ndarray, kernel: np.ndarray, modes: tuple[int, ...]
) -> np.ndarray:
    """Apply a k-mode kernel to tensor-shaped rho (2M axes)."""
    M = t.ndim // 2
    rows = list(modes)
    cols = [M + m for m in modes]
    rest = [ax for ax in range(2 * M) if ax not in rows and ax not in cols]
    perm = rows + cols + rest
    tp = t.transpose(perm)
    head = tp.shape[: len(perm) - len(rest)]
    flat = tp.reshape(kernel.shape[1], -1)
    out = (kernel @ flat).reshape(head + tp.shape[len(head):])
    inv = np.argsort(perm)
    return out.transpose(inv)


# -- public channel constructors ---------------------------------------------


def loss_channel(space: ModeSpace, g: float, mode: int) -> Superoperator:
    """Amplitude damping exp{g D[a]} on one mode.

    ``g`` is the dimensionless loss exponent: fiber propagation uses
    g = L / L_att, memory decay g = T / T_coh. Single-photon survival
    is e^{-g}.
    """
    if g < 0:
        raise ValueError(f"loss exponent must be >= 0, got {g}")
    return Superoperator(
        space, (mode,), _loss_kernel(space.dim_per_mode, float(g))
    )


def dark_count_channel(space: ModeSpace, d: float, mode: int) -> Superoperator:
    """Balanced excitation-exchange noise exp{d (D[a] + D[a^dag])}.

    The creation term cannot populate above n_max, so on the truncated
    space the kernel is still exactly trace preserving; it simply under-
    counts leakage out of the top level relative to the untruncated
    channel.
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"dark-count probability must be in [0, 1], got {d}")
    return Superoperator(
        space, (mode,), _dc_kernel(space.dim_per_mode, float(d))
    )


def beamsplitter(space: ModeSpace, i: int, j: int) -> Superoperator:
    """Balanced beamsplitter exp[pi/4 (a_i^dag a_j - a_i a_j^dag)].

    Conjugation by a number-conserving unitary; total photon number on
    (i, j) commutes with the action.
    """
    if i == j:
        raise ValueError("beamsplitter modes must differ")
    return Superoperator(
        space, (i, j), _unitary_kernel(_bs_unitary(space.dim_per_mode))
    )


def detection_channel(
    space: ModeSpace, f: float, d: float, mode: int
) -> Superoperator:
    """Detector front end: loss 1-f first, then dark counts."""
    if not 0.0 <= f < 1.0:
        raise ValueError(f"detector loss must be in [0, 1), got {f}")
    return Superoperator(
        space, (mode,), _det_kernel(space.dim_per_mode, float(f), float(d))
    )


def memory_decay(space: ModeSpace, dt: float, T_coh: float, mode: int) -> Superoperator:
    """Memory idling for duration ``dt``: loss exponent dt / T_coh."""
    g = 0.0 if math.isinf(T_coh) else dt / T_coh
    return loss_channel(space, g, mode)


def parity_flip(space: ModeSpace, mode: int) -> Superoperator:
    """Conjugation by the photon-number parity (-1)^n on one mode."""
    d0 = space.dim_per_mode
    p = np.diag([(-1.0) ** n for n in range(d0)]).astype(complex)
    return Superoperator(space, (mode,), _unitary_kernel(p))


# -- heralded merge -----------------------------------------------------------


def _detection_pattern_kernel(
    d0: int, pattern: tuple[int, int], f: float, d: float, v: float
) -> np.ndarray:
    """Contraction kernel K[r_i, r_j, c_i, c_j] for one click pattern.

    Encodes read-out loss on both modes, the beamsplitter, detector loss
    and dark counts, then the PNR projection onto ``pattern``. Contracting
    K with the (i, j) indices of rho yields the unnormalized conditional
    operator for that outcome.
    """
    det4 = np.asarray(_det_kernel(d0, f, d)).reshape(d0, d0, d0, d0)
    p1, p2 = pattern
    x = det4[p1, p1]  # [r_in, c_in] detector weight on port i
    y = det4[p2, p2]
    ur = _bs_unitary(d0).reshape(d0, d0, d0, d0)  # [r_i', r_j', r_i, r_j]
    if v > 0:
        g_read = math.inf if v >= 1.0 else -math.log1p(-v)
        r4 = np.asarray(_loss_kernel(d0, g_read)).reshape(d0, d0, d0, d0)
    else:
        r4 = np.eye(d0 * d0).reshape(d0, d0, d0, d0)
    # K[b,c,d,e] = sum x[p,r] y[q,s] U[(p,q),(B,C)] U*[(r,s),(D,E)]
    #                  R[B,D,b,d] R[C,E,c,e]
    return np.einsum(
        "pr,qs,pqBC,rsDE,BDbd,CEce->bcde",
        x, y, ur, ur.conj(), r4, r4, optimize=True,
    )


@lru_cache(maxsize=None)
def _pattern_kernel_cached(
    d0: int, pattern: tuple[int, int], f: float, d: float, v: float
) -> np.ndarray:
    k = _detection_pattern_kernel(d0, pattern, f, d, v)
    k.setflags(write=False)
    return k


def merge_branch(
    rho: DensityOperator,
    modes: tuple[int, int],
    pattern: tuple[int, int],
    imp: ImperfectionSet,
) -> DensityOperator:
    """Raw conditional operator for one detection pattern, no frame fix.

    The two merged modes are removed; remaining modes keep their order.
    Trace equals the probability of observing ``pattern``.
    """
    i, j = modes
    M = rho.space.num_modes
    d0 = rho.space.dim_per_mode
    k = _pattern_kernel_cached(d0, pattern, imp.f, imp.d, imp.v)
    t = rho.as_tensor()
    rows = [i, j]
    cols = [M + i, M + j]
    rest = [ax for ax in range(2 * M) if ax not in rows and ax not in cols]
    tp = t.transpose(rows + cols + rest)
    out = np.einsum("bcde,bcde...->...", k, tp, optimize=True)
    keep = tuple(m for m in range(M) if m not in (i, j))
    space = rho.space.subspace(keep)
    return DensityOperator(space, out.reshape(space.dim, space.dim))


def merge(
    rho: DensityOperator,
    modes: tuple[int, int],
    imp: ImperfectionSet,
) -> tuple[DensityOperator, float]:
    """Heralded merge of two memory modes.

    Both single-click outcomes are retained: the (0, 1) branch is mapped
    into the (1, 0) frame by a parity flip on the first remaining mode,
    and the branches are summed. The returned operator is unnormalized;
    its trace is the total success probability.
    """
    b10 = merge_branch(rho, modes, (1, 0), imp)
    b01 = merge_branch(rho, modes, (0, 1), imp)
    if b01.space.num_modes > 0:
        flip = parity_flip(b01.space, 0)
        b01 = flip.apply(b01)
    out = DensityOperator(b10.space, b10.matrix + b01.matrix)
    return out, out.trace


def merge_outcome_probabilities(
    rho: DensityOperator,
    modes: tuple[int, int],
    imp: ImperfectionSet,
) -> dict[tuple[int, int], float]:
    """Probability of every PNR click pattern on the two merged modes."""
    d0 = rho.space.dim_per_mode
    probs: dict[tuple[int, int], float] = {}
    for p1 in range(d0):
        for p2 in range(d0):
            probs[(p1, p2)] = merge_branch(rho, modes, (p1, p2), imp).trace
    return probs


# -- node-B nonlinear gate ----------------------------------------------------


@lru_cache(maxsize=None)
def _node_b_unitary(d0: int) -> np.ndarray:
    """U = exp[pi/2 (a Bdag bdag - h.c.)] on the 3-mode register (a, B, b)."""
    a = _annihilator(d0)
    eye = np.eye(d0)
    a_op = np.kron(np.kron(a, eye), eye)
    Bd = np.kron(np.kron(eye, a.conj().T), eye)
    bd = np.kron(np.kron(eye, eye), a.conj().T)
    gen = a_op @ Bd @ bd
    gen = gen - gen.conj().T
    u = expm(math.pi / 2.0 * gen)
    u.setflags(write=False)
    return u


def node_b_gate(
    rho: DensityOperator, mode: int, eta: float
) -> DensityOperator:
    """Two-photon emission gate at node B.

    The incoming photonic mode ``mode`` (a) suffers loss with survival
    ``eta``, drives the three-wave unitary U = exp[pi/2 (a Bdag bdag -
    h.c.)] against fresh vacua B and b, and is traced out. The returned
    register replaces a with the pair (B, b) in place.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    space = rho.space
    d0 = space.dim_per_mode
    M = space.num_modes
    if eta < 1.0:
        g_in = math.inf if eta == 0.0 else -math.log(eta)
        rho = loss_channel(space, g_in, mode).apply(rho)
    u = _node_b_unitary(d0)
    u3 = u.reshape(d0, d0, d0, d0, d0, d0)  # [a', B', b', a, B, b]
    w = u3[:, :, :, :, 0, 0]  # W_m = <m_a| U |., 0_B, 0_b>: [m, B', b', a]
    t = rho.as_tensor()
    # out = sum_m (W_m rho W_m^dag): move a-row to front, a-col second
    rows = [mode]
    cols = [M + mode]
    rest = [ax for ax in range(2 * M) if ax not in rows and ax not in cols]
    tp = t.transpose(rows + cols + rest)  # [a_r, a_c, rest...]
    out = np.einsum("mPQa,mRSb,ab...->PQRS...", w, w.conj(), tp, optimize=True)
    # out axes: (B_r, b_r, B_c, b_c, rest...); rest holds remaining row then
    # column axes in original order. Reassemble full 2(M+1)-axis layout.
    other = [m for m in range(M) if m != mode]
    new_order_sources: list[int] = []
    # target row axes: original modes with a replaced by (B, b)
    for m in range(M):
        if m == mode:
            new_order_sources.extend([0, 1])  # B_r, b_r
        else:
            new_order_sources.append(4 + other.index(m))
    for m in range(M):
        if m == mode:
            new_order_sources.extend([2, 3])  # B_c, b_c
        else:
            new_order_sources.append(4 + len(other) + other.index(m))
    out = out.transpose(new_order_sources)
    labels = None
    if space.labels is not None:
        lab = list(space.labels)
        name = lab[mode]
        lab[mode: mode + 1] = [f"{name}:B", f"{name}:b"]
        labels = tuple(lab)
    new_space = ModeSpace(M + 1, space.n_max, labels)
    return DensityOperator(new_space, out.reshape(new_space.dim, new_space.dim))


def bell_pair(space_template: ModeSpace | None = None, n_max: int = 2) -> PureState:
    """The anti-correlated two-mode single-photon state (|10> + |01>)/sqrt2."""
    space = ModeSpace(2, n_max) if space_template is None else space_template
    amp = np.zeros(space.dim, dtype=complex)
    amp[space.basis_index((1, 0))] = 1.0 / math.sqrt(2.0)
    amp[space.basis_index((0, 1))] = 1.0 / math.sqrt(2.0)
    return PureState(space, amp)
