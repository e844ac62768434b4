"""Fidelity, qubit projection, GHZ-basis spectroscopy, distillability.

The GHZ basis on qubits (A, B, C) is |Psi_j^pm> = (|j>_AB |1>_C pm
|3-j>_AB |0>_C)/sqrt(2), with |j>_AB the two-qubit computational state
of the binary digits of j. The target state is |Psi_0^+>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import DensityOperator, ModeSpace, PureState

__all__ = [
    "GhzBasisWeights",
    "ghz_state",
    "fidelity",
    "qubit_project",
    "ghz_basis_weights",
    "distillable",
    "classically_correlated_state",
    "maximally_mixed_state",
    "swap_count",
    "memory_count",
    "analytic_benchmark_state",
    "analytic_infidelity",
]


def ghz_state(n_max: int = 1) -> PureState:
    """Target state (|001> + |110>)/sqrt(2) on modes (A, B, C)."""
    sp = ModeSpace(3, n_max, labels=("A", "B", "C"))
    amp = np.zeros(sp.dim, dtype=complex)
    amp[sp.basis_index((0, 0, 1))] = 1.0 / math.sqrt(2.0)
    amp[sp.basis_index((1, 1, 0))] = 1.0 / math.sqrt(2.0)
    return PureState(sp, amp)


def classically_correlated_state(n_max: int = 1) -> DensityOperator:
    """Dephased target: (|001><001| + |110><110|)/2."""
    sp = ModeSpace(3, n_max, labels=("A", "B", "C"))
    m = np.zeros((sp.dim, sp.dim), dtype=complex)
    for occ in [(0, 0, 1), (1, 1, 0)]:
        i = sp.basis_index(occ)
        m[i, i] = 0.5
    return DensityOperator(sp, m)


def maximally_mixed_state() -> DensityOperator:
    """Qubit-basis identity mixture on three modes."""
    sp = ModeSpace(3, 1, labels=("A", "B", "C"))
    return DensityOperator(sp, np.eye(8, dtype=complex) / 8.0)


def fidelity(rho: DensityOperator, target: PureState) -> float:
    """Root fidelity sqrt(<psi| rho |psi>) against a pure target."""
    overlap = rho.expectation(target)
    if overlap < 0.0:
        if overlap < -1e-9:
            raise ValueError(f"negative overlap {overlap}")
        overlap = 0.0
    return math.sqrt(overlap)


def qubit_project(rho: DensityOperator) -> tuple[DensityOperator, float]:
    """Restrict every mode to occupations {0, 1} and renormalize.

    Returns
    -------
    (projected, discarded) : DensityOperator, float
        ``projected`` lives on an n_max=1 space; ``discarded`` is the
        weight fraction removed by the projection.
    """
    sp = rho.space
    if sp.n_max < 1:
        raise ValueError("qubit projection needs n_max >= 1")
    M = sp.num_modes
    t = rho.as_tensor()
    sl = tuple(slice(0, 2) for _ in range(2 * M))
    sub = t[sl]
    qsp = ModeSpace(M, 1, sp.labels)
    mat = sub.reshape(qsp.dim, qsp.dim)
    total = rho.trace
    kept = float(np.trace(mat).real)
    if total <= 0.0:
        raise ValueError("cannot project an operator with non-positive trace")
    if kept <= 1e-15 * total:
        raise ValueError("all weight lies outside the qubit subspace")
    return DensityOperator(qsp, mat / kept), 1.0 - kept / total


@dataclass(frozen=True)
class GhzBasisWeights:
    """Populations in the tripartite GHZ basis."""

    lambda0_plus: float
    lambda0_minus: float
    lambdas: tuple[float, float, float]

    @property
    def total(self) -> float:
        return self.lambda0_plus + self.lambda0_minus + 2.0 * sum(self.lambdas)

    @property
    def margin(self) -> float:
        return abs(self.lambda0_plus - self.lambda0_minus) - 2.0 * max(
            self.lambdas
        )


def _ghz_basis_vectors() -> list[tuple[int, np.ndarray, np.ndarray]]:
    """(j, |Psi_j^+>, |Psi_j^->) on the 8-dim qubit space, row-major (A,B,C)."""
    sp = ModeSpace(3, 1)
    out = []
    for j in range(4):
        j1, j2 = (j >> 1) & 1, j & 1
        k1, k2 = ((3 - j) >> 1) & 1, (3 - j) & 1
        plus = np.zeros(8, dtype=complex)
        minus = np.zeros(8, dtype=complex)
        hi = sp.basis_index((j1, j2, 1))
        lo = sp.basis_index((k1, k2, 0))
        plus[hi] = plus[lo] = 1.0 / math.sqrt(2.0)
        minus[hi] = 1.0 / math.sqrt(2.0)
        minus[lo] = -1.0 / math.sqrt(2.0)
        out.append((j, plus, minus))
    return out


def ghz_basis_weights(rho3: DensityOperator) -> GhzBasisWeights:
    """Diagonal GHZ-basis populations of a 3-qubit state."""
    if rho3.space.num_modes != 3 or rho3.space.n_max != 1:
        raise ValueError("expected a 3-mode qubit-truncated operator")
    m = rho3.matrix
    pops = {}
    for j, plus, minus in _ghz_basis_vectors():
        pops[j] = (
            float(np.real(plus.conj() @ m @ plus)),
            float(np.real(minus.conj() @ m @ minus)),
        )
    lam = tuple(0.5 * (pops[j][0] + pops[j][1]) for j in (1, 2, 3))
    return GhzBasisWeights(pops[0][0], pops[0][1], lam)


def distillable(
    rho3: DensityOperator,
) -> tuple[bool, float, GhzBasisWeights]:
    """Sufficient GHZ-distillability criterion on a 3-qubit state.

    margin = |lambda0+ - lambda0-| - max_j 2 lambda_j; distillable iff
    the margin is strictly positive (exactly zero counts as not
    distillable).
    """
    w = ghz_basis_weights(rho3)
    margin = w.margin
    return margin > 0.0, margin, w


# -- closed-form benchmark states ----------------------------------------------


def swap_count(scheme: str, n: int) -> int:
    """Total number of merge operations for an n-level network."""
    if n < 0:
        raise ValueError("nesting level must be >= 0")
    if scheme == "2D":
        return (3 * (3**n - 1)) // 2
    if scheme == "1D":
        if n == 0:
            raise ValueError("the 1D benchmark starts at one nesting level")
        return 3 * (2 ** (n - 1) - 1) + 6
    raise ValueError(f"unknown scheme {scheme!r}")


def memory_count(scheme: str, n: int) -> int:
    """Number of memory cells used by an n-level network."""
    if scheme == "2D":
        return 3 ** (n + 1)
    if scheme == "1D":
        if n == 0:
            raise ValueError("the 1D benchmark starts at one nesting level")
        return 3 * 2**n + 9
    raise ValueError(f"unknown scheme {scheme!r}")


def analytic_benchmark_state(
    scheme: str, n: int, f: float, v: float, d: float
) -> DensityOperator:
    """Small-error closed form of the n-level network state (3 qubits).

    Valid when (f+v) d N^2 is small; weights falling outside [0, 1]
    raise, signaling the formula left its regime.
    """
    ghz = ghz_state(1).to_density().matrix
    rho_d = classically_correlated_state(1).matrix
    rho_i = maximally_mixed_state().matrix
    eps = (f + v) * d
    if scheme == "1D":
        alpha = 2.0 * swap_count("1D", n) ** 2 * eps
        weights = {"ghz": 1.0 - alpha, "mix": alpha}
        m = (1.0 - alpha) * ghz + alpha * (8.0 / 9.0 * rho_i + 1.0 / 9.0 * rho_d)
    elif scheme == "2D":
        a_i = 16.0 * n * eps
        a_d = (2.0 * swap_count("2D", n) - 4.0 * n) * eps
        weights = {"ghz": 1.0 - a_i - a_d, "identity": a_i, "dephased": a_d}
        m = (1.0 - a_i - a_d) * ghz + a_i * rho_i + a_d * rho_d
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    for name, w in weights.items():
        if not 0.0 <= w <= 1.0:
            raise ValueError(
                f"{scheme} level-{n} weight {name}={w:.3e} outside [0, 1]: "
                "formula out of regime"
            )
    sp = ModeSpace(3, 1, labels=("A", "B", "C"))
    return DensityOperator(sp, m)


def analytic_infidelity(
    scheme: str, n: int, f: float, v: float, d: float
) -> float:
    """Closed-form 1 - F of the n-level network state."""
    eps = (f + v) * d
    if scheme == "1D":
        return 5.0 / 6.0 * swap_count("1D", n) ** 2 * eps
    if scheme == "2D":
        return 0.5 * (swap_count("2D", n) + 12.0 * n) * eps
    raise ValueError(f"unknown scheme {scheme!r}")
