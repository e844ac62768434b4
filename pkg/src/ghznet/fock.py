"""Truncated multi-mode Fock-space linear algebra.

States live on a :class:`ModeSpace`: ``num_modes`` bosonic modes, each
truncated at occupation ``n_max``. Density operators are dense complex
matrices of dimension ``(n_max+1)**num_modes``; mode indices are 0-based
and row-major, so mode 0 is the slowest-varying index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModeSpace",
    "PureState",
    "DensityOperator",
    "SpaceMismatchError",
    "StateValidationError",
    "tensor",
    "partial_trace",
    "project",
]

HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = 1e-9
TRACE_TOL = 1e-9


class SpaceMismatchError(ValueError):
    """Raised when two operators disagree on truncation or mode count."""


class StateValidationError(ValueError):
    """Raised when an operator violates Hermiticity, positivity or trace bounds.

    Violations are never silently clipped; callers that expect heralded
    sub-normalized branches should rely on the trace lower bound of 0.
    """


@dataclass(frozen=True)
class ModeSpace:
    """A register of ``num_modes`` bosonic modes truncated at ``n_max``.

    Parameters
    ----------
    num_modes : int
        Number of modes, >= 0. Zero modes gives the scalar space (dim 1).
    n_max : int
        Largest retained Fock occupation per mode.
    labels : tuple of str, optional
        Metadata naming each mode (node + role). Carried through tensor
        and trace bookkeeping; never affects numerics.
    """

    num_modes: int
    n_max: int
    labels: tuple[str, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.num_modes < 0:
            raise ValueError(f"num_modes must be >= 0, got {self.num_modes}")
        if self.n_max < 0:
            raise ValueError(f"n_max must be >= 0, got {self.n_max}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != self.num_modes:
                raise ValueError(
                    f"{len(self.labels)} labels for {self.num_modes} modes"
                )

    @property
    def dim_per_mode(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.dim_per_mode**self.num_modes

    def compatible(self, other: "ModeSpace") -> bool:
        return self.n_max == other.n_max

    def subspace(self, keep: tuple[int, ...]) -> "ModeSpace":
        """Space of the modes listed in ``keep``, preserving labels."""
        labels = None
        if self.labels is not None:
            labels = tuple(self.labels[k] for k in keep)
        return ModeSpace(len(keep), self.n_max, labels)

    def index(self, label: str) -> int:
        """Mode index carrying ``label``."""
        if self.labels is None:
            raise KeyError("space has no labels")
        return self.labels.index(label)

    def basis_index(self, occupations: tuple[int, ...]) -> int:
        """Flat row-major index of the basis ket with these occupations."""
        if len(occupations) != self.num_modes:
            raise ValueError("occupation pattern length != num_modes")
        idx = 0
        for n in occupations:
            if not 0 <= n <= self.n_max:
                raise ValueError(f"occupation {n} outside [0, {self.n_max}]")
            idx = idx * self.dim_per_mode + n
        return idx


def _check_same_space(a: ModeSpace, b: ModeSpace) -> None:
    if a.n_max != b.n_max or a.num_modes != b.num_modes:
        raise SpaceMismatchError(
            f"spaces differ: ({a.num_modes} modes, n_max={a.n_max}) vs "
            f"({b.num_modes} modes, n_max={b.n_max})"
        )


@dataclass(frozen=True)
class PureState:
    """A (possibly sub-normalized) ket on a :class:`ModeSpace`."""

    space: ModeSpace
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.shape != (self.space.dim,):
            raise ValueError(
                f"amplitude vector has length {amp.size}, space dim {self.space.dim}"
            )
        object.__setattr__(self, "amplitudes", amp)

    @classmethod
    def basis(cls, space: ModeSpace, occupations: tuple[int, ...]) -> "PureState":
        amp = np.zeros(space.dim, dtype=complex)
        amp[space.basis_index(occupations)] = 1.0
        return cls(space, amp)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        n = self.norm
        if n == 0.0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return PureState(self.space, self.amplitudes / n)

    def to_density(self) -> "DensityOperator":
        return DensityOperator(
            self.space, np.outer(self.amplitudes, self.amplitudes.conj())
        )

    def overlap(self, other: "PureState") -> complex:
        _check_same_space(self.space, other.space)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def tensor(self, other: "PureState") -> "PureState":
        if not self.space.compatible(other.space):
            raise SpaceMismatchError("tensor factors disagree on n_max")
        return PureState(
            _joined_space(self.space, other.space),
            np.kron(self.amplitudes, other.amplitudes),
        )

    def validate(self) -> "PureState":
        if self.norm > 1.0 + TRACE_TOL:
            raise StateValidationError(f"norm {self.norm} exceeds 1")
        return self


def _joined_space(a: ModeSpace, b: ModeSpace) -> ModeSpace:
    labels = None
    if a.labels is not None and b.labels is not None:
        labels = a.labels + b.labels
    return ModeSpace(a.num_modes + b.num_modes, a.n_max, labels)


@dataclass(frozen=True)
class DensityOperator:
    """A Hermitian positive operator on a :class:`ModeSpace`.

    Trace may be below 1: heralded branches are represented by their
    unnormalized conditional operators, whose trace is the branch
    probability.
    """

    space: ModeSpace
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match space dim {self.space.dim}"
            )
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalized(self) -> "DensityOperator":
        t = np.trace(self.matrix)
        if abs(t) == 0.0:
            raise ZeroDivisionError("cannot normalize a zero-trace operator")
        return DensityOperator(self.space, self.matrix / t)

    def as_tensor(self) -> np.ndarray:
        """View shaped ``(d,)*2M``: row indices first, column indices last."""
        d = self.space.dim_per_mode
        return self.matrix.reshape((d,) * (2 * self.space.num_modes))

    def expectation(self, psi: PureState) -> float:
        _check_same_space(self.space, psi.space)
        return float(
            np.real(np.vdot(psi.amplitudes, self.matrix @ psi.amplitudes))
        )

    def permute_modes(self, order: tuple[int, ...]) -> "DensityOperator":
        """Reorder modes so new mode k is old mode ``order[k]``."""
        M = self.space.num_modes
        if sorted(order) != list(range(M)):
            raise ValueError(f"order {order} is not a permutation of 0..{M - 1}")
        t = self.as_tensor()
        perm = list(order) + [M + o for o in order]
        labels = None
        if self.space.labels is not None:
            labels = tuple(self.space.labels[o] for o in order)
        space = ModeSpace(M, self.space.n_max, labels)
        d = self.space.dim
        return DensityOperator(space, t.transpose(perm).reshape(d, d))

    def with_labels(self, labels: tuple[str, ...] | None) -> "DensityOperator":
        return DensityOperator(
            ModeSpace(self.space.num_modes, self.space.n_max, labels), self.matrix
        )

    def validate(self) -> "DensityOperator":
        """Raise :class:`StateValidationError` on any tolerance violation."""
        m = self.matrix
        herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if herm > HERMITICITY_TOL:
            raise StateValidationError(f"Hermiticity violation {herm:.3e}")
        t = self.trace
        if t < -TRACE_TOL or t > 1.0 + TRACE_TOL:
            raise StateValidationError(f"trace {t} outside [0, 1]")
        if m.size:
            lo = float(np.linalg.eigvalsh((m + m.conj().T) / 2.0)[0])
            if lo < -POSITIVITY_TOL * max(t, 1.0):
                raise StateValidationError(f"negative eigenvalue {lo:.3e}")
        return self


def tensor(a: DensityOperator, b: DensityOperator) -> DensityOperator:
    """Tensor product; modes of ``b`` follow those of ``a``."""
    if not a.space.compatible(b.space):
        raise SpaceMismatchError(
            f"tensor factors disagree on n_max: {a.space.n_max} vs {b.space.n_max}"
        )
    return DensityOperator(
        _joined_space(a.space, b.space), np.kron(a.matrix, b.matrix)
    )


def partial_trace(rho: DensityOperator, keep: tuple[int, ...]) -> DensityOperator:
    """Trace out all modes not in ``keep``.

    Parameters
    ----------
    rho : DensityOperator
    keep : tuple of int
        Mode indices to retain, in the output order. Empty keep returns
        the scalar trace as a 0-mode operator.

    Returns
    -------
    DensityOperator
        Defined on ``rho.space.subspace(keep)``; trace preserved exactly.
    """
    M = rho.space.num_modes
    keep = tuple(keep)
    if any(k < 0 or k >= M for k in keep):
        raise IndexError(f"keep={keep} outside 0..{M - 1}")
    if len(set(keep)) != len(keep):
        raise ValueError(f"duplicate modes in keep={keep}")
    drop = [k for k in range(M) if k not in keep]
    t = rho.as_tensor()
    # contract row and column index of each dropped mode pairwise
    for k in sorted(drop, reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=m + k)
    # remaining axes follow the original mode order; permute to keep order
    surviving = sorted(keep)
    perm = [surviving.index(k) for k in keep]
    m = len(keep)
    t = t.transpose(perm + [m + p for p in perm])
    space = rho.space.subspace(keep)
    return DensityOperator(space, t.reshape(space.dim, space.dim))


def project(
    rho: DensityOperator,
    modes: tuple[int, int],
    pattern: tuple[int, int],
) -> DensityOperator:
    """Project two modes onto a Fock pattern and drop them.

    Returns the unnormalized conditional operator on the remaining modes;
    its trace is the outcome probability. Summing over all patterns of
    the two modes reproduces :func:`partial_trace`.
    """
    i, j = modes
    M = rho.space.num_modes
    if i == j:
        raise ValueError("projection modes must differ")
    for k in (i, j):
        if not 0 <= k < M:
            raise IndexError(f"mode {k} outside 0..{M - 1}")
    ni, nj = pattern
    for n in (ni, nj):
        if not 0 <= n <= rho.space.n_max:
            raise ValueError(f"pattern entry {n} outside [0, {rho.space.n_max}]")
    t = rho.as_tensor()
    # slice row and column of mode i then mode j; adjust j if it follows i
    t = np.take(np.take(t, ni, axis=M + i), ni, axis=i)
    j_adj = j if j < i else j - 1
    Mr = M - 1
    t = np.take(np.take(t, nj, axis=Mr + j_adj), nj, axis=j_adj)
    keep = [k for k in range(M) if k not in (i, j)]
    space = rho.space.subspace(tuple(keep))
    return DensityOperator(space, t.reshape(space.dim, space.dim))
