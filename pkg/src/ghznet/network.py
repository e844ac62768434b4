"""Network topology, merge schedules, and the static level-merge engine.

The static engine assumes perfect quantum memories: states are merged
level by level with no decay between events, so the output depends only
on the child states and the detection imperfections. Timing enters only
through the communication spans recorded on the schedule, which the
trajectory and transform engines consume for delay accounting.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import fidelity, ghz_state, memory_count, swap_count
from .channels import ImperfectionSet, _pattern_kernel_cached, merge
from .elementary import generate_elementary
from .fock import DensityOperator, ModeSpace, SpaceMismatchError

__all__ = [
    "CANONICAL_ORIENTATION",
    "MergeEvent",
    "NetworkSpec",
    "StaticRun",
    "build_schedule",
    "level_one_fidelity",
    "memory_count",
    "merge_level_detailed",
    "merge_level_static",
    "optimize_orientation",
    "run_static",
    "swap_count",
]

# Corner-role assignment that maps three ideal children to the exact
# target state under the canonical inner-corner pairing below.
CANONICAL_ORIENTATION: tuple[tuple[int, int, int], ...] = (
    (0, 1, 2),
    (0, 1, 2),
    (0, 2, 1),
)

_ROLES = ("A", "B", "C")


def _normalize_scheme(scheme: str) -> str:
    key = scheme.strip().lower()
    if key == "2d":
        return "2D"
    if key in ("1d", "1d-benchmark"):
        return "1D"
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Geometry and imperfection budget of one nested network.

    Parameters
    ----------
    scheme : str
        "2D" for the triangle-nesting scheme, "1D" (alias
        "1D-benchmark") for the bipartite-link benchmark.
    n : int
        Nesting level. The 2D scheme admits n >= 0; the benchmark needs
        at least one level because its final merge is counted as level n.
    L_total : float
        Target user separation in km. The elementary scale is
        L0 = L_total / 2**n.
    imp : ImperfectionSet
        Hardware parameters shared by every merge event.
    orientation : tuple of three permutations, optional
        Corner-role assignment applied to the children of every
        triangle closure; ``None`` selects the canonical one.
    """

    scheme: str
    n: int
    L_total: float
    imp: ImperfectionSet = field(default_factory=ImperfectionSet)
    orientation: tuple[tuple[int, int, int], ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", _normalize_scheme(self.scheme))
        if self.n < 0:
            raise ValueError("nesting level must be >= 0")
        if self.scheme == "1D" and self.n < 1:
            raise ValueError("the 1D benchmark starts at one nesting level")
        if not self.L_total > 0:
            raise ValueError("L_total must be positive")
        if self.orientation is not None:
            ori = tuple(tuple(p) for p in self.orientation)
            if len(ori) != 3 or any(sorted(p) != [0, 1, 2] for p in ori):
                raise ValueError(f"invalid orientation {self.orientation!r}")
            object.__setattr__(self, "orientation", ori)

    @property
    def L0(self) -> float:
        return self.L_total / 2**self.n

    @property
    def num_swaps(self) -> int:
        return swap_count(self.scheme, self.n)

    @property
    def num_memories(self) -> int:
        return memory_count(self.scheme, self.n)


@dataclass(frozen=True)
class MergeEvent:
    """One heralded merge in the schedule.

    ``pair`` gives the two mode indices consumed, counted inside the
    register that exists when the event fires (children concatenated in
    schedule order). ``span_km`` is the linear span of the object the
    event creates, the distance the heralding signal must cover; local
    events at a single node carry span zero.
    """

    level: int
    pair: tuple[int, int]
    span_km: float
    kind: str = "merge"


# Inner-corner pairing of one triangle closure. Children are laid out
# as (A, A.l, A.r, B, B.l, B.r, C, C.l, C.r); each pair is indexed in
# the register left after the previous removals.
_CLOSURE_PAIRS = ((2, 4), (3, 5), (4, 1))
_CLOSURE_KINDS = ("merge", "merge", "filter")


def build_schedule(spec: NetworkSpec) -> list[MergeEvent]:
    """Ordered merge events for the whole network, level-major.

    The 2D scheme runs three closure events per triangle per level; the
    benchmark runs doubling swaps on each of its three links and ends
    with the two-stage final step (three local merges against on-demand
    corner states, then a triangle closure whose last event is the
    redundant filter).
    """
    events: list[MergeEvent] = []
    if spec.scheme == "2D":
        for k in range(1, spec.n + 1):
            span = 2**k * spec.L0
            for _ in range(3 ** (spec.n - k)):
                events.extend(
                    MergeEvent(k, pair, span, kind)
                    for pair, kind in zip(_CLOSURE_PAIRS, _CLOSURE_KINDS)
                )
        return events
    seg = 2 * spec.L0
    for k in range(1, spec.n):
        span = 2**k * seg
        events.extend(
            MergeEvent(k, (1, 2), span, "swap")
            for _ in range(3 * 2 ** (spec.n - 1 - k))
        )
    events.extend(MergeEvent(spec.n, (2, 3), 0.0, "corner") for _ in range(3))
    events.extend(
        MergeEvent(spec.n, pair, spec.L_total, kind)
        for pair, kind in zip(_CLOSURE_PAIRS, _CLOSURE_KINDS)
    )
    return events


def _merge_across(
    op_a: DensityOperator,
    mode_a: int,
    op_b: DensityOperator,
    mode_b: int,
    imp: ImperfectionSet,
) -> tuple[DensityOperator, float]:
    """Merge one mode of ``op_a`` with one mode of ``op_b``.

    Equivalent to tensoring the operators and calling :func:`merge`,
    but contracts the detection kernel across the factors directly so
    the joint space is never materialized. Remaining modes keep their
    order, ``op_a`` first; the parity fix of the (0, 1) branch lands on
    the first remaining mode, as in the single-operator path.
    """
    sp_a, sp_b = op_a.space, op_b.space
    if not sp_a.compatible(sp_b):
        raise SpaceMismatchError("children live on different local dimensions")
    d0 = sp_a.dim_per_mode
    m_a, m_b = sp_a.num_modes, sp_b.num_modes
    rest_a = [m for m in range(m_a) if m != mode_a]
    rest_b = [m for m in range(m_b) if m != mode_b]
    ra = d0 ** len(rest_a)
    rb = d0 ** len(rest_b)
    ta = (
        op_a.as_tensor()
        .transpose([*rest_a, *(m_a + m for m in rest_a), mode_a, m_a + mode_a])
        .reshape(ra, ra, d0, d0)
    )
    tb = (
        op_b.as_tensor()
        .transpose([*rest_b, *(m_b + m for m in rest_b), mode_b, m_b + mode_b])
        .reshape(rb, rb, d0, d0)
    )
    # Parity of the leading remaining mode, read off the flattened index.
    if rest_a:
        par = ((-1.0) ** (np.arange(ra) // d0 ** (len(rest_a) - 1))).astype(float)
        par_axes = ("a", par)
    elif rest_b:
        par = ((-1.0) ** (np.arange(rb) // d0 ** (len(rest_b) - 1))).astype(float)
        par_axes = ("b", par)
    else:
        par_axes = None
    total = None
    for pattern in ((1, 0), (0, 1)):
        k = _pattern_kernel_cached(d0, pattern, imp.f, imp.d, imp.v)
        block = np.einsum("bcde,xwbd,yzce->xywz", k, ta, tb, optimize=True)
        if pattern == (0, 1) and par_axes is not None:
            which, par = par_axes
            if which == "a":
                block *= par[:, None, None, None]
                block *= par[None, None, :, None]
            else:
                block *= par[None, :, None, None]
                block *= par[None, None, None, :]
        total = block if total is None else total + block
    labels = None
    if sp_a.labels is not None and sp_b.labels is not None:
        labels = tuple(sp_a.labels[m] for m in rest_a) + tuple(
            sp_b.labels[m] for m in rest_b
        )
    space = ModeSpace(len(rest_a) + len(rest_b), sp_a.n_max, labels)
    out = DensityOperator(space, total.reshape(space.dim, space.dim))
    return out, out.trace


def _relabel_child(child: DensityOperator, role: str) -> DensityOperator:
    return child.with_labels((role, f"{role}.l", f"{role}.r"))


def _oriented_children(
    children: list[DensityOperator] | tuple[DensityOperator, ...],
    orientation: tuple[tuple[int, int, int], ...] | None,
) -> list[DensityOperator]:
    ori = CANONICAL_ORIENTATION if orientation is None else orientation
    out = []
    for child, perm, role in zip(children, ori, _ROLES):
        if child.space.num_modes != 3:
            raise SpaceMismatchError("triangle children must expose 3 modes")
        out.append(_relabel_child(child.permute_modes(tuple(perm)), role))
    return out


def _close_triangle(
    children: list[DensityOperator], imp: ImperfectionSet
) -> tuple[DensityOperator, tuple[float, ...]]:
    """Three-event closure; returns the unnormalized output and the
    conditional probability of each event."""
    c1, c2, c3 = children
    s, t1 = _merge_across(c1, 2, c2, 1, imp)
    s, t2 = _merge_across(s, 3, c3, 1, imp)
    out, t3 = merge(s, (4, 1), imp)
    # Each event's conditional probability is its output trace over the
    # trace of everything in play just before it fires; child 3 joins
    # the register only at the second event.
    dens = (c1.trace * c2.trace, t1 * c3.trace, t2)
    probs = tuple(t / den if den > 0 else 0.0 for t, den in zip((t1, t2, t3), dens))
    return out, probs


def _corner_children(
    links: list[DensityOperator] | tuple[DensityOperator, ...],
    imp: ImperfectionSet,
) -> tuple[list[DensityOperator], tuple[float, ...]]:
    """Stage one of the benchmark's final step.

    Each long link is merged locally with an on-demand ideal corner
    state: the corner's third mode against the link's near end. The
    result is a triple of 3-mode children shaped like 2D segments.
    """
    n_max = links[0].space.n_max
    corner = ghz_state(n_max).to_density()
    children: list[DensityOperator] = []
    probs: list[float] = []
    for link, role in zip(links, _ROLES):
        if link.space.num_modes != 2:
            raise SpaceMismatchError("benchmark links must expose 2 modes")
        child, t = _merge_across(corner, 2, link, 0, imp)
        children.append(child)
        probs.append(t / link.trace if link.trace > 0 else 0.0)
    return children, tuple(probs)


def merge_level_detailed(
    children: list[DensityOperator] | tuple[DensityOperator, ...],
    spec: NetworkSpec,
    level: int,
) -> tuple[DensityOperator, tuple[float, ...]]:
    """One level of merging with per-event conditional probabilities.

    2D levels and the benchmark's final level take three children and
    run the closure (the final level first attaches the corner states);
    earlier benchmark levels take two links and run one doubling swap.
    Children are expected normalized. The returned state is normalized;
    the probability tuple follows schedule order.
    """
    if not 1 <= level <= spec.n:
        raise ValueError(f"level {level} outside 1..{spec.n}")
    imp = spec.imp
    if spec.scheme == "2D":
        if len(children) != 3:
            raise ValueError("a triangle closure needs exactly 3 children")
        out, probs = _close_triangle(_oriented_children(children, spec.orientation), imp)
    elif level < spec.n:
        if len(children) != 2:
            raise ValueError("a doubling swap needs exactly 2 links")
        left = children[0].with_labels(("A", "A.r"))
        right = children[1].with_labels(("C.l", "C"))
        out, t = _merge_across(left, 1, right, 0, imp)
        norm = left.trace * right.trace
        probs = (t / norm if norm > 0 else 0.0,)
    else:
        if len(children) != 3:
            raise ValueError("the final step needs exactly 3 links")
        corners, corner_probs = _corner_children(children, imp)
        out, close_probs = _close_triangle(
            _oriented_children(corners, spec.orientation), imp
        )
        probs = corner_probs + close_probs
    p = float(np.prod(probs))
    if p <= 0:
        raise ValueError("level merge has zero success probability")
    return out.normalized(), probs


def merge_level_static(
    children: list[DensityOperator] | tuple[DensityOperator, ...],
    spec: NetworkSpec,
    level: int,
) -> tuple[DensityOperator, float]:
    """Static (infinite-memory) level merge.

    Returns the normalized conditional state and the joint success
    probability of the level's events.
    """
    state, probs = merge_level_detailed(children, spec, level)
    return state, float(np.prod(probs))


@dataclass(frozen=True)
class StaticRun:
    """Full static recursion: final state plus per-level probabilities."""

    state: DensityOperator
    level_probabilities: tuple[float, ...]

    @property
    def joint_probability(self) -> float:
        return float(np.prod(self.level_probabilities)) if self.level_probabilities else 1.0


def run_static(
    spec: NetworkSpec,
    child: DensityOperator | None = None,
    n_max: int = 2,
) -> StaticRun:
    """Recurse the whole network in the perfect-memory limit.

    ``child`` seeds the bottom of the recursion (a 3-mode segment for
    2D, a 2-mode elementary link for the benchmark); when omitted it is
    generated from ``spec.imp`` at the elementary scale. Identical
    children are computed once and reused.
    """
    if child is None:
        if spec.scheme == "2D":
            child = generate_elementary("2D", spec.imp, spec.L0, n_max=n_max).rho_e
        else:
            child = generate_elementary("1D", spec.imp, 2 * spec.L0, n_max=n_max).rho_e
    state = child
    probs: list[float] = []
    if spec.scheme == "2D":
        for k in range(1, spec.n + 1):
            state, p = merge_level_static([state] * 3, spec, k)
            probs.append(p)
    else:
        for k in range(1, spec.n):
            state, p = merge_level_static([state, state], spec, k)
            probs.append(p)
        state, p = merge_level_static([state] * 3, spec, spec.n)
        probs.append(p)
    return StaticRun(state, tuple(probs))


def _all_orientations() -> tuple[tuple[tuple[int, int, int], ...], ...]:
    perms = tuple(itertools.permutations(range(3)))
    return tuple(itertools.product(perms, perms, perms))


def optimize_orientation(
    spec: NetworkSpec,
    candidates: tuple[tuple[tuple[int, int, int], ...], ...] | None = None,
    children: list[DensityOperator] | None = None,
) -> tuple[tuple[int, int, int], ...]:
    """Pick the corner-role assignment maximizing one-level fidelity.

    Candidates default to the exhaustive per-child enumeration. Ties
    resolve to the first candidate in enumeration order. The children
    default to the elementary segment of ``spec`` (reused three times);
    for the benchmark the final-step closure is evaluated.
    """
    if candidates is None:
        candidates = _all_orientations()
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    if children is None:
        if spec.scheme == "2D":
            seg = generate_elementary("2D", spec.imp, spec.L0).rho_e
        else:
            seg = generate_elementary("1D", spec.imp, 2 * spec.L0).rho_e
        children = [seg] * 3
    level = 1 if spec.scheme == "2D" else spec.n
    target = ghz_state(children[0].space.n_max)
    best = None
    best_fid = -1.0
    for cand in candidates:
        trial = replace(spec, orientation=tuple(tuple(p) for p in cand))
        try:
            state, _ = merge_level_static(children, trial, level)
        except ValueError:
            continue
        fid = fidelity(state, target)
        if fid > best_fid:
            best, best_fid = cand, fid
    if best is None:
        raise ValueError("no candidate orientation has nonzero success probability")
    return best


def level_one_fidelity(
    imp: ImperfectionSet,
    L0: float,
    n_max: int = 2,
    orientation: tuple[tuple[int, int, int], ...] | None = None,
) -> float:
    """Fidelity of the first nesting level built from one elementary
    segment, under the canonical (or given) orientation."""
    elem = generate_elementary("2D", imp, L0, n_max=n_max)
    spec = NetworkSpec("2D", 1, 2 * L0, imp, orientation)
    state, _ = merge_level_static([elem.rho_e] * 3, spec, 1)
    return fidelity(state, ghz_state(n_max))
