"""Elementary segment generation: 2D triangle and 1D midpoint link.

The 2D pipeline follows the physical layout: two-mode squeezed sources at
nodes A and C, photon a traveling L0 of fiber into the node-B storage
(efficiency eta) where the two-photon gate maps the stored excitation
onto the memory-photon pair (B, b), photon c traveling L0 to the
detection station next to B, and a heralded single click behind a
balanced beamsplitter. The 1D pipeline drops node B: both photons meet
at a midpoint station after half the segment span each.

The |0,1> click branch is rotated into the |1,0> frame by a parity flip
on node A before the branches are summed, so the returned state is
reported in the corrected frame.

Memory decay during generation is deliberately absent here; engines that
track time apply decay from the attempt start using ``attempt_duration``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .analysis import fidelity, ghz_state
from .channels import ImperfectionSet, _loss_kernel, _pattern_kernel_cached
from .fock import DensityOperator, ModeSpace, PureState

__all__ = [
    "ElementaryResult",
    "AnalyticElementary",
    "EpsilonOptimum",
    "two_mode_squeezed",
    "generate_elementary",
    "analytic_elementary",
    "optimal_epsilon",
    "optimize_epsilon_numeric",
    "efficiency_from_cooperativity",
    "truncation_deficit",
]

DEFICIT_LIMIT = 1e-3


@dataclass(frozen=True)
class ElementaryResult:
    """Heralded elementary state with its generation statistics.

    rho_e is normalized; q1 is the per-attempt success probability;
    attempt_duration is 2 * arm / v_c + pulse.
    """

    rho_e: DensityOperator
    q1: float
    attempt_duration: float


@dataclass(frozen=True)
class AnalyticElementary:
    """Closed-form elementary triangle decomposition."""

    q_ghz: float
    q_l: float
    q_r: float
    q1: float
    rho_e: DensityOperator


@dataclass(frozen=True)
class EpsilonOptimum:
    """Result of a numeric squeezing-parameter optimization."""

    eps_a: float
    value: float
    degenerate: bool = False


def truncation_deficit(eps: float, n_max: int) -> float:
    """Weight of the two-mode squeezed state above the truncation."""
    return eps ** (2 * (n_max + 1)) / (1.0 - eps * eps)


def two_mode_squeezed(eps: float, n_max: int) -> PureState:
    """Two-mode squeezed vacuum, memory mode first, photon mode second.

    Amplitudes sqrt(1 - eps^2) eps^n on |n, n>; eps = tanh r. The norm
    deficit from truncation is eps^(2(n_max+1)) / (1 - eps^2).
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps={eps} outside [0, 1)")
    sp = ModeSpace(2, n_max)
    amp = np.zeros(sp.dim, dtype=complex)
    sech = math.sqrt(1.0 - eps * eps)
    for n in range(n_max + 1):
        amp[sp.basis_index((n, n))] = sech * eps**n
    return PureState(sp, amp)


def _pair_density(eps: float, n_max: int, loss_g: float) -> np.ndarray:
    """(memory, photon) density tensor [m, p, m', p'] after photon loss."""
    d0 = n_max + 1
    psi = two_mode_squeezed(eps, n_max).amplitudes.reshape(d0, d0)
    rho = np.einsum("ij,kl->ijkl", psi, psi.conj())
    if loss_g > 0.0:
        k4 = np.asarray(_loss_kernel(d0, loss_g)).reshape(d0, d0, d0, d0)
        rho = np.einsum("PQpq,mpnq->mPnQ", k4, rho, optimize=True)
    return rho


def _parity_vector(d0: int) -> np.ndarray:
    return np.array([(-1.0) ** n for n in range(d0)])


def generate_elementary(
    scheme: str,
    imp: ImperfectionSet,
    L0: float,
    n_max: int = 2,
    arm_km: float | None = None,
) -> ElementaryResult:
    """Full numeric elementary-segment pipeline.

    Parameters
    ----------
    scheme : {"2D", "1D"}
        "2D" produces the triangle state on (A, B, C); "1D" the link
        state on (A, C).
    imp : ImperfectionSet
        eps_a drives both sources; for 2D the C-side source uses
        imp.eps_c_effective (default sqrt(eta) * eps_a), for 1D both
        sides use eps_a.
    L0 : float
        Segment scale in km. For 2D this is each photon's fiber length;
        for 1D the segment span, each arm covering half by default.
    n_max : int
        Fock truncation; 7 reproduces the reference elementary scan.
    arm_km : float, optional
        Override for the one-way photon travel distance.
    """
    if scheme not in ("2D", "1D"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if L0 < 0:
        raise ValueError("L0 must be nonnegative")
    d0 = n_max + 1
    if scheme == "2D":
        arm = L0 if arm_km is None else arm_km
        eps_a, eps_c = imp.eps_a, imp.eps_c_effective
    else:
        arm = L0 / 2.0 if arm_km is None else arm_km
        eps_a = eps_c = imp.eps_a
    for eps in (eps_a, eps_c):
        deficit = truncation_deficit(eps, n_max)
        if deficit > DEFICIT_LIMIT:
            warnings.warn(
                f"truncation deficit {deficit:.2e} at eps={eps:.3f}, "
                f"n_max={n_max}: increase n_max",
                RuntimeWarning,
                stacklevel=2,
            )
    g_fiber = arm / imp.L_att
    kernel = {
        pat: _pattern_kernel_cached(d0, pat, imp.f, imp.d, 0.0)
        for pat in [(1, 0), (0, 1)]
    }
    par = _parity_vector(d0)
    if scheme == "2D":
        g_a = g_fiber + (math.inf if imp.eta == 0.0 else -math.log(imp.eta))
        rho_aa = _pair_density(eps_a, n_max, g_a)  # [A, a, A', a']
        # clean transfer a -> (B, b): |n_a> -> |n_B, n_b>
        sig = np.zeros((d0,) * 6, dtype=complex)  # [A, B, b, A', B', b']
        for n in range(d0):
            for m in range(d0):
                sig[:, n, n, :, m, m] = rho_aa[:, n, :, m]
        rho_cc = _pair_density(eps_c, n_max, g_fiber)  # [C, c, C', c']
        def branch(pat):
            return np.einsum(
                "ABpabq,CrDs,prqs->ABCabD",
                sig,
                rho_cc,
                kernel[pat],
                optimize=True,
            )
        b10 = branch((1, 0))
        b01 = branch((0, 1))
        b01 = np.einsum("a,aBCdef,d->aBCdef", par, b01, par)
        raw = b10 + b01
        space = ModeSpace(3, n_max, labels=("A", "B", "C"))
    else:
        rho_aa = _pair_density(eps_a, n_max, g_fiber)
        rho_cc = _pair_density(eps_c, n_max, g_fiber)
        def branch(pat):
            return np.einsum(
                "ApBq,CrDs,prqs->ACBD",
                rho_aa,
                rho_cc,
                kernel[pat],
                optimize=True,
            )
        b10 = branch((1, 0))
        b01 = branch((0, 1))
        b01 = np.einsum("a,aCdf,d->aCdf", par, b01, par)
        raw = b10 + b01
        space = ModeSpace(2, n_max, labels=("A", "C"))
    mat = raw.reshape(space.dim, space.dim)
    q1 = float(np.trace(mat).real)
    if q1 <= 0.0:
        raise ValueError("zero heralding probability: no click channel open")
    rho_e = DensityOperator(space, mat / q1)
    dt = 2.0 * arm / imp.v_c + imp.pulse
    return ElementaryResult(rho_e, q1, dt)


def analytic_elementary(
    imp: ImperfectionSet, L0: float, n_max: int = 2
) -> AnalyticElementary:
    """Leading-order closed form of the 2D elementary triangle.

    Valid for d, f << 1 and eps_a below roughly 0.3. The assembled state
    mixes the target, one-photon-loss and fiber-loss error vectors and
    the dark-count vacuum.
    """
    if n_max < 2:
        raise ValueError("analytic state needs n_max >= 2 for the |2> branches")
    eta, f, d = imp.eta, imp.f, imp.d
    eps2 = imp.eps_a**2
    att = math.exp(-L0 / imp.L_att)
    q_ghz = 2.0 * eta * att * (1.0 - f - (1.0 + eta) * eps2) * eps2
    q_l = 3.0 * eta * att * (1.0 - eta * att) * eps2 * eps2
    q_r = 3.0 * eta * eta * att * (1.0 - att) * eps2 * eps2
    q1 = 2.0 * d + q_ghz + q_l + q_r
    sp = ModeSpace(3, n_max, labels=("A", "B", "C"))
    vac = np.zeros(sp.dim, dtype=complex)
    vac[sp.basis_index((0, 0, 0))] = 1.0
    ghz = ghz_state(n_max).amplitudes
    psi_l = np.zeros(sp.dim, dtype=complex)
    psi_l[sp.basis_index((2, 1, 0))] = math.sqrt(2.0 / 3.0)
    psi_l[sp.basis_index((1, 0, 1))] = math.sqrt(1.0 / 3.0)
    psi_r = np.zeros(sp.dim, dtype=complex)
    psi_r[sp.basis_index((1, 1, 1))] = math.sqrt(1.0 / 3.0)
    psi_r[sp.basis_index((0, 0, 2))] = math.sqrt(2.0 / 3.0)
    m = (
        2.0 * d * np.outer(vac, vac.conj())
        + q_ghz * np.outer(ghz, ghz.conj())
        + q_l * np.outer(psi_l, psi_l.conj())
        + q_r * np.outer(psi_r, psi_r.conj())
    ) / q1
    return AnalyticElementary(q_ghz, q_l, q_r, q1, DensityOperator(sp, m))


def optimal_epsilon(imp: ImperfectionSet, L0: float) -> tuple[float, float]:
    """Closed-form optimum (eps_op, F_MAX) of the elementary fidelity."""
    eta, f, d = imp.eta, imp.f, imp.d
    if eta <= 0.0:
        raise ValueError("formula out of domain: eta must be positive")
    ll = L0 / imp.L_att
    bracket = (1.0 + eta) / 2.0 - eta * math.exp(-ll)
    if bracket <= 0.0:
        raise ValueError(
            "formula out of domain: eta * exp(-L0/L_att) >= (1+eta)/2"
        )
    eps_op = (d * math.exp(ll) / (3.0 * eta * bracket)) ** 0.25
    f_max = (
        1.0
        + math.sqrt(6.0 * d)
        / (1.0 - f)
        * math.sqrt(math.exp(ll) * (1.0 / eta + 1.0) - 2.0)
    ) ** (-0.5)
    return eps_op, f_max


def _elementary_fidelity(imp: ImperfectionSet, L0: float, n_max: int) -> float:
    res = generate_elementary("2D", imp, L0, n_max)
    return fidelity(res.rho_e, ghz_state(n_max))


def optimize_epsilon_numeric(
    imp: ImperfectionSet,
    L0: float,
    objective: str = "elementary-fidelity",
    n_max: int = 7,
    scan_max: float = 0.5,
    points: int = 25,
) -> EpsilonOptimum:
    """Grid-then-refine maximizer of a fidelity objective over eps_a.

    objective "elementary-fidelity" maximizes the triangle fidelity at
    the given truncation; "level-I-fidelity" maximizes the fidelity
    after one static nesting level (evaluated at n_max capped to 3 for
    tractability). A flat objective, or a maximizer pinned to the upper
    scan edge, is reported as degenerate rather than as an optimum.
    """
    from scipy.optimize import minimize_scalar

    if objective == "elementary-fidelity":
        def obj(e: float) -> float:
            return _elementary_fidelity(imp.with_eps_a(e), L0, n_max)
    elif objective == "level-I-fidelity":
        from .network import level_one_fidelity

        nm = min(n_max, 3)

        def obj(e: float) -> float:
            return level_one_fidelity(imp.with_eps_a(e), L0, nm)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        grid = np.linspace(scan_max / points, scan_max, points)
        vals = np.array([obj(e) for e in grid])
        spread = float(vals.max() - vals.min())
        best = int(np.argmax(vals))
        if spread < 1e-9:
            return EpsilonOptimum(float(grid[best]), float(vals[best]), True)
        lo = grid[max(best - 1, 0)]
        hi = grid[min(best + 1, points - 1)]
        res = minimize_scalar(
            lambda e: -obj(e),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-4},
        )
        eps_star = float(res.x)
        value = float(-res.fun)
    degenerate = bool(best == points - 1 and scan_max - eps_star < 1e-3)
    return EpsilonOptimum(eps_star, value, degenerate)


def efficiency_from_cooperativity(C: float) -> float:
    """Storage efficiency eta = C / (1 + C)."""
    if C < 0:
        raise ValueError("cooperativity must be >= 0")
    if math.isinf(C):
        return 1.0
    return C / (1.0 + C)
