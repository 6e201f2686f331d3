"""Pinching maps, spectral rounding, eigenvalue counting and operator-inequality transfers."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import CQChannel, check_same_shape
from .divergence import channel_divergence
from .hermit import eig_hermitian, hermitize, min_eig, op_leq


@dataclass(frozen=True)
class PinchingMap:
    """Spectral projectors of a reference operator, grouped by clustered eigenvalue."""

    projectors: tuple
    values: tuple

    @property
    def J(self):
        return len(self.projectors)

    @staticmethod
    def of(reference):
        dec = eig_hermitian(reference)
        return PinchingMap(tuple(dec.projectors()), tuple(dec.group_values()))

    def __call__(self, sigma):
        S = np.asarray(sigma, dtype=complex)
        return hermitize(sum(P @ S @ P for P in self.projectors))


def pinch(reference, sigma):
    """sum_j P_j sigma P_j over the eigenprojectors of ``reference``."""
    reference, sigma = np.asarray(reference), np.asarray(sigma)
    if reference.shape != sigma.shape:
        raise ValueError(f"dimension mismatch {reference.shape} vs {sigma.shape}")
    return PinchingMap.of(reference)(sigma)


def pinching_superchannel(phi2, phi1):
    """CQ channel x -> pinch(phi2(x), phi1(x))."""
    check_same_shape(phi1, phi2)
    return CQChannel(phi1.labels, [pinch(r, s) for r, s in zip(phi2.outputs, phi1.outputs)], validate=False)


@dataclass(frozen=True)
class RoundingPlan:
    """Lattice rounding at copy count ``n`` and rate ``C`` (eigenvalue floor e^{-C n})."""

    n: int
    C: float

    def __post_init__(self):
        if self.n < 1 or not self.C > 0:
            raise ValueError("rounding plan needs n >= 1 and C > 0")

    @property
    def floor(self):
        return math.exp(-self.C * self.n)


def lattice_index(lam, plan):
    """ceil(n + log(lam)/C): the lattice slot of an eigenvalue, snapping near-integers first."""
    u = plan.n + math.log(lam) / plan.C
    r = round(u)
    if abs(u - r) <= 1e-12 * max(1.0, abs(u)):
        u = r
    return int(math.ceil(u))


def round_state(rho, plan, slack=1e-10):
    """Rounded state with e^{-C} rho <= out <= e^{C} rho and at most n+1 distinct eigenvalues."""
    dec = eig_hermitian(rho)
    vals = dec.group_values()
    if vals[0] < plan.floor - slack:
        raise ValueError(f"eigenvalue {vals[0]:.6g} is below the rounding floor e^(-C n) = {plan.floor:.6g}")
    f = []
    for lam in vals:
        k = min(max(lattice_index(max(lam, plan.floor), plan), 0), plan.n)
        f.append(math.exp(-plan.C * plan.n + plan.C * k))
    V = dec.eigenvectors
    diag = np.empty(len(dec.eigenvalues))
    for g, fv in zip(dec.groups, f):
        diag[list(g)] = fv
    out = (V * diag) @ V.conj().T
    return hermitize(out / diag.sum())


def distinct_count(A):
    return eig_hermitian(A).n_distinct


def distinct_count_channel(phi, n, x_seq, n_max=5):
    """Distinct eigenvalue clusters of phi^{(x) n}(x_seq) and the counting bound (n+1)^(X+D-1)."""
    if n > n_max:
        raise ValueError(f"n={n} exceeds the size guard {n_max}")
    x_seq = list(x_seq)
    if len(x_seq) != n:
        raise ValueError("x_seq must have length n")
    op = phi(x_seq[0])
    for x in x_seq[1:]:
        op = np.kron(op, phi(x))
    bound = (n + 1) ** (phi.n_inputs + phi.dim - 1)
    return distinct_count(op), bound


def distinct_count_all(phi, n, n_max=5):
    """max over x_seq of the distinct count, with the bound."""
    worst = 0
    for seq in itertools.product(phi.labels, repeat=n):
        c, bound = distinct_count_channel(phi, n, seq, n_max)
        worst = max(worst, c)
    return worst, (n + 1) ** (phi.n_inputs + phi.dim - 1)


@dataclass(frozen=True)
class ApproximatePair:
    phi1: CQChannel
    phi2: CQChannel
    J: int


def approximate_pair(phi1, phi2, plan):
    """Round phi2 per input and pinch phi1 against it; J is the measured max cluster count."""
    check_same_shape(phi1, phi2)
    for lab, o in zip(phi2.labels, phi2.outputs):
        if min_eig(o) < plan.floor - 1e-10:
            raise ValueError(f"output {lab!r} violates the floor e^(-C n) = {plan.floor:.6g}")
    rounded = phi2.map_outputs(lambda o: round_state(o, plan), validate=False)
    pinched = pinching_superchannel(rounded, phi1)
    J = max(distinct_count(o) for o in rounded.outputs)
    return ApproximatePair(pinched, rounded, J)


def approximation_checks(phi1, phi2, pair, plan, tol=1e-9):
    """Finite-n consequences of the approximation, each as (holds, slack)."""
    C = plan.C
    comm = max(float(np.max(np.abs(a @ b - b @ a))) for a, b in zip(pair.phi1.outputs, pair.phi2.outputs))
    lo = min(min_eig(t - math.exp(-C) * o) for t, o in zip(pair.phi2.outputs, phi2.outputs))
    hi = min(min_eig(math.exp(C) * o - t) for t, o in zip(pair.phi2.outputs, phi2.outputs))
    d_tt = channel_divergence(pair.phi1, pair.phi2).value
    d_1t = channel_divergence(phi1, pair.phi2).value
    d_12 = channel_divergence(phi1, phi2).value
    return {
        "commute": (comm <= tol, comm),
        "sandwich_lower": (lo >= -tol, lo),
        "sandwich_upper": (hi >= -tol, hi),
        "pinching_lower": (d_tt <= d_1t + tol, d_1t - d_tt),
        "pinching_upper": (d_1t <= d_tt + math.log(pair.J) + tol, d_tt + math.log(pair.J) - d_1t),
        "rounding_shift": (abs(d_1t - d_12) <= C + tol, C - abs(d_1t - d_12)),
    }


@dataclass(frozen=True)
class ShiftVerdict:
    applicable: dict
    holds: dict
    values: dict

    @property
    def ok(self):
        return all(self.holds[k] for k in self.holds if self.applicable[k])


def divergence_shift_bounds(phi1, phi2, phi2p, C_lo, C_hi, C=None, tol=1e-9):
    """Check divergence transfers implied by operator inequalities.

    ``phi2p >= e^{-C_lo} phi2`` gives D(phi1||phi2p) <= D(phi1||phi2) + C_lo;
    ``phi2p <= e^{C_hi} phi2`` gives D(phi1||phi2p) >= D(phi1||phi2) - C_hi;
    ``phi1 <= e^{C} phi2`` gives D(phi1||phi2) <= C.  A hypothesis that fails
    marks its conclusion inapplicable instead of failed.
    """
    check_same_shape(phi1, phi2)
    check_same_shape(phi1, phi2p)
    d = channel_divergence(phi1, phi2).value
    dp = channel_divergence(phi1, phi2p).value
    pairs = list(zip(phi1.outputs, phi2.outputs, phi2p.outputs))
    applicable = {
        "upper_shift": all(op_leq(math.exp(-C_lo) * b, c, tol) for _, b, c in pairs),
        "lower_shift": all(op_leq(c, math.exp(C_hi) * b, tol) for _, b, c in pairs),
    }
    holds = {"upper_shift": dp <= d + C_lo + tol, "lower_shift": dp >= d - C_hi - tol}
    if C is not None:
        applicable["bounded"] = all(op_leq(a, math.exp(C) * b, tol) for a, b, _ in pairs)
        holds["bounded"] = d <= C + tol
    return ShiftVerdict(applicable, holds, {"D": d, "D_prime": dp})

