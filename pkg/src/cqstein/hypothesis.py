"""Optimal type-II errors for states, CQ channels and free families.

For two channels the optimum over input distributions and tests has the exact
one-dimensional dual

    beta_eps(Phi1 || Phi2) = max_{t >= 0} t (1 - eps) - max_x Tr (t Phi1(x) - Phi2(x))_+ ,

a concave function of t maximized on [0, 1/eps].  An optimal plan is read off
the supporting line at the maximizer.  Against a family, the min-max value is
an SDP over K = sum_x p(x) |x><x| (x) T_x and the max-min value maximizes
the two-channel quantity over family members; the two are computed separately.
"""

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import CQChannel, bloch_state, channel_power, check_same_shape
from .divergence import divergence_to_family
from .hermit import hermitize, psd_indicator, support_projector

GAP_FLAG = 1e-3


@dataclass(frozen=True)
class ErrorPair:
    type1: float
    type2: float


@dataclass(frozen=True)
class TestPlan:
    """Input distribution ``p`` (aligned with ``labels``) and accept operators ``T``."""

    labels: tuple
    p: np.ndarray
    T: tuple
    meta: dict = field(default_factory=dict, compare=False)

    __test__ = False  # not a pytest test class

    def validate(self, tol=1e-10):
        p = np.asarray(self.p)
        if np.any(p < -tol) or abs(p.sum() - 1) > 1e-12 * max(1, p.size):
            return False
        for T in self.T:
            w = np.linalg.eigvalsh(hermitize(T))
            if w[0] < -tol or w[-1] > 1 + tol:
                return False
        return True

    def type1(self, phi):
        return float(sum(pi * (1 - np.real(np.vdot(T, o))) for pi, T, o in zip(self.p, self.T, phi.outputs)))

    def type2(self, phi):
        return float(sum(pi * np.real(np.vdot(T, o)) for pi, T, o in zip(self.p, self.T, phi.outputs)))

    def errors(self, phi1, phi2):
        return ErrorPair(self.type1(phi1), self.type2(phi2))

    def worst_type2(self, F):
        """Exact adversary response: max over the family of the type-II error."""
        if F.kind == "replacer":
            M = hermitize(sum(pi * T for pi, T in zip(self.p, self.T)))
            return float(np.linalg.eigvalsh(M)[-1])
        return max(self.type2(g) for g in F.generators)

    @property
    def support(self):
        return [lab for lab, pi in zip(self.labels, self.p) if pi > 0]


@dataclass(frozen=True)
class BetaResult:
    """``value`` is attained by ``plan``; ``lower`` is the dual value; iterating gives (value, plan)."""

    value: float
    plan: TestPlan
    lower: float
    t_star: float

    def __iter__(self):
        return iter((self.value, self.plan))


def _stack(phi):
    return np.array([hermitize(o) for o in phi.outputs])


def _dual_objective(t, A1, A2, eps):
    w = np.linalg.eigvalsh(t * A1 - A2)
    return t * (1 - eps) - float(np.max(np.sum(np.clip(w, 0.0, None), axis=-1)))


def _beta_eps0(phi1, phi2):
    vals, projs = [], []
    for a, b in zip(phi1.outputs, phi2.outputs):
        P = support_projector(a)
        projs.append(P)
        vals.append(float(np.real(np.vdot(P, b))))
    i = int(np.argmin(vals))
    p = np.zeros(phi1.n_inputs)
    p[i] = 1.0
    T = [np.zeros_like(projs[0]) for _ in projs]
    T[i] = projs[i]
    plan = TestPlan(phi1.labels, p, tuple(T), {"mixing": False})
    return BetaResult(vals[i], plan, vals[i], math.inf)


def _golden_max(f, a, b, rel=1e-15):
    """Maximize a concave function on [a, b] by golden-section search."""
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > rel * (1 + abs(a) + abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    cands = [(fc, c), (fd, d), (f(a), a), (f(b), b)]
    return max(cands)[1]


def _slope(t, A1, A2, eps):
    """Right derivative of the dual objective: (1 - eps) - Tr[P A1] on the active input."""
    best, tr = -math.inf, 0.0
    for a, b in zip(A1, A2):
        w, V = np.linalg.eigh(t * a - b)
        pos = float(np.sum(np.clip(w, 0.0, None)))
        Vk = V[:, w > 0]
        val = float(np.real(np.vdot(Vk @ Vk.conj().T, a)))
        if pos > best + 1e-15 or (abs(pos - best) <= 1e-15 and val > tr):
            best, tr = pos, val
    return (1 - eps) - tr


def _refine_t(t, A1, A2, eps, iters=200):
    """Bisect on the slope sign near t.

    On a smooth maximum golden-section only pins t to about sqrt(machine eps);
    the slope changes sign at the maximizer, which bisection locates to rounding.
    """
    f = lambda u: _dual_objective(u, A1, A2, eps)
    width = 1e-5 * (1 + t)
    lo, hi = max(t - width, 0.0), t + width
    if not (_slope(lo, A1, A2, eps) > 0 > _slope(hi, A1, A2, eps)):
        return t
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _slope(mid, A1, A2, eps) > 0:
            lo = mid
        else:
            hi = mid
    cand = 0.5 * (lo + hi)
    return cand if f(cand) >= f(t) - 1e-15 else t


def _operating_points(t, A1, A2):
    """Threshold tests on t A1 - A2 for the inputs attaining (nearly) the max positive part.

    Several kernel tolerances are tried so that tests on both sides of the budget
    are present even when t is only accurate to rounding.
    """
    pos, decs = [], []
    for a, b in zip(A1, A2):
        w, V = np.linalg.eigh(t * a - b)
        decs.append((w, V))
        pos.append(float(np.sum(np.clip(w, 0.0, None))))
    top = max(pos)
    scale = 1 + t
    points = []
    for i, (w, V) in enumerate(decs):
        if pos[i] < top - 1e-6 * scale:
            continue
        seen = set()
        for tau in (1e-10, 1e-8, 1e-6):
            for keep in (w > tau * scale, w >= -tau * scale):
                key = tuple(keep)
                if key in seen:
                    continue
                seen.add(key)
                Vk = V[:, keep]
                T = Vk @ Vk.conj().T
                alpha = 1 - float(np.real(np.vdot(T, A1[i])))
                beta = float(np.real(np.vdot(T, A2[i])))
                points.append((alpha, beta, i, T))
    return points


def _best_mixture(points, eps, D):
    """Cheapest mixture of at most two operating points with type-I error at most eps."""
    zero, one = np.zeros((D, D), dtype=complex), np.eye(D, dtype=complex)
    i0 = points[0][2]
    pts = points + [(1.0, 0.0, i0, zero), (0.0, 1.0, i0, one)]
    best = None
    for j, pj in enumerate(pts):
        for k, pk in enumerate(pts):
            if k < j:
                continue
            lo, hi = (pj, pk) if pj[0] <= pk[0] else (pk, pj)
            if lo[0] > eps:
                continue
            if hi[0] <= eps or hi[0] == lo[0]:
                parts = [(1.0, hi)] if hi[1] <= lo[1] and hi[0] <= eps else [(1.0, lo)]
            else:
                q = (hi[0] - eps) / (hi[0] - lo[0])
                parts = [(q, lo), (1 - q, hi)]
            val = sum(w * pt[1] for w, pt in parts)
            if best is None or val < best[0] - 1e-15:
                best = (val, parts)
    return best[1]


def beta_channel(phi1, phi2, eps):
    """Optimal type-II error between two CQ channels at type-I budget ``eps``."""
    check_same_shape(phi1, phi2)
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    if eps == 0:
        return _beta_eps0(phi1, phi2)
    A1, A2 = _stack(phi1), _stack(phi2)
    t = _golden_max(lambda t: _dual_objective(t, A1, A2, eps), 0.0, 1.0 / eps)
    t = _refine_t(t, A1, A2, eps)
    lower = _dual_objective(t, A1, A2, eps)
    if lower < 0:
        t, lower = 0.0, 0.0
    D = A1.shape[1]
    parts = _best_mixture(_operating_points(t, A1, A2), eps, D)
    p = np.zeros(phi1.n_inputs)
    acc = {}
    for wgt, (_, _, i, T) in parts:
        if wgt <= 0:
            continue
        p[i] += wgt
        acc[i] = acc.get(i, 0) + wgt * T
    T_list = [np.zeros((D, D), dtype=complex) for _ in range(phi1.n_inputs)]
    for i, S in acc.items():
        T_list[i] = hermitize(S / p[i])
    p = p / p.sum()
    plan = TestPlan(phi1.labels, p, tuple(T_list), {"mixing": int(np.sum(p > 0)) > 1, "t_star": t})
    value = plan.type2(phi2)
    return BetaResult(value, plan, min(lower, value), t)


@dataclass(frozen=True)
class NPCurve:
    """Neyman-Pearson trade-off beta(eps) between two states, evaluated exactly on demand."""

    rho1: np.ndarray
    rho2: np.ndarray

    def __call__(self, eps):
        return beta_state(self.rho1, self.rho2, eps)

    def sample(self, grid=None):
        grid = np.linspace(0, 1, 101) if grid is None else np.asarray(grid)
        return [(float(e), 0.0 if e >= 1 else self(float(e))) for e in grid]

    def breakpoints(self, n=201):
        """Sampled (eps, beta) pairs where the curve bends by more than 1e-9."""
        pts = self.sample(np.linspace(0, 1, n))
        keep = [pts[0]]
        for a, b, c in zip(pts, pts[1:], pts[2:]):
            bend = (c[1] - b[1]) / (c[0] - b[0]) - (b[1] - a[1]) / (b[0] - a[0])
            if abs(bend) > 1e-9:
                keep.append(b)
        keep.append(pts[-1])
        return keep


def np_curve(rho1, rho2):
    return NPCurve(hermitize(rho1), hermitize(rho2))


def beta_state(rho1, rho2, eps):
    """Optimal type-II error between two states."""
    one = lambda r: CQChannel(["0"], [r], validate=False)
    return beta_channel(one(rho1), one(rho2), eps).value


# --- against a family ---------------------------------------------------------------


@dataclass(frozen=True)
class FamilyBetaCertificate:
    upper: float
    lower: float
    gap: float
    flagged: bool
    plan: TestPlan
    adversary: CQChannel
    sdp_adversary: object
    minmax_sdp: float
    maxmin_upper: float = None


@dataclass(frozen=True)
class FamilyBeta:
    value: float
    certificate: FamilyBetaCertificate

    def __iter__(self):
        return iter((self.value, self.certificate))


def _minmax_sdp(phi, F, eps):
    import cvxpy as cp

    X, D = phi.n_inputs, phi.dim
    S = [cp.Variable((D, D), hermitian=True) for _ in range(X)]
    p = cp.Variable(X, nonneg=True)
    I = np.eye(D)
    cons = [cp.sum(p) == 1]
    for x in range(X):
        cons += [S[x] >> 0, p[x] * I - S[x] >> 0]
    cons.append(sum(cp.real(cp.trace(S[x] @ phi.outputs[x])) for x in range(X)) >= 1 - eps)
    if F.kind == "replacer":
        s = cp.Variable()
        adv = s * I - sum(S) >> 0
        cons.append(adv)
        obj = s
    else:
        s = cp.Variable()
        adv = [s >= sum(cp.real(cp.trace(S[x] @ g.outputs[x])) for x in range(X)) for g in F.generators]
        cons += adv
        obj = s
    prob = cp.Problem(cp.Minimize(obj), cons)
    # Inaccurate solves are tolerated: the plan is repaired and re-evaluated exactly.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"min-max SDP failed with status {prob.status}")
    pv = np.clip(np.asarray(p.value, dtype=float), 0.0, None)
    Svals = [hermitize(Sx.value) for Sx in S]
    if F.kind == "replacer":
        Z = hermitize(adv.dual_value)
        w, V = np.linalg.eigh(Z)
        Z = (V * np.clip(w, 0, None)) @ V.conj().T
        dual_adv = Z / np.trace(Z).real
    else:
        lam = np.clip(np.array([float(c.dual_value) for c in adv]), 0, None)
        dual_adv = lam / lam.sum()
    return float(prob.value), pv, Svals, dual_adv


def _plan_from_sdp(phi, pv, Svals, eps):
    """Recover a feasible plan: T_x = S_x / p_x clipped to [0, 1], then mix with identity if needed."""
    pv = np.where(pv < 1e-12, 0.0, pv)
    pv = pv / pv.sum()
    D = phi.dim
    T = []
    for px, Sx in zip(pv, Svals):
        if px == 0:
            T.append(np.zeros((D, D), dtype=complex))
            continue
        w, V = np.linalg.eigh(hermitize(Sx / px))
        T.append(hermitize((V * np.clip(w, 0.0, 1.0)) @ V.conj().T))
    plan = TestPlan(phi.labels, pv, tuple(T))
    a = plan.type1(phi)
    if a > eps:
        lam = 1 - eps / a
        T = [hermitize((1 - lam) * Tx + lam * np.eye(D)) for Tx in T]
        plan = TestPlan(phi.labels, pv, tuple(T))
    return plan


def _bloch_coords(rho):
    return np.array([2 * rho[0, 1].real, -2 * rho[0, 1].imag, (rho[0, 0] - rho[1, 1]).real])


_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _ellipsoid_max(oracle, feas_cut, center, radius, tol=1e-9, max_iter=4000):
    """Maximize a concave function with the central-cut ellipsoid method.

    ``oracle(x)`` returns (certified value, attained value, supergradient);
    ``feas_cut(x)`` returns None inside the domain or a vector a with a.(y - x) <= 0
    for every feasible y.  Returns (best certified value, argmax, upper bound on the max).
    """
    c = np.array(center, dtype=float)
    m = c.size
    P = np.eye(m) * radius ** 2
    best, best_x, ub = -math.inf, c.copy(), math.inf
    for _ in range(max_iter):
        a = feas_cut(c)
        if a is None:
            lo, val, g = oracle(c)
            if lo > best:
                best, best_x = lo, c.copy()
            width = math.sqrt(max(g @ P @ g, 0.0))
            ub = min(ub, val + width)
            if ub - best <= tol:
                break
            h = -g
        else:
            h = a
        hPh = h @ P @ h
        if hPh <= 1e-300:
            break
        gt = P @ h / math.sqrt(hPh)
        c = c - gt / (m + 1)
        P = (m * m / (m * m - 1.0)) * (P - (2.0 / (m + 1)) * np.outer(gt, gt))
    return best, best_x, ub


def _bisect_max(oracle, lo_x, hi_x, tol=1e-13, max_iter=200):
    """Maximize a concave function of one variable on an interval using supergradient signs."""
    best, best_x, ub = -math.inf, lo_x, math.inf
    a, b = lo_x, hi_x
    for x in (a, b):
        lo, _, _ = oracle(x)
        if lo > best:
            best, best_x = lo, x
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        lo, val, g = oracle(mid)
        if lo > best:
            best, best_x = lo, mid
        ub = min(ub, val + abs(g) * (b - a) / 2)
        if g > 0:
            a = mid
        else:
            b = mid
        if b - a <= tol:
            break
    return best, best_x, max(ub, best)


def _maxmin(phi, F, eps, hint=None, tol=1e-9):
    """max over family members of the two-channel beta.

    Concave in the member; maximized by ellipsoid (qubit replacers, small hulls)
    or projected supergradient ascent, with supergradients read off optimal plans.
    Returns (best certified value, maximizing member, upper bound or None).
    """

    def at(member):
        r = beta_channel(phi, member, eps)
        return r

    if F.kind == "replacer" and F.dim == 1:
        m = F.member(np.eye(1))
        return at(m).lower, m, at(m).value

    if F.kind == "replacer" and F.dim == 2:

        def oracle(x):
            r = at(F.member(bloch_state(x)))
            G = hermitize(sum(pi * T for pi, T in zip(r.plan.p, r.plan.T)))
            return r.lower, r.value, np.array([0.5 * np.real(np.vdot(s, G)) for s in _PAULI])

        def cut(x):
            nx = np.linalg.norm(x)
            return None if nx <= 1 else x / nx

        start = np.zeros(3) if hint is None else _bloch_coords(hint)
        best, x, ub = _ellipsoid_max(oracle, cut, np.zeros(3), 1.0 + 1e-9, tol)
        if hint is not None:
            lo_h = at(F.member(hint)).lower
            if lo_h > best:
                best, x = lo_h, start
        if np.linalg.norm(x) > 1:
            x = x / np.linalg.norm(x)
        return best, F.member(bloch_state(x)), ub

    if F.kind == "hull" and len(F.generators) <= 4:
        K = len(F.generators)

        def weights(u):
            return np.concatenate([u, [1.0 - np.sum(u)]])

        def oracle(u):
            w = np.clip(weights(u), 0.0, None)
            w = w / w.sum()
            r = at(F.member(w))
            g = np.array([r.plan.type2(gen) for gen in F.generators])
            return r.lower, r.value, g[:-1] - g[-1]

        if K == 1:
            m = F.generators[0]
            r = at(m)
            return r.lower, m, r.value
        if K == 2:
            best, a, ub = _bisect_max(lambda a: (lambda o: (o[0], o[1], float(o[2][0])))(oracle(np.array([a]))), 0.0, 1.0, tol=1e-13)
            return best, F.member([a, 1 - a]), ub

        def cut(u):
            if np.any(u < 0):
                e = np.zeros(K - 1)
                e[int(np.argmin(u))] = -1.0
                return e
            if np.sum(u) > 1:
                return np.ones(K - 1)
            return None

        best, u, ub = _ellipsoid_max(oracle, cut, np.full(K - 1, 1.0 / K), 1.0, tol)
        w = np.clip(weights(u), 0.0, None)
        w = w / w.sum()
        member = F.member(w)
        if hint is not None:
            lo_h = at(F.member(hint)).lower
            if lo_h > best:
                best, member = lo_h, F.member(hint)
        return best, member, ub

    start = F.full_rank_witness if hint is None else F.member(hint)
    best, member = _supergradient_ascent(phi, F, eps, start, at(start).lower)
    return best, member, None


def _weights_of(member, F):
    if member is F.full_rank_witness:
        return np.full(len(F.generators), 1.0 / len(F.generators))
    from .channel import hull_distance

    return hull_distance(F, member)[1]


def _project_density(M):
    """Euclidean projection of a Hermitian matrix onto density matrices."""
    w, V = np.linalg.eigh(hermitize(M))
    return hermitize((V * _project_simplex(w)) @ V.conj().T)


def _project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.nonzero(u * np.arange(1, len(v) + 1) > (css - 1))[0][-1]
    theta = (css[k] - 1) / (k + 1.0)
    return np.clip(v - theta, 0.0, None)


def _supergradient_ascent(phi, F, eps, member, value, iters=150):
    """Projected supergradient ascent; the supergradient is read off the optimal plan."""
    best, best_member = value, member
    if F.kind == "replacer":
        x = member.outputs[0]
    else:
        x = _weights_of(member, F)
    for k in range(iters):
        cur = F.member(x)
        r = beta_channel(phi, cur, eps)
        if r.lower > best:
            best, best_member = r.lower, cur
        step = 0.5 / math.sqrt(k + 1)
        if F.kind == "replacer":
            G = hermitize(sum(pi * T for pi, T in zip(r.plan.p, r.plan.T)))
            x = _project_density(x + step * G)
        else:
            g = np.array([r.plan.type2(gen) for gen in F.generators])
            x = _project_simplex(x + step * g)
    return best, best_member


def beta_family(phi, F, eps, use_dual_hint=True, gap_flag=GAP_FLAG):
    """Optimal type-II error against a free family, computed as min-max and as max-min.

    The min-max side solves an SDP, recovers a feasible plan and evaluates its
    exact worst-case type-II error (``upper``).  The max-min side maximizes the
    exact two-channel value over family members (``lower``), optionally seeded
    with the SDP's dual adversary.  ``value`` is ``upper``: it is attained by
    the returned plan.
    """
    if phi.labels != F.labels or phi.dim != F.dim:
        raise ValueError("channel shape does not match the family")
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    sdp_val, pv, Svals, dual_adv = _minmax_sdp(phi, F, eps)
    plan = _plan_from_sdp(phi, pv, Svals, eps)
    upper = plan.worst_type2(F)
    lower, adversary, maxmin_upper = _maxmin(phi, F, eps, hint=dual_adv if use_dual_hint else None)
    gap = upper - lower
    cert = FamilyBetaCertificate(
        upper=upper,
        lower=lower,
        gap=gap,
        flagged=bool(gap > gap_flag),
        plan=plan,
        adversary=adversary,
        sdp_adversary=dual_adv,
        minmax_sdp=sdp_val,
        maxmin_upper=maxmin_upper,
    )
    return FamilyBeta(upper, cert)


def beta_monotone_check(phi1, phi2, theta, eps, tol=1e-8):
    """beta is non-decreasing under a superchannel: returns (holds, before, after)."""
    from .conversion import apply

    before = beta_channel(phi1, phi2, eps)
    after = beta_channel(apply(theta, phi1), apply(theta, phi2), eps)
    # Compare the attained value after against the dual (lower) value before.
    return after.value >= before.lower - tol, before.lower, after.value


def renyi_converse_bound(phi, F, eps, alpha_grid=(1.5, 2.0, 3.0)):
    """min over alpha of D_alpha(phi || F) + alpha/(alpha - 1) log(1/(1 - eps)), in nats."""
    if any(not a > 1 for a in alpha_grid):
        raise ValueError("every alpha must exceed 1")
    best = math.inf
    for a in alpha_grid:
        d = divergence_to_family(phi, F, alpha=a).value
        best = min(best, d + a / (a - 1) * math.log(1 / (1 - eps)))
    return best


def info_spectrum_errors(phi1, phi2, p, R, n=1):
    """Errors of the threshold tests T_x = {phi1(x) >= e^{R n} phi2(x)} under inputs ``p``."""
    check_same_shape(phi1, phi2)
    p = np.asarray(p, dtype=float)
    T = [psd_indicator(a, math.exp(R * n) * b) for a, b in zip(phi1.outputs, phi2.outputs)]
    plan = TestPlan(phi1.labels, p, tuple(T))
    return plan.errors(phi1, phi2), plan


# --- Stein scan ---------------------------------------------------------------------


@dataclass(frozen=True)
class SteinScanRow:
    n: int
    lower_exponent: float
    upper_exponent: float
    reference: float
    beta_upper: float
    beta_lower: float
    minimax_gap: float
    flagged: bool


def stein_scan(phi, F, eps, n_max, alpha_grid=(1.01, 1.05, 1.1, 1.25, 1.5, 2.0, 3.0), n_guard=4):
    """Finite-n exponents: achieved lower, Renyi converse upper and the D-to-family reference."""
    if n_max > n_guard:
        raise ValueError(f"n_max={n_max} exceeds the size guard {n_guard}")
    rows = []
    for n in range(1, n_max + 1):
        phin, Fn = channel_power(phi, n), F.power(n)
        fb = beta_family(phin, Fn, eps)
        c = fb.certificate
        lower = -math.log(c.upper) / n if c.upper > 0 else math.inf
        upper = renyi_converse_bound(phin, Fn, eps, alpha_grid) / n
        ref = divergence_to_family(phin, Fn)
        rows.append(
            SteinScanRow(
                n=n,
                lower_exponent=lower,
                upper_exponent=upper,
                reference=ref.value / n,
                beta_upper=c.upper,
                beta_lower=c.lower,
                minimax_gap=c.gap,
                flagged=bool(c.flagged or ref.flagged),
            )
        )
    return rows


SCAN_COLUMNS = ("n", "lower", "upper", "reference", "beta_upper", "beta_lower", "minimax_gap", "flagged")


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    return f"{v:.12g}"


def scan_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_COLUMNS)
    for r in rows:
        w.writerow(
            [_fmt(x) for x in (r.n, r.lower_exponent, r.upper_exponent, r.reference, r.beta_upper, r.beta_lower, r.minimax_gap, r.flagged)]
        )
    return buf.getvalue()


def scan_json(rows):
    return json.dumps([dict(zip(SCAN_COLUMNS, (r.n, r.lower_exponent, r.upper_exponent, r.reference, r.beta_upper, r.beta_lower, r.minimax_gap, r.flagged))) for r in rows], indent=1)


# --- update-mixture constructions -------------------------------------------------------


def epsilon_0(eps, eps_tilde, R1, R2):
    """Slack (eps - eps_tilde)/(1 - eps) (R2 - R1) used by the update step."""
    if not (0 < eps < 1 and 0 < eps_tilde < eps):
        raise ValueError("need 0 < eps_tilde < eps < 1")
    return (eps - eps_tilde) / (1 - eps) * (R2 - R1)


def update_mix(phi_free_star, phi2, phi_full_power, F=None):
    """Equal-weight mixture of three free channels; membership is checked when ``F`` is given."""
    check_same_shape(phi_free_star, phi2)
    check_same_shape(phi_free_star, phi_full_power)
    out = CQChannel(
        phi2.labels,
        [(a + b + c) / 3 for a, b, c in zip(phi_free_star.outputs, phi2.outputs, phi_full_power.outputs)],
    )
    if F is not None and not F.contains(out):
        raise ValueError("mixture is not a member of the family")
    return out


@dataclass(frozen=True)
class UpdateSplit:
    Pi1: tuple
    Pi2: tuple
    Pi3: tuple
    bound: np.ndarray
    measured: np.ndarray
    applicable: bool

    @property
    def holds(self):
        return bool(np.all(self.measured <= self.bound + 1e-8))


def update_split(phi_t, phi_free_t, R1, R2, C_prime, n=1, eps0=None, eps2=1e-3, eps=0.1, eps_tilde=0.05, comm_tol=1e-9):
    """Three-way split by the thresholds e^{(R1+eps2) n} and e^{(R2+eps0+eps2) n}.

    Returns the projections, the per-input bound
    (R1+eps2) + (R2-R1+eps0) Tr[T1 phi] + (C' - R2 - eps0 - eps2) Tr[T2 phi]
    and the measured (1/n) D(phi_t(x) || phi_free_t(x)).  The bound needs
    phi_free_t >= e^{-C' n}, reported by ``applicable``.
    """
    from .divergence import rel_entropy

    check_same_shape(phi_t, phi_free_t)
    for lab, a, b in zip(phi_t.labels, phi_t.outputs, phi_free_t.outputs):
        c = float(np.max(np.abs(a @ b - b @ a)))
        if c > comm_tol:
            raise ValueError(f"outputs at input {lab!r} do not commute (commutator {c:.3e})")
    if eps0 is None:
        eps0 = epsilon_0(eps, eps_tilde, R1, R2)
    a_thr = R1 + eps2
    b_thr = R2 + eps0 + eps2
    P1, P2, P3, bound, meas = [], [], [], [], []
    applicable = True
    for a, b in zip(phi_t.outputs, phi_free_t.outputs):
        T1 = psd_indicator(a, math.exp(a_thr * n) * b)
        T2 = psd_indicator(a, math.exp(b_thr * n) * b)
        I = np.eye(a.shape[0])
        P1.append(I - T1)
        P2.append(T1 - T2)
        P3.append(T2)
        t1 = float(np.real(np.vdot(T1, a)))
        t2 = float(np.real(np.vdot(T2, a)))
        bound.append(a_thr + (b_thr - a_thr) * t1 + (C_prime - b_thr) * t2)
        meas.append(rel_entropy(a, b).value / n)
        if np.linalg.eigvalsh(hermitize(b))[0] < math.exp(-C_prime * n) - 1e-12:
            applicable = False
    return UpdateSplit(tuple(P1), tuple(P2), tuple(P3), np.array(bound), np.array(meas), applicable)
