"""Relative entropies, channel divergences, divergence to a free family, capacity.

All logarithms are natural.  A divergence whose first argument is not
supported inside the second is reported with ``support_ok=False`` and
``value=inf``; callers branch on the flag rather than doing arithmetic on it.
"""

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize, nnls

from .channel import CQChannel, channel_power, check_same_shape
from .hermit import (
    DomainError,
    eigvalsh,
    expm_h,
    frechet_derivative,
    hermitian_basis,
    hermitize,
    log_derivative,
    logm,
    matrix_function,
    powm,
    sqrtm_psd,
    support_projector,
    tau_supp,
)

FAMILY_GAP_TOL = 1e-6
# Eigenvalue clip used when a hull member is singular along the optimization path.
_HULL_EIG_CLIP = 1e-14


@dataclass(frozen=True)
class DivergenceValue:
    """A divergence in nats; ``support_ok`` is False exactly when it is infinite."""

    value: float
    support_ok: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __float__(self):
        return float(self.value)

    @staticmethod
    def infinite(**meta):
        return DivergenceValue(math.inf, False, meta)


@dataclass(frozen=True)
class FamilyDivergence(DivergenceValue):
    """Divergence to a free family with its certificate.

    ``value`` is attained by ``minimizer``; ``lower`` is a certified lower bound
    (``None`` when no certificate is available) and ``gap = value - lower``.
    """

    minimizer: CQChannel = None
    lower: float = None
    gap: float = None
    flagged: bool = False


@dataclass(frozen=True)
class CapacityReport:
    capacity: float
    optimizer_p: np.ndarray
    barycenter: np.ndarray
    iterations: int
    gap_bound: float
    upper: float
    converged: bool


def _support_contained(rho1, rho2):
    d = rho1.shape[0]
    P = support_projector(rho2)
    leak = float(np.real(np.trace(rho1 - P @ rho1 @ P)))
    return leak <= tau_supp(d)


def _xlogx_trace(rho):
    w = eigvalsh(rho)
    w = w[w > tau_supp(len(w))]
    return float(np.sum(w * np.log(w)))


def rel_entropy(rho1, rho2):
    """Umegaki relative entropy Tr[rho1 (log rho1 - log rho2)]."""
    A, B = hermitize(rho1), hermitize(rho2)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    if not _support_contained(A, B):
        return DivergenceValue.infinite()
    cross = float(np.real(np.trace(A @ logm(B, support_only=True))))
    return DivergenceValue(_xlogx_trace(A) - cross)


def sandwiched_renyi(rho1, rho2, alpha):
    """Sandwiched Renyi divergence for alpha > 1."""
    if not alpha > 1:
        raise DomainError(f"sandwiched Renyi divergence is only defined here for alpha > 1, got {alpha}")
    A, B = hermitize(rho1), hermitize(rho2)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    if not _support_contained(A, B):
        return DivergenceValue.infinite()
    gamma = (1 - alpha) / (2 * alpha)
    S = matrix_function(B, lambda x: np.power(x, gamma), support_only=True)
    M = hermitize(S @ A @ S)
    w = np.clip(eigvalsh(M), 0.0, None)
    Q = float(np.sum(w ** alpha))
    return DivergenceValue(math.log(Q) / (alpha - 1))


def _state_div(a, b, alpha):
    return rel_entropy(a, b) if alpha is None else sandwiched_renyi(a, b, alpha)


def channel_divergence(phi1, phi2, alpha=None):
    """max over inputs of D (or sandwiched D_alpha when ``alpha`` is given)."""
    check_same_shape(phi1, phi2)
    best, arg = -math.inf, None
    for lab, a, b in zip(phi1.labels, phi1.outputs, phi2.outputs):
        v = _state_div(a, b, alpha)
        if not v.support_ok:
            return DivergenceValue.infinite(argmax=lab)
        if v.value > best:
            best, arg = v.value, lab
    return DivergenceValue(best, True, {"argmax": arg})


def channel_renyi(phi1, phi2, alpha):
    return channel_divergence(phi1, phi2, alpha)


# --- divergence to a family -------------------------------------------------------


def _entropy(rho):
    return -_xlogx_trace(rho)


def _replacer_solve(phi, alpha, h0=None):
    """min over states rho of max_x D(phi(x) || rho), rho = exp(H)/Tr exp(H) on the joint support."""
    outs = phi.outputs
    P = support_projector(sum(outs))
    w, V = np.linalg.eigh(P)
    Vs = V[:, w > 0.5]
    r = Vs.shape[1]
    local = [hermitize(Vs.conj().T @ o @ Vs) for o in outs]
    basis = hermitian_basis(r)[1:]
    m = len(basis)
    B = np.array([b.ravel() for b in basis])  # m x r^2
    ents = [_entropy(o) for o in local]
    # Tr(phi_x b_k) for each x, k.
    F = np.array([[np.real(np.vdot(b, o)) for b in basis] for o in local])

    def state(h):
        H = np.tensordot(h, np.array(basis), axes=1) if m else np.zeros((r, r))
        H = hermitize(H)
        lw, U = np.linalg.eigh(H)
        e = np.exp(lw - lw.max())
        rho = (U * (e / e.sum())) @ U.conj().T
        return rho, H, lw.max() + math.log(e.sum())

    def g_all(h):
        rho, H, lse = state(h)
        return np.array([lse - float(np.real(np.vdot(H, o))) - s for o, s in zip(local, ents)])

    def g_alpha(h):
        rho, _, _ = state(h)
        return np.array([sandwiched_renyi(o, rho, alpha).value for o in local])

    if alpha is not None:
        roots = [sqrtm_psd(o) for o in local]
        bp = (1.0 - alpha) / alpha

    def grad_alpha(h):
        rho, H, _ = state(h)
        Hs = H - np.max(np.linalg.eigvalsh(H)) * np.eye(r)
        Z = float(np.real(np.trace(expm_h(Hs))))
        rows = []
        for R in roots:
            M = hermitize(R @ powm(rho, bp) @ R)
            wm, Um = np.linalg.eigh(M)
            wm = np.clip(wm, 0.0, None)
            Q = float(np.sum(wm**alpha))
            Ma = (Um * wm ** (alpha - 1.0)) @ Um.conj().T
            # d Q / d sigma, then through sigma = exp(H)/Z.
            Gs = alpha * frechet_derivative(rho, R @ Ma @ R, lambda x: x**bp, lambda x: bp * x ** (bp - 1.0))
            Gs = hermitize(Gs) / ((alpha - 1.0) * Q)
            GH = frechet_derivative(Hs, Gs, np.exp, np.exp) / Z - np.real(np.vdot(rho, Gs)) * rho
            rows.append(np.real(B @ hermitize(GH).conj().ravel()))
        return np.array(rows)

    def grad_all(h):
        rho, _, _ = state(h)
        rv = np.real(B.conj() @ rho.ravel())
        return rv[None, :] - F

    def embed(rho):
        return hermitize(Vs @ rho @ Vs.conj().T)

    if m == 0:
        rho = np.ones((1, 1), dtype=complex)
        vals = g_all(np.zeros(0)) if alpha is None else g_alpha(np.zeros(0))
        return embed(rho), float(max(vals)), np.zeros(0), {"iterations": 0, "status": "trivial"}

    h_start = np.zeros(m) if h0 is None else h0
    fun_g = g_all if alpha is None else g_alpha
    x0 = np.concatenate([h_start, [max(fun_g(h_start))]])
    cons = {"type": "ineq", "fun": lambda z: z[-1] - fun_g(z[:-1])}
    grad_fn = grad_all if alpha is None else grad_alpha
    cons["jac"] = lambda z: np.hstack([-grad_fn(z[:-1]), np.ones((len(outs), 1))])
    obj_jac = np.zeros(m + 1)
    obj_jac[-1] = 1.0
    res = minimize(
        lambda z: z[-1],
        x0,
        jac=lambda z: obj_jac,
        constraints=[cons],
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 2000},
    )
    h = res.x[:-1]
    value = float(max(fun_g(h)))
    # Keep the start if the solver wandered off.
    v0 = float(max(fun_g(h_start)))
    if v0 < value:
        h, value = h_start, v0
    rho, _, _ = state(h)
    return embed(rho), value, h, {"iterations": int(res.nit), "status": res.message}


def _holevo_chi(phi, p):
    rho = sum(pi * o for pi, o in zip(p, phi.outputs))
    total = 0.0
    for pi, o in zip(p, phi.outputs):
        if pi > 0:
            v = rel_entropy(o, rho)
            if not v.support_ok:
                return -math.inf
            total += pi * v.value
    return total


def _capacity_lower_from_state(phi, rho, value):
    """chi(p) for p fitted so that sum_x p_x phi(x) approximates the minimizer rho."""
    vals = np.array([rel_entropy(o, rho).value for o in phi.outputs])
    active = np.where(vals >= value - max(1e-6, 1e-4 * value))[0]
    cols = [np.concatenate([phi.outputs[i].real.ravel(), phi.outputs[i].imag.ravel(), [10.0]]) for i in active]
    A = np.array(cols).T
    b = np.concatenate([rho.real.ravel(), rho.imag.ravel(), [10.0]])
    q, _ = nnls(A, b)
    p = np.zeros(phi.n_inputs)
    if q.sum() <= 0:
        p[active[0]] = 1.0
    else:
        p[active] = q / q.sum()
    return _holevo_chi(phi, p), p


def _hull_member_outputs(F, w):
    return [sum(wk * g.outputs[i] for wk, g in zip(w, F.generators)) for i in range(F.n_inputs)]


def _clipped_logm(S):
    lw, U = np.linalg.eigh(hermitize(S))
    return (U * np.log(np.clip(lw, _HULL_EIG_CLIP, None))) @ U.conj().T


def _hull_solve(phi, F, alpha):
    K, X = len(F.generators), F.n_inputs
    G = [[hermitize(g.outputs[i]) for g in F.generators] for i in range(X)]
    ents = [_entropy(o) for o in phi.outputs]

    def g_vals(w):
        outs = []
        for i, o in enumerate(phi.outputs):
            S = sum(wk * Gk for wk, Gk in zip(w, G[i]))
            if alpha is None:
                outs.append(-ents[i] - float(np.real(np.vdot(o, _clipped_logm(S)))))
            else:
                v = sandwiched_renyi(o, S, alpha)
                outs.append(v.value if v.support_ok else 1e6)
        return np.array(outs)

    def g_grad(w):
        rows = []
        for i, o in enumerate(phi.outputs):
            S = hermitize(sum(wk * Gk for wk, Gk in zip(w, G[i])))
            lw = np.linalg.eigvalsh(S)
            S = S + max(0.0, _HULL_EIG_CLIP - lw[0]) * np.eye(S.shape[0])
            L = log_derivative(S, o)
            rows.append([-float(np.real(np.vdot(L, Gk))) for Gk in G[i]])
        return np.array(rows)

    w0 = np.full(K, 1.0 / K)
    z0 = np.concatenate([w0, [max(g_vals(w0))]])
    cons = [
        {
            "type": "ineq",
            "fun": lambda z: z[-1] - g_vals(z[:-1]),
            **({"jac": lambda z: np.hstack([-g_grad(z[:-1]), np.ones((X, 1))])} if alpha is None else {}),
        },
        {"type": "eq", "fun": lambda z: np.sum(z[:-1]) - 1.0, "jac": lambda z: np.concatenate([np.ones(K), [0.0]])},
    ]
    obj_jac = np.zeros(K + 1)
    obj_jac[-1] = 1.0
    res = minimize(
        lambda z: z[-1],
        z0,
        jac=lambda z: obj_jac,
        bounds=[(0.0, 1.0)] * K + [(None, None)],
        constraints=cons,
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 2000},
    )
    w = np.clip(res.x[:-1], 0.0, None)
    w = w / w.sum()
    member = F.member(w)
    value = channel_divergence(phi, member, alpha)
    base = channel_divergence(phi, F.full_rank_witness, alpha)
    if not value.support_ok or base.value < value.value:
        w, member, value = w0, F.full_rank_witness, base
    return member, float(value.value), w, {"iterations": int(res.nit), "status": res.message}


def _hull_lower(phi, F, w, value):
    """LP lower bound from the tangent planes of the convex g_x at w."""
    K, X = len(F.generators), F.n_inputs
    outs = _hull_member_outputs(F, w)
    rows, consts = [], []
    for i, o in enumerate(phi.outputs):
        S = hermitize(outs[i])
        if np.linalg.eigvalsh(S)[0] <= 1e-12:
            return None
        gx = rel_entropy(o, S).value
        L = log_derivative(S, o)
        grad = np.array([-float(np.real(np.vdot(L, g.outputs[i]))) for g in F.generators])
        rows.append(grad)
        consts.append(gx - grad @ w)
    # variables (w, t): minimize t subject to grad.w + c <= t, w in simplex.
    A_ub = np.hstack([np.array(rows), -np.ones((X, 1))])
    b_ub = -np.array(consts)
    A_eq = np.concatenate([np.ones(K), [0.0]])[None, :]
    c = np.zeros(K + 1)
    c[-1] = 1.0
    lp = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * K + [(None, None)], method="highs")
    if lp.status != 0:
        return None
    return float(min(lp.fun, value))


def divergence_to_family(phi, F, alpha=None, gap_tol=FAMILY_GAP_TOL):
    """min over the family of the channel divergence (D, or sandwiched D_alpha).

    Returns a ``FamilyDivergence`` whose ``value`` is attained by ``minimizer``.
    For D the lower bound is a dual certificate: the Holevo quantity of a fitted
    input distribution (replacers) or a tangent-plane LP (hulls).  For D_alpha
    the lower bound is the D certificate, since D_alpha >= D.
    """
    if phi.labels != F.labels or phi.dim != F.dim:
        raise ValueError("channel shape does not match the family")
    if F.lambda_min <= 0:
        raise ValueError("family lacks a full-rank witness")
    if F.kind == "replacer":
        rho, value, h, trace = _replacer_solve(phi, None)
        lower, p = _capacity_lower_from_state(phi, rho, value)
        trace["p_fit"] = p.tolist()
        if alpha is not None:
            rho, value, _, trace_a = _replacer_solve(phi, alpha, h0=h)
            trace = {"d_solve": trace, **trace_a}
        minimizer = CQChannel(phi.labels, [rho] * phi.n_inputs, validate=False)
    else:
        minimizer, value, w, trace = _hull_solve(phi, F, None)
        lower = _hull_lower(phi, F, w, value)
        trace["weights"] = w.tolist()
        if alpha is not None:
            minimizer, value, w, trace_a = _hull_solve(phi, F, alpha)
            trace = {"d_solve": trace, **trace_a, "weights": w.tolist()}
    value = max(value, 0.0)
    gap = None if lower is None else max(0.0, value - lower)
    flagged = alpha is None and (gap is None or gap > gap_tol)
    return FamilyDivergence(
        value=value,
        support_ok=True,
        meta={"trace": trace, "alpha": alpha},
        minimizer=minimizer,
        lower=lower,
        gap=gap,
        flagged=flagged,
    )


# --- capacity --------------------------------------------------------------------


def holevo_capacity(phi, tol=1e-9, max_iter=200000):
    """Holevo capacity by the Blahut-Arimoto iteration.

    Stops when max_x D(phi(x) || rho_p) - chi(p) <= tol; both ends bound the
    capacity, so ``gap_bound`` is a certified duality gap.
    """
    X = phi.n_inputs
    p = np.full(X, 1.0 / X)
    lower = upper = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        rho = hermitize(sum(pi * o for pi, o in zip(p, phi.outputs)))
        L = logm(rho, support_only=True)
        d = np.array([-_entropy(o) - float(np.real(np.vdot(L, o))) for o in phi.outputs])
        lower = float(p @ d)
        upper = float(d.max())
        if upper - lower <= tol:
            break
        q = p * np.exp(d - d.max())
        p = q / q.sum()
    converged = upper - lower <= tol
    rho = hermitize(sum(pi * o for pi, o in zip(p, phi.outputs)))
    return CapacityReport(
        capacity=max(lower, 0.0),
        optimizer_p=p,
        barycenter=rho,
        iterations=it,
        gap_bound=max(upper - lower, 0.0),
        upper=max(upper, 0.0),
        converged=converged,
    )


def regularized_rrr_estimate(phi, F, n_max, n_guard=4):
    """Rows (n, D(phi^n || F_n)/n) and the Fekete subadditivity check on them."""
    if n_max > n_guard:
        raise ValueError(f"n_max={n_max} exceeds the size guard {n_guard}")
    raw = {}
    rows = []
    for n in range(1, n_max + 1):
        r = divergence_to_family(channel_power(phi, n), F.power(n))
        raw[n] = r
        rows.append((n, r.value / n))
    violations = []
    for n, m in itertools.product(range(1, n_max + 1), repeat=2):
        if n + m <= n_max:
            lhs = raw[n + m].value
            rhs = raw[n].value + raw[m].value
            tol = 1e-6 + sum((raw[k].gap or 0.0) for k in (n, m, n + m))
            if lhs > rhs + tol:
                violations.append((n, m, lhs - rhs))
    return {"rows": rows, "subadditive": not violations, "violations": violations}


def report(quantity, value, certificates=None, trace=None):
    """JSON-ready report dictionary."""
    return {
        "quantity": quantity,
        "value": value,
        "certificates": certificates or {},
        "solver_trace": trace or {},
    }


def report_json(rep):
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, complex):
            return [o.real, o.imag]
        return str(o)

    return json.dumps(rep, indent=1, sort_keys=True, default=default)
