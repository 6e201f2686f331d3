"""Generalized robustness of CQ channels and its links to the relative entropy of resource."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import CQChannel, channel_power, diamond_distance, tensor_channels
from .divergence import divergence_to_family
from .hermit import SolverFailure, hermitian_basis, hermitize, max_eig, psd_indicator
from .pinching import distinct_count, pinching_superchannel

ROBUSTNESS_GAP_TOL = 1e-6


@dataclass
class RobustnessReport:
    """R_G(phi) with primal witnesses and a dual certificate.

    ``value`` is the primal value (an upper bound attained by the witnesses);
    ``lower`` is the dual value, so ``gap = value - lower`` is certified.
    """

    value: float
    lower: float
    gap: float
    witness_free: CQChannel
    witness_mix: CQChannel
    dual_povm: list
    flagged: bool = False
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "value": self.value,
            "lower": self.lower,
            "gap": self.gap,
            "flagged": self.flagged,
            "witness_free": self.witness_free.to_dict(),
            "witness_mix": self.witness_mix.to_dict(),
            "dual_povm": [_mat_json(Y) for Y in self.dual_povm],
            "meta": self.meta,
        }


def _mat_json(A):
    A = np.asarray(A)
    return {"re": A.real.tolist(), "im": A.imag.tolist()}


# --- log-barrier interior point ------------------------------------------------


def _barrier_stages(A, c, Phi, v0, t_max=1e11, max_newton=200):
    """min c.v subject to F_x(v) = sum_k v_k A[x][k] - Phi[x] > 0 for every x.

    Path-following log-barrier method.  Yields (v, Y, iterations) after each centering
    stage, where Y[x] = F_x(v)^{-1}/t is the central-path dual estimate.  Late
    stages are limited by cancellation in F_x, so callers certify every stage
    and keep the best bounds.
    """
    X = len(Phi)
    m = len(c)
    Af = [np.array([a.ravel() for a in A[x]]) for x in range(X)]

    def F(v):
        return [hermitize(np.tensordot(v, A[x], axes=1) - Phi[x]) for x in range(X)]

    def logdet_pd(Fs):
        total = 0.0
        for S in Fs:
            try:
                L = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return None
            total += 2.0 * float(np.sum(np.log(np.real(np.diag(L)))))
        return total

    v = np.array(v0, dtype=float)
    if logdet_pd(F(v)) is None:
        raise SolverFailure("barrier start is not strictly feasible")
    t = 1.0
    iters = 0
    while True:
        for _ in range(max_newton):
            Fs = F(v)
            g = t * c.copy()
            Hm = np.zeros((m, m))
            for x in range(X):
                Fi = np.linalg.inv(Fs[x])
                Fi = 0.5 * (Fi + Fi.conj().T)
                M = np.array([(Fi @ a) for a in A[x]])
                Mf = M.reshape(m, -1)
                MTf = np.transpose(M, (0, 2, 1)).reshape(m, -1)
                g -= np.real(Af[x].conj() @ Fi.ravel())
                Hm += np.real(Mf @ MTf.T)
            Hm = 0.5 * (Hm + Hm.T)
            try:
                dv = -np.linalg.solve(Hm, g)
            except np.linalg.LinAlgError:
                dv = -np.linalg.lstsq(Hm, g, rcond=None)[0]
            lam2 = float(-g @ dv)
            iters += 1
            if lam2 / 2 <= 1e-10:
                break
            f0 = t * float(c @ v) - logdet_pd(Fs)
            step = 1.0
            while step > 1e-14:
                vn = v + step * dv
                ld = logdet_pd(F(vn))
                if ld is not None and t * float(c @ vn) - ld <= f0 - 0.25 * step * lam2 + 1e-13 * abs(f0):
                    break
                step *= 0.5
            else:
                break
            v = vn
        Y = [hermitize(np.linalg.inv(S)) / t for S in F(v)]
        yield v.copy(), Y, iters
        t *= 8.0
        if t > t_max:
            return


def _certified_solve(A, c, Phi, v0, certify, tol=1e-9):
    """Run the barrier stages, keeping the least primal and greatest dual bound."""
    best = None
    for v, Y, iters in _barrier_stages(A, c, Phi, v0):
        primal, dual, extra = certify(v, Y)
        if best is None:
            best = [primal, v, dual, extra]
        if primal < best[0]:
            best[0], best[1] = primal, v
        if dual > best[2]:
            best[2], best[3] = dual, extra
        if best[0] - best[2] <= tol * max(1.0, abs(best[0])):
            break
    return best[0], best[1], best[2], best[3], iters


def _replacer_robustness(phi):
    d = phi.dim
    basis = np.array(hermitian_basis(d))
    c = np.array([np.real(np.trace(b)) for b in basis])
    lam = max(max_eig(o) for o in phi.outputs)
    # sigma = (lam + 1) I is strictly feasible.
    v0 = np.zeros(len(basis))
    v0[0] = (lam + 1.0) * math.sqrt(d)

    def certify(v, Y):
        scale = max(max_eig(hermitize(sum(Y))), 1e-300)
        Y = [y / scale for y in Y]
        Y[0] = hermitize(Y[0] + (np.eye(d) - hermitize(sum(Y))))
        dual = float(sum(np.real(np.vdot(y, o)) for y, o in zip(Y, phi.outputs)))
        return float(c @ v), dual, Y

    primal, v, dual, Y, iters = _certified_solve([basis] * phi.n_inputs, c, phi.outputs, v0, certify)
    sigma = hermitize(np.tensordot(v, basis, axes=1))
    free = CQChannel(phi.labels, [sigma / primal] * phi.n_inputs, validate=False)
    return primal, dual, free, Y, iters


def _hull_robustness(phi, F):
    K = len(F.generators)
    X = phi.n_inputs
    A = [np.array([g.outputs[x] for g in F.generators]) for x in range(X)]
    c = np.ones(K)
    lam = max(max_eig(o) for o in phi.outputs)
    v0 = np.full(K, 2.0 * (lam + 1e-3) / (K * F.lambda_min))
    # v >= 0 enters as K one-by-one blocks.
    unit = np.eye(K).reshape(K, K, 1, 1).astype(complex)
    zero = np.zeros((1, 1), dtype=complex)

    def certify(v, Y):
        Y = Y[:X]
        loads = [sum(float(np.real(np.vdot(Y[x], g.outputs[x]))) for x in range(X)) for g in F.generators]
        scale = max(max(loads), 1e-300)
        Y = [y / scale for y in Y]
        dual = float(sum(np.real(np.vdot(y, o)) for y, o in zip(Y, phi.outputs)))
        return float(np.sum(v)), dual, Y

    primal, v, dual, Y, iters = _certified_solve(
        A + [unit[k] for k in range(K)], c, list(phi.outputs) + [zero] * K, v0, certify
    )
    free = F.member(v / primal)
    return primal, dual, free, Y, iters


def robustness(phi, F, gap_tol=ROBUSTNESS_GAP_TOL):
    """Generalized robustness R_G(phi) = min{s : phi(x) <= (1+s) free(x) for all x}."""
    if phi.labels != F.labels or phi.dim != F.dim:
        raise ValueError("channel and family shapes differ")
    if F.kind == "replacer":
        primal, dual, free, Y, iters = _replacer_robustness(phi)
    else:
        primal, dual, free, Y, iters = _hull_robustness(phi, F)
    s = max(primal - 1.0, 0.0)
    lower = min(max(dual - 1.0, 0.0), s)
    if s > 1e-12:
        mix_outs = [hermitize((primal * f - o) / (primal - 1.0)) for f, o in zip(free.outputs, phi.outputs)]
        mix = CQChannel(phi.labels, mix_outs, validate=False)
    else:
        mix = free
    gap = s - lower
    return RobustnessReport(s, lower, gap, free, mix, Y, gap > gap_tol, {"newton_iterations": iters})


def robustness_json(rep):
    return json.dumps(rep.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class Verdict:
    holds: bool
    lhs: float
    rhs: float
    details: dict = field(default_factory=dict)


def log_robustness_vs_rrr(phi, F, n=1, tol=1e-6):
    """Check D(phi^n || F_n) <= log(1 + R_G(phi^n)) against the n-copy family."""
    pn = channel_power(phi, n)
    Fn = F.power(n)
    d = divergence_to_family(pn, Fn)
    r = robustness(pn, Fn)
    rhs = math.log1p(r.value)
    flagged = bool(d.flagged or r.flagged)
    return Verdict(d.value <= rhs + tol, d.value, rhs, {"n": n, "flagged": flagged, "robustness": r.value})


# --- smoothed channels ---------------------------------------------------------


@dataclass
class SmoothedStep:
    n: int
    channel: CQChannel
    log_robustness_rate: float
    diamond: float
    robustness: float
    certified_bound: float
    J: int
    tail: float
    free: CQChannel = None

    def __iter__(self):
        return iter((self.n, self.channel, self.log_robustness_rate, self.diamond))

    @property
    def robustness_ok(self):
        return self.robustness <= self.certified_bound * (1 + 1e-9) + 1e-9

    @property
    def diamond_ok(self):
        return self.diamond <= 2.0 * self.tail + 1e-9


def _free_block(free_M, full, n, M):
    q, r = divmod(n, M)
    parts = [free_M] * q + [full] * r
    out = parts[0]
    for p in parts[1:]:
        out = tensor_channels(out, p)
    return out


def smoothed_channel(phi_n, free_n, R, n):
    """Clip phi_n by {P[phi_n] >= e^{Rn} free_n} and patch the clipped weight with free_n."""
    pinched = pinching_superchannel(free_n, phi_n)
    outs, tails, Ts = [], [], []
    for a, o, f in zip(pinched.outputs, phi_n.outputs, free_n.outputs):
        T = psd_indicator(a, math.exp(R * n) * f)
        Tc = np.eye(o.shape[0]) - T
        w = float(np.real(np.vdot(T, o)))
        outs.append(hermitize(Tc @ o @ Tc + w * f))
        tails.append(w)
        Ts.append(T)
    return CQChannel(phi_n.labels, outs, validate=False), Ts, tails


def smoothed_robustness_sequence(phi, F, R, n_max, M=1):
    """Smoothed channels phi^(n) for n = 1..n_max with certified and measured robustness."""
    pM = channel_power(phi, M)
    dM = divergence_to_family(pM, F.power(M))
    if not R > dM.value / M:
        raise ValueError(f"R = {R:.6g} must exceed D(phi^M || F_M)/M = {dM.value / M:.6g} (M = {M})")
    free_M = dM.minimizer
    full = F.full_rank_witness
    steps = []
    for n in range(1, n_max + 1):
        pn = channel_power(phi, n)
        free_n = _free_block(free_M, full, n, M)
        ch, Ts, tails = smoothed_channel(pn, free_n, R, n)
        J = max(distinct_count(f) for f in free_n.outputs)
        rep = robustness(ch, F.power(n))
        steps.append(
            SmoothedStep(
                n,
                ch,
                math.log1p(rep.value) / n,
                diamond_distance(ch, pn),
                rep.value,
                J * math.exp(R * n),
                J,
                max(tails),
                free_n,
            )
        )
    return steps


def robustness_characterization_check(phi, F, n_max, R=None, M=1, delta=0.2, tol=1e-6):
    """Finite-n proxy for the log-robustness characterization of the regularized resource.

    Per n: the reference D(phi^n||F_n)/n sits below log(1+R_G(phi^n))/n, and the
    smoothed channel obeys its certified bound log(1+J_n e^{Rn})/n.
    """
    if n_max > 3:
        raise ValueError("n_max must be at most 3")
    if R is None:
        R = divergence_to_family(channel_power(phi, M), F.power(M)).value / M + delta
    steps = smoothed_robustness_sequence(phi, F, R, n_max, M)
    rows, ok = [], True
    for st in steps:
        pn = channel_power(phi, st.n)
        Fn = F.power(st.n)
        ref = divergence_to_family(pn, Fn).value / st.n
        upper = math.log1p(robustness(pn, Fn).value) / st.n
        cert = math.log1p(st.certified_bound) / st.n
        row_ok = ref <= upper + tol and st.log_robustness_rate <= cert + tol
        ok = ok and row_ok
        rows.append(
            {
                "n": st.n,
                "reference": ref,
                "log_robustness": upper,
                "smoothed_log_robustness": st.log_robustness_rate,
                "certified": cert,
                "diamond": st.diamond,
                "holds": row_ok,
            }
        )
    return Verdict(ok, 0.0, 0.0, {"rows": rows, "R": R, "M": M, "proxy": True})
