"""Seeded property suites run by ``cqstein verify``.

Each suite draws its own generator from ``(seed, suite index)`` so results do
not depend on scheduling, and returns one ``SuiteResult``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    channel_power,
    diamond_distance,
    hull_family,
    make_channel,
    pure,
    random_channel,
    random_density,
    replacer,
    replacer_family,
    tensor_channels,
)
from .conversion import apply, discard_prepare, is_non_signaling, random_superchannel, rng_probe, signaling_example
from .divergence import channel_divergence, divergence_to_family, holevo_capacity
from .hermit import min_eig
from .hypothesis import beta_channel, beta_family, renyi_converse_bound
from .pinching import PinchingMap, RoundingPlan, distinct_count, distinct_count_all, round_state
from .robustness import log_robustness_vs_rrr, robustness, smoothed_robustness_sequence


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    instances: int
    max_violation: float

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<14} {status} instances={self.instances} max_violation={self.max_violation:.3e}"


def _result(name, violations):
    worst = max(violations) if violations else 0.0
    return SuiteResult(name, worst <= 0.0, len(violations), max(worst, 0.0))


def bb84_like():
    return make_channel([np.diag([1.0, 0.0]).astype(complex), pure([1, 1])])


def orthogonal():
    return make_channel([np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)])


def _random_hull(rng, labels, dim, K):
    K = int(K)
    return hull_family([random_channel(len(labels), dim, rng) for _ in range(K)])


def suite_additivity(rng, count=20):
    out = []
    for _ in range(count):
        X, D = rng.integers(1, 3, size=2)
        a1, a2, b1, b2 = (random_channel(int(X), int(D), rng) for _ in range(4))
        for alpha in (None, 1.5, 2.0, 3.0):
            joint = channel_divergence(tensor_channels(a1, b1), tensor_channels(a2, b2), alpha).value
            parts = channel_divergence(a1, a2, alpha).value + channel_divergence(b1, b2, alpha).value
            out.append(abs(joint - parts) - 1e-8)
    return _result("additivity", out)


def suite_subadditivity(rng, count=3):
    out = []
    for _ in range(count):
        phi = random_channel(2, 2, rng)
        F = replacer_family(phi.labels, 2)
        d1 = divergence_to_family(phi, F).value
        d2 = divergence_to_family(channel_power(phi, 2), F.power(2)).value
        out.append(abs(d2 - 2 * d1) - 1e-6)
        H = _random_hull(rng, phi.labels, 2, 2)
        h1 = divergence_to_family(phi, H).value
        h2 = divergence_to_family(channel_power(phi, 2), H.power(2)).value
        out.append(h2 - 2 * h1 - 1e-6)
    return _result("subadditivity", out)


def suite_minimax(rng, count=3):
    out = []
    for i in range(count):
        phi = random_channel(2, 2, rng)
        F = replacer_family(phi.labels, 2) if i % 2 == 0 else _random_hull(rng, phi.labels, 2, 2 + i % 2)
        fb = beta_family(phi, F, float(rng.uniform(0.05, 0.4)), use_dual_hint=False)
        out.append(fb.certificate.gap - 1e-4)
    return _result("minimax", out)


def suite_converse(rng, count=1):
    out = []
    phis = [bb84_like()] + [random_channel(2, 2, rng) for _ in range(count)]
    for phi in phis:
        F = replacer_family(phi.labels, 2)
        for eps in (0.05, 0.3):
            for n in (1, 2):
                pn, Fn = channel_power(phi, n), F.power(n)
                b = beta_family(pn, Fn, eps).value
                out.append(-math.log(b) - renyi_converse_bound(pn, Fn, eps) - 1e-6)
    return _result("converse", out)


def suite_pinching(rng, count=50):
    out = []
    for _ in range(count):
        d = int(rng.integers(2, 5))
        ref = random_density(d, rng)
        if rng.uniform() < 0.5:
            w, V = np.linalg.eigh(ref)
            w = np.round(w * 4) / 4 + 1e-3
            ref = (V * (w / w.sum())) @ V.conj().T
        sigma = random_density(d, rng)
        P = PinchingMap.of(ref)
        ps = P(sigma)
        out.append(float(np.max(np.abs(P(ref) - ref))) - 1e-10)
        out.append(float(np.max(np.abs(ps @ ref - ref @ ps))) - 1e-9)
        out.append(-min_eig(P.J * ps - sigma) - 1e-9)
    return _result("pinching", out)


def suite_rounding(rng, count=10):
    out = []
    for _ in range(count):
        d = int(rng.integers(2, 5))
        rho = random_density(d, rng)
        for n in range(1, 6):
            C = max(1.0, -math.log(min_eig(rho)) / n + 0.1)
            plan = RoundingPlan(n, C)
            rt = round_state(rho, plan)
            out.append(distinct_count(rt) - (n + 1))
            out.append(-min_eig(rt - math.exp(-C) * rho) - 1e-10)
            out.append(-min_eig(math.exp(C) * rho - rt) - 1e-10)
    return _result("rounding", out)


def suite_counting(rng, count=2):
    out = []
    for _ in range(count):
        phi = random_channel(2, 2, rng)
        for n in range(1, 4):
            worst, bound = distinct_count_all(phi, n)
            out.append(worst - bound)
    return _result("counting", out)


def suite_capacity(rng, count=5):
    out = [abs(holevo_capacity(orthogonal()).capacity - math.log(2)) - 1e-9]
    for _ in range(count):
        phi = random_channel(int(rng.integers(2, 4)), 2, rng)
        c = holevo_capacity(phi).capacity
        d = divergence_to_family(phi, replacer_family(phi.labels, 2)).value
        out.append(abs(c - d) - 1e-6)
    return _result("capacity", out)


def suite_robustness(rng, count=5):
    F = replacer_family(("0", "1"), 2)
    r = robustness(orthogonal(), F)
    out = [abs(r.value - 1.0) - 1e-6, r.gap - 1e-6]
    for _ in range(count):
        phi = random_channel(2, 2, rng)
        rep = robustness(phi, F)
        out.append(rep.gap - 1e-6)
        v = log_robustness_vs_rrr(phi, F, 1)
        out.append(v.lhs - v.rhs - 1e-6)
    return _result("robustness", out)


def suite_smoothing(rng, count=1):
    out = []
    phis = [orthogonal()] + [random_channel(2, 2, rng) for _ in range(count)]
    for phi in phis:
        F = replacer_family(phi.labels, 2)
        R = divergence_to_family(phi, F).value + 0.05
        for st in smoothed_robustness_sequence(phi, F, R, 2):
            out.append(st.robustness - st.certified_bound * (1 + 1e-9) - 1e-9)
            out.append(st.diamond - 2 * st.tail - 1e-9)
    return _result("smoothing", out)


def suite_ns(rng, count=3):
    F = replacer_family(("0", "1"), 2)
    out = []
    for _ in range(count):
        sigma = replacer(random_density(2, rng), ("0", "1"))
        theta = discard_prepare(("0", "1"), 2, sigma)
        ns = is_non_signaling(theta)
        out.append(ns.deviation - 1e-10)
        out.append(rng_probe(theta, F, F, probes=8).value - 1e-8)
    sig = signaling_example()
    ns = is_non_signaling(sig)
    out.append(0.0 if not ns.ok and ns.deviation > 0 else 1.0)
    out.append(0.0 if rng_probe(sig, F, F, probes=8).value > 1e-6 else 1.0)
    return _result("ns", out)


def suite_monotonicity(rng, count=10):
    out = []
    for _ in range(count):
        a, b = random_channel(2, 2, rng), random_channel(2, 2, rng)
        theta = random_superchannel(a.labels, 2, ("0", "1", "2"), 2, rng)
        ta, tb = apply(theta, a), apply(theta, b)
        out.append(diamond_distance(ta, tb) - diamond_distance(a, b) - 1e-8)
        out.append(channel_divergence(ta, tb).value - channel_divergence(a, b).value - 1e-8)
        out.append(channel_divergence(ta, tb, 2.0).value - channel_divergence(a, b, 2.0).value - 1e-8)
        out.append(beta_channel(a, b, 0.1).lower - beta_channel(ta, tb, 0.1).value - 1e-8)
    return _result("monotonicity", out)


SUITES = {
    "additivity": suite_additivity,
    "subadditivity": suite_subadditivity,
    "minimax": suite_minimax,
    "converse": suite_converse,
    "pinching": suite_pinching,
    "rounding": suite_rounding,
    "counting": suite_counting,
    "capacity": suite_capacity,
    "robustness": suite_robustness,
    "smoothing": suite_smoothing,
    "ns": suite_ns,
    "monotonicity": suite_monotonicity,
}


def run_suite(name, seed):
    idx = list(SUITES).index(name)
    return SUITES[name](np.random.default_rng([seed, idx]))
