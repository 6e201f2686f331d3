"""Superchannels on CQ channels, non-signaling checks and the direct-part converter."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ChannelFormatError,
    CQChannel,
    channel_power,
    diamond_distance,
    replacer,
)
from .divergence import divergence_to_family, holevo_capacity
from .hermit import eig_hermitian, hermitize
from .robustness import robustness, smoothed_robustness_sequence

KRAUS_TOL = 1e-10


class Superchannel:
    """Theta[phi](x_out) = sum_{x_in} p(x_in|x_out) N_{x_in,x_out}(phi(x_in)).

    ``p`` has shape (X_in, X_out) with columns summing to one; ``kraus`` maps
    (x_in, x_out) label pairs to Kraus lists of shape (out_dim, in_dim).
    """

    def __init__(self, in_labels, in_dim, out_labels, out_dim, p, kraus, validate=True):
        self.in_labels = tuple(str(x) for x in in_labels)
        self.out_labels = tuple(str(x) for x in out_labels)
        self.in_dim, self.out_dim = int(in_dim), int(out_dim)
        self.p = np.asarray(p, dtype=float)
        self.kraus = {k: [np.asarray(K, dtype=complex) for K in v] for k, v in kraus.items()}
        if validate:
            self.validate()

    @property
    def in_shape(self):
        return (len(self.in_labels), self.in_dim)

    @property
    def out_shape(self):
        return (len(self.out_labels), self.out_dim)

    def validate(self, tol=KRAUS_TOL):
        if self.p.shape != (len(self.in_labels), len(self.out_labels)):
            raise ValueError(f"p has shape {self.p.shape}, expected {(len(self.in_labels), len(self.out_labels))}")
        if np.any(self.p < -tol):
            raise ValueError("p has negative entries")
        dev = np.max(np.abs(self.p.sum(axis=0) - 1.0))
        if dev > tol:
            raise ValueError(f"columns of p must sum to 1 (deviation {dev:.3g})")
        eye = np.eye(self.in_dim)
        for a in self.in_labels:
            for b in self.out_labels:
                ks = self.kraus.get((a, b))
                if ks is None:
                    raise ValueError(f"missing Kraus set for ({a!r}, {b!r})")
                for K in ks:
                    if K.shape != (self.out_dim, self.in_dim):
                        raise ValueError(f"Kraus operator for ({a!r}, {b!r}) has shape {K.shape}")
                S = sum(K.conj().T @ K for K in ks)
                dev = float(np.max(np.abs(S - eye)))
                if dev > tol:
                    raise ValueError(f"Kraus set for ({a!r}, {b!r}) is not complete (deviation {dev:.3g})")

    def map(self, a, b, rho):
        return hermitize(sum(K @ rho @ K.conj().T for K in self.kraus[(a, b)]))

    def averaged_choi(self, b):
        """Choi matrix of N_bar(b) = sum_a p(a|b) N_{a,b}, ordered (in, out)."""
        j = self.out_labels.index(b)
        d = self.in_dim
        C = np.zeros((d * self.out_dim, d * self.out_dim), dtype=complex)
        for i, a in enumerate(self.in_labels):
            if self.p[i, j] == 0:
                continue
            for K in self.kraus[(a, b)]:
                # vec of K^T arranged as sum_k |k> (x) K|k>
                v = np.concatenate([K[:, k] for k in range(d)])
                C += self.p[i, j] * np.outer(v, v.conj())
        return C

    def to_dict(self):
        def mat(A):
            return [[[float(z.real), float(z.imag)] for z in row] for row in A]

        return {
            "in_labels": list(self.in_labels),
            "out_labels": list(self.out_labels),
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "p": self.p.tolist(),
            "kraus": {f"{a}|{b}": [mat(K) for K in ks] for (a, b), ks in sorted(self.kraus.items())},
        }


def apply(theta, phi):
    """Theta[phi]; the result is a CQ channel on the output alphabet."""
    if phi.labels != theta.in_labels or phi.dim != theta.in_dim:
        raise ValueError(
            f"superchannel expects inputs {theta.in_labels} on dim {theta.in_dim}, got {phi.labels} on dim {phi.dim}"
        )
    outs = []
    for j, b in enumerate(theta.out_labels):
        acc = np.zeros((theta.out_dim, theta.out_dim), dtype=complex)
        for i, a in enumerate(theta.in_labels):
            if theta.p[i, j] != 0:
                acc += theta.p[i, j] * theta.map(a, b, phi.outputs[i])
        outs.append(hermitize(acc))
    return CQChannel(theta.out_labels, outs, validate=False)


@dataclass(frozen=True)
class NSResult:
    ok: bool
    deviation: float
    witness: tuple
    common_choi: np.ndarray = None

    def __bool__(self):
        return self.ok


def is_non_signaling(theta, tol=1e-10):
    """Whether the input-averaged map N_bar(x_out) is the same for every x_out."""
    chois = [theta.averaged_choi(b) for b in theta.out_labels]
    worst, pair = 0.0, None
    for j in range(1, len(chois)):
        dev = float(np.max(np.abs(chois[j] - chois[0])))
        if dev > worst:
            worst, pair = dev, (theta.out_labels[0], theta.out_labels[j])
    ok = worst <= tol
    return NSResult(ok, worst, pair, chois[0] if ok else None)


# --- constructions -----------------------------------------------------------------


def _prepare_kraus(P, rho):
    """Kraus operators of rho' -> Tr(P rho') rho for 0 <= P <= 1."""
    dec_p = eig_hermitian(P)
    dec_s = eig_hermitian(rho)
    ks = []
    for t, v in zip(dec_p.eigenvalues, dec_p.eigenvectors.T):
        if t <= 1e-15:
            continue
        for mu, e in zip(dec_s.eigenvalues, dec_s.eigenvectors.T):
            if mu <= 1e-15:
                continue
            ks.append(math.sqrt(t * mu) * np.outer(e, v.conj()))
    return ks


def measure_prepare(in_labels, in_dim, p, tests, accept, reject):
    """Sample x_in ~ p, measure {T, 1 - T}, prepare accept(x_out) or reject(x_out)."""
    p = np.asarray(p, dtype=float)
    X_out = accept.labels
    P = np.repeat(p[:, None], len(X_out), axis=1)
    kraus = {}
    eye = np.eye(in_dim)
    for a, T in zip(in_labels, tests):
        T = hermitize(T)
        for b, oa, orj in zip(X_out, accept.outputs, reject.outputs):
            kraus[(a, b)] = _prepare_kraus(T, oa) + _prepare_kraus(eye - T, orj)
    return Superchannel(in_labels, in_dim, X_out, accept.dim, P, kraus)


def discard_prepare(in_labels, in_dim, sigma_channel):
    """Ignore the input channel and output ``sigma_channel``."""
    X = len(in_labels)
    return measure_prepare(
        in_labels, in_dim, np.full(X, 1.0 / X), [np.eye(in_dim)] * X, sigma_channel, sigma_channel
    )


def identity_superchannel(labels, dim):
    labels = tuple(str(x) for x in labels)
    P = np.eye(len(labels))
    kraus = {(a, b): [np.eye(dim)] for a in labels for b in labels}
    return Superchannel(labels, dim, labels, dim, P, kraus)


def relabel_superchannel(labels, dim, mapping):
    """x_out -> x_in = mapping[x_out] with identity processing."""
    labels = tuple(str(x) for x in labels)
    P = np.zeros((len(labels), len(labels)))
    for j, b in enumerate(labels):
        P[labels.index(mapping[b]), j] = 1.0
    kraus = {(a, b): [np.eye(dim)] for a in labels for b in labels}
    return Superchannel(labels, dim, labels, dim, P, kraus)


def signaling_example(dim=2):
    """Two-letter superchannel that discards its input and prepares |x_out><x_out|."""
    labels = ("0", "1")
    kraus = {}
    for a in labels:
        for b in labels:
            e = np.zeros(dim, dtype=complex)
            e[int(b)] = 1.0
            kraus[(a, b)] = [np.outer(e, np.eye(dim)[k]) for k in range(dim)]
    return Superchannel(labels, dim, labels, dim, np.full((2, 2), 0.5), kraus)


def random_superchannel(in_labels, in_dim, out_labels, out_dim, rng, n_kraus=2):
    """Random column-stochastic p and random CPTP maps from Stiefel matrices."""
    in_labels = tuple(str(x) for x in in_labels)
    out_labels = tuple(str(x) for x in out_labels)
    P = rng.dirichlet(np.ones(len(in_labels)), size=len(out_labels)).T
    kraus = {}
    for a in in_labels:
        for b in out_labels:
            G = rng.normal(size=(n_kraus * out_dim, in_dim)) + 1j * rng.normal(size=(n_kraus * out_dim, in_dim))
            Q, _ = np.linalg.qr(G)
            kraus[(a, b)] = [Q[k * out_dim:(k + 1) * out_dim, :] for k in range(n_kraus)]
    return Superchannel(in_labels, in_dim, out_labels, out_dim, P, kraus)


def build_direct_converter(plan, target, patch):
    """Measure-and-prepare converter: accept prepares ``target``, reject prepares ``patch``."""
    if not target.same_shape(patch):
        raise ValueError("target and patch must share alphabet and dimension")
    dims = {T.shape[0] for T in plan.T}
    if len(dims) != 1:
        raise ValueError("plan operators have inconsistent dimensions")
    return measure_prepare(plan.labels, dims.pop(), plan.p, plan.T, target, patch)


# --- probes ------------------------------------------------------------------------


def _random_pure(dim, rng):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def probe_channels(F, probes=32, seed=0, extra_states=()):
    """Free channels to probe with: pure-state replacers, or hull generators plus mixtures."""
    rng = np.random.default_rng(seed)
    if F.kind == "replacer":
        states = [np.diag(np.eye(F.dim)[k]).astype(complex) for k in range(F.dim)]
        states += [hermitize(s) for s in extra_states]
        while len(states) < probes:
            states.append(_random_pure(F.dim, rng))
        return [replacer(s, F.labels) for s in states[:max(probes, F.dim + len(extra_states))]]
    chans = list(F.generators)
    while len(chans) < probes:
        chans.append(F.member(rng.dirichlet(np.ones(len(F.generators)))))
    return chans


@dataclass(frozen=True)
class ProbeResult:
    value: float
    values: tuple

    def __float__(self):
        return self.value


def rng_probe(theta, F_in, F_out, probes=32, seed=0, extra=()):
    """max over probe free channels of R_G(Theta[probe]) against ``F_out``."""
    chans = probe_channels(F_in, probes, seed, extra) if not isinstance(probes, list) else probes
    vals = tuple(robustness(apply(theta, c), F_out).value for c in chans)
    return ProbeResult(max(vals), vals)


def r_n_bound(s_n, t_n):
    """(1/(1+s) - t)/(s/(1+s)): the robustness allowance of the direct converter."""
    if s_n <= 0:
        return math.inf if t_n <= 1 else -math.inf
    return (1.0 / (1.0 + s_n) - t_n) / (s_n / (1.0 + s_n))


# --- conversion report -------------------------------------------------------------


@dataclass
class ConversionRow:
    n: int
    m: int
    alpha_n: float
    beta_n: float
    s_n: float
    t_n: float
    r_n: float
    rng_violation: float
    finite_n_fidelity: float
    non_signaling_deviation: float
    distance_to_target: float
    probes_bound_applicable: int
    probes_bound_holds: bool


@dataclass
class ConversionReport:
    rate_formula: float
    resource_in: float
    resource_out: float
    rate: float
    rows: list = field(default_factory=list)

    @property
    def finite_n_fidelity(self):
        return [r.finite_n_fidelity for r in self.rows]

    @property
    def rng_violation(self):
        return max((r.rng_violation for r in self.rows), default=0.0)

    def to_dict(self):
        return {
            "rate_formula": self.rate_formula,
            "resource_in": self.resource_in,
            "resource_out": self.resource_out,
            "rate": self.rate,
            "rng_violation": self.rng_violation,
            "rows": [vars(r) for r in self.rows],
        }


def resource_estimate(phi, F, n_max=2):
    """Capacity for Replacer families; otherwise min over n of D(phi^n || F_n)/n."""
    if F.kind == "replacer":
        return holevo_capacity(phi).capacity
    return min(divergence_to_family(channel_power(phi, n), F.power(n)).value / n for n in range(1, n_max + 1))


def conversion_report(phi_in, phi_out, F_in, F_out, eps, n_max, delta=None, R_margin=0.2, probes=32, m_max=3):
    """Rate formula plus finite-n direct converters built from Stein-optimal plans."""
    from .hypothesis import beta_family

    r_in = resource_estimate(phi_in, F_in)
    r_out = resource_estimate(phi_out, F_out)
    if not r_in > 1e-9:
        raise ValueError("input channel has zero resource: the regularized relative entropy of resource must be positive")
    if not r_out > 1e-9:
        raise ValueError("target channel has zero resource: the regularized relative entropy of resource must be positive")
    ratio = r_in / r_out
    delta = 0.05 * ratio if delta is None else delta
    rate = ratio - delta
    report = ConversionReport(ratio, r_in, r_out, rate)
    for n in range(1, n_max + 1):
        m = max(1, math.ceil(rate * n))
        if m > m_max:
            break
        pin = channel_power(phi_in, n)
        Fin = F_in.power(n)
        fb = beta_family(pin, Fin, eps)
        plan = fb.certificate.plan
        step = smoothed_robustness_sequence(phi_out, F_out, r_out + R_margin, m)[-1]
        target = step.channel
        Fout = F_out.power(m)
        rob = robustness(target, Fout)
        theta = build_direct_converter(plan, target, rob.witness_mix)
        extra = ()
        if Fin.kind == "replacer":
            M = hermitize(sum(pi * T for pi, T in zip(plan.p, plan.T)))
            w, V = np.linalg.eigh(M)
            extra = (np.outer(V[:, -1], V[:, -1].conj()),)
        chans = probe_channels(Fin, probes, 0, extra)
        ts = [plan.type2(c) for c in chans]
        probe = rng_probe(theta, Fin, Fout, list(chans))
        # The allowance r_n is a valid robustness witness only when it is nonnegative.
        checks = [(v, r_n_bound(rob.value, t)) for v, t in zip(probe.values, ts)]
        applicable = [(v, r) for v, r in checks if r >= 0]
        out = apply(theta, pin)
        t_n = max(ts)
        report.rows.append(
            ConversionRow(
                n,
                m,
                plan.type1(pin),
                plan.worst_type2(Fin),
                rob.value,
                t_n,
                r_n_bound(rob.value, t_n),
                probe.value,
                diamond_distance(out, channel_power(phi_out, m)),
                is_non_signaling(theta).deviation,
                diamond_distance(out, target),
                len(applicable),
                all(v <= r + 1e-6 for v, r in applicable),
            )
        )
    return report


# --- file format -------------------------------------------------------------------


def superchannel_from_dict(obj, source="<superchannel>"):
    if not isinstance(obj, dict):
        raise ChannelFormatError(f"{source}: top level must be an object")
    for key in ("p", "kraus", "in_labels", "out_labels", "in_dim", "out_dim"):
        if key not in obj:
            raise ChannelFormatError(f"{source}: missing key {key!r}")
    ins = [str(x) for x in obj["in_labels"]]
    outs = [str(x) for x in obj["out_labels"]]
    din, dout = obj["in_dim"], obj["out_dim"]
    kraus = {}
    for key, mats in obj["kraus"].items():
        pairs = [(a, b) for a in ins for b in outs if f"{a}|{b}" == key]
        if len(pairs) != 1:
            raise ChannelFormatError(f"{source}: kraus key {key!r} does not name a unique (x_in, x_out) pair")
        ks = []
        for i, M in enumerate(mats):
            where = f"{source}: kraus[{key!r}][{i}]"
            if not isinstance(M, list) or len(M) != dout:
                raise ChannelFormatError(f"{where}: expected {dout} rows")
            ks.append(_parse_rect(M, dout, din, where))
        kraus[pairs[0]] = ks
    try:
        return Superchannel(ins, din, outs, dout, np.asarray(obj["p"], dtype=float), kraus)
    except ValueError as exc:
        raise ChannelFormatError(f"{source}: {exc}") from None


def _parse_rect(rows, nr, nc, where):
    M = np.zeros((nr, nc), dtype=complex)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != nc:
            raise ChannelFormatError(f"{where}: row {i} must have {nc} entries")
        for j, z in enumerate(row):
            if isinstance(z, (int, float)):
                M[i, j] = float(z)
            elif isinstance(z, list) and len(z) == 2:
                M[i, j] = complex(z[0], z[1])
            else:
                raise ChannelFormatError(f"{where}: entry [{i}][{j}] must be [re, im]")
    return M


def load_superchannel(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ChannelFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ChannelFormatError(f"{path}: {exc.strerror}") from None
    return superchannel_from_dict(obj, source=str(path))


def dump_superchannel(theta, path):
    with open(path, "w") as fh:
        json.dump(theta.to_dict(), fh, indent=1)

