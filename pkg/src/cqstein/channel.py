"""CQ channels, distances, Choi operators and free families.

A CQ channel maps each label of a finite alphabet to a density operator.
Product alphabets join labels with ``|`` so that ``"0|1"`` is the input
pair (0, 1).
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .hermit import eigvalsh, hermitize, min_eig

PSD_SLACK = 1e-10
TRACE_SLACK = 1e-10
PROB_SLACK = 1e-12


class ChannelFormatError(ValueError):
    """Malformed channel or superchannel payload, with a location prefix."""


class CapacityError(ValueError):
    """Requested object would exceed the size guard."""


def as_density(rho, where="state"):
    """Validate and return a density operator as a Hermitian complex array."""
    try:
        R = hermitize(rho)
    except ValueError as exc:
        raise ChannelFormatError(f"{where}: {exc}") from None
    raw = np.asarray(rho, dtype=complex)
    if np.max(np.abs(raw - raw.conj().T)) > 1e-8:
        raise ChannelFormatError(f"{where}: matrix is not Hermitian")
    lo = min_eig(R)
    if lo < -PSD_SLACK:
        raise ChannelFormatError(f"{where}: not positive semidefinite (min eigenvalue {lo:.3e})")
    tr = float(np.real(np.trace(R)))
    if abs(tr - 1.0) > TRACE_SLACK:
        raise ChannelFormatError(f"{where}: trace {tr:.12g} differs from 1")
    return R


def as_probability(w, n=None):
    """Validate a probability vector (nonnegative, sums to one within 1e-12)."""
    w = np.asarray(w, dtype=float).ravel()
    if n is not None and w.size != n:
        raise ValueError(f"expected {n} weights, got {w.size}")
    if np.any(w < -PROB_SLACK) or abs(w.sum() - 1.0) > PROB_SLACK * max(1, w.size):
        raise ValueError("weights are not a probability vector")
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def product_label(*labels):
    return "|".join(labels)


class CQChannel:
    """Finite alphabet to density operators.

    Outputs are validated at construction; the object is treated as immutable.
    """

    def __init__(self, labels, outputs, validate=True):
        labels = tuple(str(x) for x in labels)
        if len(labels) < 1:
            raise ChannelFormatError("channel needs at least one input")
        if len(set(labels)) != len(labels):
            raise ChannelFormatError("duplicate input labels")
        if len(outputs) != len(labels):
            raise ChannelFormatError("one output per input label is required")
        if validate:
            outs = tuple(as_density(o, where=f"output[{lab!r}]") for lab, o in zip(labels, outputs))
        else:
            outs = tuple(hermitize(o) for o in outputs)
        dims = {o.shape[0] for o in outs}
        if len(dims) != 1:
            raise ChannelFormatError(f"outputs have inconsistent dimensions {sorted(dims)}")
        self.labels = labels
        self.outputs = outs
        self.dim = outs[0].shape[0]
        self._index = {lab: i for i, lab in enumerate(labels)}

    @property
    def n_inputs(self):
        return len(self.labels)

    def __call__(self, label):
        return self.outputs[self._index[str(label)]]

    def index(self, label):
        return self._index[str(label)]

    def __repr__(self):
        return f"CQChannel(inputs={self.n_inputs}, dim={self.dim})"

    def same_shape(self, other):
        return self.labels == other.labels and self.dim == other.dim

    def map_outputs(self, fn, validate=True):
        return CQChannel(self.labels, [fn(o) for o in self.outputs], validate=validate)

    def to_dict(self):
        return {
            "inputs": list(self.labels),
            "dim": self.dim,
            "outputs": {
                lab: [[[float(z.real), float(z.imag)] for z in row] for row in o]
                for lab, o in zip(self.labels, self.outputs)
            },
        }


def check_same_shape(a, b):
    if not a.same_shape(b):
        raise ValueError(
            f"channel shapes differ: inputs {a.labels} dim {a.dim} vs inputs {b.labels} dim {b.dim}"
        )


def make_channel(outputs, labels=None):
    """Build a channel from a list of matrices (labels default to 0..X-1) or a dict."""
    if isinstance(outputs, dict):
        labels = list(outputs.keys())
        outputs = list(outputs.values())
    if labels is None:
        labels = [str(i) for i in range(len(outputs))]
    return CQChannel(labels, outputs)


def pure(vec):
    v = np.asarray(vec, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def replacer(rho, labels):
    """The channel that outputs ``rho`` for every label."""
    rho = as_density(rho)
    return CQChannel(labels, [rho] * len(labels))


def mix_channels(weights, channels, validate=True):
    """Convex combination of same-shape channels."""
    weights = np.asarray(weights, dtype=float)
    base = channels[0]
    for c in channels[1:]:
        check_same_shape(base, c)
    outs = [sum(w * c.outputs[i] for w, c in zip(weights, channels)) for i in range(base.n_inputs)]
    return CQChannel(base.labels, outs, validate=validate)


def trace_distance(rho1, rho2):
    """Half the trace norm of the difference."""
    A, B = np.asarray(rho1), np.asarray(rho2)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    return 0.5 * float(np.sum(np.abs(eigvalsh(A - B))))


def diamond_distance(phi1, phi2):
    """Worst-case trace distance over inputs (the CQ diamond distance)."""
    check_same_shape(phi1, phi2)
    return max(trace_distance(a, b) for a, b in zip(phi1.outputs, phi2.outputs))


def choi(phi):
    """Block-diagonal operator sum_x |x><x| (x) Phi(x), inputs in label order."""
    X, D = phi.n_inputs, phi.dim
    J = np.zeros((X * D, X * D), dtype=complex)
    for i, o in enumerate(phi.outputs):
        J[i * D:(i + 1) * D, i * D:(i + 1) * D] = o
    return J


def tensor_channels(phi1, phi2):
    """Tensor product: inputs are label pairs, outputs Kronecker products."""
    labels, outs = [], []
    for a, oa in zip(phi1.labels, phi1.outputs):
        for b, ob in zip(phi2.labels, phi2.outputs):
            labels.append(product_label(a, b))
            outs.append(np.kron(oa, ob))
    return CQChannel(labels, outs, validate=False)


def channel_power(phi, n, n_max=5):
    """n-fold tensor power; refuses n above ``n_max`` or outputs above dim 4096."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > n_max or phi.dim ** n > 4096:
        raise CapacityError(f"channel power n={n} exceeds the size guard (n_max={n_max})")
    out = phi
    for _ in range(n - 1):
        out = tensor_channels(out, phi)
    return out


def power_labels(labels, n):
    return [product_label(*t) for t in itertools.product(labels, repeat=n)]


# --- free families -------------------------------------------------------------


@dataclass(frozen=True)
class FreeFamily:
    """A compact convex set of CQ channels on a fixed alphabet and dimension.

    ``kind`` is ``"replacer"`` (all channels x -> rho) or ``"hull"`` (convex hull of
    ``generators``).  ``full_rank_witness`` is a member whose outputs are all at
    least ``lambda_min`` times the identity.
    """

    kind: str
    labels: tuple
    dim: int
    generators: tuple = ()
    tensor_closed: bool = False
    full_rank_witness: CQChannel = field(default=None, compare=False)
    lambda_min: float = 0.0

    @property
    def n_inputs(self):
        return len(self.labels)

    def member(self, param):
        """Replacer: ``param`` is a density matrix.  Hull: ``param`` is a weight vector."""
        if self.kind == "replacer":
            return CQChannel(self.labels, [hermitize(param)] * self.n_inputs, validate=False)
        w = np.asarray(param, dtype=float)
        return mix_channels(w, self.generators, validate=False)

    def power(self, n):
        """The n-copy family: replacers on H^n, or the hull of all n-fold generator products."""
        if n == 1:
            return self
        labels = power_labels(self.labels, n)
        if self.kind == "replacer":
            return replacer_family(labels, self.dim ** n)
        gens = []
        for combo in itertools.product(self.generators, repeat=n):
            g = combo[0]
            for h in combo[1:]:
                g = tensor_channels(g, h)
            gens.append(g)
        return hull_family(gens, tensor_closed=True)

    def contains(self, phi, tol=None):
        """Membership test: replacer outputs equal within 1e-9; hull Choi distance within 1e-8."""
        if phi.labels != self.labels or phi.dim != self.dim:
            return False
        if self.kind == "replacer":
            tol = 1e-9 if tol is None else tol
            o0 = phi.outputs[0]
            return all(np.max(np.abs(o - o0)) <= tol for o in phi.outputs[1:])
        tol = 1e-8 if tol is None else tol
        return hull_distance(self, phi)[0] <= tol


def replacer_family(labels, dim):
    labels = tuple(str(x) for x in labels)
    witness = CQChannel(labels, [np.eye(dim) / dim] * len(labels))
    return FreeFamily("replacer", labels, dim, (), True, witness, 1.0 / dim)


def hull_family(generators, tensor_closed=False):
    """Convex hull of same-shape generators.  The uniform mixture is the full-rank witness."""
    gens = tuple(generators)
    if not gens:
        raise ValueError("hull needs at least one generator")
    for g in gens[1:]:
        check_same_shape(gens[0], g)
    witness = mix_channels(np.full(len(gens), 1.0 / len(gens)), gens)
    lam = min(min_eig(o) for o in witness.outputs)
    if lam <= 0:
        raise ValueError("hull has no full-rank member; the full-rank axiom fails")
    return FreeFamily("hull", gens[0].labels, gens[0].dim, gens, tensor_closed, witness, lam)


def hull_distance(F, phi):
    """Least-squares distance of choi(phi) to the hull polytope; returns (distance, weights)."""
    from scipy.optimize import minimize

    target = choi(phi).ravel()
    G = np.array([choi(g).ravel() for g in F.generators]).T
    A = np.vstack([G.real, G.imag])
    b = np.concatenate([target.real, target.imag])
    K = A.shape[1]
    res = minimize(
        lambda w: 0.5 * np.sum((A @ w - b) ** 2),
        np.full(K, 1.0 / K),
        jac=lambda w: A.T @ (A @ w - b),
        bounds=[(0, 1)] * K,
        constraints=[{"type": "eq", "fun": lambda w: np.sum(w) - 1, "jac": lambda w: np.ones(K)}],
        method="SLSQP",
        options={"ftol": 1e-16, "maxiter": 500},
    )
    w = np.clip(res.x, 0, None)
    w /= w.sum()
    return float(np.linalg.norm(A @ w - b)), w


def bloch_state(r):
    """Qubit density matrix with Bloch vector r."""
    x, y, z = r
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]], dtype=complex)


def simplex_grid(K, m):
    """All weight vectors with entries in {0, 1/m, ..., 1} summing to one."""
    pts = []
    for c in itertools.product(range(m + 1), repeat=K - 1):
        if sum(c) <= m:
            pts.append(np.array(list(c) + [m - sum(c)], dtype=float) / m)
    return pts


def family_members_grid(F, resolution):
    """Deterministic covering of the family.

    Replacer (dim <= 2): cubic lattice of Bloch vectors, radially projected into
    the ball, with trace-distance mesh at most ``resolution``.  Hull: simplex
    lattice with step 1/ceil(1/resolution), so every weight vector lies within
    ``resolution`` of a lattice point in max-norm.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if F.kind == "replacer":
        if F.dim == 1:
            return [F.member(np.eye(1))]
        if F.dim > 2:
            raise NotImplementedError("Bloch grid is only available for out_dim <= 2")
        s = resolution * 4 / np.sqrt(3)
        k = int(np.ceil(1 / s))
        ticks = np.arange(-k, k + 1) * s
        seen, members = set(), []
        for r in itertools.product(ticks, repeat=3):
            r = np.array(r)
            nr = np.linalg.norm(r)
            if nr > 1:
                r = r / nr
            key = tuple(np.round(r, 12))
            if key in seen:
                continue
            seen.add(key)
            members.append(F.member(bloch_state(r)))
        return members
    m = int(np.ceil(1 / resolution - 1e-12))
    return [F.member(w) for w in simplex_grid(len(F.generators), m)]


# --- random instances --------------------------------------------------------------


def random_density(dim, rng, rank=None):
    """Random density matrix from a Ginibre sample of the given rank."""
    rank = dim if rank is None else rank
    G = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    R = G @ G.conj().T
    return hermitize(R / np.trace(R).real)


def random_channel(n_inputs, dim, rng, rank=None):
    return CQChannel([str(i) for i in range(n_inputs)], [random_density(dim, rng, rank) for _ in range(n_inputs)])


def random_classical_channel(n_inputs, dim, rng):
    """Random channel with diagonal outputs (all outputs commute)."""
    outs = []
    for _ in range(n_inputs):
        p = rng.dirichlet(np.ones(dim))
        outs.append(np.diag(p).astype(complex))
    return CQChannel([str(i) for i in range(n_inputs)], outs)


# --- file format -----------------------------------------------------------------


def _parse_matrix(obj, dim, where):
    if not isinstance(obj, list) or len(obj) != dim:
        raise ChannelFormatError(f"{where}: expected {dim} rows")
    M = np.zeros((dim, dim), dtype=complex)
    for i, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != dim:
            raise ChannelFormatError(f"{where}: row {i} must have {dim} entries")
        for j, z in enumerate(row):
            if isinstance(z, (int, float)):
                M[i, j] = float(z)
            elif isinstance(z, list) and len(z) == 2 and all(isinstance(t, (int, float)) for t in z):
                M[i, j] = complex(z[0], z[1])
            else:
                raise ChannelFormatError(f"{where}: entry [{i}][{j}] must be [re, im]")
    if not np.all(np.isfinite(M)):
        raise ChannelFormatError(f"{where}: non-finite entry")
    return M


def parse_matrix(obj, dim, where="matrix"):
    return _parse_matrix(obj, dim, where)


def channel_from_dict(obj, source="<channel>"):
    """Parse and validate the JSON channel format."""
    if not isinstance(obj, dict):
        raise ChannelFormatError(f"{source}: top level must be an object")
    for key in ("inputs", "dim", "outputs"):
        if key not in obj:
            raise ChannelFormatError(f"{source}: missing key {key!r}")
    labels, dim, outs = obj["inputs"], obj["dim"], obj["outputs"]
    if not isinstance(labels, list) or not labels:
        raise ChannelFormatError(f"{source}: 'inputs' must be a non-empty list")
    if not isinstance(dim, int) or dim < 1:
        raise ChannelFormatError(f"{source}: 'dim' must be a positive integer")
    if not isinstance(outs, dict):
        raise ChannelFormatError(f"{source}: 'outputs' must be an object keyed by label")
    mats = []
    for lab in labels:
        if str(lab) not in outs:
            raise ChannelFormatError(f"{source}: outputs[{lab!r}] missing")
        where = f"{source}: outputs[{lab!r}]"
        M = _parse_matrix(outs[str(lab)], dim, where)
        mats.append(as_density(M, where=where))
    return CQChannel([str(x) for x in labels], mats)


def load_channel(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ChannelFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ChannelFormatError(f"{path}: {exc.strerror}") from None
    return channel_from_dict(obj, source=str(path))


def dump_channel(phi, path):
    with open(path, "w") as fh:
        json.dump(phi.to_dict(), fh, indent=1)
