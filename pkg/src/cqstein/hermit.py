"""Dense complex Hermitian linear algebra.

Operators are plain ``numpy`` arrays.  Every routine that needs a Hermitian
input symmetrizes it first, so callers may pass matrices carrying rounding
noise in the anti-Hermitian part.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np


class SolverFailure(RuntimeError):
    """An iterative routine hit its iteration cap."""


class DomainError(ValueError):
    """A function was requested outside its domain (e.g. log of zero)."""


def tau_spec(A):
    """Clustering threshold for distinct eigenvalues, scaled to ``A``."""
    return 1e-9 * max(1.0, float(np.max(np.abs(A))) if np.size(A) else 1.0)


def tau_supp(dim):
    """Cutoff below which an eigenvalue counts as zero."""
    return 1e-10 * dim


def hermitize(A):
    """Return (A + A^dagger)/2 as a complex array after shape and finiteness checks."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return 0.5 * (A + A.conj().T)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues, unitary eigenvectors (columns) and clustered groups."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    groups: tuple

    @property
    def n_distinct(self):
        return len(self.groups)

    def projectors(self):
        """Spectral projectors, one per distinct-eigenvalue cluster."""
        V = self.eigenvectors
        return [V[:, list(g)] @ V[:, list(g)].conj().T for g in self.groups]

    def group_values(self):
        return np.array([np.mean(self.eigenvalues[list(g)]) for g in self.groups])

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def cluster_eigenvalues(w, tau):
    """Partition ascending eigenvalues into runs whose consecutive gaps are at most ``tau``."""
    groups, current = [], [0]
    for i in range(1, len(w)):
        if w[i] - w[i - 1] > tau:
            groups.append(tuple(current))
            current = []
        current.append(i)
    groups.append(tuple(current))
    return tuple(groups)


def _jacobi_real_symmetric(M, max_sweeps=100):
    """Cyclic Jacobi for a real symmetric matrix, sweeping pairs in row order."""
    M = np.array(M, dtype=float)
    n = M.shape[0]
    V = np.eye(n)
    # Scale-aware threshold on the off-diagonal Frobenius norm.
    scale = max(np.linalg.norm(M), 1e-300)
    for sweep in range(max_sweeps):
        # Direct sum of squares; subtracting the diagonal from the total loses half the digits.
        off = np.linalg.norm(M - np.diag(np.diag(M)))
        if off <= 1e-14 * scale:
            return np.diag(M).copy(), V, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = M[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                theta = (M[q, q] - M[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    # Avoid overflow in theta**2; the rotation is then tiny.
                    t = 1.0 / (2.0 * theta)
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = M[p, :].copy(), M[q, :].copy()
                M[p, :] = c * rp - s * rq
                M[q, :] = s * rp + c * rq
                cp, cq = M[:, p].copy(), M[:, q].copy()
                M[:, p] = c * cp - s * cq
                M[:, q] = s * cp + c * cq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    raise SolverFailure(f"Jacobi did not converge in {max_sweeps} sweeps")


def jacobi_eigh(A, max_sweeps=100):
    """Hermitian eigendecomposition by Jacobi rotations on the real embedding.

    The complex matrix A = X + iY is mapped to [[X, -Y], [Y, X]], whose spectrum
    is that of A with every eigenvalue doubled.  Each doubled pair spans one
    complex direction, recovered by Gram-Schmidt on the candidates u + iv.
    """
    A = hermitize(A)
    n = A.shape[0]
    X, Y = A.real, A.imag
    M = np.block([[X, -Y], [Y, X]])
    w, W, _ = _jacobi_real_symmetric(M, max_sweeps=max_sweeps)
    order = np.argsort(w, kind="stable")
    w, W = w[order], W[:, order]
    cand = W[:n, :] + 1j * W[n:, :]
    basis = []
    for k in range(2 * n):
        v = cand[:, k].copy()
        for b in basis:
            v -= b * np.vdot(b, v)
        for b in basis:
            v -= b * np.vdot(b, v)
        nv = np.linalg.norm(v)
        if nv > 0.5:
            basis.append(v / nv)
        if len(basis) == n:
            break
    if len(basis) < n:
        raise SolverFailure("could not extract a complex eigenbasis from the real embedding")
    V = np.column_stack(basis)
    vals = np.real(np.einsum("ij,ik,kj->j", V.conj(), A, V))
    order = np.argsort(vals, kind="stable")
    return vals[order], V[:, order]


def eig_hermitian(A, method="lapack"):
    """Spectral decomposition with eigenvalue clustering at ``tau_spec``.

    ``method="lapack"`` uses ``numpy.linalg.eigh``; ``method="jacobi"`` runs the
    dependency-free cyclic Jacobi solver.
    """
    A = hermitize(A)
    if A.shape[0] > 4096:
        raise ValueError("dimension above 4096 is not supported")
    if method == "lapack":
        w, V = np.linalg.eigh(A)
    elif method == "jacobi":
        w, V = jacobi_eigh(A)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    return SpectralDecomposition(w, V, cluster_eigenvalues(w, tau_spec(A)))


def eigvalsh(A):
    return np.linalg.eigvalsh(hermitize(A))


def min_eig(A):
    return float(eigvalsh(A)[0])


def max_eig(A):
    return float(eigvalsh(A)[-1])


def n_distinct(A):
    """Number of distinct eigenvalue clusters of A."""
    return eig_hermitian(A).n_distinct


def matrix_function(A, f, support_only=False):
    """Apply a real scalar function to the spectrum of A.

    With ``support_only`` the function is applied only to eigenvalues above
    ``tau_supp(dim)`` and the kernel is mapped to zero.  Otherwise a function
    that is singular at zero (log, negative powers) raises ``DomainError`` when
    A has an eigenvalue at or below the cutoff.
    """
    dec = eig_hermitian(A)
    w, V = dec.eigenvalues, dec.eigenvectors
    cut = tau_supp(len(w))
    # Evaluate once per cluster so degenerate eigenvalues stay exactly degenerate.
    vals = np.empty_like(w)
    for g in dec.groups:
        vals[list(g)] = np.mean(w[list(g)])
    out = np.zeros_like(w)
    mask = vals > cut if support_only else np.ones(len(w), dtype=bool)
    if not support_only:
        with np.errstate(all="ignore"):
            singular = not np.isfinite(f(np.array([0.0]))[0])
        if singular and np.any(vals <= cut):
            raise DomainError("function is singular on a zero eigenvalue; use support_only")
    with np.errstate(all="ignore"):
        out[mask] = f(vals[mask])
    if not np.all(np.isfinite(out)):
        raise DomainError("function produced non-finite values on the spectrum")
    return hermitize((V * out) @ V.conj().T)


def logm(A, support_only=False):
    return matrix_function(A, np.log, support_only)


def powm(A, p, support_only=False):
    return matrix_function(A, lambda x: np.power(x, p), support_only)


def sqrtm_psd(A):
    return matrix_function(A, lambda x: np.sqrt(np.clip(x, 0.0, None)))


def expm_h(A):
    return matrix_function(A, np.exp)


def support_projector(A, cut=None):
    """Projector onto eigenvectors of A with eigenvalue above the support cutoff."""
    A = hermitize(A)
    w, V = np.linalg.eigh(A)
    cut = tau_supp(A.shape[0]) if cut is None else cut
    Vs = V[:, w > cut]
    return Vs @ Vs.conj().T


def positive_part(A):
    """Spectral positive part (A)_+."""
    A = hermitize(A)
    w, V = np.linalg.eigh(A)
    return (V * np.clip(w, 0.0, None)) @ V.conj().T


def psd_indicator(A, B):
    """Projector {A >= B} onto the eigenvectors of A - B with eigenvalue >= 0.

    Eigenvalues within ``tau_spec`` of zero count as nonnegative.
    """
    A, B = hermitize(A), hermitize(B)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    C = A - B
    w, V = np.linalg.eigh(C)
    Vs = V[:, w >= -tau_spec(C)]
    return hermitize(Vs @ Vs.conj().T)


def tensor(*ops):
    """Kronecker product of any number of operators."""
    if not ops:
        raise ValueError("tensor needs at least one operator")
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def partial_trace(A, dims, which):
    """Trace out the subsystems listed in ``which`` (indices into ``dims``)."""
    A = np.asarray(A, dtype=complex)
    dims = list(dims)
    total = int(np.prod(dims))
    if A.shape != (total, total):
        raise ValueError(f"operator shape {A.shape} does not match dims {dims}")
    which = [which] if np.isscalar(which) else list(which)
    k = len(dims)
    T = A.reshape(dims + dims)
    # Trace highest index first so remaining axis positions stay valid.
    for i in sorted(which, reverse=True):
        T = np.trace(T, axis1=i, axis2=i + T.ndim // 2)
        k -= 1
    keep = [d for i, d in enumerate(dims) if i not in which]
    m = int(np.prod(keep)) if keep else 1
    return T.reshape(m, m)


def trace(A):
    return float(np.real(np.trace(A)))


def op_leq(A, B, tol=0.0):
    """True iff min eig(B - A) >= -tol."""
    A, B = hermitize(A), hermitize(B)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    return min_eig(B - A) >= -tol


def commutator_norm(A, B):
    """Max-entry norm of AB - BA."""
    A, B = np.asarray(A), np.asarray(B)
    return float(np.max(np.abs(A @ B - B @ A)))


def frechet_derivative(S, E, f, fprime):
    """Frechet derivative of the matrix function f at Hermitian S in direction E.

    Daleckii-Krein: in the eigenbasis of S the derivative multiplies entries by
    divided differences of f, with f' on (near-)coincident eigenvalues.
    """
    w, V = np.linalg.eigh(hermitize(S))
    fw, dfw = f(w), fprime(w)
    dw = w[:, None] - w[None, :]
    same = np.abs(dw) <= 1e-8 * np.maximum(np.maximum(np.abs(w[:, None]), np.abs(w[None, :])), 1e-300)
    with np.errstate(all="ignore"):
        L = np.where(same, 0.5 * (dfw[:, None] + dfw[None, :]), (fw[:, None] - fw[None, :]) / np.where(same, 1.0, dw))
    Et = V.conj().T @ np.asarray(E, dtype=complex) @ V
    return V @ (L * Et) @ V.conj().T


def log_derivative(S, E):
    """Frechet derivative of log at positive definite S in direction E."""
    return frechet_derivative(S, E, np.log, lambda x: 1.0 / x)


def hermitian_basis(d):
    """Orthonormal (Hilbert-Schmidt) real basis of d x d Hermitian matrices.

    The first element is the normalized identity; the remaining d^2 - 1 are
    traceless.
    """
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            E = np.zeros((d, d), dtype=complex)
            E[j, k] = E[k, j] = 1 / np.sqrt(2)
            basis.append(E)
            E = np.zeros((d, d), dtype=complex)
            E[j, k], E[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            basis.append(E)
    for m in range(1, d):
        diag = np.zeros(d)
        diag[:m] = 1.0
        diag[m] = -m
        basis.append(np.diag(diag / np.linalg.norm(diag)).astype(complex))
    return basis
