"""Dense complex-matrix primitives.

Operators are plain ``numpy`` complex arrays of shape ``(d, d)``. The
functions here never mutate their inputs. Hermitian and positive
semidefinite checks always symmetrize first and report how much
anti-Hermitian part was thrown away, so that drift accumulated by the
integrators is measured instead of silently hidden.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

#: default certification tolerance, relative to the Frobenius norm
CERT_TOL = 1e-10

#: supported desk scale for the vectorized Sylvester solve
MAX_KRON_DIM = 32


class DimensionError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


class SingularPencilError(np.linalg.LinAlgError):
    """Sylvester pencil with (nearly) overlapping spectra."""

    def __init__(self, separation, tol):
        self.separation = separation
        super().__init__(
            f"spectra of A and -B too close: separation {separation:.3e} <= {tol:.3e}")


@dataclass(frozen=True)
class Certificate:
    """Outcome of a Hermitian / psd certification.

    ``antihermitian_norm`` is the Frobenius norm of the discarded part
    ``(A - A*)/2``; ``min_eig`` is only filled in by :func:`certify_psd`.
    """
    hermitian: bool
    psd: bool | None
    tol: float
    antihermitian_norm: float
    min_eig: float | None = None


def as_operator(A, dim=None):
    A = np.asarray(A, dtype=complex)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if dim is not None and A.shape[0] != dim:
        raise DimensionError(f"expected dimension {dim}, got {A.shape[0]}")
    return A


def _same_dim(*mats):
    dims = {m.shape[0] for m in mats}
    if len(dims) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(dims)}")


def adjoint(A):
    """Conjugate transpose."""
    return np.conj(as_operator(A)).T.copy()


def commutator(A, B):
    A, B = as_operator(A), as_operator(B)
    _same_dim(A, B)
    return A @ B - B @ A


def anticommutator(A, B):
    A, B = as_operator(A), as_operator(B)
    _same_dim(A, B)
    return A @ B + B @ A


def hermitian_part(A):
    """Return ``((A + A*)/2, ||(A - A*)/2||_F)``."""
    A = as_operator(A)
    H = 0.5 * (A + A.conj().T)
    return H, float(np.linalg.norm(0.5 * (A - A.conj().T)))


def _scale(A):
    return max(1.0, float(np.linalg.norm(A)))


def certify_hermitian(A, tol=CERT_TOL):
    A = as_operator(A)
    _, anti = hermitian_part(A)
    return Certificate(anti <= tol * _scale(A), None, tol, anti)


def certify_psd(A, tol=CERT_TOL):
    A = as_operator(A)
    H, anti = hermitian_part(A)
    lam = float(np.linalg.eigvalsh(H)[0])
    herm = anti <= tol * _scale(A)
    return Certificate(herm, herm and lam >= -tol * _scale(A), tol, anti, lam)


def is_hermitian(A, tol=CERT_TOL):
    return certify_hermitian(A, tol).hermitian


def is_psd(A, tol=CERT_TOL):
    return bool(certify_psd(A, tol).psd)


def spectrum(A, tol=CERT_TOL):
    """Eigenvalues sorted ascending (by real part, then imaginary part).

    Hermitian-certified input goes through ``eigvalsh`` and returns real
    values; anything else is read off the diagonal of a complex Schur form.
    """
    A = as_operator(A)
    if is_hermitian(A, tol):
        H, _ = hermitian_part(A)
        return np.linalg.eigvalsh(H)
    T = scipy.linalg.schur(A, output="complex")[0]
    w = np.diag(T)
    return w[np.lexsort((w.imag, w.real))]


def psd_sqrt(A, tol=CERT_TOL):
    """Principal square root of a Hermitian psd operator."""
    A = as_operator(A)
    cert = certify_psd(A, tol)
    if not cert.hermitian:
        raise NotPSDError(f"not Hermitian: anti-Hermitian norm {cert.antihermitian_norm:.3e}")
    if not cert.psd:
        raise NotPSDError(f"not positive semidefinite: min eigenvalue {cert.min_eig:.3e}")
    H, _ = hermitian_part(A)
    w, V = np.linalg.eigh(H)
    S = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T
    return 0.5 * (S + S.conj().T)


def project_psd(A):
    """Nearest (Frobenius) Hermitian psd operator."""
    H, _ = hermitian_part(A)
    w, V = np.linalg.eigh(H)
    P = (V * np.clip(w, 0.0, None)) @ V.conj().T
    return 0.5 * (P + P.conj().T)


@dataclass(frozen=True)
class Polar:
    W: np.ndarray
    P: np.ndarray
    rank: int
    rank_deficiency: int


def polar_decompose(A, tol=CERT_TOL):
    """Polar decomposition ``A = W P`` with ``W`` unitary, ``P = |A|``.

    For singular ``A`` the unitary factor is completed from the singular
    vector pairing (``W = U V*`` of the SVD), which is one of many valid
    choices; the rank deficiency is reported on the result.
    """
    A = as_operator(A)
    U, s, Vh = np.linalg.svd(A)
    W = U @ Vh
    P = (Vh.conj().T * s) @ Vh
    P = 0.5 * (P + P.conj().T)
    cutoff = tol * max(1.0, s[0] if s.size else 0.0)
    rank = int(np.count_nonzero(s > cutoff))
    return Polar(W, P, rank, A.shape[0] - rank)


def matrix_exp(A):
    """Matrix exponential (scaling and squaring, Pade core)."""
    A = as_operator(A)
    if not A.any():
        return np.eye(A.shape[0], dtype=complex)
    return scipy.linalg.expm(A)


def vec(A):
    """Column-stacking vectorization, ``vec(A X B) = (B.T kron A) vec(X)``."""
    return np.asarray(A).reshape(-1, order="F")


def unvec(v, dim):
    return np.asarray(v).reshape(dim, dim, order="F")


def sylvester_separation(A, B):
    """``min |lambda_i(A) + mu_j(B)|``; zero means the equation is singular."""
    la = np.linalg.eigvals(as_operator(A))
    lb = np.linalg.eigvals(as_operator(B))
    return float(np.min(np.abs(la[:, None] + lb[None, :])))


def solve_sylvester(A, B, C, tol=1e-12):
    """Solve ``A X + X B = C`` by Kronecker vectorization.

    Raises :class:`SingularPencilError` when the spectra of ``A`` and
    ``-B`` are closer than ``tol * (||A|| + ||B||)``.
    """
    A, B, C = as_operator(A), as_operator(B), as_operator(C)
    _same_dim(A, B, C)
    d = A.shape[0]
    if d > MAX_KRON_DIM:
        raise DimensionError(f"dimension {d} exceeds supported {MAX_KRON_DIM}")
    scale = max(np.linalg.norm(A) + np.linalg.norm(B), 1e-300)
    sep = sylvester_separation(A, B)
    if sep <= tol * scale:
        raise SingularPencilError(sep, tol * scale)
    I = np.eye(d)
    K = np.kron(I, A) + np.kron(B.T, I)
    return unvec(np.linalg.solve(K, vec(C)), d)


def solve_generalized_lyapunov(A, Phi, C):
    """Solve ``A* X + X A + Phi* X Phi = C`` (vectorized)."""
    A, C = as_operator(A), as_operator(C)
    d = A.shape[0]
    I = np.eye(d)
    Ah = A.conj().T
    K = np.kron(I, Ah) + np.kron(A.T, I)
    if Phi is not None:
        Phi = as_operator(Phi, d)
        K = K + np.kron(Phi.T, Phi.conj().T)
    return unvec(np.linalg.solve(K, vec(C)), d)


def sandwich_superop(A, B):
    """Superoperator matrix of ``X -> A X B`` on column-stacked vectors."""
    return np.kron(np.asarray(B).T, np.asarray(A))
