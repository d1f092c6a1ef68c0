"""Dense linear algebra on Liouville (operator) space.

Operators are plain complex ``numpy`` arrays. Superoperators are matrices
acting on vectorized operators, with a single global convention:

* **Column-stacking vectorization.** ``vectorize(X)[i + rows*j] = X[i, j]``,
  i.e. the columns of ``X`` are stacked top to bottom. Under this convention
  the map ``X -> A X B`` has matrix ``kron(B.T, A)``.
* **Tensor ordering.** Joint system-environment operators put the system
  factor first: a joint basis index is ``s * dim_env + e``.

Everything here is a pure function of its inputs; nothing is mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, svdvals


@dataclass(frozen=True)
class SpaceLayout:
    """Dimensions of the system / environment factors of a joint space."""

    dim_system: int
    dim_environment: int

    def __post_init__(self):
        if self.dim_system < 2:
            raise ValueError(f"system dimension must be >= 2, got {self.dim_system}")
        if self.dim_environment < 1:
            raise ValueError(
                f"environment dimension must be >= 1, got {self.dim_environment}"
            )

    @property
    def dim_joint(self) -> int:
        return self.dim_system * self.dim_environment


def vectorize(x: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {x.shape}")
    return x.reshape(-1, order="F")


def devectorize(v: np.ndarray, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`; exact round trip."""
    v = np.asarray(v)
    if cols is None:
        cols = rows
    if v.size != rows * cols:
        raise ValueError(f"vector of length {v.size} is not {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def sandwich_superop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of the map ``X -> A X B^dag`` on vectorized operators."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ValueError(f"need square matrices of equal size, got {a.shape}, {b.shape}")
    return np.kron(b.conj(), a)


def left_mult_superop(a: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> A X``."""
    a = np.asarray(a)
    return np.kron(np.eye(a.shape[0]), a)


def right_mult_superop(b: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> X B``."""
    b = np.asarray(b)
    return np.kron(b.T, np.eye(b.shape[0]))


def apply_superop(s: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply a superoperator matrix to an operator, returning an operator."""
    d = x.shape[0]
    return devectorize(s @ vectorize(x), d, x.shape[1])


def partial_trace(x: np.ndarray, layout: SpaceLayout, keep: str = "system") -> np.ndarray:
    """Trace out one tensor factor of a joint-space operator.

    Parameters
    ----------
    x : ndarray
        Operator on the joint space, shape ``(d_S*d_E, d_S*d_E)``.
    layout : SpaceLayout
        Factor dimensions; system factor first.
    keep : {"system", "environment"}
        Which factor survives.
    """
    ds, de = layout.dim_system, layout.dim_environment
    x = np.asarray(x)
    if x.shape != (ds * de, ds * de):
        raise ValueError(f"operator shape {x.shape} does not match layout {ds}x{de}")
    x4 = x.reshape(ds, de, ds, de)
    if keep == "system":
        return np.einsum("aebe->ab", x4)
    if keep == "environment":
        return np.einsum("aeaf->ef", x4)
    raise ValueError(f"keep must be 'system' or 'environment', got {keep!r}")


def trace_out_superop(layout: SpaceLayout, keep: str = "system") -> np.ndarray:
    """Matrix form of :func:`partial_trace` (joint vec -> factor vec)."""
    ds, de = layout.dim_system, layout.dim_environment
    d = ds * de
    dk = ds if keep == "system" else de
    mat = np.zeros((dk * dk, d * d), dtype=complex)
    for col in range(d * d):
        unit = np.zeros(d * d)
        unit[col] = 1.0
        mat[:, col] = vectorize(partial_trace(devectorize(unit, d), layout, keep))
    return mat


def embed_environment_superop(tau: np.ndarray, layout: SpaceLayout) -> np.ndarray:
    """Matrix of ``X -> X (x) tau`` (system vec -> joint vec)."""
    ds = layout.dim_system
    d = layout.dim_joint
    mat = np.empty((d * d, ds * ds), dtype=complex)
    for col in range(ds * ds):
        unit = np.zeros(ds * ds)
        unit[col] = 1.0
        mat[:, col] = vectorize(np.kron(devectorize(unit, ds), tau))
    return mat


def embed_system_superop(sigma: np.ndarray, layout: SpaceLayout) -> np.ndarray:
    """Matrix of ``Y -> sigma (x) Y`` (environment vec -> joint vec)."""
    de = layout.dim_environment
    d = layout.dim_joint
    mat = np.empty((d * d, de * de), dtype=complex)
    for col in range(de * de):
        unit = np.zeros(de * de)
        unit[col] = 1.0
        mat[:, col] = vectorize(np.kron(sigma, devectorize(unit, de)))
    return mat


def matrix_exponential(m: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """``exp(scale * M)`` via scaling-and-squaring Pade approximation."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return expm(scale * m)


def operator_norm(s: np.ndarray) -> float:
    """Largest singular value of a (super)operator matrix."""
    return float(svdvals(np.asarray(s))[0])


def trace_norm(x: np.ndarray) -> float:
    """Sum of singular values, ``tr|X|``."""
    return float(svdvals(np.asarray(x)).sum())


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``tr|rho - sigma|`` (no factor 1/2; orthogonal pure states give 2)."""
    return trace_norm(np.asarray(rho) - np.asarray(sigma))


def hermitize(x: np.ndarray) -> np.ndarray:
    """Hermitian part ``(X + X^dag)/2``."""
    return 0.5 * (x + x.conj().T)


def hermiticity_defect(x: np.ndarray) -> float:
    """Max elementwise ``|X - X^dag|``."""
    return float(np.max(np.abs(x - x.conj().T)))


def validate_density_operator(
    rho: np.ndarray,
    herm_tol: float = 1e-12,
    trace_tol: float = 1e-12,
    eig_floor: float = -1e-10,
) -> None:
    """Check Hermiticity, unit trace and (slack) positivity; raise on failure.

    Validation is deliberately explicit rather than baked into construction:
    cutoff-propagated states can legitimately leave the physical set and must
    still be representable.
    """
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density operator must be square, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density operator has non-finite entries")
    defect = hermiticity_defect(rho)
    if defect > herm_tol:
        raise ValueError(f"not Hermitian: max |rho - rho^dag| = {defect:.3e}")
    tr_err = abs(np.trace(rho) - 1.0)
    if tr_err > trace_tol:
        raise ValueError(f"trace deviates from 1 by {tr_err:.3e}")
    min_eig = float(np.linalg.eigvalsh(hermitize(rho)).min())
    if min_eig < eig_floor:
        raise ValueError(f"negative eigenvalue {min_eig:.3e} below floor {eig_floor:.1e}")


def is_density_operator(rho: np.ndarray, **tols) -> bool:
    """Boolean variant of :func:`validate_density_operator`."""
    try:
        validate_density_operator(rho, **tols)
    except ValueError:
        return False
    return True
