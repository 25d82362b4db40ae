"""Symmetric positive definite solves and a dense eigenpair oracle.

``solve_spd`` uses a dense Cholesky factorization up to dimension 2000 and
diagonally preconditioned conjugate gradients above; both paths verify the
relative residual before returning.  ``dense_smallest_eigpair`` reduces the
generalized problem with an explicit Cholesky of the mass matrix and calls
a standard dense symmetric eigensolver on the reduced operator, so its
code path is independent of the inverse iteration it is used to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .assembly import DirichletConstraint, SymSparseMatrix

DIRECT_SOLVE_MAX_DIM = 2000
DENSE_EIG_MAX_DIM = 5000


class SolverError(RuntimeError):
    """Linear solve failed; ``residual`` holds the achieved relative residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class IndefiniteOperatorError(SolverError):
    """A direction of nonpositive curvature was encountered."""


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for solve_spd.

    ``max_iterations`` of None means 10 times the system dimension.
    """

    rtol: float = 1e-12
    max_iterations: int | None = None

    def __post_init__(self):
        if not (0.0 < self.rtol < 1.0):
            raise ValueError(f"rtol must be in (0, 1), got {self.rtol}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


def _pcg(A: SymSparseMatrix, b: np.ndarray, rtol: float, max_iter: int) -> np.ndarray:
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise IndefiniteOperatorError("nonpositive diagonal entry: matrix is not SPD")
    dinv = 1.0 / diag
    x = np.zeros_like(b)
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise IndefiniteOperatorError(
                f"nonpositive curvature p'Ap = {pAp:.3e}: matrix is not SPD"
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rtol * bnorm:
            return x
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    achieved = np.linalg.norm(r) / bnorm
    raise SolverError(
        f"conjugate gradients did not converge in {max_iter} iterations "
        f"(achieved relative residual {achieved:.3e}, target {rtol:.3e})",
        residual=achieved,
    )


class PrefactoredSPD:
    """Reusable SPD solver: dense Cholesky when affordable, else CG.

    Amortizes one factorization over many right-hand sides; used by the
    iteration driver where the operator is fixed across steps.
    """

    def __init__(self, A: SymSparseMatrix, config: SolverConfig | None = None,
                 direct_max_dim: int = DIRECT_SOLVE_MAX_DIM):
        self.A = A
        self.config = config or SolverConfig()
        self._factor = None
        if A.dim <= direct_max_dim:
            try:
                self._factor = sla.cho_factor(A.to_dense(), lower=True)
            except np.linalg.LinAlgError as exc:
                raise IndefiniteOperatorError(
                    f"Cholesky factorization failed: {exc}"
                ) from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        max_iter = self.config.max_iterations or 10 * self.A.dim
        if self._factor is not None:
            x = sla.cho_solve(self._factor, b)
            bnorm = np.linalg.norm(b)
            if bnorm > 0.0:
                # a few rounds of iterative refinement absorb mild
                # ill-conditioning; hopeless systems still fail the check
                for _ in range(3):
                    r = b - self.A @ x
                    achieved = np.linalg.norm(r) / bnorm
                    if achieved <= self.config.rtol:
                        break
                    x = x + sla.cho_solve(self._factor, r)
                else:
                    achieved = np.linalg.norm(b - self.A @ x) / bnorm
                if achieved > self.config.rtol:
                    raise SolverError(
                        f"direct solve residual {achieved:.3e} exceeds target "
                        f"{self.config.rtol:.3e} (ill-conditioned system)",
                        residual=achieved,
                    )
            return x
        return _pcg(self.A, b, self.config.rtol, max_iter)


def solve_spd(A: SymSparseMatrix, b: np.ndarray,
              config: SolverConfig | None = None) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A.

    Guarantees ||A x - b|| <= rtol ||b||; deterministic for fixed inputs.
    Raises SolverError on non-convergence (with the achieved residual) and
    IndefiniteOperatorError when a nonpositive curvature direction shows
    the matrix is not positive definite.
    """
    return PrefactoredSPD(A, config).solve(b)


def dense_smallest_eigpair(
    A: SymSparseMatrix,
    M: SymSparseMatrix,
    constraint: DirichletConstraint | None = None,
):
    """Smallest eigenpair of A u = lambda M u on the constrained subspace.

    Densifies, restricts to unconstrained indices, reduces by a Cholesky
    factor of M, and solves the standard symmetric problem with a dense
    eigensolver.  The eigenvector is embedded back with zeros on the
    constrained set, normalized to u' M u = 1, and sign-fixed so its
    M-weighted mean is positive.
    """
    if A.dim != M.dim:
        raise ValueError(f"dimension mismatch: {A.dim} vs {M.dim}")
    if A.dim > DENSE_EIG_MAX_DIM:
        raise ValueError(
            f"dimension {A.dim} exceeds dense oracle cap {DENSE_EIG_MAX_DIM}"
        )
    n = A.dim
    if constraint is not None and constraint.size:
        free = np.setdiff1d(np.arange(n), constraint.indices)
    else:
        free = np.arange(n)

    Ad = A.to_dense()[np.ix_(free, free)]
    Md = M.to_dense()[np.ix_(free, free)]
    try:
        L = sla.cholesky(Md, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"mass matrix is not positive definite: {exc}") from exc

    # C = L^-1 A L^-T, symmetrized against rounding
    X = sla.solve_triangular(L, Ad, lower=True)
    C = sla.solve_triangular(L, X.T, lower=True)
    C = 0.5 * (C + C.T)
    w, V = sla.eigh(C, subset_by_index=[0, 0])
    lam = float(w[0])
    y = V[:, 0]
    u_free = sla.solve_triangular(L, y, lower=True, trans="T")

    u = np.zeros(n)
    u[free] = u_free
    u /= np.sqrt(M.quad(u))
    if float(np.sum(M @ u)) < 0.0:
        u = -u
    return lam, u
