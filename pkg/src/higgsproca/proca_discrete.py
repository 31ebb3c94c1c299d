"""The discrete Proca field: a Gaussian edge field with plaquette-local precision.

The field ``X`` has density proportional to

    exp(-1/2 sum_p x(p)^2 - eps^2/2 sum_e x(e)^2),

so its precision is ``B^T B + eps^2 I`` with ``B`` the signed plaquette
incidence matrix.  This is the *raw* convention.  The *rescaled* convention
multiplies by ``eps^(d-2)``; its inverse ``R`` is the covariance of the
rescaled field ``Y = eps^{-(d-2)/2} X``.  Every public result states which
convention it uses.

Factorizations use a bandwidth-reducing permutation followed by a banded
Cholesky factorization; conjugate gradients serve as a fallback for solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .errors import InvalidParameterError, NumericalError
from .lattice import EdgeField, Lattice, edge_distance_matrix, incidence_matrix

SCALINGS = ("raw", "rescaled")


class BandedCholesky:
    """``A = U^T U`` for a sparse SPD matrix after reverse Cuthill-McKee reordering."""

    def __init__(self, A):
        A = sparse.csr_matrix(A)
        n = A.shape[0]
        perm = csgraph.reverse_cuthill_mckee(A, symmetric_mode=True)
        Ap = A[perm][:, perm].tocoo()
        bw = int(np.max(np.abs(Ap.row - Ap.col))) if Ap.nnz else 0
        ab = np.zeros((bw + 1, n))
        up = Ap.row <= Ap.col
        ab[bw + Ap.row[up] - Ap.col[up], Ap.col[up]] = Ap.data[up]
        try:
            self.ub = linalg.cholesky_banded(ab, lower=False)
        except linalg.LinAlgError as exc:
            dmin = float(A.diagonal().min()) if n else 0.0
            raise NumericalError(
                f"Cholesky factorization failed ({exc}); n={n}, bandwidth={bw}, min diagonal={dmin:g}"
            ) from exc
        self.perm = perm
        self.inv_perm = np.argsort(perm)
        self.bandwidth = bw
        self.n = n
        self.A = A

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = linalg.cho_solve_banded((self.ub, False), b[self.perm])
        return x[self.inv_perm]

    def sample(self, z) -> np.ndarray:
        """Map white noise ``z`` (shape ``(n,)`` or ``(n, k)``) to ``N(0, A^{-1})``."""
        x = linalg.solve_banded((0, self.bandwidth), self.ub, z)
        return x[self.inv_perm]

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(self.ub[-1])))


def cg_solve(A, b, rtol: float = 1e-12, maxiter: int | None = None) -> np.ndarray:
    """Conjugate-gradient fallback with a relative-residual guarantee."""
    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter or 20 * A.shape[0])
    res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
    if info != 0 or res > 10 * rtol:
        raise NumericalError(f"CG did not converge: info={info}, relative residual={res:.3e}")
    return x


@dataclass(eq=False)
class PrecisionMatrix:
    """Precision of the discrete field on ``lattice`` with mass parameter ``eps``.

    ``raw`` is ``B^T B + eps^2 I``; :attr:`matrix` applies the selected
    ``scaling`` (``raw`` or ``rescaled``).
    """

    lattice: Lattice
    eps: float
    raw: sparse.csr_matrix = field(repr=False)
    scaling: str = "rescaled"
    _factor: BandedCholesky | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.scaling not in SCALINGS:
            raise InvalidParameterError(f"scaling must be one of {SCALINGS}")

    @property
    def scale(self) -> float:
        """Multiplier from raw to the selected convention."""
        return 1.0 if self.scaling == "raw" else self.eps ** (self.lattice.d - 2)

    @property
    def matrix(self) -> sparse.csr_matrix:
        return (self.raw * self.scale).tocsr()

    @property
    def n(self) -> int:
        return self.raw.shape[0]

    def as_scaling(self, scaling: str) -> "PrecisionMatrix":
        return PrecisionMatrix(self.lattice, self.eps, self.raw, scaling, self._factor)

    @property
    def factor(self) -> BandedCholesky:
        """Banded Cholesky factor of the *raw* precision (cached)."""
        if self._factor is None:
            self._factor = BandedCholesky(self.raw)
        return self._factor

    def solve(self, b, method: str = "cholesky") -> np.ndarray:
        """Solve ``matrix @ x = b`` in the selected convention."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise InvalidParameterError("right-hand side does not match the edge count")
        if method == "cholesky":
            x = self.factor.solve(b)
        elif method == "cg":
            if b.ndim == 1:
                x = cg_solve(self.raw, b)
            else:
                x = np.column_stack([cg_solve(self.raw, col) for col in b.T])
        else:
            raise InvalidParameterError(f"unknown solve method {method!r}")
        return x / self.scale

    def dense_covariance(self) -> np.ndarray:
        """Inverse of :attr:`matrix` as a dense array (small lattices only)."""
        return self.solve(np.eye(self.n))

    def extremal_eigenvalues(self) -> tuple[float, float]:
        """Smallest and largest eigenvalue of :attr:`matrix`."""
        A = self.matrix
        if self.n <= 400:
            w = np.linalg.eigvalsh(A.toarray())
            return float(w[0]), float(w[-1])
        top = spla.eigsh(A, k=1, which="LA", return_eigenvectors=False)[0]
        low = spla.eigsh(A, k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0]
        return float(low), float(top)


def assemble_precision(lat: Lattice, eps: float, scaling: str = "rescaled") -> PrecisionMatrix:
    """Assemble ``B^T B + eps^2 I`` on ``lat``.

    The diagonal holds the number of plaquettes through the edge plus
    ``eps^2``; each shared plaquette contributes ``+1`` to the off-diagonal
    entry of positive neighbors and ``-1`` for negative neighbors, so that
    ``x^T Q x = sum_p x(p)^2 + eps^2 sum_e x(e)^2``.
    """
    if not eps > 0 or not np.isfinite(eps):
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    b = incidence_matrix(lat)
    raw = (b.T @ b + eps**2 * sparse.identity(lat.n_edges, format="csr")).tocsr()
    raw.sum_duplicates()
    raw.eliminate_zeros()
    return PrecisionMatrix(lat, float(eps), raw, scaling)


def sample_exact(prec: PrecisionMatrix, n: int, seed=None, chunk: int = 4096) -> np.ndarray:
    """``n`` exact draws, shape ``(n, E)``, with covariance ``prec.matrix^{-1}``."""
    if n < 1:
        raise InvalidParameterError("n must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    fac = prec.factor
    out = np.empty((n, prec.n))
    s = 1.0 / np.sqrt(prec.scale)
    for start in range(0, n, chunk):
        k = min(chunk, n - start)
        z = rng.standard_normal((prec.n, k))
        out[start:start + k] = s * fac.sample(z).T
    return out


def sample_fields(prec: PrecisionMatrix, n: int, seed=None) -> list[EdgeField]:
    """Like :func:`sample_exact` but wrapped as :class:`EdgeField` objects."""
    return [EdgeField(prec.lattice, row) for row in sample_exact(prec, n, seed)]


def covariance_entry(prec: PrecisionMatrix, e: int, e2: int, method: str = "cholesky") -> float:
    """One entry of ``prec.matrix^{-1}`` from a single solve."""
    for k in (e, e2):
        if not 0 <= k < prec.n:
            raise InvalidParameterError(f"edge id {k} out of range")
    rhs = np.zeros(prec.n)
    rhs[e2] = 1.0
    return float(prec.solve(rhs, method)[e])


def covariance_column(prec: PrecisionMatrix, e: int) -> np.ndarray:
    rhs = np.zeros(prec.n)
    rhs[e] = 1.0
    return prec.solve(rhs)


# ---------------------------------------------------------------------------
# boundary conditioning
# ---------------------------------------------------------------------------

@dataclass
class BoundaryValues:
    """Values of the field on the boundary edges of a free-boundary lattice."""

    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        if self.lattice.mode != "free":
            raise InvalidParameterError("boundary values need a free-boundary lattice")
        self.values = np.asarray(self.values, dtype=float)
        nb = self.lattice.boundary_edges().size
        if self.values.shape != (nb,):
            raise InvalidParameterError(f"expected {nb} boundary values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameterError("boundary values must be finite")

    @classmethod
    def zeros(cls, lat: Lattice) -> "BoundaryValues":
        return cls(lat, np.zeros(lat.boundary_edges().size))


@dataclass(eq=False)
class ConditionalField:
    """Law of the interior edges given the boundary values.

    ``mean`` is indexed like ``interior``; ``precision`` is the interior block
    of the precision in the same convention as the parent.
    """

    interior: np.ndarray
    mean: np.ndarray
    precision: sparse.csr_matrix
    scaling: str
    _factor: BandedCholesky | None = field(default=None, repr=False)

    @property
    def factor(self) -> BandedCholesky:
        if self._factor is None:
            self._factor = BandedCholesky(self.precision)
        return self._factor

    def covariance(self) -> np.ndarray:
        return self.factor.solve(np.eye(self.interior.size))

    def variance_of(self, u_interior) -> float:
        u = np.asarray(u_interior, dtype=float)
        return float(u @ self.factor.solve(u))


def conditional_moments(prec: PrecisionMatrix, bdry: BoundaryValues) -> ConditionalField:
    """Conditional law of interior edges given boundary values (sparse Schur solves).

    mean = -Q_II^{-1} Q_IB x_B and the conditional precision is Q_II, which is
    equivalent to ``R_IB R_BB^{-1} x_B`` and ``R_II - R_IB R_BB^{-1} R_BI``.
    """
    lat = prec.lattice
    if bdry.lattice is not lat:
        raise InvalidParameterError("boundary values live on a different lattice")
    I = lat.interior_edges()
    B = lat.boundary_edges()
    Q = prec.matrix
    Qii = Q[I][:, I].tocsr()
    Qib = Q[I][:, B].tocsr()
    cf = ConditionalField(I, np.zeros(I.size), Qii, prec.scaling)
    if np.any(bdry.values):
        cf.mean = -cf.factor.solve(Qib @ bdry.values)
    return cf


# ---------------------------------------------------------------------------
# pairings and correlation bounds
# ---------------------------------------------------------------------------

def pairing_law(prec: PrecisionMatrix, u, eps: float | None = None) -> float:
    """Variance ``u^T R u`` of the pairing ``Y(f) = sum_e u(e) Y(e)``.

    Always uses the rescaled convention ``R = eps^{-(d-2)} Cov(X)``,
    whatever the scaling flag of ``prec``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (prec.n,):
        raise InvalidParameterError(f"weights have shape {u.shape}, expected ({prec.n},)")
    if eps is not None and not np.isclose(eps, prec.eps, rtol=1e-12):
        raise InvalidParameterError("weights were built for a different eps")
    if not np.any(u):
        return 0.0
    p = prec.as_scaling("rescaled")
    return float(u @ p.solve(u))


def correlation_bound(dist, eps: float, d: int):
    """``eps^-2 (1 - eps^2/(16 d))^dist`` (raw-convention covariance bound)."""
    return eps**-2.0 * (1.0 - eps**2 / (16.0 * d)) ** np.asarray(dist, dtype=float)


def corr_bound_check(prec: PrecisionMatrix, eps: float | None = None, covariance=None,
                     max_pairs: int = 2_000_000, seed=0) -> dict:
    """Check ``|Cov(X(e), X(e'))| <= eps^-2 (1 - eps^2/(16d))^dist(e,e')``.

    ``covariance`` (raw convention) overrides the computed one, which is
    useful for negative controls.  Above ``max_pairs`` a random subset of
    columns is examined.
    """
    eps = prec.eps if eps is None else eps
    if not 0 < eps <= 1:
        raise InvalidParameterError("the bound is stated for 0 < eps <= 1")
    lat = prec.lattice
    n = prec.n
    dist = edge_distance_matrix(lat)
    if covariance is None:
        if n * n <= max_pairs:
            cov = prec.as_scaling("raw").dense_covariance()
            cols = np.arange(n)
        else:
            rng = np.random.default_rng(seed)
            cols = np.sort(rng.choice(n, size=max(1, max_pairs // n), replace=False))
            rhs = np.zeros((n, cols.size))
            rhs[cols, np.arange(cols.size)] = 1.0
            cov = prec.as_scaling("raw").solve(rhs)
    else:
        cov = np.asarray(covariance, dtype=float)
        cols = np.arange(n)
    dsub = dist[:, cols]
    ratio = np.abs(cov) / correlation_bound(dsub, eps, lat.d)
    worst = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return {
        "pass": bool(ratio.max() <= 1.0),
        "max_ratio": float(ratio.max()),
        "worst_pair": (int(worst[0]), int(cols[worst[1]])),
        "pairs_checked": int(ratio.size),
    }


def eigenvalue_check(prec: PrecisionMatrix) -> dict:
    """Extremal eigenvalues of the rescaled precision against ``[eps^d, 16 d eps^(d-2)]``."""
    p = prec.as_scaling("rescaled")
    d, eps = prec.lattice.d, prec.eps
    lo, hi = p.extremal_eigenvalues()
    return {
        "min": lo, "max": hi,
        "lower_bound": eps**d, "upper_bound": 16 * d * eps ** (d - 2),
        "pass": bool(lo >= eps**d * (1 - 1e-10) and hi <= 16 * d * eps ** (d - 2)),
    }
