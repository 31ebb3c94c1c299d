"""U(1) and SU(2) arithmetic, stereographic charts and unitary gauge fixing.

Group elements are stored as unit quaternions ``(x, y, w, z)`` in arrays of
shape ``(..., 4)``.  The SU(2) matrix of a quaternion is

    [[x + i y,  w + i z],
     [-w + i z, x - i y]]

and the basis ``(1, i, j, k)`` of ``(x, y, w, z)`` multiplies by Hamilton's
rules, so quaternion products are matrix products.  A U(1) element
``e^{i t}`` is the quaternion ``(cos t, sin t, 0, 0)``; on that subgroup the
same product is complex multiplication, which lets both gauge groups share
one code path.

Higgs values: a unit ``phi`` in C^2 is stored as the SU(2) element whose
first column is ``phi``, a unit complex number as its U(1) quaternion.  With
this convention the gauge-fixing rotation of a site is the conjugate of its
stored Higgs value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, PoleError

UNIT_TOL = 1e-12
POLE_TOL = 1e-9

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def _group_check(group: str) -> None:
    if group not in ("u1", "su2"):
        raise InvalidParameterError(f"group must be 'u1' or 'su2', got {group!r}")


# ---------------------------------------------------------------------------
# quaternion arithmetic (vectorized)
# ---------------------------------------------------------------------------

def qmul(a, b) -> np.ndarray:
    """Hamilton product, broadcasting over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2, a3 = np.moveaxis(a, -1, 0)
    b0, b1, b2, b3 = np.moveaxis(b, -1, 0)
    return np.stack([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ], axis=-1)


def qconj(q) -> np.ndarray:
    q = np.array(q, dtype=float, copy=True)
    q[..., 1:] *= -1.0
    return q


def qnormalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def su2_mul(a, b) -> np.ndarray:
    """Group product, renormalized to the unit sphere."""
    return qnormalize(qmul(a, b))


def su2_inv(q) -> np.ndarray:
    return qconj(q)


def to_matrix(q) -> np.ndarray:
    """2x2 complex matrix form, shape ``(..., 2, 2)``."""
    q = np.asarray(q, dtype=float)
    x, y, w, z = np.moveaxis(q, -1, 0)
    a = x + 1j * y
    b = w + 1j * z
    return np.stack([np.stack([a, b], -1), np.stack([-np.conj(b), np.conj(a)], -1)], -2)


def from_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    return np.stack([a.real, a.imag, b.real, b.imag], axis=-1)


def check_unit(q, what="group element") -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise InvalidParameterError(f"{what} must have 4 quaternion components")
    if np.any(np.abs(np.sum(q * q, axis=-1) - 1.0) > 1e-9):
        raise InvalidParameterError(f"{what} is not of unit norm")
    return q


def exp_algebra(v) -> np.ndarray:
    """``exp(v1 i + v2 j + v3 k)`` for ``v`` of shape ``(..., 3)``."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    sinc = np.where(r > 0, np.sin(r) / np.where(r > 0, r, 1.0), 1.0)
    return np.concatenate([np.cos(r), sinc * v], axis=-1)


def u1_to_quat(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag, np.zeros_like(z.real), np.zeros_like(z.real)], axis=-1)


def quat_to_u1(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q[..., 0] + 1j * q[..., 1]


def higgs_to_quat(phi) -> np.ndarray:
    """Unit ``phi = (phi1, phi2)`` in C^2 -> SU(2) element with first column ``phi``."""
    phi = np.asarray(phi, dtype=complex)
    p1, p2 = phi[..., 0], phi[..., 1]
    return np.stack([p1.real, p1.imag, -p2.real, p2.imag], axis=-1)


def quat_to_higgs(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.stack([q[..., 0] + 1j * q[..., 1], -q[..., 2] + 1j * q[..., 3]], axis=-1)


def haar_random(rng: np.random.Generator, size, group: str = "su2") -> np.ndarray:
    """Haar-distributed elements (uniform on S^3, or on the U(1) circle)."""
    _group_check(group)
    size = (size,) if np.isscalar(size) else tuple(size)
    if group == "su2":
        return qnormalize(rng.standard_normal(size + (4,)))
    t = rng.uniform(-np.pi, np.pi, size)
    return u1_to_quat(np.exp(1j * t))


# ---------------------------------------------------------------------------
# small value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SU2Element:
    x: float
    y: float
    w: float
    z: float

    def __post_init__(self):
        n = self.x**2 + self.y**2 + self.w**2 + self.z**2
        if abs(n - 1.0) > 1e-9:
            raise InvalidParameterError("SU(2) element must be a unit quaternion")

    @classmethod
    def from_array(cls, q) -> "SU2Element":
        q = qnormalize(q)
        return cls(*map(float, q))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.z])

    def __mul__(self, other: "SU2Element") -> "SU2Element":
        return SU2Element.from_array(su2_mul(self.as_array(), other.as_array()))

    def inverse(self) -> "SU2Element":
        return SU2Element(self.x, -self.y, -self.w, -self.z)

    def matrix(self) -> np.ndarray:
        return to_matrix(self.as_array())


@dataclass(frozen=True)
class U1Element:
    re: float
    im: float

    def __post_init__(self):
        if abs(self.re**2 + self.im**2 - 1.0) > 1e-9:
            raise InvalidParameterError("U(1) element must have modulus one")

    @classmethod
    def from_complex(cls, z: complex) -> "U1Element":
        z = complex(z) / abs(z)
        return cls(z.real, z.imag)

    def __complex__(self) -> complex:
        return complex(self.re, self.im)

    def __mul__(self, other: "U1Element") -> "U1Element":
        return U1Element.from_complex(complex(self) * complex(other))

    def inverse(self) -> "U1Element":
        return U1Element(self.re, -self.im)


@dataclass(frozen=True)
class HiggsSite:
    """Unit Higgs value at one site: a point of S^1 (U(1)) or of S^3 in C^2 (SU(2))."""

    components: tuple
    group: str = "su2"

    def __post_init__(self):
        _group_check(self.group)
        c = np.asarray(self.components, dtype=complex)
        if c.shape != ((1,) if self.group == "u1" else (2,)):
            raise InvalidParameterError("Higgs value has the wrong number of components")
        if abs(float(np.sum(np.abs(c) ** 2)) - 1.0) > 1e-9:
            raise InvalidParameterError("Higgs value must have unit norm")

    def as_quaternion(self) -> np.ndarray:
        c = np.asarray(self.components, dtype=complex)
        if self.group == "u1":
            return u1_to_quat(c[0])
        return higgs_to_quat(c)


def su2_from_sphere(point) -> SU2Element:
    """The SU(2) element identified with the unit quaternion ``point`` on S^3."""
    return SU2Element.from_array(point)


# ---------------------------------------------------------------------------
# stereographic charts
# ---------------------------------------------------------------------------

def stereo_lift(x) -> np.ndarray:
    """Stereographic lift R^n -> S^n, ``x -> ((4-|x|^2)/(4+|x|^2), 4x/(4+|x|^2))``."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return np.concatenate([(4.0 - r2) / (4.0 + r2), 4.0 * x / (4.0 + r2)], axis=-1)


def stereo_project(pt) -> np.ndarray:
    """Stereographic projection from S^n minus ``-e1`` to R^n, the inverse of :func:`stereo_lift`."""
    pt = np.asarray(pt, dtype=float)
    near = np.linalg.norm(pt - np.eye(pt.shape[-1])[0] * -1.0, axis=-1) < POLE_TOL
    if np.any(near):
        n = int(np.count_nonzero(near))
        raise PoleError(f"{n} point(s) at the projection pole -e1", count=n)
    return 2.0 * pt[..., 1:] / (1.0 + pt[..., :1])


def stereo_maps(value, n: int, inverse: bool = False) -> np.ndarray:
    """Projection (``inverse=False``, sphere -> plane) or lift (plane -> sphere)."""
    if n not in (1, 3):
        raise InvalidParameterError("stereographic charts are provided for n = 1 and n = 3")
    value = np.asarray(value, dtype=float)
    if inverse:
        if n == 1 and value.ndim == 0:
            value = value[None]
        if value.shape[-1] != n:
            raise InvalidParameterError(f"expected points of R^{n}")
        return stereo_lift(value)
    if value.shape[-1] != n + 1:
        raise InvalidParameterError(f"expected points of S^{n}")
    return stereo_project(value)


def stereo_logweight(x, n: int) -> np.ndarray:
    """Log of ``(4 + |x|^2)^{-n}``, the density whose lift to S^n is uniform."""
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        r2 = x * x
    else:
        r2 = np.sum(x * x, axis=-1)
    return -n * np.log(4.0 + r2)


def sample_stereo_density(rng: np.random.Generator, size: int, n: int) -> np.ndarray:
    """Exact draws from the density proportional to ``(4 + |x|^2)^{-n}`` on R^n.

    This is a multivariate Student t law with ``n`` degrees of freedom and
    scale ``2/sqrt(n)``: ``(1 + |x|^2/4)^{-(n+n)/2}``.
    """
    z = rng.standard_normal((size, n))
    w = rng.chisquare(n, size)
    return (2.0 / np.sqrt(n)) * z / np.sqrt(w / n)[:, None]


# ---------------------------------------------------------------------------
# norms, gauge fixing, A-field
# ---------------------------------------------------------------------------

def one_minus_re(q) -> np.ndarray:
    """``1 - x`` computed stably from the vector part when ``x`` is close to 1."""
    q = np.asarray(q, dtype=float)
    x = q[..., 0]
    v2 = np.sum(q[..., 1:] ** 2, axis=-1)
    return np.where(x > 0, v2 / (1.0 + np.abs(x)), 1.0 - x)


def norm_defect(U, group: str = "su2") -> np.ndarray:
    """``|I - U|^2``: ``4 - 2 Re Tr U`` for SU(2), ``2 - 2 Re U`` for U(1)."""
    _group_check(group)
    q = np.asarray(U)
    if np.iscomplexobj(q) or q.ndim == 0 or q.shape[-1] != 4:
        if group != "u1":
            raise InvalidParameterError("SU(2) elements must be given as quaternions")
        q = u1_to_quat(q)
    q = q.astype(float)
    factor = 4.0 if group == "su2" else 2.0
    out = factor * one_minus_re(q)
    return float(out) if np.ndim(out) == 0 else out


def gauge_fix(U, phi, lat, group: str = "su2") -> np.ndarray:
    """Unitary gauge: ``V_e = theta_x U_e theta_y^{-1}`` with ``theta_x phi_x = e1`` (or 1).

    ``U`` has shape ``(E, 4)`` and ``phi`` has shape ``(V, 4)`` (stored Higgs
    values, see module docstring).  Complex inputs are accepted for U(1)
    (shape ``(E,)`` and ``(V,)``) and for SU(2) Higgs vectors (shape ``(V, 2)``).
    """
    _group_check(group)
    U = np.asarray(U)
    phi = np.asarray(phi)
    if np.iscomplexobj(U):
        U = u1_to_quat(U)
    if np.iscomplexobj(phi):
        phi = u1_to_quat(phi) if group == "u1" else higgs_to_quat(phi)
    check_unit(phi, "Higgs field")
    if U.shape != (lat.n_edges, 4) or phi.shape != (lat.n_vertices, 4):
        raise InvalidParameterError("configuration does not match the lattice")
    theta = qconj(phi)
    return qnormalize(qmul(qmul(theta[lat.edge_tail], U), phi[lat.edge_head]))


def transform_higgs(theta, phi) -> np.ndarray:
    """``psi_x = theta_x phi_x`` on stored Higgs values."""
    return qnormalize(qmul(theta, phi))


def gauge_transform(theta, U, phi, lat):
    """Apply the gauge transform ``theta`` (shape ``(V, 4)``) to ``(U, phi)``."""
    V = qmul(qmul(theta[lat.edge_tail], U), qconj(theta[lat.edge_head]))
    return qnormalize(V), transform_higgs(theta, phi)


def a_field(V, g: float, group: str = "su2") -> np.ndarray:
    """Rescaled stereographic coordinates of the gauge-fixed links.

    U(1): ``proj(V_e)/g``, shape ``(E,)``.  SU(2): ``sqrt(2)/g * proj(V_e)``
    with ``V_e`` read as a point of S^3, shape ``(E, 3)``.
    """
    _group_check(group)
    if not g > 0:
        raise InvalidParameterError("gauge coupling must be positive")
    q = np.asarray(V)
    if np.iscomplexobj(q) or q.shape[-1] != 4:
        q = u1_to_quat(q)
    if group == "u1":
        return stereo_project(q[..., :2])[..., 0] / g
    return np.sqrt(2.0) / g * stereo_project(q)


def lift_a_field(A, g: float, group: str = "su2") -> np.ndarray:
    """Inverse of :func:`a_field`, returning quaternions ``(E, 4)``."""
    _group_check(group)
    if not g > 0:
        raise InvalidParameterError("gauge coupling must be positive")
    A = np.asarray(A, dtype=float)
    if group == "u1":
        p = stereo_lift((g * A)[..., None])
        return np.concatenate([p, np.zeros(p.shape[:-1] + (2,))], axis=-1)
    return stereo_lift(g * A / np.sqrt(2.0))
