"""The continuum Euclidean Proca field, evaluated by quadrature.

The field with parameter ``lam`` pairs with a test 1-form ``f`` to give a
centred Gaussian with variance

    (f, R f) = int int K(|y - z|) [f(y).f(z) + div f(y) div f(z) / lam] dy dz

where ``K`` is the massive heat-kernel integral of :func:`k_lambda`.  The
direct route writes this as ``int K(|w|) C(w) dw`` with the correlation
``C(v) = int f(y).g(y - v) + div f(y) div g(y - v)/lam dy`` and integrates
in polar coordinates around the kernel singularity.  An independent Fourier
route evaluates ``(2 pi)^-d int (|f^|^2 + |k.f^|^2/lam) / (|k|^2 + lam) dk``.

Quadrature is provided for ``d = 2`` and ``d = 3``.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import InvalidParameterError, NumericalError

GAUSS_CUT = 8.5  # exp(-GAUSS_CUT^2 / 2) ~ 2e-16
_BUMP_EDGE = 1e-3  # below this distance to the support edge the bump is 0 in float64


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def composite_gl(edges, n: int):
    """Nodes and weights of an ``n``-point Gauss-Legendre rule on each panel."""
    x, w = _gl(n)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def _panel_edges(a: float, b: float, width: float) -> np.ndarray:
    m = max(1, int(math.ceil((b - a) / width)))
    return np.linspace(a, b, m + 1)


def _graded_edges(rmax: float, r0: float, levels: int, width: float) -> np.ndarray:
    """Panels geometrically refined toward 0, then uniform up to ``rmax``."""
    r0 = min(r0, rmax)
    inner = r0 * 0.5 ** np.arange(levels, 0, -1)
    outer = _panel_edges(r0, rmax, width) if rmax > r0 else np.array([r0])
    return np.concatenate([[0.0], inner, outer])


def tensor_rule(center, radius: float, d: int, panels: int, n: int):
    """Tensor composite Gauss-Legendre rule on the cube ``center +- radius``."""
    x1, w1 = composite_gl(np.linspace(-radius, radius, panels + 1), n)
    grids = np.meshgrid(*([x1] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1) + np.asarray(center, dtype=float)
    wts = np.ones(1)
    for _ in range(d):
        wts = np.multiply.outer(wts, w1).ravel()
    return pts, wts


# ---------------------------------------------------------------------------
# test forms
# ---------------------------------------------------------------------------

def _profile(s, kind: str):
    """``h = exp(phi(s))`` and its first three ``s``-derivatives."""
    s = np.asarray(s, dtype=float)
    if kind == "gaussian":
        h = np.exp(-0.5 * s)
        return h, -0.5 * h, 0.25 * h, -0.125 * h
    inside = s < 1.0 - _BUMP_EDGE
    t = np.where(inside, 1.0 - s, 1.0)
    h = np.where(inside, np.exp(1.0 - 1.0 / t), 0.0)
    p1 = -1.0 / t**2
    p2 = -2.0 / t**3
    p3 = -6.0 / t**4
    h1 = h * p1
    h2 = h * (p2 + p1**2)
    h3 = h * (p3 + 3 * p1 * p2 + p1**3)
    return h, h1, h2, h3


class TestForm:
    """Smooth 1-form built from a radial profile.

    ``kind='gaussian'`` uses ``exp(-|y|^2/2)``, ``kind='bump'`` the plateau
    mollifier ``exp(1 - 1/(1 - |y|^2))`` on the unit ball, with
    ``y = (x - center)/scale``.  Components are ``coeffs * profile``; with
    ``curl=True`` (``d=2`` only) the form is the divergence-free rotated
    gradient ``amplitude * (d2 h, -d1 h)``.
    """

    __test__ = False  # not a pytest class

    def __init__(self, d: int, kind: str = "gaussian", center=None, scale: float = 1.0,
                 coeffs=None, curl: bool = False, amplitude: float = 1.0):
        if d not in (2, 3) and not (d >= 2):
            raise InvalidParameterError("d must be at least 2")
        if kind not in ("gaussian", "bump"):
            raise InvalidParameterError(f"unknown form kind {kind!r}")
        if not scale > 0:
            raise InvalidParameterError("scale must be positive")
        if curl and d != 2:
            raise InvalidParameterError("curl forms are defined for d=2")
        self.d = d
        self.kind = kind
        self.center = np.zeros(d) if center is None else np.asarray(center, dtype=float).reshape(d)
        self.scale = float(scale)
        self.coeffs = np.eye(d)[0] if coeffs is None else np.asarray(coeffs, dtype=float).reshape(d)
        self.curl = bool(curl)
        self.amplitude = float(amplitude)

    def __repr__(self):
        return (f"TestForm(d={self.d}, kind={self.kind!r}, center={self.center.tolist()}, "
                f"scale={self.scale}, coeffs={self.coeffs.tolist()}, curl={self.curl})")

    @property
    def support_radius(self) -> float:
        return self.scale if self.kind == "bump" else math.inf

    @property
    def quad_radius(self) -> float:
        """Radius of a ball outside which the form is negligible (or zero)."""
        return self.scale if self.kind == "bump" else GAUSS_CUT * self.scale

    @property
    def freq_scale(self) -> float:
        return 1.0 / self.scale

    def _derivs(self, x, order: int):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = (x - self.center) / self.scale
        s = np.sum(y * y, axis=1)
        h, h1, h2, h3 = _profile(s, self.kind)
        r = self.scale
        out = [h]
        if order >= 1:
            out.append(2 * h1[:, None] * y / r)
        if order >= 2:
            eye = np.eye(self.d)
            out.append((4 * h2[:, None, None] * y[:, :, None] * y[:, None, :]
                        + 2 * h1[:, None, None] * eye) / r**2)
        if order >= 3:
            eye = np.eye(self.d)
            t = 8 * h3[:, None, None, None] * np.einsum("ni,nj,nk->nijk", y, y, y)
            t += 4 * h2[:, None, None, None] * (
                np.einsum("ij,nk->nijk", eye, y) + np.einsum("ik,nj->nijk", eye, y)
                + np.einsum("jk,ni->nijk", eye, y))
            out.append(t / r**3)
        return out

    _ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])  # (a, b) -> (b, -a)

    def value(self, x) -> np.ndarray:
        """Component values, shape ``(N, d)``."""
        if self.curl:
            _, g = self._derivs(x, 1)
            return self.amplitude * g @ self._ROT.T
        (h,) = self._derivs(x, 0)
        return self.amplitude * h[:, None] * self.coeffs

    def grad(self, x) -> np.ndarray:
        """``out[n, i, j] = d_j f_i``."""
        if self.curl:
            _, _, H = self._derivs(x, 2)
            return self.amplitude * np.einsum("ik,nkj->nij", self._ROT, H)
        _, g = self._derivs(x, 1)
        return self.amplitude * self.coeffs[None, :, None] * g[:, None, :]

    def hess(self, x) -> np.ndarray:
        """``out[n, i, j, k] = d_j d_k f_i``."""
        if self.curl:
            _, _, _, T = self._derivs(x, 3)
            return self.amplitude * np.einsum("il,nljk->nijk", self._ROT, T)
        _, _, H = self._derivs(x, 2)
        return self.amplitude * self.coeffs[None, :, None, None] * H[:, None, :, :]

    def div(self, x) -> np.ndarray:
        if self.curl:
            return np.zeros(np.atleast_2d(x).shape[0])
        _, g = self._derivs(x, 1)
        return self.amplitude * g @ self.coeffs


class ScaledForm:
    """``x -> f((x - b)/a)`` with chain-rule derivatives."""

    def __init__(self, base, a: float, b):
        self.base = base
        self.a = float(a)
        self.b = np.asarray(b, dtype=float).reshape(base.d)
        self.d = base.d
        self.kind = base.kind

    def _pull(self, x):
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.b) / self.a

    @property
    def center(self):
        return self.a * self.base.center + self.b

    @property
    def support_radius(self):
        return self.a * self.base.support_radius

    @property
    def quad_radius(self):
        return self.a * self.base.quad_radius

    @property
    def freq_scale(self):
        return self.base.freq_scale / self.a

    def value(self, x):
        return self.base.value(self._pull(x))

    def grad(self, x):
        return self.base.grad(self._pull(x)) / self.a

    def hess(self, x):
        return self.base.hess(self._pull(x)) / self.a**2

    def div(self, x):
        return self.base.div(self._pull(x)) / self.a


def translate_scale_form(f, a: float, b=None):
    """The form ``g(x) = f((x - b)/a)``."""
    if not a > 0:
        raise InvalidParameterError("scale factor a must be positive")
    b = np.zeros(f.d) if b is None else b
    return ScaledForm(f, a, b)


class QForm:
    """``Q f = -Lap f + lam f + grad div f`` evaluated from analytic derivatives.

    Its divergence is ``lam * div f`` since the two third-order terms cancel.
    """

    def __init__(self, f, lam: float):
        self.f = f
        self.lam = float(lam)
        self.d = f.d
        self.kind = f.kind

    center = property(lambda self: self.f.center)
    support_radius = property(lambda self: self.f.support_radius)
    quad_radius = property(lambda self: self.f.quad_radius)
    freq_scale = property(lambda self: self.f.freq_scale)

    def value(self, x):
        H = self.f.hess(x)
        lap = np.trace(H, axis1=2, axis2=3)
        graddiv = np.einsum("njij->ni", H)
        return -lap + self.lam * self.f.value(x) + graddiv

    def div(self, x):
        return self.lam * self.f.div(x)


def apply_Q(f, lam: float) -> QForm:
    if not lam > 0:
        raise InvalidParameterError("lam must be positive")
    return QForm(f, lam)


def inner_product(f, g, nodes_per_axis: int = 16, panels: int = 6) -> float:
    """``int f . g dx`` by tensor quadrature over the box of ``f``."""
    pts, wts = tensor_rule(f.center, f.quad_radius, f.d, panels, nodes_per_axis)
    return float(wts @ np.sum(f.value(pts) * g.value(pts), axis=1))


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def _check_d(d):
    if int(d) != d or d < 2:
        raise InvalidParameterError("d must be an integer >= 2")


def k_lambda(r, lam: float, d: int, rtol: float = 1e-12) -> float | np.ndarray:
    """``int_0^inf (4 pi t)^{-d/2} exp(-r^2/(4t) - lam t) dt``.

    The substitution ``t = t* e^s`` with ``t* = r/(2 sqrt(lam))`` turns the
    two halves ``t < t*`` and ``t > t*`` into ``s < 0`` and ``s > 0`` with
    integrand ``e^{(1-d/2)s - z(cosh s - 1)}``, ``z = r sqrt(lam)``; the
    factor ``e^{-z}`` is pulled out so nothing underflows.
    """
    _check_d(d)
    if not lam > 0:
        raise InvalidParameterError("lam must be positive")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise InvalidParameterError("k_lambda is singular at r = 0")
    out = np.array([_k_scalar(float(ri), lam, d, rtol) for ri in r_arr.ravel()]).reshape(r_arr.shape)
    return float(out) if out.ndim == 0 else out


def _k_scalar(r, lam, d, rtol):
    z = r * math.sqrt(lam)
    tstar = r / (2 * math.sqrt(lam))
    nu = 1.0 - d / 2.0

    def integrand(s):
        return math.exp(nu * s - z * (math.cosh(s) - 1.0)) if abs(s) < 700 else 0.0

    total = 0.0
    for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
        val, err = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=rtol, limit=200)
        if err > 1e3 * rtol * abs(val) + 1e-300:
            raise NumericalError(f"kernel quadrature error {err:.2e} at r={r}, lam={lam}")
        total += val
    return (4 * math.pi) ** (-d / 2) * tstar**nu * math.exp(-z) * total


def k_lambda_asymptotic(r, lam: float, d: int):
    """``lam^{(d-3)/4} e^{-sqrt(lam) r} / (2 (2 pi)^{(d-1)/2} r^{(d-1)/2})``."""
    r = np.asarray(r, dtype=float)
    out = lam ** ((d - 3) / 4) * np.exp(-math.sqrt(lam) * r) / (
        2 * (2 * math.pi) ** ((d - 1) / 2) * r ** ((d - 1) / 2))
    return float(out) if out.ndim == 0 else out


def asymptotic_constant(lam: float, d: int) -> float:
    return lam ** ((d - 3) / 4) / (2 * (2 * math.pi) ** ((d - 1) / 2))


# ---------------------------------------------------------------------------
# direct-space route
# ---------------------------------------------------------------------------

class QuadratureOptions:
    """Resolution knobs of the direct route (defaults tuned for ~1e-9 relative)."""

    def __init__(self, y_panels=3, y_nodes=16, r_nodes=12, r_levels=10, theta_nodes=None,
                 window_nodes=24, chunk=2_000_000):
        self.y_panels = y_panels
        self.y_nodes = y_nodes
        self.r_nodes = r_nodes
        self.r_levels = r_levels
        self.theta_nodes = theta_nodes
        self.window_nodes = window_nodes
        self.chunk = chunk


def _corr_radius(f, g) -> float:
    if math.isfinite(f.support_radius) and math.isfinite(g.support_radius):
        return f.support_radius + g.support_radius
    return math.hypot(f.quad_radius, g.quad_radius) * 1.05


class Correlation:
    """``C(v) = int f(y).g(y - v) + w div f(y) div g(y - v) dy`` on a fixed y-rule."""

    def __init__(self, f, g, div_weight: float, opts: QuadratureOptions):
        if f.d != g.d:
            raise InvalidParameterError("forms live in different dimensions")
        self.g = g
        self.div_weight = div_weight
        pts, wts = tensor_rule(f.center, f.quad_radius, f.d, opts.y_panels, opts.y_nodes)
        fv = f.value(pts)
        fd = f.div(pts) if div_weight else np.zeros(len(pts))
        keep = (np.abs(fv).sum(axis=1) + np.abs(fd)) > 0
        self.y = pts[keep]
        self.fv = fv[keep] * wts[keep, None]
        self.fd = fd[keep] * wts[keep] * div_weight
        self.chunk = opts.chunk

    def __call__(self, v) -> np.ndarray:
        v = np.atleast_2d(v)
        out = np.empty(len(v))
        ny = len(self.y)
        step = max(1, self.chunk // max(ny, 1))
        for s in range(0, len(v), step):
            vb = v[s:s + step]
            pts = (self.y[None, :, :] - vb[:, None, :]).reshape(-1, v.shape[1])
            gv = self.g.value(pts).reshape(len(vb), ny, -1)
            acc = np.einsum("byi,yi->b", gv, self.fv)
            if self.div_weight:
                acc += self.g.div(pts).reshape(len(vb), ny) @ self.fd
            out[s:s + step] = acc
        return out


def _sphere_rule(d: int, n: int):
    """Unit directions and weights on the full circle/sphere."""
    if d == 2:
        th = 2 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(n, 2 * np.pi / n)
    if d == 3:
        ct, wt = _gl(n)
        ph = 2 * np.pi * np.arange(2 * n) / (2 * n)
        st = np.sqrt(1 - ct**2)
        dirs = np.stack([np.outer(ct, np.ones_like(ph)), np.outer(st, np.cos(ph)),
                         np.outer(st, np.sin(ph))], axis=-1).reshape(-1, 3)
        w = np.outer(wt, np.full(2 * n, 2 * np.pi / (2 * n))).ravel()
        return dirs, w
    raise InvalidParameterError("direct quadrature is implemented for d = 2 and 3")


def _cap_rule(axis, half_angle: float, d: int, n: int):
    """Directions within ``half_angle`` of ``axis`` with Gauss-Legendre weights."""
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    if d == 2:
        base = math.atan2(axis[1], axis[0])
        th, w = composite_gl([base - half_angle, base + half_angle], n)
        return np.column_stack([np.cos(th), np.sin(th)]), w
    if d == 3:
        th, wth = composite_gl([0.0, half_angle], n)
        ph = 2 * np.pi * np.arange(2 * n) / (2 * n)
        local = np.stack([np.outer(np.cos(th), np.ones_like(ph)),
                          np.outer(np.sin(th), np.cos(ph)),
                          np.outer(np.sin(th), np.sin(ph))], axis=-1).reshape(-1, 3)
        w = np.outer(wth * np.sin(th), np.full(2 * n, 2 * np.pi / (2 * n))).ravel()
        # orthonormal frame with first vector = axis
        tmp = np.eye(3)[np.argmin(np.abs(axis))]
        e2 = np.cross(axis, tmp)
        e2 /= np.linalg.norm(e2)
        e3 = np.cross(axis, e2)
        return local @ np.stack([axis, e2, e3]), w
    raise InvalidParameterError("direct quadrature is implemented for d = 2 and 3")


def kernel_integral(corr, center, radius: float, lam: float, d: int,
                    opts: QuadratureOptions | None = None, kernel=None) -> float:
    """``int K(|w|) corr(w) dw`` for ``corr`` supported in ``ball(center, radius)``.

    Polar coordinates around the kernel singularity.  If the ball contains
    the origin the radial rule is graded toward 0 and the angular rule covers
    the whole sphere; otherwise only the window of directions hitting the
    ball is integrated.
    """
    opts = opts or QuadratureOptions()
    kern = kernel or (lambda r: k_lambda(r, lam, d))
    center = np.asarray(center, dtype=float)
    dist = float(np.linalg.norm(center))
    length = 1.0 / math.sqrt(lam)
    width = min(length, radius / 2)
    if dist > radius * 1.02:
        edges = _panel_edges(dist - radius, dist + radius, width)
        r, wr = composite_gl(edges, opts.r_nodes)
        half = math.asin(min(1.0, radius / dist))
        dirs, wd = _cap_rule(center, half, d, opts.window_nodes)
    else:
        rmax = dist + radius
        edges = _graded_edges(rmax, min(width, rmax / 4), opts.r_levels, width)
        r, wr = composite_gl(edges, opts.r_nodes)
        n_theta = opts.theta_nodes or _theta_count(d, dist, rmax, radius)
        dirs, wd = _sphere_rule(d, n_theta)
    kv = np.asarray(kern(r), dtype=float)
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    vals = corr(pts).reshape(len(r), len(dirs))
    return float(np.sum(wr * kv * r ** (d - 1) * (vals @ wd)))


def _theta_count(d, dist, rmax, radius):
    # a centred correlation has only low angular frequencies; an off-centre
    # one must be resolved on the scale of its own width
    base = 16 if d == 2 else 12
    if dist <= 1e-12 * radius:
        return base
    extra = int(math.ceil(8 * math.pi * rmax / radius))
    return base + (extra if d == 2 else extra // 2)


def proca_variance(f, lam: float, method: str = "direct", opts: QuadratureOptions | None = None) -> float:
    """``(f, R f)`` for the Proca field with parameter ``lam``.

    ``method='direct'`` integrates the kernel against the correlation of
    ``f``; ``method='fourier'`` uses the momentum-space formula.
    """
    if not lam > 0:
        raise InvalidParameterError("lam must be positive")
    if method == "direct":
        return covariance_functional(f, f, np.zeros(f.d), lam, opts=opts)
    if method == "fourier":
        return proca_variance_fourier(f, lam)
    raise InvalidParameterError(f"unknown method {method!r}")


def covariance_functional(f, g, x, lam: float, opts: QuadratureOptions | None = None,
                          far_radius: float | None = None) -> float:
    """``(f, R g^x)`` with ``g^x(y) = g(x + y)``, by direct quadrature.

    Equals ``int K(|w|) C(w - x) dw``.  For Gaussian-type forms the
    correlation is truncated where it drops below double precision; beyond
    ``far_radius`` (default ``20/sqrt(lam)``) the truncation is larger than
    the covariance itself, so a warning is issued.
    """
    if not lam > 0:
        raise InvalidParameterError("lam must be positive")
    _check_d(f.d)
    opts = opts or QuadratureOptions()
    x = np.asarray(x, dtype=float).reshape(f.d)
    far = 20.0 / math.sqrt(lam) if far_radius is None else far_radius
    if not (math.isfinite(f.support_radius) and math.isfinite(g.support_radius)) and np.linalg.norm(x) > far:
        warnings.warn("non-compact forms far apart: truncation may dominate the covariance",
                      RuntimeWarning, stacklevel=2)
    corr = Correlation(f, g, 1.0 / lam, opts)
    c0 = f.center - g.center + x
    return kernel_integral(lambda w: corr(w - x), c0, _corr_radius(f, g), lam, f.d, opts)


# ---------------------------------------------------------------------------
# Fourier route
# ---------------------------------------------------------------------------

def fourier_transform(f, k_axis, panels: int = 8, nodes: int = 16) -> np.ndarray:
    """``f^(k) = int f(x) e^{-i k.x} dx`` on the tensor grid ``k_axis^d``.

    Returns shape ``(len(k_axis),)*d + (d,)``.
    """
    d = f.d
    x1, w1 = composite_gl(np.linspace(-f.quad_radius, f.quad_radius, panels + 1), nodes)
    grids = np.meshgrid(*([x1] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1) + f.center
    vals = f.value(pts).reshape((len(x1),) * d + (d,))
    E = np.exp(-1j * np.outer(k_axis, x1)) * w1[None, :]
    out = vals.astype(complex)
    for ax in range(d):
        out = np.moveaxis(np.tensordot(E, out, axes=([1], [ax])), 0, ax)
    # translation phase for the shifted box centre
    phase = np.ones(())
    for ax in range(d):
        phase = np.multiply.outer(phase, np.exp(-1j * k_axis * f.center[ax]))
    return out * phase[..., None]


def proca_variance_fourier(f, lam: float, kmax_factor: float | None = None, panels: int | None = None,
                           nodes: int = 16, x_panels: int | None = None) -> float:
    """``(2 pi)^-d int (|f^|^2 + |k.f^|^2/lam)/(|k|^2 + lam) dk`` on a tensor k-rule.

    The k-rule is graded near 0 on the scale ``sqrt(lam)``.  Accurate for
    Gaussian-type forms; bump forms have slowly decaying transforms and
    need a large ``kmax_factor``.
    """
    d = f.d
    if kmax_factor is None:
        kmax_factor = 7.5 if f.kind == "gaussian" else 60.0
    kmax = kmax_factor * f.freq_scale
    sl = math.sqrt(lam)
    inner = [0.0] + [sl * 2.0**j for j in range(-3, 4) if sl * 2.0**j < kmax]
    w = max(inner[-1] - (inner[-2] if len(inner) > 1 else 0.0), kmax / (panels or (24 if d == 2 else 10)))
    pos = np.unique(np.concatenate([inner, _panel_edges(inner[-1], kmax, w)[1:]]))
    edges = np.concatenate([-pos[::-1], pos[1:]])
    k1, wk = composite_gl(edges, nodes)
    xp = x_panels or max(4, int(math.ceil(kmax * f.quad_radius / 12)))
    fh = fourier_transform(f, k1, panels=xp, nodes=16)
    grids = np.meshgrid(*([k1] * d), indexing="ij")
    kvec = np.stack(grids, axis=-1)
    k2 = np.sum(kvec**2, axis=-1)
    num = np.sum(np.abs(fh) ** 2, axis=-1) + np.abs(np.sum(kvec * fh, axis=-1)) ** 2 / lam
    integrand = num / (k2 + lam)
    wts = np.ones(())
    for _ in range(d):
        wts = np.multiply.outer(wts, wk)
    return float(np.sum(wts * integrand) / (2 * math.pi) ** d)


# ---------------------------------------------------------------------------
# long-distance prefactor
# ---------------------------------------------------------------------------

def exponential_moment(f, vec, opts: QuadratureOptions | None = None, div: bool = False) -> np.ndarray:
    """``int f_i(y) e^{vec.y} dy`` per component (or of ``div f`` when ``div``)."""
    opts = opts or QuadratureOptions()
    pts, wts = tensor_rule(f.center, f.quad_radius, f.d, opts.y_panels, opts.y_nodes)
    e = wts * np.exp(pts @ np.asarray(vec, dtype=float))
    if div:
        return np.array(e @ f.div(pts))
    return e @ f.value(pts)


def psi_prefactor(f, g, u, lam: float, opts: QuadratureOptions | None = None) -> dict:
    """``Psi(f_i, g_i, u, lam)`` per component, the divergence term and the limit constant.

    ``Psi(a, b, u, lam) = int int a(y) b(y - v) e^{-sqrt(lam) u.v} dv dy``
    factorizes as ``(int a(y) e^{-sqrt(lam) u.y} dy)(int b(z) e^{sqrt(lam) u.z} dz)``.
    ``limit`` is the asymptotic constant times the bracket
    ``sum_i Psi_i + Psi(div f, div g)/lam``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (f.d,) or abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise InvalidParameterError("u must be a unit vector")
    if not (math.isfinite(f.support_radius) and math.isfinite(g.support_radius)):
        warnings.warn("the long-distance limit is established for compactly supported forms",
                      RuntimeWarning, stacklevel=2)
    s = math.sqrt(lam)
    comp = exponential_moment(f, -s * u, opts) * exponential_moment(g, s * u, opts)
    divterm = float(exponential_moment(f, -s * u, opts, div=True) * exponential_moment(g, s * u, opts, div=True))
    bracket = float(np.sum(comp)) + divterm / lam
    return {
        "psi": comp,
        "psi_div": divterm,
        "bracket": bracket,
        "limit": asymptotic_constant(lam, f.d) * bracket,
    }
