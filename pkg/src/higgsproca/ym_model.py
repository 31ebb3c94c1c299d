"""Lattice Yang-Mills-Higgs energies for the U(1) and SU(2) models.

Both models use a Higgs field of fixed length, so the action is

    S(U, phi) = (1/g^2) sum_p Re chi(U_p) + alpha^2 sum_e Re(phi_x^* U_e phi_y)

with ``chi`` the trace (SU(2)) or the identity (U(1)).  In unitary gauge the
Higgs field disappears and the link variables have density ``exp(-H(V))``.
Everything here is evaluated on quaternion arrays, see :mod:`group_geometry`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import group_geometry as gg
from .errors import InvalidParameterError
from .lattice import Lattice, build_lattice

GROUPS = ("u1", "su2")


def plaquette_weight(group: str) -> float:
    """Re chi(I): 2 for SU(2), 1 for U(1)."""
    return 2.0 if group == "su2" else 1.0


@dataclass(frozen=True)
class ModelParams:
    """Couplings, lattice and pipeline parameters of one model instance.

    ``delta``/``delta0``/``window`` default to the recipe
    ``g^(1 - a kappa)``, ``g^(1 - b kappa)``, ``floor(sqrt(2) g^(-4 kappa))``
    with ``a = 6d`` and ``b = 2d + 1`` when ``kappa`` is given.
    """

    d: int
    half_width: int
    group: str
    g: float
    alpha: float
    eps: float | None = None
    c: float | None = None
    kappa: float | None = None
    delta: float | None = None
    delta0: float | None = None
    window: int | None = None
    mode: str = "torus"
    key_estimate: bool = False
    _lattice: Lattice | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.group not in GROUPS:
            raise InvalidParameterError(f"unknown group {self.group!r}")
        if self.d < 2 or self.half_width < 1:
            raise InvalidParameterError("need d >= 2 and half_width >= 1")
        if not (self.g > 0 and np.isfinite(self.g)):
            raise InvalidParameterError("g must be positive")
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise InvalidParameterError("alpha must be positive")
        for name in ("eps", "c"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.kappa is not None:
            if not self.kappa > 0:
                raise InvalidParameterError("kappa must be positive")
            a, b = 6 * self.d, 2 * self.d + 1
            if self.delta is None:
                object.__setattr__(self, "delta", self.g ** (1 - a * self.kappa))
            if self.delta0 is None:
                object.__setattr__(self, "delta0", self.g ** (1 - b * self.kappa))
            if self.window is None:
                object.__setattr__(self, "window", int(math.floor(math.sqrt(2) * self.g ** (-4 * self.kappa))))
        if self.delta is not None and self.delta0 is not None and not self.delta0 < self.delta:
            raise InvalidParameterError("need delta0 < delta")
        if self.eps is not None and self.c is not None:
            if not math.isclose(self.alpha * self.g, self.c * self.eps, rel_tol=1e-9):
                raise InvalidParameterError("scaling constraint alpha*g = c*eps violated")
        if self.key_estimate and not (self.alpha >= 2 and self.alpha * self.g <= 1):
            raise InvalidParameterError("key-estimate regime needs alpha >= 2 and alpha*g <= 1")

    @classmethod
    def from_scaling(cls, d, half_width, group, g, c, eps, **kw) -> "ModelParams":
        """Parameters with ``alpha`` chosen so that ``alpha * g = c * eps``."""
        return cls(d=d, half_width=half_width, group=group, g=g, alpha=c * eps / g, eps=eps, c=c, **kw)

    @property
    def lattice(self) -> Lattice:
        if self._lattice is None:
            object.__setattr__(self, "_lattice", build_lattice(self.d, self.half_width, self.mode))
        return self._lattice

    def with_(self, **kw) -> "ModelParams":
        return replace(self, _lattice=None, **kw)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("d", "half_width", "group", "g", "alpha", "eps", "c",
                                               "kappa", "delta", "delta0", "window", "mode")}


# ---------------------------------------------------------------------------
# holonomies and energies
# ---------------------------------------------------------------------------

def _as_links(U, lat: Lattice) -> np.ndarray:
    U = np.asarray(U)
    if np.iscomplexobj(U):
        U = gg.u1_to_quat(U)
    if U.shape != (lat.n_edges, 4):
        raise InvalidParameterError(
            f"link configuration has shape {U.shape}, lattice needs ({lat.n_edges}, 4)")
    return U.astype(float, copy=False)


def _as_higgs(phi, lat: Lattice, group: str) -> np.ndarray:
    phi = np.asarray(phi)
    if np.iscomplexobj(phi):
        phi = gg.u1_to_quat(phi) if group == "u1" else gg.higgs_to_quat(phi)
    if phi.shape != (lat.n_vertices, 4):
        raise InvalidParameterError("Higgs configuration does not match the lattice")
    return gg.check_unit(phi, "Higgs field")


def holonomies(U, lat: Lattice, start: int = 0) -> np.ndarray:
    """Ordered products ``U_1 U_2 U_3^-1 U_4^-1`` around every plaquette.

    ``start`` cyclically rotates the starting edge; this conjugates the
    holonomy and leaves its trace unchanged.
    """
    U = _as_links(U, lat)
    pl = lat.plaquettes
    factors = [U[pl[:, 0]], U[pl[:, 1]], gg.qconj(U[pl[:, 2]]), gg.qconj(U[pl[:, 3]])]
    factors = factors[start % 4:] + factors[:start % 4]
    out = factors[0]
    for f in factors[1:]:
        out = gg.qmul(out, f)
    return out


def link_overlaps(U, phi, lat: Lattice) -> np.ndarray:
    """Quaternions ``phi_x^* U_e phi_y`` (their first entry is Re(phi_x^* U_e phi_y))."""
    return gg.qmul(gg.qmul(gg.qconj(phi[lat.edge_tail]), U), phi[lat.edge_head])


def action_eval(U, phi, params: ModelParams) -> float:
    """The action ``S(U, phi)``; the measure is ``exp(S)`` times Haar."""
    lat = params.lattice
    U = _as_links(U, lat)
    phi = _as_higgs(phi, lat, params.group)
    hp = holonomies(U, lat)
    plaq = plaquette_weight(params.group) * np.sum(hp[:, 0])
    link = np.sum(link_overlaps(U, phi, lat)[:, 0])
    return float(plaq / params.g**2 + params.alpha**2 * link)


def energy_terms(U, phi, params: ModelParams) -> tuple[float, float]:
    """``(sum_p (1 - Re U_p), sum_e (1 - Re phi_x^* U_e phi_y))`` with stable cancellation."""
    lat = params.lattice
    U = _as_links(U, lat)
    hp = holonomies(U, lat)
    if phi is None:
        ov = U
    else:
        ov = link_overlaps(U, _as_higgs(phi, lat, params.group), lat)
    return float(np.sum(gg.one_minus_re(hp))), float(np.sum(gg.one_minus_re(ov)))


def energy(U, phi, params: ModelParams) -> float:
    """Sampler energy ``sum_p w (1 - Re U_p)/g^2 + alpha^2 sum_e (1 - Re overlap)``.

    With ``phi=None`` this is the gauge-fixed Hamiltonian; otherwise it equals
    ``-S(U, phi)`` up to a configuration-independent constant.
    """
    tp, te = energy_terms(U, phi, params)
    return plaquette_weight(params.group) * tp / params.g**2 + params.alpha**2 * te


def hamiltonian_eval(V, params: ModelParams) -> float:
    """Energy of a gauge-fixed configuration.

    SU(2): ``1/(2 g^2) sum_p |I - V_p|^2 + alpha^2/4 sum_e |I - V_e|^2``.
    U(1):  ``1/(2 g^2) sum_p |1 - V_p|^2 + alpha^2/2 sum_e |1 - V_e|^2``.
    """
    lat = params.lattice
    V = _as_links(V, lat)
    dp = gg.norm_defect(holonomies(V, lat), params.group)
    de = gg.norm_defect(V, params.group)
    link_coef = 0.25 if params.group == "su2" else 0.5
    return float(np.sum(dp) / (2 * params.g**2) + link_coef * params.alpha**2 * np.sum(de))


def chart_scale(params: ModelParams) -> float:
    """Factor mapping an A-field value to its stereographic coordinate."""
    return params.g / math.sqrt(2.0) if params.group == "su2" else params.g


def a_logdensity(B, params: ModelParams) -> float:
    """Exact unnormalized log-density of the A-field at ``B``.

    Lifts ``B`` back to links, evaluates ``-H`` and adds the stereographic
    Jacobian of every edge.  ``B`` has shape ``(E, 3)`` (SU(2)) or ``(E,)``.
    """
    B = np.asarray(B, dtype=float)
    lat = params.lattice
    want = (lat.n_edges, 3) if params.group == "su2" else (lat.n_edges,)
    if B.shape != want:
        raise InvalidParameterError(f"A-field shape {B.shape}, expected {want}")
    if not np.all(np.isfinite(B)):
        raise InvalidParameterError("A-field has non-finite entries")
    V = gg.lift_a_field(B, params.g, params.group)
    # a lifted value at the pole means B overflowed the chart
    near = np.linalg.norm(V + gg.IDENTITY, axis=-1) < gg.POLE_TOL
    if np.any(near):
        n = int(near.sum())
        raise gg.PoleError(f"{n} edge value(s) lift to the projection pole", count=n)
    n = 3 if params.group == "su2" else 1
    y = chart_scale(params) * B
    jac = gg.stereo_logweight(y if n == 3 else y[:, None], n)
    return -hamiltonian_eval(V, params) + float(np.sum(jac))


def a_logdensity_quadratic(B, params: ModelParams) -> float:
    """Leading small-coupling form: ``-1/2 sum_p |B_p|^2 - m^2/2 sum_e |B_e|^2``.

    ``m`` is :func:`proca_mass_parameter`; the Jacobian is constant at this
    order and omitted.
    """
    from .lattice import plaquette_sums

    B = np.asarray(B, dtype=float)
    bp = plaquette_sums(params.lattice, B)
    m = proca_mass_parameter(params)
    return float(-0.5 * np.sum(bp**2) - 0.5 * m**2 * np.sum(B**2))


def event_threshold(params: ModelParams, boundary: bool = False) -> float:
    """Bound on the A-field norm equivalent to ``|I - V_e| <= delta``.

    Uses ``delta0`` when ``boundary`` is set.
    """
    delta = params.delta0 if boundary else params.delta
    if delta is None:
        raise InvalidParameterError("threshold parameter is not set")
    return threshold_from_delta(delta, params.g, params.group)


def threshold_from_delta(delta: float, g: float, group: str) -> float:
    top = math.sqrt(8.0) if group == "su2" else 2.0
    if not 0 < delta < top:
        raise InvalidParameterError(f"delta must lie in (0, {top:g})")
    if group == "su2":
        return 2**1.5 * delta / (g * math.sqrt(8.0 - delta**2))
    return 2.0 * delta / (g * math.sqrt(4.0 - delta**2))


def proca_mass_parameter(params: ModelParams) -> float:
    """``alpha g / sqrt(2)`` for SU(2), ``alpha g`` for U(1)."""
    s = math.sqrt(2.0) if params.group == "su2" else 1.0
    return params.alpha * params.g / s


def key_estimate_bound(alpha: float, g: float, const: float = 1.0) -> float:
    """``C (alpha^-4 g^-2 + alpha^-2 log alpha)``."""
    return const * (alpha**-4 * g**-2 + alpha**-2 * math.log(alpha))
