"""Coupled coefficients ``T = C Omega^{-1} C^T`` by contour quadrature.

The energy denominators ``1 / (e_i - e_j)`` are written as a Cauchy integral
of ``J(lam) = (Pv diag(1/(lam - e_v)) Pv^T) * (Pc diag(1/(lam - e_c)) Pc^T)``
over a contour enclosing the unoccupied spectrum. The contour is the image of
a horizontal segment under a Jacobi-elliptic conformal map, which makes the
trapezoid rule converge geometrically in the number of nodes.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import (
    ContourDegeneracyError,
    ConvergenceError,
    PreconditionError,
    ValidationError,
)

BYPASS_RATIO = 1.0 + 1e-12
POLE_TOL = 1e-13
FIRST_LEVEL = 4  # first trapezoid level has 2**4 + 1 nodes


def agm(a, b, tol=4e-16):
    # converges quadratically; the cap only guards against ulp oscillation
    for _ in range(64):
        if abs(a - b) <= tol * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def elliptic_k(r):
    """Complete elliptic integral of the first kind, modulus ``r`` in [0, 1)."""
    if not 0.0 <= r < 1.0:
        raise ValidationError(f"modulus must lie in [0, 1), got {r!r}")
    return math.pi / (2.0 * agm(1.0, math.sqrt(1.0 - r * r)))


_GL_LOW = np.polynomial.legendre.leggauss(10)
_GL_HIGH = np.polynomial.legendre.leggauss(20)


def _gauss(f, a, b, rule):
    x, w = rule
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * float(np.dot(w, f(mid + half * x)))


def adaptive_gauss(f, a, b, tol=1e-14, max_depth=40):
    """Globally adaptive Gauss-Legendre: 10- vs 20-point panels, bisect the worst."""
    coarse, fine = _gauss(f, a, b, _GL_LOW), _gauss(f, a, b, _GL_HIGH)
    panels = [(abs(fine - coarse), a, b, fine, 0)]
    for _step in range(2000):
        total = sum(p[3] for p in panels)
        err = sum(p[0] for p in panels)
        if err <= tol * max(abs(total), 1e-300):
            return total
        panels.sort(key=lambda p: p[0])
        _, lo, hi, val, depth = panels.pop()
        if depth >= max_depth:
            panels.append((0.0, lo, hi, val, depth))
            continue
        m = 0.5 * (lo + hi)
        for x0, x1 in ((lo, m), (m, hi)):
            c, g = _gauss(f, x0, x1, _GL_LOW), _gauss(f, x0, x1, _GL_HIGH)
            panels.append((abs(g - c), x0, x1, g, depth + 1))
    raise ConvergenceError("adaptive Gauss quadrature did not converge", best=total)


def contour_height(r):
    """``L = 1/2 * int_0^{1/r} dt / sqrt((1 + t^2)(1 + r^2 t^2))``."""
    if not 0.0 < r < 1.0:
        raise ValidationError(f"contour height needs 0 < r < 1, got {r!r}")
    return 0.5 * adaptive_gauss(
        lambda t: 1.0 / np.sqrt((1.0 + t * t) * (1.0 + r * r * t * t)), 0.0, 1.0 / r
    )


@dataclass(frozen=True)
class ContourSpec:
    q: float
    Q: float
    r: float
    R: float
    L: float
    delta_rel: float = 1e-7
    max_nodes: int = 1025
    bypass: bool = False


def elliptic_params(energies, n_v, n_c, delta_rel=1e-7, max_nodes=1025):
    """Contour for the gap ``q = e[n_v] - e[n_v-1]`` and span ``Q = e[n_v+n_c-1] - e[n_v-1]``."""
    e = np.asarray(energies, dtype=float)
    n_v, n_c = int(n_v), int(n_c)
    if e.shape[0] < n_v + n_c or n_v < 1 or n_c < 1:
        raise ValidationError(f"need {n_v + n_c} energies, got {e.shape[0]}")
    if not 0.0 < delta_rel < 0.5:
        raise ValidationError(f"delta_rel must lie in (0, 0.5), got {delta_rel!r}")
    q = float(e[n_v] - e[n_v - 1])
    Q = float(e[n_v + n_c - 1] - e[n_v - 1])
    if not q > 0:
        raise PreconditionError(f"contour needs a positive gap, got q={q!r}")
    ratio = Q / q
    if ratio <= BYPASS_RATIO:
        return ContourSpec(q, Q, 0.0, math.pi / 2, math.inf, delta_rel, int(max_nodes), True)
    sq = math.sqrt(ratio)
    r = (sq - 1.0) / (sq + 1.0)
    return ContourSpec(q, Q, r, elliptic_k(r), contour_height(r), delta_rel, int(max_nodes), False)


def cauchy_error_bound(spec, n_lambda):
    if n_lambda < 1:
        raise ValidationError("need at least one quadrature node")
    return math.exp(-(math.pi**2) * n_lambda / (2.0 * math.log(spec.Q / spec.q) + 6.0))


def jacobi_sn_cn_dn(u, r):
    """Real Jacobi functions by the AGM / descending Landen recursion.

    Scalars in, scalars out; arrays keep their shape.
    """
    if not 0.0 <= r < 1.0:
        raise ValidationError(f"modulus must lie in [0, 1), got {r!r}")
    arr = np.asarray(u, dtype=float)
    flat = np.ascontiguousarray(arr.ravel())
    sn, cn, dn = _core.kernels.sncndn(flat, float(r))
    if arr.ndim == 0:
        return float(sn[0]), float(cn[0]), float(dn[0])
    return sn.reshape(arr.shape), cn.reshape(arr.shape), dn.reshape(arr.shape)


def jacobi_complex(u, r):
    """Jacobi functions at complex ``u = x + iy`` through the addition formulas."""
    u = np.asarray(u, dtype=complex)
    x, y = u.real, u.imag
    kc = math.sqrt(1.0 - r * r)
    if np.any(np.abs(y) >= elliptic_k(kc)):
        raise ValidationError("imaginary part outside the fundamental rectangle")
    s, c, d = jacobi_sn_cn_dn(x, r)
    s1, c1, d1 = jacobi_sn_cn_dn(y, kc)
    den = c1 * c1 + r * r * s * s * s1 * s1
    if np.any(np.abs(den) < POLE_TOL):
        raise ContourDegeneracyError("Jacobi function evaluated at a pole")
    sn = (s * d1 + 1j * c * d * s1 * c1) / den
    cn = (c * c1 - 1j * s * d * s1 * d1) / den
    dn = (d * c1 * d1 - 1j * r * r * s * c * s1) / den
    return sn, cn, dn


@dataclass(frozen=True)
class CoupledCoefficients:
    T: np.ndarray
    nodes_used: int
    est_rel_error: float
    history: tuple = field(default=(), repr=False)  # (nodes, est_rel_error) per level


def _split(psi_v_pts, psi_c_pts, energies):
    pv = np.ascontiguousarray(psi_v_pts, dtype=float)
    pc = np.ascontiguousarray(psi_c_pts, dtype=float)
    e = np.asarray(energies, dtype=float)
    if pv.ndim != 2 or pc.ndim != 2 or pv.shape[0] != pc.shape[0]:
        raise ValidationError("point-restricted wavefunctions must share their row count")
    n_v, n_c = pv.shape[1], pc.shape[1]
    if e.shape != (n_v + n_c,):
        raise ValidationError(f"expected {n_v + n_c} energies, got shape {e.shape}")
    return pv, pc, np.ascontiguousarray(e[:n_v]), np.ascontiguousarray(e[n_v:])


def coupled_coefficients_direct(psi_v_pts, psi_c_pts, energies, weight=1.0, backend=None):
    """Explicit double sum over occupied/unoccupied pairs; the quadrature oracle."""
    pv, pc, ev, ec = _split(psi_v_pts, psi_c_pts, energies)
    T = _core.get_backend(backend).coupled_direct(pv, pc, ev, ec)
    return CoupledCoefficients(T=weight * T, nodes_used=0, est_rel_error=0.0)


def _integrand(s, spec, pv, pc, ev, ec):
    """``Im(J(z(t)) z'(t))`` at ``t = s + iL``, stacked over nodes."""
    sn, cn, dn = jacobi_complex(s + 1j * spec.L, spec.r)
    rinv = 1.0 / spec.r
    scale = math.sqrt(spec.q * spec.Q)
    z = scale * (rinv + sn) / (rinv - sn) + ev[-1]
    dz = 2.0 * scale * rinv * cn * dn / (rinv - sn) ** 2
    out = np.empty((s.size, pv.shape[0], pv.shape[0]))
    for k in range(s.size):
        gv = (pv / (z[k] - ev)) @ pv.T
        gc = (pc / (z[k] - ec)) @ pc.T
        out[k] = (gv * gc * dz[k]).imag
    return out


def _trapezoid_levels(spec, pv, pc, ev, ec, max_nodes):
    """Yield ``(n_nodes, T)`` for nested trapezoid rules with 2**m + 1 nodes."""
    a, b = -spec.R, spec.R
    n = 2**FIRST_LEVEL + 1
    s = np.linspace(a, b, n)
    f = _integrand(s, spec, pv, pc, ev, ec)
    acc = 0.5 * (f[0] + f[-1]) + f[1:-1].sum(axis=0)
    while True:
        h = (b - a) / (n - 1)
        yield n, acc * h / math.pi
        n2 = 2 * n - 1
        if n2 > max_nodes:
            return
        mids = a + h * (np.arange(n - 1) + 0.5)
        acc = acc + _integrand(mids, spec, pv, pc, ev, ec).sum(axis=0)
        n = n2


def coupled_coefficients_contour(psi_v_pts, psi_c_pts, energies, spec, weight=1.0):
    """Adaptive elliptic-contour evaluation of ``T``.

    Levels double the trapezoid panels until successive estimates agree to
    ``spec.delta_rel`` in relative Frobenius norm. Raises
    :class:`ConvergenceError` carrying the finest estimate otherwise.
    """
    if spec.bypass:
        raise ContourDegeneracyError("contour bypassed for Q/q ~ 1; use the direct sum")
    pv, pc, ev, ec = _split(psi_v_pts, psi_c_pts, energies)
    prev = None
    history = []
    best = None
    for n, T in _trapezoid_levels(spec, pv, pc, ev, ec, spec.max_nodes):
        T = 0.5 * (T + T.T)
        if prev is not None:
            norm = np.linalg.norm(T)
            est = float(np.linalg.norm(T - prev) / norm) if norm > 0 else 0.0
            history.append((n, est))
            best = CoupledCoefficients(weight * T, n, est, tuple(history))
            if est <= spec.delta_rel:
                return best
        prev = T
    if best is None:
        raise ConvergenceError(f"max_nodes={spec.max_nodes} allows no refinement step")
    raise ConvergenceError(
        f"contour quadrature not converged at {best.nodes_used} nodes "
        f"(estimate {best.est_rel_error:.2e} > {spec.delta_rel:.1e})",
        best=best,
    )


def coupled_coefficients_fixed(psi_v_pts, psi_c_pts, energies, spec, n_nodes, weight=1.0):
    """Plain trapezoid rule with exactly ``n_nodes`` nodes, for node sweeps."""
    if spec.bypass:
        raise ContourDegeneracyError("contour bypassed for Q/q ~ 1; use the direct sum")
    if n_nodes < 2:
        raise ValidationError("need at least two nodes")
    pv, pc, ev, ec = _split(psi_v_pts, psi_c_pts, energies)
    s = np.linspace(-spec.R, spec.R, int(n_nodes))
    f = _integrand(s, spec, pv, pc, ev, ec)
    h = 2.0 * spec.R / (n_nodes - 1)
    T = (0.5 * (f[0] + f[-1]) + f[1:-1].sum(axis=0)) * h / math.pi
    return CoupledCoefficients(weight * 0.5 * (T + T.T), int(n_nodes), float("nan"))


def quadrature_sweep(psi_v_pts, psi_c_pts, energies, spec, node_counts, weight=1.0):
    """Fixed-node rules for each count ``N``, with error estimated against ``2N - 1`` nodes."""
    out = []
    for n in node_counts:
        coarse = coupled_coefficients_fixed(psi_v_pts, psi_c_pts, energies, spec, n, weight)
        fine = coupled_coefficients_fixed(psi_v_pts, psi_c_pts, energies, spec, 2 * n - 1, weight)
        norm = np.linalg.norm(fine.T)
        est = float(np.linalg.norm(coarse.T - fine.T) / norm) if norm > 0 else 0.0
        out.append(CoupledCoefficients(coarse.T, int(n), est))
    return out


def fitted_decay_slope(node_counts, errors, floor=1e-13):
    """Least-squares slope of ``ln(error)`` against node count, ignoring the roundoff floor."""
    n = np.asarray(node_counts, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = e > floor
    if keep.sum() < 2:
        raise ValidationError("need two errors above the roundoff floor to fit a slope")
    return float(np.polyfit(n[keep], np.log(e[keep]), 1)[0])
