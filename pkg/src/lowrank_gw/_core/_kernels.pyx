# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense kernels.

Every function here has a numpy twin in :mod:`lowrank_gw._core.fallback` with
the same signature and the same algorithm; the two are compared in the test
suite and in ``benchmarks/bench_kernels.py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, sin, cos, asin, hypot, copysign, ldexp

cnp.import_array()


def lu_factor(double[:, ::1] a, double tol):
    """In-place LU with partial pivoting; returns (piv, first_bad_pivot)."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, k, p
    cdef double amax, v, l, t
    cdef cnp.ndarray[cnp.intp_t, ndim=1] piv_arr = np.arange(n, dtype=np.intp)
    cdef cnp.intp_t[::1] piv = piv_arr
    cdef Py_ssize_t bad = -1
    for k in range(n):
        p = k
        amax = fabs(a[k, k])
        for i in range(k + 1, n):
            v = fabs(a[i, k])
            if v > amax:
                amax = v
                p = i
        if p != k:
            for j in range(n):
                t = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = t
            piv[k], piv[p] = piv[p], piv[k]
        if amax <= tol:
            if bad < 0:
                bad = k
            continue
        for i in range(k + 1, n):
            l = a[i, k] / a[k, k]
            a[i, k] = l
            if l != 0.0:
                for j in range(k + 1, n):
                    a[i, j] -= l * a[k, j]
    return piv_arr, bad


def lu_solve(const double[:, ::1] lu, const cnp.intp_t[::1] piv, const double[:, ::1] b):
    """Solve with packed LU factors; ``b`` has shape (n, m), returns new array."""
    cdef Py_ssize_t n = lu.shape[0]
    cdef Py_ssize_t m = b.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double l, d
    cdef cnp.ndarray[double, ndim=2] x_arr = np.empty((n, m))
    cdef double[:, ::1] x = x_arr
    for i in range(n):
        for j in range(m):
            x[i, j] = b[piv[i], j]
    for i in range(n):
        for k in range(i):
            l = lu[i, k]
            if l != 0.0:
                for j in range(m):
                    x[i, j] -= l * x[k, j]
    for i in range(n - 1, -1, -1):
        for k in range(i + 1, n):
            l = lu[i, k]
            if l != 0.0:
                for j in range(m):
                    x[i, j] -= l * x[k, j]
        d = lu[i, i]
        for j in range(m):
            x[i, j] /= d
    return x_arr


def qrcp(double[:, ::1] at, Py_ssize_t kmax):
    """Householder QR with greedy column pivoting.

    ``at`` is the transposed input (row ``i`` is column ``i`` of A) and is
    overwritten. Returns (Q, R, perm) for the first ``kmax`` steps.
    """
    cdef Py_ssize_t n = at.shape[0]
    cdef Py_ssize_t m = at.shape[1]
    cdef Py_ssize_t r = min(kmax, m, n)
    cdef Py_ssize_t i, j, k, best
    cdef double s, alpha, x0, coef, w, t, vnorm2
    cdef cnp.ndarray[double, ndim=1] norms_arr = np.empty(n)
    cdef double[::1] norms = norms_arr
    cdef cnp.ndarray[cnp.intp_t, ndim=1] perm_arr = np.arange(n, dtype=np.intp)
    cdef cnp.intp_t[::1] perm = perm_arr
    cdef cnp.ndarray[double, ndim=2] vs_arr = np.zeros((r, m))
    cdef double[:, ::1] vs = vs_arr
    cdef cnp.ndarray[double, ndim=1] coefs_arr = np.zeros(r)
    cdef double[::1] coefs = coefs_arr
    cdef cnp.ndarray[double, ndim=2] R_arr = np.zeros((r, n))
    cdef double[:, ::1] R = R_arr
    cdef cnp.ndarray[double, ndim=2] qt_arr = np.zeros((r, m))
    cdef double[:, ::1] qt = qt_arr

    for i in range(n):
        s = 0.0
        for j in range(m):
            s += at[i, j] * at[i, j]
        norms[i] = s
    for k in range(r):
        best = k
        for i in range(k + 1, n):
            if norms[i] > norms[best] or (norms[i] == norms[best] and perm[i] < perm[best]):
                best = i
        if best != k:
            for j in range(m):
                t = at[k, j]
                at[k, j] = at[best, j]
                at[best, j] = t
            for j in range(k):
                t = R[j, k]
                R[j, k] = R[j, best]
                R[j, best] = t
            norms[k], norms[best] = norms[best], norms[k]
            perm[k], perm[best] = perm[best], perm[k]
        alpha = 0.0
        for j in range(k, m):
            alpha += at[k, j] * at[k, j]
        alpha = sqrt(alpha)
        x0 = at[k, k]
        if alpha == 0.0:
            coefs[k] = 0.0
            R[k, k] = 0.0
        else:
            s = -copysign(alpha, x0)
            vs[k, k] = x0 - s
            for j in range(k + 1, m):
                vs[k, j] = at[k, j]
            vnorm2 = 2.0 * (alpha * alpha - s * x0)
            coefs[k] = 2.0 / vnorm2
            R[k, k] = s
        coef = coefs[k]
        for i in range(k + 1, n):
            if coef != 0.0:
                w = 0.0
                for j in range(k, m):
                    w += vs[k, j] * at[i, j]
                w *= coef
                for j in range(k, m):
                    at[i, j] -= w * vs[k, j]
            R[k, i] = at[i, k]
            s = 0.0
            for j in range(k + 1, m):
                s += at[i, j] * at[i, j]
            norms[i] = s
    # Q = H_0 ... H_{r-1} applied to the first r unit vectors
    for i in range(r):
        qt[i, i] = 1.0
    for k in range(r - 1, -1, -1):
        coef = coefs[k]
        if coef == 0.0:
            continue
        for i in range(r):
            w = 0.0
            for j in range(k, m):
                w += vs[k, j] * qt[i, j]
            w *= coef
            if w != 0.0:
                for j in range(k, m):
                    qt[i, j] -= w * vs[k, j]
    return qt_arr.T.copy(), R_arr, perm_arr


def tridiagonalize(double[:, ::1] a, bint vectors):
    """Householder reduction of a symmetric matrix (row-major tred2).

    ``a`` is overwritten with the accumulated transform when ``vectors``.
    Returns (d, e) with e[0] = 0 and e[i] coupling i-1 and i.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t l, k, j, i
    cdef double scale, hh, h, g, f
    cdef cnp.ndarray[double, ndim=1] d_arr = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] e_arr = np.zeros(n)
    cdef double[::1] d = d_arr
    cdef double[::1] e = e_arr
    for i in range(n - 1, 0, -1):
        l = i - 1
        h = 0.0
        scale = 0.0
        if l > 0:
            for k in range(i):
                scale += fabs(a[i, k])
            if scale == 0.0:
                e[i] = a[i, l]
            else:
                for k in range(i):
                    a[i, k] /= scale
                    h += a[i, k] * a[i, k]
                f = a[i, l]
                g = -sqrt(h) if f >= 0.0 else sqrt(h)
                e[i] = scale * g
                h -= f * g
                a[i, l] = f - g
                f = 0.0
                for j in range(i):
                    if vectors:
                        a[j, i] = a[i, j] / h
                    g = 0.0
                    for k in range(j + 1):
                        g += a[j, k] * a[i, k]
                    for k in range(j + 1, i):
                        g += a[k, j] * a[i, k]
                    e[j] = g / h
                    f += e[j] * a[i, j]
                hh = f / (h + h)
                for j in range(i):
                    f = a[i, j]
                    g = e[j] - hh * f
                    e[j] = g
                    for k in range(j + 1):
                        a[j, k] -= f * e[k] + g * a[i, k]
        else:
            e[i] = a[i, l]
        d[i] = h
    d[0] = 0.0
    e[0] = 0.0
    for i in range(n):
        if vectors:
            if d[i] != 0.0:
                for j in range(i):
                    g = 0.0
                    for k in range(i):
                        g += a[i, k] * a[k, j]
                    for k in range(i):
                        a[k, j] -= g * a[k, i]
            d[i] = a[i, i]
            a[i, i] = 1.0
            for j in range(i):
                a[j, i] = 0.0
                a[i, j] = 0.0
        else:
            d[i] = a[i, i]
    return d_arr, e_arr


def tridiagonal_ql(double[::1] d, double[::1] e, double[:, ::1] z, bint vectors, int max_iter):
    """Implicit QL on the tridiagonal (d, e); rotations applied to rows of ``z``.

    ``z`` holds eigenvectors as rows. Returns -1 on success or the index of
    the eigenvalue whose iteration count exceeded ``max_iter``.
    """
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t nz = z.shape[1]
    cdef Py_ssize_t m, l, i, k
    cdef int it
    cdef bint underflow
    cdef double s, r, p, g, f, dd, c, b, t
    for i in range(1, n):
        e[i - 1] = e[i]
    if n > 0:
        e[n - 1] = 0.0
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = fabs(d[m]) + fabs(d[m + 1])
                if fabs(e[m]) <= 2.2e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                return l
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if vectors:
                    for k in range(nz):
                        t = z[i + 1, k]
                        z[i + 1, k] = s * z[i, k] + c * t
                        z[i, k] = c * z[i, k] - s * t
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def sncndn(const double[::1] u, double r):
    """Real Jacobi sn, cn, dn of modulus ``r`` by the AGM scale (descending Landen)."""
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t p, j, steps
    cdef double a[64]
    cdef double c[64]
    cdef double aa, bb, cc, tmp, phi, sn
    cdef cnp.ndarray[double, ndim=1] sn_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] cn_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] dn_arr = np.empty(n)
    cdef double[::1] so = sn_arr
    cdef double[::1] co = cn_arr
    cdef double[::1] do = dn_arr
    aa = 1.0
    bb = sqrt(1.0 - r * r)
    cc = r
    a[0] = aa
    c[0] = cc
    steps = 0
    # 4e-16 sits above the ulp of aa, so the test cannot stall on rounding
    while fabs(cc) > 4e-16 * aa and steps < 40:
        tmp = 0.5 * (aa + bb)
        cc = 0.5 * (aa - bb)
        bb = sqrt(aa * bb)
        aa = tmp
        steps += 1
        a[steps] = aa
        c[steps] = cc
    for p in range(n):
        phi = ldexp(a[steps] * u[p], <int>steps)
        for j in range(steps, 0, -1):
            phi = 0.5 * (phi + asin(c[j] / a[j] * sin(phi)))
        sn = sin(phi)
        so[p] = sn
        co[p] = cos(phi)
        do[p] = sqrt(1.0 - r * r * sn * sn)
    return sn_arr, cn_arr, dn_arr


def coupled_direct(const double[:, ::1] pv, const double[:, ::1] pc, const double[::1] ev, const double[::1] ec):
    """Explicit double sum over occupied i and unoccupied j of the energy-weighted
    point products; ``pv`` is N_mu x N_v and ``pc`` is N_mu x N_c."""
    cdef Py_ssize_t nmu = pv.shape[0]
    cdef Py_ssize_t nv = pv.shape[1]
    cdef Py_ssize_t nc = pc.shape[1]
    cdef Py_ssize_t mu, nu, i, j
    cdef double s, si, ai
    cdef cnp.ndarray[double, ndim=2] inv_arr = np.empty((nv, nc))
    cdef double[:, ::1] inv = inv_arr
    cdef cnp.ndarray[double, ndim=2] t_arr = np.zeros((nmu, nmu))
    cdef double[:, ::1] t = t_arr
    for i in range(nv):
        for j in range(nc):
            inv[i, j] = 1.0 / (ev[i] - ec[j])
    for mu in range(nmu):
        for nu in range(mu, nmu):
            s = 0.0
            for i in range(nv):
                ai = pv[mu, i] * pv[nu, i]
                si = 0.0
                for j in range(nc):
                    si += pc[mu, j] * pc[nu, j] * inv[i, j]
                s += ai * si
            t[mu, nu] = s
            t[nu, mu] = s
    return t_arr
