"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures, same algorithms, vectorised over the innermost loop. Used
when the extension was not built or ``LOWRANK_GW_PURE=1`` is set.
"""
import numpy as np


def lu_factor(a, tol):
    n = a.shape[0]
    piv = np.arange(n, dtype=np.intp)
    bad = -1
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if p != k:
            a[[k, p], :] = a[[p, k], :]
            piv[[k, p]] = piv[[p, k]]
        if abs(a[k, k]) <= tol:
            if bad < 0:
                bad = k
            continue
        if k + 1 < n:
            a[k + 1:, k] /= a[k, k]
            a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return piv, bad


def lu_solve(lu, piv, b):
    n = lu.shape[0]
    x = b[piv, :].copy()
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i] -= lu[i, i + 1:] @ x[i + 1:]
        x[i] /= lu[i, i]
    return x


def qrcp(at, kmax):
    n, m = at.shape
    r = min(kmax, m, n)
    norms = np.einsum("ij,ij->i", at, at)
    perm = np.arange(n, dtype=np.intp)
    vs = np.zeros((r, m))
    coefs = np.zeros(r)
    R = np.zeros((r, n))
    for k in range(r):
        rest = norms[k:]
        top = rest.max()
        # ties go to the lowest original column index
        cand = np.flatnonzero(rest == top) + k
        best = int(cand[np.argmin(perm[cand])])
        if best != k:
            at[[k, best], :] = at[[best, k], :]
            norms[[k, best]] = norms[[best, k]]
            perm[[k, best]] = perm[[best, k]]
            R[:k, [k, best]] = R[:k, [best, k]]
        x = at[k, k:]
        alpha = np.sqrt(x @ x)
        x0 = at[k, k]
        if alpha == 0.0:
            R[k, k] = 0.0
        else:
            s = -np.copysign(alpha, x0)
            vs[k, k] = x0 - s
            vs[k, k + 1:] = at[k, k + 1:]
            coefs[k] = 2.0 / (2.0 * (alpha * alpha - s * x0))
            R[k, k] = s
        if k + 1 < n:
            block = at[k + 1:, k:]
            if coefs[k] != 0.0:
                w = coefs[k] * (block @ vs[k, k:])
                block -= np.outer(w, vs[k, k:])
            R[k, k + 1:] = block[:, 0]
            tail = at[k + 1:, k + 1:]
            norms[k + 1:] = np.einsum("ij,ij->i", tail, tail)
    qt = np.zeros((r, m))
    qt[np.arange(r), np.arange(r)] = 1.0
    for k in range(r - 1, -1, -1):
        if coefs[k] == 0.0:
            continue
        w = coefs[k] * (qt[:, k:] @ vs[k, k:])
        qt[:, k:] -= np.outer(w, vs[k, k:])
    return qt.T.copy(), R, perm


def tridiagonalize(a, vectors):
    n = a.shape[0]
    d = np.zeros(n)
    e = np.zeros(n)
    for i in range(n - 1, 0, -1):
        l = i - 1
        h = 0.0
        if l > 0:
            scale = np.abs(a[i, :i]).sum()
            if scale == 0.0:
                e[i] = a[i, l]
            else:
                a[i, :i] /= scale
                h = a[i, :i] @ a[i, :i]
                f = a[i, l]
                g = -np.sqrt(h) if f >= 0.0 else np.sqrt(h)
                e[i] = scale * g
                h -= f * g
                a[i, l] = f - g
                u = a[i, :i].copy()
                if vectors:
                    a[:i, i] = u / h
                # p = A_sub u / h with A_sub the symmetric leading block (lower triangle stored)
                sub = np.tril(a[:i, :i])
                full = sub + np.tril(sub, -1).T
                p = full @ u / h
                e[:i] = p
                hh = (p @ u) / (h + h)
                q = p - hh * u
                e[:i] = q
                full -= np.outer(u, q) + np.outer(q, u)
                low = np.tril_indices(i)
                a[:i, :i][low] = full[low]
        else:
            e[i] = a[i, l]
        d[i] = h
    d[0] = 0.0
    e[0] = 0.0
    for i in range(n):
        if vectors:
            if d[i] != 0.0:
                g = a[i, :i] @ a[:i, :i]
                a[:i, :i] -= np.outer(a[:i, i], g)
            d[i] = a[i, i]
            a[i, i] = 1.0
            a[:i, i] = 0.0
            a[i, :i] = 0.0
        else:
            d[i] = a[i, i]
    return d, e


def tridiagonal_ql(d, e, z, vectors, max_iter):
    n = d.shape[0]
    e[:-1] = e[1:]
    if n > 0:
        e[n - 1] = 0.0
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= 2.2e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                return l
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + np.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
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
                    zi = z[i].copy()
                    z[i] = c * zi - s * z[i + 1]
                    z[i + 1] = s * zi + c * z[i + 1]
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def sncndn(u, r):
    a = [1.0]
    c = [r]
    aa, bb, cc = 1.0, np.sqrt(1.0 - r * r), r
    while abs(cc) > 4e-16 * aa and len(a) < 41:
        aa, bb, cc = 0.5 * (aa + bb), np.sqrt(aa * bb), 0.5 * (aa - bb)
        a.append(aa)
        c.append(cc)
    steps = len(a) - 1
    phi = np.ldexp(a[steps] * np.asarray(u, dtype=float), steps)
    for j in range(steps, 0, -1):
        phi = 0.5 * (phi + np.arcsin(c[j] / a[j] * np.sin(phi)))
    sn = np.sin(phi)
    return sn, np.cos(phi), np.sqrt(1.0 - r * r * sn * sn)


def coupled_direct(pv, pc, ev, ec):
    nmu = pv.shape[0]
    t = np.zeros((nmu, nmu))
    for i in range(pv.shape[1]):
        scaled = pc / (ev[i] - ec)
        t += np.outer(pv[:, i], pv[:, i]) * (scaled @ pc.T)
    return 0.5 * (t + t.T)
