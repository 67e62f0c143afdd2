# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of ``_ref``: reduced assembly and Newmark stepping.

Only the reduced-coordinate hot path lives here; the full-order reference
integrator stays in numpy where dense LAPACK already dominates.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_lapack cimport dgesv

cnp.import_array()

BACKEND = "compiled"


cdef inline void _force_tangent(double[:, ::1] dmat, double[::1] k_lin,
                                double[::1] k_cub, double[::1] weights,
                                double[::1] q, double[::1] g_r,
                                double[:, ::1] k_r) noexcept:
    cdef Py_ssize_t m = dmat.shape[0]
    cdef Py_ssize_t r = dmat.shape[1]
    cdef Py_ssize_t e, i, j
    cdef double delta, f, kt, wf, wkt, di
    for i in range(r):
        g_r[i] = 0.0
        for j in range(r):
            k_r[i, j] = 0.0
    for e in range(m):
        delta = 0.0
        for j in range(r):
            delta += dmat[e, j] * q[j]
        f = (k_lin[e] + k_cub[e] * delta * delta) * delta
        kt = k_lin[e] + 3.0 * k_cub[e] * delta * delta
        wf = weights[e] * f
        wkt = weights[e] * kt
        for i in range(r):
            di = dmat[e, i]
            g_r[i] += wf * di
            for j in range(r):
                k_r[i, j] += wkt * di * dmat[e, j]


def reduced_force_tangent(q, dmat, k_lin, k_cub, weights):
    """Projected restoring force and tangent; mirrors the numpy reference."""
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] dv = np.ascontiguousarray(dmat, dtype=np.float64)
    cdef double[::1] klv = np.ascontiguousarray(k_lin, dtype=np.float64)
    cdef double[::1] kcv = np.ascontiguousarray(k_cub, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t r = dv.shape[1]
    g = np.zeros(r)
    K = np.zeros((r, r))
    cdef double[::1] gv = g
    cdef double[:, ::1] Kv = K
    _force_tangent(dv, klv, kcv, wv, qv, gv, Kv)
    return g, K


cdef inline double _norm(double[::1] x) noexcept:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(x.shape[0]):
        s += x[i] * x[i]
    return sqrt(s)


cdef inline void _matvec(double[:, ::1] a, double[::1] x, double[::1] out) noexcept:
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(a.shape[0]):
        s = 0.0
        for j in range(a.shape[1]):
            s += a[i, j] * x[j]
        out[i] = s


cdef int _solve_inplace(double[:, ::1] a, double[::1] b, int[::1] ipiv) noexcept:
    # a is symmetric here, so row/column order does not matter to dgesv
    cdef int n = <int> a.shape[0]
    cdef int nrhs = 1
    cdef int info = 0
    dgesv(&n, &nrhs, &a[0, 0], &n, &ipiv[0], &b[0], &n, &info)
    return info


def newmark_reduced(m_red, c_red, dmat, k_lin, k_cub, weights, f_red, dt,
                    beta, gamma, rel_tol, abs_floor, max_iter, q0, v0):
    """Implicit Newmark stepping of the reduced system (compiled path).

    Same contract as the numpy reference: returns
    ``(Q, V, A, total_newton_iters, fail_step)``.
    """
    cdef double[:, ::1] mv = np.ascontiguousarray(m_red, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(c_red, dtype=np.float64)
    cdef double[:, ::1] dv = np.ascontiguousarray(dmat, dtype=np.float64)
    cdef double[::1] klv = np.ascontiguousarray(k_lin, dtype=np.float64)
    cdef double[::1] kcv = np.ascontiguousarray(k_cub, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[:, ::1] fv = np.ascontiguousarray(f_red, dtype=np.float64)
    cdef double[::1] q0v = np.ascontiguousarray(q0, dtype=np.float64)
    cdef double[::1] v0v = np.ascontiguousarray(v0, dtype=np.float64)
    cdef double dtv = dt, betav = beta, gammav = gamma
    cdef double rtol = rel_tol, afloor = abs_floor
    cdef int maxit = max_iter

    cdef Py_ssize_t r = mv.shape[0]
    cdef Py_ssize_t n_steps = fv.shape[1] - 1

    cdef double a0 = 1.0 / (betav * dtv * dtv)
    cdef double a1 = gammav / (betav * dtv)
    cdef double a2 = 1.0 / (betav * dtv)
    cdef double a3 = 0.5 / betav - 1.0

    Q = np.zeros((r, n_steps + 1))
    V = np.zeros((r, n_steps + 1))
    A = np.zeros((r, n_steps + 1))
    cdef double[:, ::1] Qv = Q
    cdef double[:, ::1] Vv = V
    cdef double[:, ::1] Av = A

    cdef double[::1] q = np.zeros(r)
    cdef double[::1] g = np.zeros(r)
    cdef double[::1] res = np.zeros(r)
    cdef double[::1] acc = np.zeros(r)
    cdef double[::1] vel = np.zeros(r)
    cdef double[::1] tmp = np.zeros(r)
    cdef double[:, ::1] kt = np.zeros((r, r))
    cdef double[:, ::1] keff = np.zeros((r, r))
    cdef int[::1] ipiv = np.zeros(r, dtype=np.intc)

    cdef Py_ssize_t i, j, n
    cdef int it, info
    cdef long total_iters = 0
    cdef double tol, fnorm, rnorm, ref
    cdef bint converged

    for i in range(r):
        Qv[i, 0] = q0v[i]
        Vv[i, 0] = v0v[i]

    # initial acceleration from the equation of motion at t = 0
    for i in range(r):
        q[i] = q0v[i]
    _force_tangent(dv, klv, kcv, wv, q, g, kt)
    _matvec(cv, v0v, tmp)
    for i in range(r):
        res[i] = fv[i, 0] - tmp[i] - g[i]
    for i in range(r):
        for j in range(r):
            keff[i, j] = mv[i, j]
    info = _solve_inplace(keff, res, ipiv)
    if info != 0:
        return Q, V, A, 0, 1
    for i in range(r):
        Av[i, 0] = res[i]

    for n in range(n_steps):
        for i in range(r):
            q[i] = Qv[i, n]
        converged = False
        tol = afloor
        for it in range(maxit):
            for i in range(r):
                acc[i] = a0 * (q[i] - Qv[i, n]) - a2 * Vv[i, n] - a3 * Av[i, n]
                vel[i] = Vv[i, n] + dtv * (1.0 - gammav) * Av[i, n] + gammav * dtv * acc[i]
            _force_tangent(dv, klv, kcv, wv, q, g, kt)
            _matvec(mv, acc, tmp)
            ref = 0.0
            if it == 0:
                ref = _norm(tmp) + _norm(g)
            for i in range(r):
                res[i] = fv[i, n + 1] - tmp[i] - g[i]
            _matvec(cv, vel, tmp)
            for i in range(r):
                res[i] -= tmp[i]
            if it == 0:
                # reference force scale: load + inertial + damping + elastic,
                # mirrors the numpy backend's convergence criterion
                fnorm = 0.0
                for i in range(r):
                    fnorm += fv[i, n + 1] * fv[i, n + 1]
                ref += sqrt(fnorm) + _norm(tmp)
                tol = rtol * ref
                if tol < afloor:
                    tol = afloor
            total_iters += 1
            rnorm = _norm(res)
            if rnorm <= tol:
                converged = True
                break
            for i in range(r):
                for j in range(r):
                    keff[i, j] = kt[i, j] + a0 * mv[i, j] + a1 * cv[i, j]
            info = _solve_inplace(keff, res, ipiv)
            if info != 0:
                break
            for i in range(r):
                q[i] += res[i]
        if not converged:
            return Q, V, A, total_iters, n + 1
        for i in range(r):
            acc[i] = a0 * (q[i] - Qv[i, n]) - a2 * Vv[i, n] - a3 * Av[i, n]
            vel[i] = Vv[i, n] + dtv * (1.0 - gammav) * Av[i, n] + gammav * dtv * acc[i]
            Qv[i, n + 1] = q[i]
            Vv[i, n + 1] = vel[i]
            Av[i, n + 1] = acc[i]
    return Q, V, A, total_iters, -1
