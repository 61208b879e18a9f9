# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""
Compiled pairwise kernels.

Parallel over targets with OpenMP; each target's sum over sources runs
sequentially in ascending index with Kahan compensation, so the result does
not depend on the number of threads.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, sin, cos, sqrt

cnp.import_array()

DEF MAXD = 64


cdef inline double _phi_prime(double s, int family, double param) noexcept nogil:
    if family == 0:
        return param
    elif family == 1:
        return exp(param * s)
    else:
        return 1.0 + param * s


cdef void _field(const double* T, const double* AT, int m,
                 const double* Y, const double* P, const double* w, int n, int d,
                 int family, double param, double* out, int nthreads) noexcept nogil:
    cdef Py_ssize_t i
    for i in prange(m, num_threads=nthreads, schedule="static"):
        if d == 3:
            _field_one3(T + i * 3, AT + i * 3, Y, P, w, n, family, param, out + i * 3)
        else:
            _field_one(T + i * d, AT + i * d, Y, P, w, n, d, family, param, out + i * d)


cdef inline void _field_one3(const double* t, const double* at,
                             const double* Y, const double* P, const double* w, int n,
                             int family, double param, double* o) noexcept nogil:
    # same operation order as _field_one with d = 3, accumulators kept in registers
    cdef int j
    cdef double t0 = t[0], t1 = t[1], t2 = t[2]
    cdef double a0 = at[0], a1 = at[1], a2 = at[2]
    cdef double s, k, tp, term, yv, tv, p0, p1, p2
    cdef double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0
    cdef double cmp0 = 0.0, cmp1 = 0.0, cmp2 = 0.0
    cdef const double* y
    cdef const double* p
    for j in range(n):
        y = Y + j * 3
        if t0 == y[0] and t1 == y[1] and t2 == y[2]:
            continue
        p = P + j * 3
        s = ((a0 * y[0]) + a1 * y[1]) + a2 * y[2]
        k = w[j] * _phi_prime(s, family, param)
        p0 = p[0]
        p1 = p[1]
        p2 = p[2]
        tp = ((t0 * p0) + t1 * p1) + t2 * p2
        term = k * (p0 - tp * t0)
        yv = term - cmp0
        tv = acc0 + yv
        cmp0 = (tv - acc0) - yv
        acc0 = tv
        term = k * (p1 - tp * t1)
        yv = term - cmp1
        tv = acc1 + yv
        cmp1 = (tv - acc1) - yv
        acc1 = tv
        term = k * (p2 - tp * t2)
        yv = term - cmp2
        tv = acc2 + yv
        cmp2 = (tv - acc2) - yv
        acc2 = tv
    o[0] = acc0
    o[1] = acc1
    o[2] = acc2


cdef inline void _field_one(const double* t, const double* at,
                            const double* Y, const double* P, const double* w, int n, int d,
                            int family, double param, double* o) noexcept nogil:
    cdef int j, c, same
    cdef double s, k, tp, term, yv, tv
    cdef double acc[MAXD]
    cdef double comp[MAXD]
    for c in range(d):
        acc[c] = 0.0
        comp[c] = 0.0
    for j in range(n):
        # the self term P_x[x] vanishes on the sphere; skip it so round-off cannot break symmetry
        same = 1
        for c in range(d):
            if t[c] != Y[j * d + c]:
                same = 0
                break
        if same:
            continue
        s = at[0] * Y[j * d]
        for c in range(1, d):
            s = s + at[c] * Y[j * d + c]
        k = w[j] * _phi_prime(s, family, param)
        tp = t[0] * P[j * d]
        for c in range(1, d):
            tp = tp + t[c] * P[j * d + c]
        for c in range(d):
            term = k * (P[j * d + c] - tp * t[c])
            yv = term - comp[c]
            tv = acc[c] + yv
            comp[c] = (tv - acc[c]) - yv
            acc[c] = tv
    for c in range(d):
        o[c] = acc[c]


def field_batch(T, AT, Y, P, w, int family, double param, int nthreads=1):
    """``out_i = sum_j w_j phi'(<AT_i, Y_j>) (P_j - <T_i, P_j> T_i)``."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] cT = np.ascontiguousarray(T, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] cAT = np.ascontiguousarray(AT, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] cY = np.ascontiguousarray(Y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] cP = np.ascontiguousarray(P, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] cw = np.ascontiguousarray(w, dtype=np.float64)
    cdef int m = cT.shape[0]
    cdef int d = cT.shape[1]
    cdef int n = cY.shape[0]
    if d > MAXD:
        raise ValueError("dimension above compiled limit")
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.zeros((m, d))
    if m == 0 or n == 0:
        return out
    with nogil:
        _field(&cT[0, 0], &cAT[0, 0], m, &cY[0, 0], &cP[0, 0], &cw[0], n, d,
               family, param, &out[0, 0], nthreads)
    return out


cdef void _matvec_rows(const double* X, int m, int d, const double* A, double* out) noexcept nogil:
    cdef int i, k, l
    cdef double s
    for i in range(m):
        for k in range(d):
            s = X[i * d] * A[k * d]
            for l in range(1, d):
                s = s + X[i * d + l] * A[k * d + l]
            out[i * d + k] = s


cdef void _normalize_rows(double* X, int m, int d) noexcept nogil:
    cdef int i, c
    cdef double n2, r
    for i in range(m):
        n2 = X[i * d] * X[i * d]
        for c in range(1, d):
            n2 = n2 + X[i * d + c] * X[i * d + c]
        r = sqrt(n2)
        for c in range(d):
            X[i * d + c] = X[i * d + c] / r


cdef void _eval(const double* Z, int m, int natoms, int d, const double* A, int family, double param,
                int gradient, const double* w, double* AZ, double* out, int nthreads) noexcept nogil:
    _matvec_rows(Z, m, d, A, AZ)
    if gradient:
        _field(Z, AZ, m, Z, AZ, w, natoms, d, family, param, out, nthreads)
    else:
        _field(Z, AZ, m, Z, Z, w, natoms, d, family, param, out, nthreads)


def rk_advance(X, w, M, A, int family, double param, bint gradient, double dt, int nsteps,
               int method, bint renorm_stages, int nthreads=1):
    """Advance atoms and passive markers by ``nsteps`` projected Euler (0) or RK4 (1) steps."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] cX = np.ascontiguousarray(X, dtype=np.float64)
    cdef int n = cX.shape[0]
    cdef int d = cX.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] cM = np.ascontiguousarray(M, dtype=np.float64).reshape(-1, d)
    cdef cnp.ndarray[double, ndim=2, mode="c"] cA = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] cw = np.ascontiguousarray(w, dtype=np.float64)
    if d > MAXD:
        raise ValueError("dimension above compiled limit")
    cdef cnp.ndarray[double, ndim=2, mode="c"] Z = np.ascontiguousarray(np.concatenate([cX, cM]))
    cdef int m = Z.shape[0]
    cdef int total = m * d
    cdef cnp.ndarray[double, ndim=2, mode="c"] S = np.empty((m, d))
    cdef cnp.ndarray[double, ndim=2, mode="c"] AZ = np.empty((m, d))
    cdef cnp.ndarray[double, ndim=2, mode="c"] k1 = np.empty((m, d))
    cdef cnp.ndarray[double, ndim=2, mode="c"] k2 = np.empty((m, d))
    cdef cnp.ndarray[double, ndim=2, mode="c"] k3 = np.empty((m, d))
    cdef cnp.ndarray[double, ndim=2, mode="c"] k4 = np.empty((m, d))
    cdef double* z = &Z[0, 0]
    cdef double* s = &S[0, 0]
    cdef double* az = &AZ[0, 0]
    cdef double* a = &cA[0, 0]
    cdef double* pw = &cw[0]
    cdef double* p1 = &k1[0, 0]
    cdef double* p2 = &k2[0, 0]
    cdef double* p3 = &k3[0, 0]
    cdef double* p4 = &k4[0, 0]
    cdef int step, q
    cdef double h = 0.5 * dt
    cdef double sixth = dt / 6.0
    with nogil:
        for step in range(nsteps):
            _eval(z, m, n, d, a, family, param, gradient, pw, az, p1, nthreads)
            if method == 0:
                for q in range(total):
                    z[q] = z[q] + dt * p1[q]
                _normalize_rows(z, m, d)
                continue
            for q in range(total):
                s[q] = z[q] + h * p1[q]
            if renorm_stages:
                _normalize_rows(s, m, d)
            _eval(s, m, n, d, a, family, param, gradient, pw, az, p2, nthreads)
            for q in range(total):
                s[q] = z[q] + h * p2[q]
            if renorm_stages:
                _normalize_rows(s, m, d)
            _eval(s, m, n, d, a, family, param, gradient, pw, az, p3, nthreads)
            for q in range(total):
                s[q] = z[q] + dt * p3[q]
            if renorm_stages:
                _normalize_rows(s, m, d)
            _eval(s, m, n, d, a, family, param, gradient, pw, az, p4, nthreads)
            for q in range(total):
                z[q] = z[q] + sixth * (((p1[q] + 2.0 * p2[q]) + 2.0 * p3[q]) + p4[q])
            _normalize_rows(z, m, d)
    return Z[:n].copy(), Z[n:].copy()


def circle_velocity(theta, omega, mass, double beta, int nthreads=1):
    """``v_i = -sum_j m_j sin(theta_i - omega_j) exp(beta cos(theta_i - omega_j))``."""
    cdef cnp.ndarray[double, ndim=1, mode="c"] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] om = np.ascontiguousarray(omega, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ms = np.ascontiguousarray(mass, dtype=np.float64)
    cdef int m = th.shape[0]
    cdef int n = om.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.zeros(m)
    cdef Py_ssize_t i
    cdef int j
    cdef double acc, comp, diff, term, yv, tv
    if m == 0 or n == 0:
        return out
    with nogil:
        for i in prange(m, num_threads=nthreads, schedule="static"):
            acc = 0.0
            comp = 0.0
            for j in range(n):
                diff = th[i] - om[j]
                if diff == 0.0:
                    continue
                term = -ms[j] * sin(diff) * exp(beta * cos(diff))
                yv = term - comp
                tv = acc + yv
                comp = (tv - acc) - yv
                acc = tv
            out[i] = acc
    return out
