"""
Pure-numpy implementation of the pairwise kernels.

Mirrors ``sphereflow._core`` function for function. The sum over sources is
a Python loop in ascending source index with Kahan compensation, vectorized
across targets, so one target evaluated alone gives the same bits as the same
target inside a batch.
"""

import numpy as np

FAMILY_CONST = 0
FAMILY_EXP = 1
FAMILY_AFFINE = 2


def _phi_prime(s, family, param):
    if callable(family):
        return np.asarray(family(s), dtype=float)
    if family == FAMILY_CONST:
        return np.full_like(s, param)
    if family == FAMILY_EXP:
        return np.exp(param * s)
    if family == FAMILY_AFFINE:
        return 1.0 + param * s
    raise ValueError(f"unknown family code {family}")


def _rowdot(a, b_row):
    # fixed left-to-right order over coordinates, no BLAS
    s = a[:, 0] * b_row[0]
    for k in range(1, a.shape[1]):
        s = s + a[:, k] * b_row[k]
    return s


def matvec_rows(X, A):
    """Rows ``A @ x`` for each row ``x`` of ``X``, in a fixed summation order."""
    X = np.ascontiguousarray(X, dtype=float)
    out = np.empty_like(X)
    d = X.shape[1]
    for k in range(d):
        s = X[:, 0] * A[k, 0]
        for l in range(1, d):
            s = s + X[:, l] * A[k, l]
        out[:, k] = s
    return out


def field_batch(T, AT, Y, P, w, family, param, nthreads=1):
    """``out_i = sum_j w_j phi'(<AT_i, Y_j>) (P_j - <T_i, P_j> T_i)``.

    Parameters
    ----------
    T : (m, d) targets
    AT : (m, d) rows ``A t_i``
    Y : (n, d) sources
    P : (n, d) projected source vectors (``Y`` or rows ``A y_j``)
    w : (n,) source weights
    family : int family code or a vectorized callable
    param : float
    nthreads : ignored
    """
    T = np.ascontiguousarray(T, dtype=float)
    AT = np.ascontiguousarray(AT, dtype=float)
    m, d = T.shape
    acc = np.zeros((m, d))
    comp = np.zeros((m, d))
    for j in range(Y.shape[0]):
        # the self term P_x[x] vanishes on the sphere; skip it so round-off cannot break symmetry
        keep = np.any(T != Y[j], axis=1)
        s = _rowdot(AT, Y[j])
        k = w[j] * _phi_prime(s, family, param)
        tp = _rowdot(T, P[j])
        for c in range(d):
            term = k * (P[j, c] - tp * T[:, c])
            yv = term - comp[:, c]
            tv = acc[:, c] + yv
            comp[:, c] = np.where(keep, (tv - acc[:, c]) - yv, comp[:, c])
            acc[:, c] = np.where(keep, tv, acc[:, c])
    return acc


def _normalize(X):
    n2 = X[:, 0] * X[:, 0]
    for k in range(1, X.shape[1]):
        n2 = n2 + X[:, k] * X[:, k]
    return X / np.sqrt(n2)[:, None]


def _eval(Z, natoms, A, family, param, gradient, w):
    AZ = matvec_rows(Z, A)
    Y = Z[:natoms]
    P = AZ[:natoms] if gradient else Y
    return field_batch(Z, AZ, Y, P, w, family, param)


def rk_advance(X, w, M, A, family, param, gradient, dt, nsteps, method, renorm_stages, nthreads=1):
    """Advance atoms ``X`` and passive markers ``M`` by ``nsteps`` fixed steps.

    ``method`` is 0 for projected Euler, 1 for projected RK4. Atoms are the
    sources; markers only follow the field.
    """
    X = np.ascontiguousarray(X, dtype=float)
    M = np.ascontiguousarray(M, dtype=float).reshape(-1, X.shape[1])
    A = np.ascontiguousarray(A, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    n = X.shape[0]
    Z = np.concatenate([X, M]) if M.shape[0] else X.copy()
    stage = _normalize if renorm_stages else (lambda v: v)
    for _ in range(nsteps):
        k1 = _eval(Z, n, A, family, param, gradient, w)
        if method == 0:
            Z = _normalize(Z + dt * k1)
            continue
        k2 = _eval(stage(Z + (0.5 * dt) * k1), n, A, family, param, gradient, w)
        k3 = _eval(stage(Z + (0.5 * dt) * k2), n, A, family, param, gradient, w)
        k4 = _eval(stage(Z + dt * k3), n, A, family, param, gradient, w)
        Z = _normalize(Z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    return Z[:n].copy(), Z[n:].copy()


def circle_velocity(theta, omega, mass, beta, nthreads=1):
    """``v_i = -sum_j m_j sin(theta_i - omega_j) exp(beta cos(theta_i - omega_j))``."""
    theta = np.ascontiguousarray(theta, dtype=float)
    acc = np.zeros_like(theta)
    comp = np.zeros_like(theta)
    for j in range(len(omega)):
        diff = theta - omega[j]
        keep = diff != 0.0
        term = -mass[j] * np.sin(diff) * np.exp(beta * np.cos(diff))
        yv = term - comp
        tv = acc + yv
        comp = np.where(keep, (tv - acc) - yv, comp)
        acc = np.where(keep, tv, acc)
    return acc
