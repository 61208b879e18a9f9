"""
Interaction kernels: the pair (phi', A) and the derived smallness parameter.

The velocity of a token at ``x`` under a measure ``nu`` is

    Y[nu](x) = sum_j w_j P_x[y_j] phi'(<A x, y_j>)

and the gradient field replaces ``P_x[y]`` with ``P_x[A y]``. Built-in
profiles of ``phi'`` are tagged by a family code so the compiled core can
evaluate them without calling back into Python.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, MissingAntiderivativeError, NonSymmetricError, RangeError

# family codes shared with the compiled core
FAMILY_CONST = 0
FAMILY_EXP = 1
FAMILY_AFFINE = 2
FAMILY_CALLABLE = -1

_FAMILY_NAMES = {"const": FAMILY_CONST, "exp": FAMILY_EXP, "affine": FAMILY_AFFINE}

EPS_GRID_POINTS = 10_000
SYM_TOL = 1e-12
EIG_TOL = 1e-10


def _check_symmetric(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got shape {A.shape}")
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > SYM_TOL * scale:
        raise NonSymmetricError("A must be symmetric")
    return A


def operator_norm(A):
    """Spectral norm of a symmetric matrix, ``max |lambda_i|``.

    Raises
    ------
    NonSymmetricError
    """
    A = _check_symmetric(A)
    return float(np.abs(np.linalg.eigvalsh(A)).max())


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending with matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T

    @property
    def dim(self):
        return len(self.eigenvalues)


def eigen(A):
    """Symmetric eigendecomposition with eigenvalues in descending order."""
    A = _check_symmetric(A)
    lam, V = np.linalg.eigh(A)
    order = np.argsort(lam)[::-1]
    return EigenDecomposition(lam[order].copy(), V[:, order].copy())


def check_theorem31_hypotheses(eig, tol=EIG_TOL):
    """Test the top-eigenvalue hypotheses of the saddle-escape argument.

    The conditions are ``lambda_1 = lambda_2 = lambda_3 = lambda > 0`` and
    ``|lambda_d| <= lambda``.

    Returns
    -------
    ok : bool
    report : list of str
        Human readable descriptions of the failing conditions.
    """
    lam = np.asarray(eig.eigenvalues, dtype=float)
    if lam.size < 3:
        raise DimensionError("need d >= 3")
    report = []
    top = lam[0]
    if abs(lam[0] - lam[1]) > tol or abs(lam[1] - lam[2]) > tol:
        report.append(f"top three eigenvalues differ: {lam[:3].tolist()}")
    if top <= 0:
        report.append(f"lambda_1 = {top} is not positive")
    if abs(lam[-1]) > top + tol:
        report.append(f"|lambda_d| = {abs(lam[-1])} exceeds lambda = {top}")
    return not report, report


@dataclass(frozen=True)
class KernelSpec:
    """Interaction kernel ``(phi', A)``.

    Parameters
    ----------
    A : (d, d) array
        Symmetric interaction matrix.
    family : {"const", "exp", "affine", "callable"}
        ``const``: phi' = param; ``exp``: phi'(s) = exp(param * s);
        ``affine``: phi'(s) = 1 + param * s; ``callable``: user functions.
    param : float
    kind : {"simple", "kuramoto", "custom"}
    beta : float or None
        Inverse temperature for ``kind == "simple"``.
    phi, phi_prime, phi_double_prime : callables, optional
        Only needed for the ``callable`` family (``phi`` only for energies).
    """

    A: np.ndarray
    family: str = "exp"
    param: float = 1.0
    kind: str = "custom"
    beta: float = None
    phi_prime_fn: object = field(default=None, repr=False, compare=False)
    phi_double_prime_fn: object = field(default=None, repr=False, compare=False)
    phi_fn: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        A = _check_symmetric(self.A)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        if A.shape[0] < 2:
            raise DimensionError("d must be >= 2")
        if self.family not in _FAMILY_NAMES and self.family != "callable":
            raise ValueError(f"unknown phi' family {self.family!r}")
        if self.family == "callable" and (self.phi_prime_fn is None or self.phi_double_prime_fn is None):
            raise ValueError("callable family needs phi_prime_fn and phi_double_prime_fn")
        if self.family == "const" and self.param <= 0:
            raise RangeError("phi' must be positive")
        s = np.linspace(-self.norm_A, self.norm_A, 1000)
        if np.any(self.phi_prime(s) <= 0):
            raise RangeError("phi' must be positive on [-||A||, ||A||]")

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def norm_A(self):
        return operator_norm(self.A)

    @property
    def family_code(self):
        return _FAMILY_NAMES.get(self.family, FAMILY_CALLABLE)

    @property
    def is_identity_A(self):
        return bool(np.array_equal(self.A, np.eye(self.d)))

    def phi_prime(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "const":
            return np.full_like(s, self.param)
        if self.family == "exp":
            return np.exp(self.param * s)
        if self.family == "affine":
            return 1.0 + self.param * s
        return np.asarray(self.phi_prime_fn(s), dtype=float)

    def phi_double_prime(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "const":
            return np.zeros_like(s)
        if self.family == "exp":
            return self.param * np.exp(self.param * s)
        if self.family == "affine":
            return np.full_like(s, self.param)
        return np.asarray(self.phi_double_prime_fn(s), dtype=float)

    def phi(self, s):
        """Antiderivative of phi', needed only by the general energy."""
        s = np.asarray(s, dtype=float)
        if self.phi_fn is not None:
            return np.asarray(self.phi_fn(s), dtype=float)
        if self.family == "const":
            return self.param * s
        if self.family == "exp":
            return np.exp(self.param * s) / self.param
        if self.family == "affine":
            return s + 0.5 * self.param * s * s
        raise MissingAntiderivativeError("custom phi' given without an antiderivative phi")

    def sup_phi_prime(self):
        """``sup |phi'|`` on ``[-||A||, ||A||]``, used as the kernel speed scale."""
        a = self.norm_A
        if self.family == "const":
            return abs(self.param)
        if self.family == "exp":
            return float(np.exp(abs(self.param) * a))
        if self.family == "affine":
            return 1.0 + abs(self.param) * a
        s = np.linspace(-a, a, EPS_GRID_POINTS)
        return float(np.abs(self.phi_prime(s)).max())

    def to_dict(self):
        out = {"kind": self.kind, "family": self.family, "param": self.param,
               "A": self.A.tolist()}
        if self.beta is not None:
            out["beta"] = self.beta
        return out


def SimpleAttention(beta, d):
    """``A = beta I`` and ``phi'(s) = e^s``, so ``phi'(<Ax,y>) = e^{beta <x,y>}``."""
    return KernelSpec(A=beta * np.eye(d), family="exp", param=1.0, kind="simple", beta=float(beta))


def Kuramoto(d):
    """``A = I`` and ``phi' = 1``: the linear-in-mean Kuramoto field."""
    return KernelSpec(A=np.eye(d), family="const", param=1.0, kind="kuramoto")


def scaled_exponential(beta, d):
    """Attention dynamics written with ``A = I`` and ``phi'(s) = e^{beta s}``.

    Generates the same velocity ``Y`` as :func:`SimpleAttention` but with a
    much smaller perturbation size for small ``beta``.
    """
    if beta == 0:
        return Kuramoto(d)
    return KernelSpec(A=np.eye(d), family="exp", param=float(beta), kind="custom", beta=float(beta))


def affine_kernel(a, A):
    """``phi'(s) = 1 + a s`` with a given matrix."""
    return KernelSpec(A=np.asarray(A, dtype=float), family="affine", param=float(a), kind="custom")


def Custom(A, phi_prime, phi_double_prime, phi=None):
    """Kernel with user-supplied ``phi'`` and ``phi''`` (vectorized callables)."""
    return KernelSpec(A=np.asarray(A, dtype=float), family="callable", param=0.0, kind="custom",
                      phi_prime_fn=phi_prime, phi_double_prime_fn=phi_double_prime, phi_fn=phi)


def epsilon_phi(spec):
    """Perturbation size ``(||A|| + 2) (sup|phi' - 1| + sup|phi''|)`` on ``[-||A||, ||A||]``.

    Closed forms are used for the built-in families; callables are maximized
    on a uniform grid of 10^4 points that includes both endpoints.
    """
    a = spec.norm_A
    c = spec.param
    if spec.family == "const":
        sup0, sup1 = abs(c - 1.0), 0.0
    elif spec.family == "exp":
        sup0 = float(np.expm1(abs(c) * a))
        sup1 = abs(c) * float(np.exp(abs(c) * a))
    elif spec.family == "affine":
        sup0, sup1 = abs(c) * a, abs(c)
    else:
        s = np.linspace(-a, a, EPS_GRID_POINTS)
        sup0 = float(np.abs(spec.phi_prime(s) - 1.0).max())
        sup1 = float(np.abs(spec.phi_double_prime(s)).max())
    return (a + 2.0) * (sup0 + sup1)


def kernel_from_config(cfg, d):
    """Build a kernel from a config table ``{kind, beta}`` or ``{kind="custom", A, phi_prime}``."""
    kind = cfg.get("kind")
    if kind == "simple":
        return SimpleAttention(float(cfg["beta"]), d)
    if kind == "kuramoto":
        return Kuramoto(d)
    if kind == "scaled_exp":
        return scaled_exponential(float(cfg["beta"]), d)
    if kind == "custom":
        A = np.asarray(cfg["A"], dtype=float)
        if A.ndim == 1:
            A = A.reshape(d, d)
        name = cfg.get("phi_prime", "exp")
        return KernelSpec(A=A, family=name, param=float(cfg.get("param", 1.0)), kind="custom")
    raise ValueError(f"unknown kernel kind {kind!r}")
