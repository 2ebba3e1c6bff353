"""Dense primal-dual interior-point solver for small conic programs.

Problems are posed in standard form::

    minimize    c @ x
    subject to  A @ x == b
                x in K = K_1 x K_2 x ... x K_p

where each ``K_i`` is a nonnegative orthant (``"l"``), a second-order cone
(``"q"``, first entry is the bound) or a cone of real symmetric positive
semidefinite matrices (``"s"``, stored as ``svec``: lower triangle, column
major, off-diagonals scaled by sqrt(2) so that ``svec(X) @ svec(Y) == tr(XY)``).

The solver runs a Mehrotra predictor-corrector on the homogeneous self-dual
embedding with Nesterov-Todd scaling.  Only the m x m Schur complement
``A H^-1 A^T`` is ever factored, so problems with many cone variables but few
equality constraints (the beamforming SDP) are cheap.

Complex Hermitian PSD blocks are handled by callers through
:func:`hermitian_embed`; see that function for the trace convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = [
    "Cone",
    "ConicProblem",
    "ConicSolution",
    "ConicError",
    "solve",
    "svec",
    "smat",
    "svec_dim",
    "hermitian_embed",
    "hermitian_from_embedding",
]

_SQRT2 = np.sqrt(2.0)


class ConicError(ValueError):
    """Raised for malformed conic problems."""


@dataclass(frozen=True)
class Cone:
    kind: str  # "l", "q" or "s"
    dim: int  # vector length for "l"/"q", matrix order for "s"
    # "s" block that stores a real-embedded Hermitian matrix; iterates are
    # kept on the embedding subspace, which removes a degenerate face
    embedded: bool = False

    def __post_init__(self):
        if self.kind not in ("l", "q", "s"):
            raise ConicError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise ConicError("cone dimension must be positive")
        if self.kind == "s" and self.dim > 64:
            raise ConicError("PSD blocks larger than 64 are not supported")
        if self.embedded and (self.kind != "s" or self.dim % 2):
            raise ConicError("only even-order PSD blocks can be Hermitian embeddings")

    @property
    def size(self) -> int:
        return svec_dim(self.dim) if self.kind == "s" else self.dim

    @property
    def degree(self) -> int:
        return 1 if self.kind == "q" else self.dim


@dataclass
class ConicProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: list

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        nvar = sum(cone.size for cone in self.cones)
        if self.c.size != nvar:
            raise ConicError(f"objective has {self.c.size} entries, cones need {nvar}")
        if self.A.shape != (self.b.size, nvar):
            raise ConicError(f"A has shape {self.A.shape}, expected {(self.b.size, nvar)}")

    @property
    def slices(self) -> list:
        out, start = [], 0
        for cone in self.cones:
            out.append(slice(start, start + cone.size))
            start += cone.size
        return out


@dataclass
class ConicSolution:
    status: str  # "optimal", "infeasible", "unbounded" or "max_iter"
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


# --------------------------------------------------------------------------
# symmetric-matrix vectorization


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


_TRIL_CACHE: dict = {}


def _tril(n):
    if n not in _TRIL_CACHE:
        # column-major lower triangle == row-major upper triangle of the transpose
        cols, rows = np.triu_indices(n)
        scale = np.where(rows == cols, 1.0, _SQRT2)
        _TRIL_CACHE[n] = (rows, cols, scale)
    return _TRIL_CACHE[n]


def svec(X: np.ndarray) -> np.ndarray:
    """Vectorize symmetric matrices (works on stacks of shape (..., n, n))."""
    X = np.asarray(X)
    n = X.shape[-1]
    rows, cols, scale = _tril(n)
    return X[..., rows, cols] * scale


def smat(v: np.ndarray, n: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if n is None:
        n = int(round((np.sqrt(8 * v.shape[-1] + 1) - 1) / 2))
    rows, cols, scale = _tril(n)
    out = np.zeros(v.shape[:-1] + (n, n))
    vals = v / scale
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out


def hermitian_embed(H: np.ndarray) -> np.ndarray:
    """Real symmetric embedding ``[[Re, -Im], [Im, Re]]`` of Hermitian ``H``.

    Eigenvalues of the embedding are those of ``H`` with doubled multiplicity,
    so ``tr(embed(C) @ embed(X)) == 2 * tr(C @ X)``.  Callers that build
    linear functionals of Hermitian variables use ``0.5 * hermitian_embed(C)``.
    """
    H = np.asarray(H)
    re, im = H.real, H.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def hermitian_from_embedding(S: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hermitian_embed`, projecting unstructured blocks.

    The projection keeps positive semidefiniteness and leaves every linear
    functional of the form ``tr(embed(C) @ S)`` unchanged.
    """
    n = S.shape[-1] // 2
    a = 0.5 * (S[..., :n, :n] + S[..., n:, n:])
    b = 0.5 * (S[..., n:, :n] - S[..., :n, n:])
    return a + 1j * b


# --------------------------------------------------------------------------
# cone kernels


class _Nonneg:
    def __init__(self, n):
        self.n = n

    def identity(self):
        return np.ones(self.n)

    def max_step(self, x, dx):
        neg = dx < 0
        if not neg.any():
            return np.inf
        return float(np.min(-x[neg] / dx[neg]))

    def scaling(self, x, s):
        return _NonnegScaling(x, s)


class _NonnegScaling:
    def __init__(self, x, s):
        self.d = np.sqrt(s / x)
        self.lam = np.sqrt(x * s)

    def W(self, v):
        return self.d * v

    def Winv_T(self, v):
        return v / self.d

    W_T = W

    def Winv(self, v):
        return v / self.d

    Winv_T_rows = Winv

    def jordan(self, u, v):
        return u * v

    def lam_div(self, v):
        return v / self.lam

    def lam_sq(self):
        return self.lam**2

    def identity(self):
        return np.ones_like(self.lam)


class _SOC:
    """A run of ``m`` second-order cones of equal dimension, handled as an (m, d) array."""

    def __init__(self, d, m=1):
        self.d, self.m = d, m

    def identity(self):
        e = np.zeros((self.m, self.d))
        e[:, 0] = 1.0
        return e.ravel()

    def max_step(self, x, dx):
        # smallest positive root of (x + a dx)^T J (x + a dx) = 0, per cone
        x, dx = x.reshape(self.m, self.d), dx.reshape(self.m, self.d)
        a = dx[:, 0] ** 2 - np.einsum("ij,ij->i", dx[:, 1:], dx[:, 1:])
        b = x[:, 0] * dx[:, 0] - np.einsum("ij,ij->i", x[:, 1:], dx[:, 1:])
        c = np.maximum(x[:, 0] ** 2 - np.einsum("ij,ij->i", x[:, 1:], x[:, 1:]), 0.0)
        step = np.full(self.m, np.inf)
        lin = np.abs(a) < 1e-300
        sel = lin & (b < 0)
        step[sel] = -c[sel] / (2 * b[sel])
        disc = b * b - a * c
        quad = ~lin & (disc >= 0)
        if quad.any():
            aq, bq, cq = a[quad], b[quad], c[quad]
            q = -(bq + np.copysign(np.sqrt(disc[quad]), bq))
            nz = q != 0  # q == 0 only gives the root at zero, which is not a step
            qs = np.where(nz, q, 1.0)
            r1 = np.where(nz, qs / aq, -1.0)
            r2 = np.where(nz, cq / qs, -1.0)
            r1 = np.where(r1 > 0, r1, np.inf)
            r2 = np.where(r2 > 0, r2, np.inf)
            step[quad] = np.minimum(r1, r2)
        neg = dx[:, 0] < 0
        step[neg] = np.minimum(step[neg], -x[neg, 0] / dx[neg, 0])
        return float(step.min()) if self.m else np.inf

    def scaling(self, x, s):
        return _SOCScaling(x.reshape(self.m, self.d), s.reshape(self.m, self.d))


def _jdet(v):
    return v[..., 0] ** 2 - np.einsum("...i,...i->...", v[..., 1:], v[..., 1:])


class _SOCScaling:
    """Nesterov-Todd scaling of each cone in the run; vectors are flat (m*d,) or rows (r, m*d)."""

    def __init__(self, x, s):
        self.m, self.d = x.shape
        a = np.sqrt(np.maximum(_jdet(x), 1e-300))
        b = np.sqrt(np.maximum(_jdet(s), 1e-300))
        xb, sb = x / a[:, None], s / b[:, None]
        gam = np.sqrt(np.maximum((1.0 + np.einsum("ij,ij->i", xb, sb)) / 2.0, 1e-300))
        w = sb.copy()
        w[:, 0] += xb[:, 0]
        w[:, 1:] -= xb[:, 1:]
        w /= 2.0 * gam[:, None]
        self.beta = np.sqrt(b / a)
        self.w0 = w[:, 0]
        self.w1 = w[:, 1:]
        self.lam = self.W(x.ravel()).reshape(self.m, self.d)

    def _wbar(self, v, inverse=False):
        shape = v.shape
        v = v.reshape(shape[:-1] + (self.m, self.d))
        v0, v1 = v[..., 0], v[..., 1:]
        w1 = -self.w1 if inverse else self.w1
        dot = np.einsum("...ij,ij->...i", v1, w1)
        out = np.empty_like(v)
        out[..., 0] = self.w0 * v0 + dot
        out[..., 1:] = v1 + w1 * (v0 + dot / (1.0 + self.w0))[..., None]
        return out

    def W(self, v):
        return (self.beta[:, None] * self._wbar(v)).reshape(v.shape)

    W_T = W

    def Winv_T(self, v):
        return (self._wbar(v, inverse=True) / self.beta[:, None]).reshape(v.shape)

    Winv = Winv_T
    Winv_T_rows = Winv_T

    def jordan(self, u, v):
        u, v = u.reshape(self.m, self.d), v.reshape(self.m, self.d)
        out = np.empty_like(u)
        out[:, 0] = np.einsum("ij,ij->i", u, v)
        out[:, 1:] = u[:, :1] * v[:, 1:] + v[:, :1] * u[:, 1:]
        return out.ravel()

    def lam_div(self, d):
        lam = self.lam
        d = d.reshape(self.m, self.d)
        z0 = (lam[:, 0] * d[:, 0] - np.einsum("ij,ij->i", lam[:, 1:], d[:, 1:])) / _jdet(lam)
        out = np.empty_like(d)
        out[:, 0] = z0
        out[:, 1:] = (d[:, 1:] - z0[:, None] * lam[:, 1:]) / lam[:, :1]
        return out.ravel()

    def lam_sq(self):
        return self.jordan(self.lam.ravel(), self.lam.ravel())

    def identity(self):
        e = np.zeros((self.m, self.d))
        e[:, 0] = 1.0
        return e.ravel()


class _PSD:
    def __init__(self, n):
        self.n = n

    def identity(self):
        return svec(np.eye(self.n))

    def max_step(self, x, dx):
        X = smat(x, self.n)
        D = smat(dx, self.n)
        try:
            L = np.linalg.cholesky(X)
        except np.linalg.LinAlgError:
            return 0.0
        T = sla.solve_triangular(L, D, lower=True)
        T = sla.solve_triangular(L, T.T, lower=True)
        emin = np.linalg.eigvalsh(0.5 * (T + T.T))[0]
        return float(-1.0 / emin) if emin < 0 else np.inf

    def scaling(self, x, s):
        return _PSDScaling(smat(x, self.n), smat(s, self.n))


class _PSDScaling:
    def __init__(self, X, S):
        n = X.shape[0]
        Lx = _chol(X)
        Ls = _chol(S)
        U, lam, Vt = np.linalg.svd(Ls.T @ Lx)
        lam = np.maximum(lam, 1e-300)
        rs = 1.0 / np.sqrt(lam)
        self.R = (Lx @ Vt.T) * rs  # X = R Lam R^T, S = R^-T Lam R^-1
        self.Rinv = (U.T @ Ls.T) * rs[:, None]
        self.lam = lam
        self.n = n

    def W(self, v):
        V = smat(v, self.n)
        return svec(self.Rinv @ V @ self.Rinv.T)

    def Winv_T(self, v):
        V = smat(v, self.n)
        return svec(self.R.T @ V @ self.R)

    def W_T(self, v):
        V = smat(v, self.n)
        return svec(self.Rinv.T @ V @ self.Rinv)

    def Winv(self, v):
        V = smat(v, self.n)
        return svec(self.R @ V @ self.R.T)

    def Winv_T_rows(self, rows):
        M = smat(rows, self.n)
        return svec(self.R.T @ M @ self.R)

    def jordan(self, u, v):
        U = smat(u, self.n)
        V = smat(v, self.n)
        return svec(0.5 * (U @ V + V @ U))

    def lam_div(self, d):
        D = smat(d, self.n)
        return svec(2.0 * D / (self.lam[:, None] + self.lam[None, :]))

    def lam_sq(self):
        return svec(np.diag(self.lam**2))

    def identity(self):
        return svec(np.eye(self.n))


def _chol(X):
    try:
        return np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (X + X.T))
        w = np.maximum(w, 1e-14 * max(w.max(), 1e-300))
        return np.linalg.cholesky((V * w) @ V.T)


_KERNELS = {"l": _Nonneg, "q": _SOC, "s": _PSD}


# --------------------------------------------------------------------------
# solver


def solve(
    problem: ConicProblem,
    *,
    tol: float = 1e-9,
    certify_tol: float = 1e-7,
    max_iter: int = 200,
    step_fraction: float = 0.99,
) -> ConicSolution:
    """Solve ``problem`` and certify the returned point.

    ``tol`` drives the iteration; ``certify_tol`` is the threshold the final
    relative residuals and gap must meet for ``status == "optimal"``.  When
    the iteration stalls short of ``tol`` but the certificate passes, the
    point is still reported optimal.  Residuals and gap are measured on the
    caller's ``A`` and ``b`` with ``c`` scaled to unit norm.
    """
    # steps toward a far-away boundary can overflow in intermediate products;
    # such iterates are caught by the finiteness checks below
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _solve(problem, tol, certify_tol, max_iter, step_fraction)


def _solve(p, tol, certify_tol, max_iter, step_fraction):
    # equilibrate constraint rows and give c unit norm; y and s are mapped
    # back at the end.  The unit objective makes the iterate path independent
    # of how the caller scales c.
    row_scale = np.linalg.norm(p.A, axis=1)
    row_scale = 1.0 / np.where(row_scale > 0, row_scale, 1.0)
    c_norm = float(np.linalg.norm(p.c)) or 1.0
    A, b, c = p.A * row_scale[:, None], p.b * row_scale, p.c / c_norm
    m, nvar = A.shape
    kernels, slices = _group_kernels(p.cones, p.slices)
    degree = sum(cone.degree for cone in p.cones)

    x = np.concatenate([k.identity() for k in kernels])
    s = x.copy()
    y = np.zeros(m)
    tau = kappa = 1.0
    nb, nc = 1.0 + np.linalg.norm(p.b), 1.0 + np.linalg.norm(c)

    status = "max_iter"
    it = 0
    best = None
    for it in range(1, max_iter + 1):
        r1 = A @ x - b * tau
        r2 = -A.T @ y + c * tau - s
        r3 = b @ y - c @ x - kappa
        mu = (x @ s + tau * kappa) / (degree + 1)

        # progress is judged on the caller's (unscaled) data
        cert = _certificate(p.A, p.b, c, x, y * row_scale, s, tau, nb, nc)
        if not np.isfinite(cert["score"]):
            break
        if best is None or cert["score"] < best[0]["score"]:
            best = (cert, x.copy(), y.copy(), s.copy(), tau)
        if cert["pres"] <= tol and cert["dres"] <= tol and cert["gap"] <= tol:
            status = "optimal"
            break
        by, cx = b @ y, c @ x
        if by > 0 and np.linalg.norm(A.T @ y + s) <= tol * by and tau < kappa:
            status = "infeasible"
            break
        if cx < 0 and np.linalg.norm(A @ x) <= tol * -cx and tau < kappa:
            status = "unbounded"
            break

        scal = [k.scaling(x[sl], s[sl]) for k, sl in zip(kernels, slices)]
        lam_sq = np.concatenate([sc.lam_sq() for sc in scal])
        ident = np.concatenate([sc.identity() for sc in scal])

        try:
            system = _NewtonSystem(A, b, c, scal, slices, tau, kappa)
        except np.linalg.LinAlgError:
            break

        # predictor
        ds = -lam_sq
        dtau_rhs = -tau * kappa
        dxa, dya, dsa, dta, dka = system.direction(ds, dtau_rhs, 1.0, r1, r2, r3)
        if not (np.all(np.isfinite(dxa)) and np.all(np.isfinite(dsa)) and np.isfinite(dta + dka)):
            break
        alpha_a = _max_step(kernels, slices, x, dxa, s, dsa, tau, dta, kappa, dka)
        alpha_a = min(1.0, alpha_a)
        mu_a = ((x + alpha_a * dxa) @ (s + alpha_a * dsa)
                + (tau + alpha_a * dta) * (kappa + alpha_a * dka)) / (degree + 1)
        if not np.isfinite(mu_a):
            mu_a = mu
        sigma = min(1.0, max(0.0, mu_a / mu)) ** 3

        # corrector
        corr = np.concatenate([
            sc.jordan(sc.W(dxa[sl]), sc.Winv_T(dsa[sl])) for sc, sl in zip(scal, slices)
        ])
        ds = -lam_sq - corr + sigma * mu * ident
        dtau_rhs = -tau * kappa - dta * dka + sigma * mu
        dx, dy, dsv, dt, dk = system.direction(ds, dtau_rhs, 1.0 - sigma, r1, r2, r3)
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dsv)) and np.isfinite(dt + dk)):
            break
        alpha = _max_step(kernels, slices, x, dx, s, dsv, tau, dt, kappa, dk)
        alpha = min(1.0, step_fraction * alpha)
        if alpha < 1e-14:
            break

        x = _project(p.cones, p.slices, x + alpha * dx)
        y = y + alpha * dy
        s = _project(p.cones, p.slices, s + alpha * dsv)
        tau = tau + alpha * dt
        kappa = kappa + alpha * dk

    cert, bx, by_, bs, btau = best
    final = _certificate(p.A, p.b, c, x, y * row_scale, s, tau, nb, nc)
    if status != "optimal" and not final["score"] <= cert["score"]:
        final, x, y, s, tau = cert, bx, by_, bs, btau

    y = y * row_scale
    if status in ("infeasible", "unbounded"):
        xs, ys, ss = x, y * c_norm, s * c_norm
    else:
        xs, ys, ss = x / tau, y / tau, s / tau
        ok = max(final["pres"], final["dres"], final["gap"]) <= certify_tol
        if ok:
            xs, ys, ss, final = _polish(p, c, xs, ys, ss, final, nb, nc)
        status = "optimal" if ok else ("max_iter" if status == "optimal" else status)
        ys, ss = ys * c_norm, ss * c_norm
    return ConicSolution(
        status=status,
        x=xs,
        y=ys,
        s=ss,
        primal_objective=float(p.c @ xs),
        dual_objective=float(p.b @ ys),
        primal_residual=final["pres"],
        dual_residual=final["dres"],
        gap=final["gap"],
        iterations=it,
        info={"tau": tau, "complementarity": float(xs @ ss)},
    )


POLISH_MAX_SIZE = 1200  # rows of the dense KKT system; larger problems are left as solved
POLISH_STEPS = 4


def _jordan_matrix(cone, v):
    """Matrix of u -> u o v (Jordan product with fixed v) in the cone's coordinates."""
    if cone.kind == "l":
        return np.diag(v)
    if cone.kind == "q":
        L = v[0] * np.eye(cone.dim)
        L[0, 1:] = v[1:]
        L[1:, 0] = v[1:]
        return L
    V = smat(v, cone.dim)
    basis = smat(np.eye(v.size), cone.dim)
    return svec(0.5 * (basis @ V + V @ basis)).T


def _jordan(cone, u, v):
    return _jordan_matrix(cone, v) @ u


def _onto_cone(cone, v):
    """Euclidean projection onto the cone (rounding-level corrections only here)."""
    if cone.kind == "l":
        return np.maximum(v, 0.0)
    if cone.kind == "q":
        t, r = v[0], np.linalg.norm(v[1:])
        if r <= t:
            return v
        if r <= -t:
            return np.zeros_like(v)
        a = 0.5 * (t + r)
        return np.concatenate([[a], a * v[1:] / r])
    w, V = np.linalg.eigh(smat(v, cone.dim))
    return svec((V * np.maximum(w, 0.0)) @ V.T)


def _polish(p, c, x, y, s, cert, nb, nc):
    """Newton steps on  Ax = b, A^T y + s = c, x o s = 0  from a certified point.

    Interior-point iterates pin x only to about sqrt(gap) on degenerate
    faces; at a strictly complementary solution this system has a regular
    Jacobian and Newton converges quadratically.  Each step is projected
    back onto the cones and kept only if the certificate improves.
    """
    A, b = p.A, p.b
    m, n = A.shape
    if 2 * n + m > POLISH_MAX_SIZE:
        return x, y, s, cert
    cones, slices = p.cones, p.slices
    for _ in range(POLISH_STEPS):
        J = np.zeros((2 * n + m, 2 * n + m))
        J[:m, :n] = A
        J[m:m + n, n:n + m] = A.T
        J[m:m + n, n + m:] = np.eye(n)
        comp = np.empty(n)
        for cone, sl in zip(cones, slices):
            rows = slice(m + n + sl.start, m + n + sl.stop)
            J[rows, sl] = _jordan_matrix(cone, s[sl])
            J[rows, n + m + sl.start:n + m + sl.stop] = _jordan_matrix(cone, x[sl])
            comp[sl] = _jordan(cone, x[sl], s[sl])
        F = np.concatenate([A @ x - b, A.T @ y + s - c, comp])
        step = np.linalg.lstsq(J, -F, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            break
        # Newton lands within rounding of the boundary, possibly just outside
        x1, s1 = x + step[:n], s + step[n + m:]
        for cone, sl in zip(cones, slices):
            x1[sl] = _onto_cone(cone, x1[sl])
            s1[sl] = _onto_cone(cone, s1[sl])
        x1, s1 = _project(cones, slices, x1), _project(cones, slices, s1)
        y1 = y + step[n:n + m]
        new = _certificate(A, b, c, x1, y1, s1, 1.0, nb, nc)
        if not new["score"] < cert["score"]:
            break
        x, y, s, cert = x1, y1, s1, new
    return x, y, s, cert


def _group_kernels(cones, slices):
    """One kernel per cone, except that runs of equal-size SOCs or LP blocks are merged."""
    kernels, merged = [], []
    for cone, sl in zip(cones, slices):
        last = kernels[-1] if kernels else None
        if cone.kind == "q" and isinstance(last, _SOC) and last.d == cone.dim:
            last.m += 1
            merged[-1] = slice(merged[-1].start, sl.stop)
        elif cone.kind == "l" and isinstance(last, _Nonneg):
            last.n += cone.dim
            merged[-1] = slice(merged[-1].start, sl.stop)
        else:
            kernels.append(_KERNELS[cone.kind](cone.dim))
            merged.append(sl)
    return kernels, merged


def _project(cones, slices, v):
    for cone, sl in zip(cones, slices):
        if cone.embedded:
            S = smat(v[sl], cone.dim)
            v[sl] = svec(hermitian_embed(hermitian_from_embedding(S)))
    return v


def _certificate(A, b, c, x, y, s, tau, nb, nc):
    xs, ys, ss = x / tau, y / tau, s / tau
    pres = np.linalg.norm(A @ xs - b) / nb
    dres = np.linalg.norm(A.T @ ys + ss - c) / nc
    pobj, dobj = c @ xs, b @ ys
    gap = abs(pobj - dobj) / max(1.0, min(abs(pobj), abs(dobj)))
    return {"pres": pres, "dres": dres, "gap": gap, "score": max(pres, dres, gap)}


def _max_step(kernels, slices, x, dx, s, ds, tau, dt, kappa, dk):
    alpha = np.inf
    for k, sl in zip(kernels, slices):
        alpha = min(alpha, k.max_step(x[sl], dx[sl]), k.max_step(s[sl], ds[sl]))
    if dt < 0:
        alpha = min(alpha, -tau / dt)
    if dk < 0:
        alpha = min(alpha, -kappa / dk)
    return alpha


class _NewtonSystem:
    """Reduced Newton system of the self-dual embedding for fixed scaling.

    Everything is expressed in NT-scaled coordinates (dx~ = W dx,
    ds~ = W^-T ds, A~ = A W^-1), so the Schur complement is the Gram matrix
    A~ A~^T and no large terms cancel when forming directions.
    """

    def __init__(self, A, b, c, scal, slices, tau, kappa):
        self.b = b
        self.scal, self.slices = scal, slices
        self.tau, self.kappa = tau, kappa
        At = np.empty_like(A)
        for sc, sl in zip(scal, slices):
            At[:, sl] = sc.Winv_T_rows(A[:, sl])
        self.At = At
        self.ct = self._per_cone(lambda sc, v: sc.Winv_T(v), c)
        M = At @ At.T
        reg = 1e-14 * max(1.0, np.trace(M) / max(M.shape[0], 1))
        M[np.diag_indices_from(M)] += reg
        self.chol = sla.cho_factor(M, lower=True, check_finite=False) if M.size else None
        # direction component along dtau
        self.q = self._msolve(b + At @ self.ct)
        self.xq = At.T @ self.q - self.ct

    def _per_cone(self, fn, v):
        return np.concatenate([fn(sc, v[sl]) for sc, sl in zip(self.scal, self.slices)])

    def _msolve(self, r):
        if self.chol is None:
            return np.zeros(0)
        return sla.cho_solve(self.chol, r, check_finite=False)

    def direction(self, ds, dtau_rhs, f, r1, r2, r3, refine=3):
        """Newton direction, polished by iterative refinement."""
        u = self._per_cone(lambda sc, v: sc.lam_div(v), ds)
        p1 = -f * r1
        p2 = self._per_cone(lambda sc, v: sc.Winv_T(v), -f * r2)
        p3 = -f * r3
        step = self._solve(p1, p2, p3, u, dtau_rhs)
        for _ in range(refine):
            e1, e2, e3 = self._residual(step, p1, p2, p3)
            corr = self._solve(e1, e2, e3, np.zeros_like(u), 0.0)
            step = tuple(a + b for a, b in zip(step, corr))
        dxt, dy, dst, dtau, dkappa = step
        dx = self._per_cone(lambda sc, v: sc.Winv(v), dxt)
        dsv = self._per_cone(lambda sc, v: sc.W_T(v), dst)
        return dx, dy, dsv, dtau, dkappa

    def _solve(self, p1, p2, p3, u, dtau_rhs):
        # scaled system:  A~ dx~ - b dtau = p1,  -A~^T dy + c~ dtau - ds~ = p2,
        #   b^T dy - c~^T dx~ - dkappa = p3,  dx~ + ds~ = u,
        #   kappa dtau + tau dkappa = dtau_rhs
        At, b, ct = self.At, self.b, self.ct
        g = u + p2
        p = self._msolve(p1 - At @ g)
        xp = g + At.T @ p
        denom = b @ self.q - ct @ self.xq + self.kappa / self.tau
        dtau = (p3 - b @ p + ct @ xp + dtau_rhs / self.tau) / denom
        dy = p + self.q * dtau
        dxt = xp + self.xq * dtau
        dst = u - dxt
        dkappa = (dtau_rhs - self.kappa * dtau) / self.tau
        return dxt, dy, dst, dtau, dkappa

    def _residual(self, step, p1, p2, p3):
        dxt, dy, dst, dtau, dkappa = step
        e1 = p1 - (self.At @ dxt - self.b * dtau)
        e2 = p2 - (-self.At.T @ dy + self.ct * dtau - dst)
        e3 = p3 - (self.b @ dy - self.ct @ dxt - dkappa)
        return e1, e2, e3
