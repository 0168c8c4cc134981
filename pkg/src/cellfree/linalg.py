"""Small dense complex linear algebra: Jacobi SVD, null-space bases and
the subspace projections used by the analog beamsteering objective.

Matrices here are tiny (a few antennas per side), so a one-sided Jacobi
SVD written directly in numpy is accurate and fast enough; no LAPACK
driver is involved.
"""

from dataclasses import dataclass

import numpy as np

EPS = np.finfo(float).eps
_MAX_SWEEPS = 80
# entries below this (relative to the column norm) do not count as the
# "first nonzero entry" when fixing column phases
_PHASE_TOL = 1e-10


@dataclass(frozen=True)
class SvdFactors:
    """Full SVD ``A = U @ diag(sigma) @ V^H`` of an ``m x n`` matrix."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    rank: int

    @property
    def shape(self):
        return self.u.shape[0], self.v.shape[0]

    def sigma_matrix(self):
        """The ``m x n`` rectangular diagonal matrix of singular values."""
        m, n = self.shape
        out = np.zeros((m, n))
        k = len(self.sigma)
        out[np.arange(k), np.arange(k)] = self.sigma
        return out

    def reconstruct(self):
        return self.u @ self.sigma_matrix() @ self.v.conj().T


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _jacobi_columns(g):
    """Orthogonalize the columns of ``g`` in place by plane rotations.

    Returns the accumulated unitary ``v`` such that the input times ``v``
    equals the final ``g``.
    """
    m, k = g.shape
    v = np.eye(k, dtype=complex)
    tol = max(m, 1) * EPS
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                gp = g[:, p]
                gq = g[:, q]
                alpha = np.vdot(gp, gp).real
                beta = np.vdot(gq, gq).real
                gamma = np.vdot(gp, gq)
                mag = abs(gamma)
                if mag == 0.0 or mag <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                phase = gamma / mag
                zeta = (beta - alpha) / (2.0 * mag)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                gq_rot = gq * np.conj(phase)
                g[:, p], g[:, q] = c * gp - s * gq_rot, s * gp + c * gq_rot
                vp = v[:, p]
                vq_rot = v[:, q] * np.conj(phase)
                v[:, p], v[:, q] = c * vp - s * vq_rot, s * vp + c * vq_rot
        if not rotated:
            break
    return v


def _orthonormalize(cols):
    """Modified Gram-Schmidt, applied twice, keeping the column order."""
    q = np.array(cols, dtype=complex, copy=True)
    for j in range(q.shape[1]):
        for _ in range(2):
            for i in range(j):
                q[:, j] -= np.vdot(q[:, i], q[:, j]) * q[:, i]
        q[:, j] /= np.linalg.norm(q[:, j])
    return q


def _complete_basis(q, dim):
    """Extend the orthonormal columns ``q`` (dim x r) to a unitary matrix.

    Each new column is the standard basis vector with the largest residual
    after removing the current span, which keeps the residual norm at least
    ``1/sqrt(dim)``.
    """
    basis = np.zeros((dim, dim), dtype=complex)
    r = q.shape[1]
    basis[:, :r] = q
    for j in range(r, dim):
        cur = basis[:, :j]
        resid = np.eye(dim, dtype=complex) - cur @ cur.conj().T
        col = resid[:, int(np.argmax(np.linalg.norm(resid, axis=0)))].copy()
        for _ in range(2):
            col -= cur @ (cur.conj().T @ col)
        basis[:, j] = col / np.linalg.norm(col)
    return basis


def _phase_factors(cols):
    """Unit phases that make the first nonzero entry of each column real >= 0."""
    out = np.ones(cols.shape[1], dtype=complex)
    for j in range(cols.shape[1]):
        col = cols[:, j]
        big = np.flatnonzero(np.abs(col) > _PHASE_TOL * np.linalg.norm(col))
        if big.size:
            lead = col[big[0]]
            out[j] = np.conj(lead) / abs(lead)
    return out


def _thin_svd_tall(a):
    """SVD pieces for ``m >= n``: left vectors, sigma and the full ``v``."""
    m, n = a.shape
    g = a.copy()
    v = _jacobi_columns(g)
    norms = np.linalg.norm(g, axis=0)
    order = np.argsort(-norms, kind="stable")
    return g[:, order], norms[order], v[:, order]


def rank_tolerance(sigma, shape):
    if len(sigma) == 0 or sigma[0] == 0.0:
        return 0.0
    return max(shape) * EPS * sigma[0]


def svd(a):
    """Full SVD of a complex matrix by one-sided Jacobi rotations.

    The numerical rank counts singular values above
    ``max(m, n) * eps * sigma[0]``. Column phases are fixed so that the
    first nonzero entry of every column of ``U`` is real and nonnegative;
    paired columns of ``V`` take the same phase so ``U diag(s) V^H`` is
    unchanged.
    """
    a = _as_matrix(a)
    m, n = a.shape
    flipped = n > m
    work = a.conj().T if flipped else a
    g, sigma, v_small = _thin_svd_tall(work)
    rows = work.shape[0]
    tol = rank_tolerance(sigma, a.shape)
    rank = int(np.count_nonzero(sigma > tol))

    left = _orthonormalize(g[:, :rank] / sigma[:rank]) if rank else np.zeros((rows, 0), complex)
    left = _complete_basis(left, rows)
    # work = left @ diag(sigma) @ v_small^H  (left: rows x rows, v_small: k x k)
    if flipped:
        u, v = v_small, left
    else:
        u, v = left, v_small

    k = len(sigma)
    ph_u = _phase_factors(u)
    u = u * ph_u
    ph_v = np.ones(v.shape[1], dtype=complex)
    ph_v[:k] = ph_u[:k]
    v = v * ph_v
    # null columns of V with no singular-value partner get their own phase
    if v.shape[1] > k:
        v[:, k:] = v[:, k:] * _phase_factors(v[:, k:])
    return SvdFactors(u=u, sigma=sigma.astype(float), v=v, rank=rank)


def null_bases(f):
    """Split ``U`` and ``V`` into null and range blocks.

    Returns ``(U0, V0, U1, V1)``: ``U0`` spans the left null space, ``V0``
    the right null space, and ``U1``/``V1`` the complementary columns.
    """
    r = f.rank
    return f.u[:, r:], f.v[:, r:], f.u[:, :r], f.v[:, :r]


def project_vector(delta, basis):
    """``delta^T B B^H`` as a 1-D array (note: transpose, not conjugate)."""
    delta = np.asarray(delta, dtype=complex)
    basis = np.asarray(basis, dtype=complex)
    if delta.ndim != 1 or basis.ndim != 2 or delta.shape[0] != basis.shape[0]:
        raise ValueError(
            f"cannot project vector of shape {delta.shape} on basis {basis.shape}")
    return (delta @ basis) @ basis.conj().T


def project_matrix(a, basis):
    """``B B^H A``; a 1-D ``a`` is treated as a single column."""
    a = np.asarray(a, dtype=complex)
    basis = np.asarray(basis, dtype=complex)
    if basis.ndim != 2 or a.ndim not in (1, 2) or a.shape[0] != basis.shape[0]:
        raise ValueError(
            f"cannot project matrix of shape {a.shape} on basis {basis.shape}")
    return basis @ (basis.conj().T @ a)


def projector(basis):
    """Orthogonal projector ``B B^H`` onto the span of the columns of ``B``."""
    basis = np.asarray(basis, dtype=complex)
    return basis @ basis.conj().T
