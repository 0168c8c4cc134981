"""Digital beamforming for one cluster: maximize the SIC sum rate.

Variables are the real weight vectors ``w[j, k]`` (AP ``j`` of the
cluster, UE at SIC position ``k``). With ``G[p, j] = Re(h^H h)`` for the
effective row ``h`` of the UE at position ``p`` through AP ``j``, the
received powers are ``q[p, k] = sum_j w[j, k]^T G[p, j] w[j, k]``.

Constraints: the SIC margin ``q[p, d] - sum_{d < w <= p} q[p, w] >= eps``
for every ``d < p`` and ``||w[j, k]|| <= 1``.

The margin constraints are handled by an augmented Lagrangian; each
subproblem is maximized by projected gradient ascent on the product of
unit balls with Barzilai-Borwein steps and an Armijo backtrack. Several
starts (matched filter, its sign flips, screened random points) guard
against poor local optima since the margin set is not convex in general.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, nnls

from .rates import isni

LN2 = np.log(2.0)


class InfeasibleError(ValueError):
    pass


@dataclass
class SolveResult:
    weights: dict
    objective: float
    eps_used: float
    kkt_residual: float
    max_violation: float
    iterations: int
    order: list


class DigitalProblem:
    """The per-cluster rate problem in normalized units.

    ``grams`` has shape ``(D, J, E, E)`` for ``D`` UEs, ``J`` APs and
    weight vectors of length ``E`` (normally ``E = D``), and ``offsets``
    (noise plus inter-cluster interference) shape ``(D,)``. Everything is
    scaled so the largest Gram trace is one; rates are scale free.
    """

    def __init__(self, grams, offsets, eps=0.0):
        grams = np.asarray(grams, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        if grams.ndim != 4 or grams.shape[2] != grams.shape[3]:
            raise ValueError(f"grams must be (D, J, E, E), got {grams.shape}")
        if offsets.shape != (grams.shape[0],) or np.any(offsets <= 0):
            raise ValueError("offsets must be positive, one per UE")
        self.D, self.J, self.E = grams.shape[0], grams.shape[1], grams.shape[2]
        tr = np.einsum("pjdd->pj", grams).sum(axis=1).max()
        self.scale = 1.0 / tr if tr > 0 else 1.0
        self.G = grams * self.scale
        self.c = offsets * self.scale
        self.eps_raw = float(eps)
        self.eps = float(eps) * self.scale
        D = self.D
        self.pairs = [(p, d) for p in range(D) for d in range(p)]
        # coefficient of q[p, k] in constraint (p, d)
        self.coef = np.zeros((len(self.pairs), D))
        for r, (p, d) in enumerate(self.pairs):
            self.coef[r, d] = 1.0
            self.coef[r, d + 1:p + 1] = -1.0
        self.upper = np.triu(np.ones((D, D)), 1)
        self.rows = np.array([p for p, _ in self.pairs], dtype=int)
        self.select = np.zeros((len(self.pairs), D))
        self.select[np.arange(len(self.pairs)), self.rows] = 1.0

    @property
    def shape(self):
        return (self.J, self.D, self.E)

    # Methods below accept a single point (J, D, D) or a batch (B, J, D, D).

    def _gx(self, X):
        # GX[..., p, j, k, :] = G[p, j] @ X[..., j, k, :]
        return np.matmul(X[..., None, :, :, :], self.G)

    def powers(self, X, gx=None):
        gx = self._gx(X) if gx is None else gx
        return (gx * X[..., None, :, :, :]).sum(axis=-1).sum(axis=-2)

    def _tails(self, q):
        T = (q * self.upper).sum(axis=-1) + self.c
        return T, np.diagonal(q, axis1=-2, axis2=-1)

    def rates(self, X):
        T, s = self._tails(self.powers(X))
        return np.log2(1.0 + s / T)

    def objective(self, X):
        r = self.rates(X).sum(axis=-1)
        return float(r) if np.ndim(r) == 0 else r

    def _dq(self, X, Fq, gx=None):
        # d/dX[j, k] of sum_{p,k} Fq[p, k] q[p, k]
        gx = self._gx(X) if gx is None else gx
        return 2.0 * (Fq[..., :, None, :, None] * gx).sum(axis=-4)

    def gradient(self, X):
        gx = self._gx(X)
        T, s = self._tails(self.powers(X, gx))
        a = 1.0 / ((T + s) * LN2)
        b = 1.0 / (T * LN2)
        Fq = self.upper * (a - b)[..., :, None] + a[..., :, None] * np.eye(self.D)
        return self._dq(X, Fq, gx)

    def constraints(self, X):
        q = self.powers(X)
        return np.einsum("rk,...rk->...r", self.coef, q[..., self.rows, :]) - self.eps

    def weighted_constraint_grad(self, X, mult):
        """Gradient of ``sum_r mult[r] * g_r``."""
        Fq = np.einsum("...r,rp,rk->...pk", mult, self.select, self.coef)
        return self._dq(X, Fq)

    def constraint_grads(self, X):
        out = np.zeros((len(self.pairs),) + self.shape)
        for r, (p, _) in enumerate(self.pairs):
            Fq = np.zeros((self.D, self.D))
            Fq[p] = self.coef[r]
            out[r] = self._dq(X, Fq)
        return out

    def violation(self, X):
        g = self.constraints(X)
        return float(max(0.0, -g.min())) if g.size else 0.0

    def project(self, X):
        norms = np.linalg.norm(X, axis=-1, keepdims=True)
        return X / np.maximum(norms, 1.0)

    def kkt_residual(self, X, act_tol=1e-6):
        """Stationarity residual with nonnegative multipliers on the active set.

        Relative to ``max(1, ||grad f||)``.
        """
        gf = self.gradient(X).ravel()
        cols = []
        if self.pairs:
            g = self.constraints(X)
            dg = self.constraint_grads(X)
            for r in np.flatnonzero(g <= act_tol):
                cols.append(dg[r].ravel())
        cols += self._bound_cols(X, act_tol)
        if cols:
            _, res = nnls(np.column_stack(cols), -gf)
        else:
            res = float(np.linalg.norm(gf))
        return res / max(1.0, float(np.linalg.norm(gf)))

    def restore(self, X):
        """Shrink columns just enough to satisfy the margin constraints.

        Columns are visited in SIC order; column ``k`` is scaled by the
        largest factor that keeps every constraint it enters negatively
        satisfied, counting earlier columns at their new size and later
        ones at full size. At ``eps = 0`` the result is always feasible
        (in the worst case the offending columns go to zero); feasible
        points are returned unchanged.
        """
        single = X.ndim == len(self.shape)
        Xb = X[None] if single else X
        q = self.powers(Xb)
        B = len(Xb)
        t2 = np.ones((B, self.D))
        for k in range(1, self.D):
            lim = np.ones(B)
            for p, d in self.pairs:
                if not d < k <= p:
                    continue
                others = t2[:, d] * q[:, p, d] - self.eps
                for w in range(d + 1, p + 1):
                    if w != k:
                        others = others - t2[:, w] * q[:, p, w]
                qk = q[:, p, k]
                with np.errstate(divide="ignore", invalid="ignore"):
                    cand = np.where(qk > 0, others / qk, np.where(others >= 0, 1.0, 0.0))
                lim = np.minimum(lim, np.clip(cand * (1 - 1e-12), 0.0, 1.0))
            t2[:, k] = lim
        out = self._scale_columns(Xb, t2)
        return out[0] if single else out

    def _scale_columns(self, Xb, t2):
        return Xb * np.sqrt(t2)[:, None, :, None]

    def _bound_cols(self, X, act_tol):
        cols = []
        norms = np.linalg.norm(X, axis=-1)
        for j, k in zip(*np.nonzero(norms >= 1.0 - act_tol)):
            e = np.zeros(self.shape)
            e[j, k] = -2.0 * X[j, k]
            cols.append(e.ravel())
        return cols

    def inner_solve(self, fun, grad, X, tol, max_iter, frozen=None):
        return _ascent(fun, grad, self.project, X, tol, max_iter, frozen)

    def random_points(self, rng, n):
        cand = rng.standard_normal((n,) + self.shape)
        norms = np.linalg.norm(cand, axis=-1, keepdims=True)
        radii = rng.random(cand.shape[:-1] + (1,)) ** (1.0 / self.E)
        return cand / norms * radii

    def initial_points(self):
        """Matched filter and its sign flips on the first UEs."""
        mf = self.matched_filter()
        starts = [mf]
        for flip in range(1, 2 ** min(self.D, 3)):
            signs = np.array([-1.0 if flip >> k & 1 else 1.0 for k in range(self.D)])
            starts.append(mf * signs[None, :, None])
        return starts

    def rank_one_reduction(self, tol=1e-10):
        """Scalar-weight problem when each AP's Grams share one direction.

        If ``G[p, j] = g[p, j] v_j v_j^T`` for every UE ``p`` (the case when
        all steering columns of an AP coincide), only ``v_j^T w[j, k]``
        matters and the optimum puts ``w[j, k]`` along ``v_j``. Returns the
        reduced problem and the unit directions ``V`` (J, E), or ``None``.
        """
        V = np.zeros((self.J, self.E))
        g = np.zeros((self.D, self.J, 1, 1))
        for j in range(self.J):
            vals, vecs = np.linalg.eigh(self.G[:, j].sum(axis=0))
            v = vecs[:, -1]
            V[j] = v if v[np.argmax(np.abs(v))] >= 0 else -v
            for p in range(self.D):
                gp = V[j] @ self.G[p, j] @ V[j]
                if np.abs(self.G[p, j] - gp * np.outer(V[j], V[j])).max() > tol:
                    return None
                g[p, j] = gp
        return PowerProblem(g[:, :, 0, 0] / self.scale, self.c / self.scale, self.eps_raw), V

    def matched_filter(self):
        X = np.zeros(self.shape)
        for j in range(self.J):
            for k in range(self.D):
                vals, vecs = np.linalg.eigh(self.G[k, j])
                v = vecs[:, -1]
                X[j, k] = v if v[np.argmax(np.abs(v))] >= 0 else -v
        return X


class PowerProblem(DigitalProblem):
    """The same problem when every Gram is a scalar ``g[p, j]``.

    Variables are the powers ``y[j, k] = w[j, k]^2`` in ``[0, 1]``; the
    received powers and the margin constraints are then linear in ``y``.
    """

    def __init__(self, gains, offsets, eps=0.0):
        gains = np.asarray(gains, dtype=float)
        if gains.ndim != 2:
            raise ValueError(f"gains must be (D, J), got {gains.shape}")
        super().__init__(gains[:, :, None, None], offsets, eps)
        self.g = self.G[:, :, 0, 0]

    @property
    def shape(self):
        return (self.J, self.D)

    def powers(self, Y, gx=None):
        return np.matmul(self.g, Y)

    def _dq(self, Y, Fq, gx=None):
        return np.matmul(self.g.T, Fq)

    def gradient(self, Y):
        T, s = self._tails(self.powers(Y))
        a = 1.0 / ((T + s) * LN2)
        b = 1.0 / (T * LN2)
        Fq = self.upper * (a - b)[..., :, None] + a[..., :, None] * np.eye(self.D)
        return self._dq(Y, Fq)

    def project(self, Y):
        return np.clip(Y, 0.0, 1.0)

    def _scale_columns(self, Yb, t2):
        return Yb * t2[:, None, :]

    def _bound_cols(self, Y, act_tol):
        cols = []
        for sign, hit in ((1.0, Y <= act_tol), (-1.0, Y >= 1.0 - act_tol)):
            for j, k in zip(*np.nonzero(hit)):
                e = np.zeros(self.shape)
                e[j, k] = sign
                cols.append(e.ravel())
        return cols

    def random_points(self, rng, n):
        return rng.random((n,) + self.shape)

    def inner_solve(self, fun, grad, X, tol, max_iter, frozen=None):
        """L-BFGS-B on each batch member; the box is handled natively."""
        X = X.copy()
        iters = 0
        for b in range(len(X)):
            if frozen is not None and frozen[b]:
                continue
            res = minimize(
                lambda y: -float(fun(y.reshape(1, *self.shape))[0]), X[b].ravel(),
                jac=lambda y: -grad(y.reshape(1, *self.shape))[0].ravel(),
                method="L-BFGS-B", bounds=[(0.0, 1.0)] * X[b].size,
                options={"maxiter": max_iter, "ftol": 1e-15, "gtol": tol})
            X[b] = np.clip(res.x.reshape(self.shape), 0.0, 1.0)
            iters = max(iters, res.nit)
        return X, iters

    def initial_points(self):
        return [np.ones(self.shape)]


def _flat_norm(X):
    return np.sqrt(np.sum(X.reshape(len(X), -1) ** 2, axis=1))


def _ascent(fun, grad, project, X, tol, max_iter, frozen=None):
    """Batched projected gradient ascent with BB steps and Armijo backtracking.

    ``X`` has a leading batch axis; each member keeps its own step size and
    stops on its own when the projected-gradient step is below ``tol``
    (relative to its gradient size) or after ten steps without progress.
    """
    B = len(X)
    X = X.copy()
    F = fun(X)
    G = grad(X)
    step = np.ones(B)
    stall = np.zeros(B, dtype=int)
    done = np.zeros(B, dtype=bool) if frozen is None else frozen.copy()
    iters = 0
    bshape = (B,) + (1,) * (X.ndim - 1)
    for _ in range(max_iter):
        pg = _flat_norm(X - project(X + G))
        done |= pg <= tol * np.maximum(1.0, _flat_norm(G))
        if done.all():
            break
        iters += 1
        t = step.copy()
        need = ~done
        Xn, Fn = X.copy(), F.copy()
        for _ in range(60):
            cand = project(X + t.reshape(bshape) * G)
            Fc = fun(cand)
            gain = np.sum((G * (cand - X)).reshape(B, -1), axis=1)
            ok = need & ((Fc >= F + 1e-4 * gain) | (t < 1e-14))
            Xn[ok], Fn[ok] = cand[ok], Fc[ok]
            need &= ~ok
            if not need.any():
                break
            t[need] *= 0.5
        moving = ~done
        stall = np.where(moving & (Fn - F <= 1e-15 * np.maximum(1.0, np.abs(F))), stall + 1, 0)
        done |= stall >= 10
        Gn = grad(Xn)
        s = (Xn - X).reshape(B, -1)
        y = (Gn - G).reshape(B, -1)
        sy = np.sum(s * y, axis=1)
        ss = np.sum(s * s, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            bb = np.where(sy < 0, ss / -sy, np.minimum(t * 4.0, 1e6))
        step = np.where(moving, np.clip(np.nan_to_num(bb, nan=1.0), 1e-10, 1e8), step)
        X = np.where(moving.reshape(bshape), Xn, X)
        F = np.where(moving, Fn, F)
        G = np.where(moving.reshape(bshape), Gn, G)
    return X, iters


def _augmented(prob, X, lam=None, rho=10.0, tol=1e-10, max_outer=40, max_inner=2000,
               stop_kkt=1e-8):
    """Augmented Lagrangian on a batch of starting points.

    Returns the points, their multipliers and the inner iteration count.
    """
    if not prob.pairs:
        X, it = prob.inner_solve(prob.objective, prob.gradient, X, tol, max_inner * 5)
        return X, None, it
    B = len(X)
    R = len(prob.pairs)
    lam = np.zeros((B, R)) if lam is None else lam.copy()
    rho = np.full(B, float(rho))
    prev = np.full(B, np.inf)
    finished = np.zeros(B, dtype=bool)
    total = 0
    for _ in range(max_outer):
        lam_k, rho_k = lam.copy(), rho[:, None].copy()

        def fun(Y):
            g = prob.constraints(Y)
            pen = np.where(g - lam_k / rho_k <= 0, -lam_k * g + 0.5 * rho_k * g ** 2,
                           -lam_k ** 2 / (2 * rho_k))
            return prob.objective(Y) - pen.sum(axis=1)

        def grad(Y):
            mult = np.maximum(0.0, lam_k - rho_k * prob.constraints(Y))
            return prob.gradient(Y) + prob.weighted_constraint_grad(Y, mult)

        X, it = prob.inner_solve(fun, grad, X, tol, max_inner, frozen=finished)
        total += it
        g = prob.constraints(X)
        viol = np.maximum(0.0, -g.min(axis=1))
        lam = np.where(finished[:, None], lam, np.maximum(0.0, lam - rho_k * g))
        for b in np.flatnonzero(~finished & (viol <= 1e-10)):
            finished[b] = prob.kkt_residual(X[b]) <= stop_kkt
        if finished.all():
            break
        rho = np.where(~finished & (viol > 0.25 * prev), np.minimum(rho * 10.0, 1e12), rho)
        prev = viol
    return X, lam, total


def _starts(prob, rng, n_random, n_keep):
    starts = prob.initial_points()
    if n_random:
        cand = prob.restore(prob.random_points(rng, n_random))
        scores = prob.objective(cand)
        if prob.pairs:
            scores = np.where(prob.constraints(cand).min(axis=1) >= 0, scores, -np.inf)
        for idx in np.argsort(-scores, kind="stable")[:n_keep]:
            if np.isfinite(scores[idx]):
                starts.append(cand[idx])
    return np.array(starts)


def _best_feasible(prob, X, tol):
    """Index of the best point meeting the constraints within ``tol``, or None."""
    vals = prob.objective(X)
    ok = prob.constraints(X).min(axis=1) >= -tol if prob.pairs else np.ones(len(X), bool)
    if not ok.any():
        return None, vals, ok
    return max(np.flatnonzero(ok), key=lambda i: (vals[i], -i)), vals, ok


def solve_problem(prob, seed=0, n_random=256, n_keep=10, n_polish=2, feas_tol=1e-9):
    """Best feasible local optimum over all starts, or ``None`` if none is feasible.

    Every start is first run to a loose tolerance and pulled back onto the
    feasible set; only the ``n_polish`` best candidates are then refined to
    full accuracy.
    """
    rng = np.random.default_rng(seed)
    if prob.pairs and prob.eps > 0:
        # q[p, d] can never exceed the sum of its Grams' top eigenvalues
        cap = np.linalg.eigvalsh(prob.G)[..., -1].sum(axis=1)
        if any(cap[p] < prob.eps for p, _ in prob.pairs):
            return None, -np.inf, 0
    if prob.D == 1:
        X = prob.initial_points()[0]
        return X, prob.objective(X), 0
    X, lam, iters = _augmented(prob, _starts(prob, rng, n_random, n_keep),
                               tol=1e-6, max_outer=10, max_inner=300, stop_kkt=1e-5)
    X = prob.restore(X)
    b, vals, ok = _best_feasible(prob, X, feas_tol)
    if b is None:
        return None, -np.inf, iters
    pick = [i for i in np.argsort(-vals, kind="stable") if ok[i]][:n_polish]
    rough_best = X[b]
    Xp, _, it = _augmented(prob, X[pick], lam=lam[pick])
    iters += it
    Xp = prob.restore(Xp)
    b, vals, _ = _best_feasible(prob, Xp, feas_tol)
    rough_val = prob.objective(rough_best)
    # polishing trades a sliver of objective for an accurate KKT point; keep
    # the rough point only if polishing clearly lost ground
    if b is None or rough_val > vals[b] + 1e-6 * max(1.0, abs(rough_val)):
        return rough_best, float(rough_val), iters
    return Xp[b], float(vals[b]), iters


def build_problem(n, eff, state, order, eps):
    cl = state.clusters
    aps = cl.aps_in(n)
    D = len(order)
    grams = np.zeros((D, len(aps), D, D))
    offsets = np.zeros(D)
    for p, i in enumerate(order):
        for j, m in enumerate(aps):
            h = eff.row(i, m)
            grams[p, j] = np.real(np.outer(h.conj(), h))
        offsets[p] = isni(i, eff, state) + eff.noise[i]
    return DigitalProblem(grams, offsets, eps)


def solve_digital_beamforming(n, eff, state, eps=0.0, order=None, seed=0, n_random=256, n_keep=10):
    """Solve cluster ``n``'s digital weights given the other clusters' weights.

    If no feasible point is found at ``eps`` the solve is repeated with
    ``eps = 0`` (where ``W = 0`` is always feasible); ``eps_used`` records
    which margin the returned weights satisfy. Returned weight columns
    follow the cluster's UEs in ascending index, as stored in the state.
    """
    cl = state.clusters
    order = list(state.order[n] if order is None else order)
    ues = cl.ues_in(n)
    if sorted(order) != ues:
        raise ValueError(f"order {order} is not a permutation of cluster {n}'s UEs {ues}")
    tried = [eps] if eps == 0 else [eps, 0.0]
    for e in tried:
        prob = build_problem(n, eff, state, order, e)
        reduced = prob.rank_one_reduction() if prob.E > 1 else None
        if reduced is None:
            X, val, iters = solve_problem(prob, seed=seed, n_random=n_random, n_keep=n_keep)
        else:
            small, V = reduced
            Y, val, iters = solve_problem(small, seed=seed, n_random=n_random, n_keep=n_keep)
            X = None if Y is None else np.sqrt(Y)[:, :, None] * V[:, None, :]
        if X is not None:
            break
    else:
        g = prob.constraints(np.zeros(prob.shape))
        r = int(np.argmin(g))
        raise InfeasibleError(
            f"cluster {n}: SIC margin constraint {prob.pairs[r]} infeasible even at eps=0")
    weights = {}
    for j, m in enumerate(cl.aps_in(n)):
        W = np.zeros((len(ues), len(ues)))
        for k, i in enumerate(order):
            W[:, ues.index(i)] = X[j, k]
        weights[m] = W
    return SolveResult(weights, val, e, prob.kkt_residual(X), prob.violation(X), iters, order)
