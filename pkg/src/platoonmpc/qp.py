"""Dense strictly convex quadratic programming and MPC condensing.

    minimize    1/2 z' H z + f' z
    subject to  Aeq z = beq,   G z <= g

The solver is a dual active-set method: it starts at the unconstrained
minimum and repeatedly enforces the most violated constraint, taking combined
primal-dual steps and dropping active inequalities whose multipliers would
turn negative.  H must be positive definite, which every controller in this
package guarantees by construction.  Infeasibility surfaces as a status, not
an exception.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"

_DEP_TOL = 1e-12   # threshold for treating a normal as dependent on the active set
_FEAS_TOL = 1e-9   # normalized violation below which a constraint counts as satisfied


@dataclass
class QProblem:
    H: np.ndarray
    f: np.ndarray
    G: np.ndarray | None = None
    g: np.ndarray | None = None
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.H = np.asarray(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        n = self.f.size
        if self.H.shape != (n, n):
            raise ValueError("H must be square and match f")
        if not np.allclose(self.H, self.H.T, atol=1e-8 * (1 + np.abs(self.H).max())):
            raise ValueError("H must be symmetric")
        for mat, vec, name in ((self.G, self.g, "G"), (self.Aeq, self.beq, "Aeq")):
            if (mat is None) != (vec is None):
                raise ValueError(f"{name} and its right-hand side must come together")
            if mat is not None and (mat.shape[1] != n or mat.shape[0] != len(vec)):
                raise ValueError(f"{name} dimensions are inconsistent")
        blocks = [self.H, self.f] + [m for m in (self.G, self.g, self.Aeq, self.beq)
                                     if m is not None]
        if not all(np.all(np.isfinite(b)) for b in blocks):
            raise ValueError("QProblem data must be finite")

    @property
    def n(self) -> int:
        return self.f.size


@dataclass
class QPSolution:
    z: np.ndarray
    ineq_duals: np.ndarray
    eq_duals: np.ndarray
    status: str
    objective: float
    kkt_residual: float
    iterations: int


@dataclass
class KKTReport:
    stationarity: float
    primal_ineq: float
    primal_eq: float
    complementarity: float
    dual_feasibility: float

    @property
    def residual(self) -> float:
        return max(self.stationarity, self.primal_ineq, self.primal_eq,
                   self.complementarity, self.dual_feasibility)

    def ok(self, tol: float) -> bool:
        return self.residual <= tol


def kkt_check(qp: QProblem, z: np.ndarray, ineq_duals: np.ndarray | None = None,
              eq_duals: np.ndarray | None = None) -> KKTReport:
    """Independent first-order optimality certificate for a candidate solution."""
    grad = qp.H @ z + qp.f
    primal_in = comp = dual = 0.0
    if qp.G is not None:
        lam = np.zeros(qp.G.shape[0]) if ineq_duals is None else ineq_duals
        resid = qp.G @ z - qp.g
        grad = grad + qp.G.T @ lam
        primal_in = float(max(0.0, resid.max(initial=0.0)))
        comp = float(np.abs(lam * resid).max(initial=0.0))
        dual = float(max(0.0, -(lam.min(initial=0.0))))
    primal_eq = 0.0
    if qp.Aeq is not None:
        nu = np.zeros(qp.Aeq.shape[0]) if eq_duals is None else eq_duals
        grad = grad + qp.Aeq.T @ nu
        primal_eq = float(np.abs(qp.Aeq @ z - qp.beq).max(initial=0.0))
    return KKTReport(stationarity=float(np.abs(grad).max()),
                     primal_ineq=primal_in, primal_eq=primal_eq,
                     complementarity=comp, dual_feasibility=dual)


class _ActiveSet:
    """Working set of oriented constraint normals with cached H^{-1} columns."""

    def __init__(self, chol):
        self.chol = chol
        self.kinds: list[str] = []
        self.indices: list[int] = []
        self.signs: list[float] = []
        self.normals: list[np.ndarray] = []
        self.targets: list[float] = []
        self.hinv_normals: list[np.ndarray] = []
        self.multipliers: list[float] = []

    def __len__(self) -> int:
        return len(self.kinds)

    def step_direction(self, nplus: np.ndarray):
        """Primal direction dz and active-multiplier rates r for adding nplus."""
        y = cho_solve(self.chol, nplus)
        if not self.kinds:
            return y, np.zeros(0)
        Nmat = np.array(self.normals)
        HN = np.array(self.hinv_normals)
        S = Nmat @ HN.T
        r = np.linalg.solve(S, Nmat @ y)
        dz = y - HN.T @ r
        return dz, r

    def add(self, kind: str, index: int, sign: float, normal: np.ndarray,
            target: float, multiplier: float) -> None:
        self.kinds.append(kind)
        self.indices.append(index)
        self.signs.append(sign)
        self.normals.append(normal)
        self.targets.append(target)
        self.hinv_normals.append(cho_solve(self.chol, normal))
        self.multipliers.append(multiplier)

    def drop(self, k: int) -> None:
        for seq in (self.kinds, self.indices, self.signs, self.normals,
                    self.targets, self.hinv_normals, self.multipliers):
            del seq[k]

    def blocking(self, r: np.ndarray) -> tuple[float, int]:
        """Smallest multiplier/rate ratio over active inequalities (drop candidate)."""
        t1, k1 = np.inf, -1
        for k, kind in enumerate(self.kinds):
            if kind == "in" and r[k] > _DEP_TOL:
                cand = self.multipliers[k] / r[k]
                if cand < t1:
                    t1, k1 = cand, k
        return t1, k1

    def refine(self, H: np.ndarray, f: np.ndarray, z: np.ndarray):
        """Re-solve the KKT system of the current working set from scratch.

        The incremental steps identify the right active set but accumulate
        rounding error along the way; one direct solve restores stationarity
        and active-constraint feasibility to machine precision.  Returns the
        refined iterate, or the input when the system is degenerate.
        """
        if not self.kinds:
            return z
        w = len(self.kinds)
        n = len(z)
        Nmat = np.array(self.normals)
        K = np.zeros((n + w, n + w))
        K[:n, :n] = H
        K[:n, n:] = -Nmat.T
        K[n:, :n] = Nmat
        rhs = np.concatenate([-f, self.targets])
        try:
            sol = np.linalg.solve(K, rhs)
        except LinAlgError:
            return z
        if not np.all(np.isfinite(sol)):
            return z
        self.multipliers = list(sol[n:])
        return sol[:n]


def solve(qp: QProblem, tol: float = 1e-6, max_iter: int = 4000) -> QPSolution:
    """Solve the QP; deterministic, never raises on infeasible data."""
    n = qp.n
    try:
        chol = cho_factor(qp.H)
    except LinAlgError as exc:
        raise ValueError("H must be positive definite") from exc
    z = cho_solve(chol, -qp.f)
    active = _ActiveSet(chol)
    m_eq = 0 if qp.Aeq is None else qp.Aeq.shape[0]
    m_in = 0 if qp.G is None else qp.G.shape[0]
    pending_eq = list(range(m_eq))
    iterations = 0
    refinements = 0
    status = OPTIMAL

    while True:
        # -- select the next constraint to enforce -------------------------
        if pending_eq:
            idx = pending_eq.pop(0)
            row, target = qp.Aeq[idx], qp.beq[idx]
            sigma0 = row @ z - target
            sign = -1.0 if sigma0 > 0.0 else 1.0
            kind, nplus, dplus = "eq", sign * row, sign * target
        else:
            violated = None
            if m_in:
                slack = qp.g - qp.G @ z
                # active members sit at zero slack; mask them so fp noise
                # cannot re-select a constraint already in the working set
                for k, kd in enumerate(active.kinds):
                    if kd == "in":
                        slack[active.indices[k]] = np.inf
                scaled = slack / (1.0 + np.abs(qp.g))
                idx = int(np.argmin(scaled))
                if scaled[idx] < -_FEAS_TOL:
                    violated = idx
            if violated is None:
                # candidate optimum: re-solve the working-set KKT system once
                # to shed the rounding error of the incremental updates, then
                # rescan in case the refined iterate uncovers a violation
                if refinements < 3 and len(active):
                    z = active.refine(qp.H, qp.f, z)
                    refinements += 1
                    dropped = [k for k in reversed(range(len(active)))
                               if active.kinds[k] == "in"
                               and active.multipliers[k] < -_FEAS_TOL]
                    for k in dropped:
                        active.drop(k)
                    active.multipliers = [max(0.0, m) if kd == "in" else m
                                          for m, kd in zip(active.multipliers,
                                                           active.kinds)]
                    continue
                break
            kind, sign = "in", 1.0
            nplus, dplus = -qp.G[violated], -qp.g[violated]
            idx = violated

        # -- primal-dual steps until the constraint enters the set ---------
        uplus = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                status = MAX_ITERATIONS
                break
            try:
                dz, r = active.step_direction(nplus)
            except LinAlgError:
                status = MAX_ITERATIONS
                break
            sigma = nplus @ z - dplus
            denom = float(nplus @ dz)
            scale = float(nplus @ nplus) + 1.0
            dependent = denom <= _DEP_TOL * scale
            t_full = np.inf if dependent else -sigma / denom
            t_block, k_block = active.blocking(r)
            if kind == "eq" and dependent and abs(sigma) <= _FEAS_TOL * (1 + abs(dplus)):
                break  # redundant but consistent equality: nothing to do
            step = min(t_full, t_block)
            if not np.isfinite(step):
                status = INFEASIBLE
                break
            step = max(step, 0.0)
            if not dependent:
                z = z + step * dz
            for k in range(len(active)):
                active.multipliers[k] -= step * r[k]
            uplus += step
            if step == t_full and not dependent:
                active.add(kind, idx, sign, nplus, dplus, uplus)
                break
            active.drop(k_block)
        if status != OPTIMAL:
            break

    lam = np.zeros(m_in)
    nu = np.zeros(m_eq)
    for k, kd in enumerate(active.kinds):
        if kd == "in":
            lam[active.indices[k]] = active.multipliers[k]
        else:
            nu[active.indices[k]] = -active.signs[k] * active.multipliers[k]
    report = kkt_check(qp, z, lam if m_in else None, nu if m_eq else None)
    if status == OPTIMAL and not report.ok(tol):
        status = MAX_ITERATIONS
    return QPSolution(z=z, ineq_duals=lam, eq_duals=nu, status=status,
                      objective=float(0.5 * z @ qp.H @ z + qp.f @ z),
                      kkt_residual=report.residual, iterations=iterations)


def condense(model, horizon: int, x0: np.ndarray, w: np.ndarray | None = None):
    """Express the stacked predicted states x(1..N) affinely in the inputs.

    Returns (Su, d) with x_stack = Su @ u + d for the single-input model
    x(k+1) = A x + B u + E w + c; ``w`` holds the disturbance preview rows
    w(0..N-1) when the model has an E matrix.
    """
    if horizon < 1:
        raise ValueError("condense requires horizon >= 1")
    n = model.A.shape[0]
    Su = np.zeros((horizon * n, horizon))
    d = np.zeros(horizon * n)
    rows = np.zeros((n, horizon))
    free = np.asarray(x0, dtype=float)
    for k in range(horizon):
        rows = model.A @ rows
        rows[:, k] += model.B[:, 0]
        free = model.A @ free + model.c
        if model.E is not None:
            if w is None:
                raise ValueError("model has disturbance inputs but no preview given")
            free = free + model.E @ w[k]
        Su[k * n:(k + 1) * n] = rows
        d[k * n:(k + 1) * n] = free
    return Su, d


def dump_problem(qp: QProblem, path) -> None:
    """Plain-text dump of a problem instance for offline debugging."""
    def block(fh, name, mat):
        mat = np.atleast_2d(mat)
        fh.write(f"%% {name} {mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")

    with open(path, "w") as fh:
        fh.write("%%MatrixMarket-like QP dump\n")
        block(fh, "H", qp.H)
        block(fh, "f", qp.f)
        if qp.G is not None:
            block(fh, "G", qp.G)
            block(fh, "g", qp.g)
        if qp.Aeq is not None:
            block(fh, "Aeq", qp.Aeq)
            block(fh, "beq", qp.beq)
