"""Exact optimal transport between discrete measures, with plan certificates.

Three ground costs are supported: plain Euclidean distance, the truncated
distance min(|x - y|, 1), and the indicator cost 1_{x != y}. Transport under
the truncated cost realizes the bounded-Lipschitz (flat) distance between
probability measures; the indicator cost realizes total variation.

Plans are computed by the HiGHS dual simplex on the dense bipartite LP,
which terminates at an optimal vertex and hands back dual potentials, so
every plan can be certified independently (marginal feasibility, dual
feasibility, complementary slackness, strong duality). No entropic or other
approximate solver is used anywhere: the coupling construction needs true
optimal plans, and approximate ones would contaminate the chaos-rate
measurements.

For d = 1 there are two fast paths: the classic quantile coupling for the
Euclidean cost, and a small dual LP for the truncated cost (the quantile
coupling is not optimal there, the truncated cost being concave). Both are
exact and are cross-checked against the general solver in the test suite.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .measures import WeightedEmpiricalMeasure

__all__ = [
    "CostKind",
    "TransportPlan",
    "cost_matrix",
    "solve_ot",
    "bl_distance",
    "bl_value_1d",
    "w1_euclidean_1d",
    "verify_plan",
    "concentration_rate",
]


class CostKind(enum.Enum):
    EUCLIDEAN = "euclidean"
    TRUNCATED = "truncated"
    INDICATOR = "indicator"

    @classmethod
    def coerce(cls, value) -> "CostKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class TransportPlan:
    """A coupling matrix with its cost and certifying dual potentials.

    Row sums reproduce the source weights, column sums the target weights;
    the duals satisfy u_i + v_j <= c_ij everywhere with equality on the
    support of ``mass``.
    """

    mass: np.ndarray  # (m, k) nonnegative
    cost_value: float
    dual_u: np.ndarray  # (m,)
    dual_v: np.ndarray  # (k,)

    @property
    def rows(self) -> int:
        return self.mass.shape[0]

    @property
    def cols(self) -> int:
        return self.mass.shape[1]


def cost_matrix(x: np.ndarray, y: np.ndarray, cost) -> np.ndarray:
    """Pairwise ground-cost matrix between point arrays (m, d) and (k, d)."""
    kind = CostKind.coerce(cost)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if kind is CostKind.INDICATOR:
        equal = (x[:, None, :] == y[None, :, :]).all(axis=2)
        return 1.0 - equal.astype(float)
    diff = x[:, None, :] - y[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    if kind is CostKind.TRUNCATED:
        np.minimum(dist, 1.0, out=dist)
    return dist


def _marginal_constraints(m: int, k: int) -> sparse.csc_matrix:
    # the last column constraint is dropped: it is implied by the others,
    # and keeping it makes the system exactly singular, so a one-ulp
    # mismatch between the two weight totals reads as infeasible. Dropping
    # it also pins the dual gauge (v_k = 0).
    ones = np.ones(m * k)
    cols = np.arange(m * k)
    row_of = sparse.csr_matrix((ones, (np.repeat(np.arange(m), k), cols)), shape=(m, m * k))
    col_of = sparse.csr_matrix((ones, (np.tile(np.arange(k), m), cols)), shape=(k, m * k))
    return sparse.vstack([row_of, col_of[:-1]]).tocsc()


def solve_ot(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure,
             cost=CostKind.TRUNCATED) -> TransportPlan:
    """Exact optimal plan between two discrete measures for the given cost."""
    kind = CostKind.coerce(cost)
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    c = cost_matrix(mu.support, nu.support, kind)
    m, k = c.shape
    res = linprog(
        c.ravel(),
        A_eq=_marginal_constraints(m, k),
        b_eq=np.concatenate([mu.weights, nu.weights[:-1]]),
        bounds=(0.0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10,
                 "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed (status {res.status}): {res.message}")
    mass = np.maximum(res.x.reshape(m, k), 0.0)
    mass = _repair_marginals(mass, mu.weights, nu.weights)
    # the equality multipliers are exactly the potentials u_i + v_j <= c_ij,
    # in the gauge fixed by the dropped constraint
    dual = np.asarray(res.eqlin.marginals, dtype=float)
    return TransportPlan(mass=mass, cost_value=float((mass * c).sum()),
                         dual_u=dual[:m], dual_v=np.append(dual[m:], 0.0))


def _repair_marginals(mass: np.ndarray, a: np.ndarray, b: np.ndarray,
                      sweeps: int = 200, target: float = 5e-15) -> np.ndarray:
    """Proportional fitting on the plan support.

    The solver's vertex satisfies the marginals only to its feasibility
    tolerance; rescaling rows and columns in place pushes the residual to
    the support's own consistency level (typically 1e-15, at worst the
    solver tolerance) without ever growing the support, so complementary
    slackness with the certified duals is untouched.
    """
    for _ in range(sweeps):
        rs = mass.sum(axis=1)
        mass *= np.divide(a, rs, out=np.ones_like(a), where=rs > 0)[:, None]
        cs = mass.sum(axis=0)
        mass *= np.divide(b, cs, out=np.ones_like(b), where=cs > 0)[None, :]
        row_err = np.abs(mass.sum(axis=1) - a).max()
        if row_err < target:
            break
    return mass


def bl_distance(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure) -> float:
    """Bounded-Lipschitz distance: optimal transport under the truncated cost."""
    return solve_ot(mu, nu, CostKind.TRUNCATED).cost_value


def bl_value_1d(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure) -> float:
    """Fast exact value of the BL distance for d = 1 measures.

    Solves the dual over potentials on the sorted union support. A potential
    is feasible iff adjacent increments respect the gaps and its range stays
    within one unit; pinning the range to [0, 1] and constraining adjacent
    increments gives a small sparse LP whose optimum is the distance. Value
    only; use :func:`solve_ot` when the plan itself is needed.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("bl_value_1d requires one-dimensional measures")
    z = np.concatenate([mu.support[:, 0], nu.support[:, 0]])
    signed = np.concatenate([mu.weights, -nu.weights])
    order = np.argsort(z, kind="stable")
    z = z[order]
    signed = signed[order]
    n = z.size
    if n == 1:
        return 0.0
    gaps = np.diff(z)
    n_con = 2 * (n - 1)
    rows = np.repeat(np.arange(n_con), 2)
    base = np.arange(n - 1)
    cols = np.empty((n - 1, 4), dtype=np.int64)
    cols[:, 0] = base + 1
    cols[:, 1] = base
    cols[:, 2] = base
    cols[:, 3] = base + 1
    data = np.tile([1.0, -1.0, 1.0, -1.0], n - 1)
    a_ub = sparse.csc_matrix((data, (rows, cols.ravel())), shape=(n_con, n))
    res = linprog(-signed, A_ub=a_ub, b_ub=np.repeat(gaps, 2),
                  bounds=(0.0, 1.0), method="highs")
    if res.status != 0:
        raise RuntimeError(f"BL dual LP failed (status {res.status}): {res.message}")
    return float(-res.fun)


def w1_euclidean_1d(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure) -> float:
    """1-Wasserstein distance for d = 1 Euclidean cost via the CDF formula.

    Equals the quantile coupling cost, which is optimal for convex costs;
    it is not valid for the truncated cost, which is concave.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("w1_euclidean_1d requires one-dimensional measures")
    z = np.concatenate([mu.support[:, 0], nu.support[:, 0]])
    signed = np.concatenate([mu.weights, -nu.weights])
    order = np.argsort(z, kind="stable")
    z = z[order]
    cdf_diff = np.cumsum(signed[order])[:-1]
    return float(np.abs(cdf_diff) @ np.diff(z))


def verify_plan(plan: TransportPlan, mu: WeightedEmpiricalMeasure,
                nu: WeightedEmpiricalMeasure, cost=CostKind.TRUNCATED,
                tol: float = 1e-8) -> tuple[bool, dict]:
    """Certify a plan: marginals, dual feasibility, slackness, strong duality.

    Returns (ok, report); the report lists the worst violation of each
    condition so failures are diagnosable.
    """
    c = cost_matrix(mu.support, nu.support, CostKind.coerce(cost))
    mass = plan.mass
    report: dict = {"violations": []}

    row_err = float(np.abs(mass.sum(axis=1) - mu.weights).max())
    col_err = float(np.abs(mass.sum(axis=0) - nu.weights).max())
    neg = float(min(mass.min(), 0.0))
    report["max_row_marginal_error"] = row_err
    report["max_col_marginal_error"] = col_err
    report["most_negative_mass"] = neg
    if row_err > tol or col_err > tol or -neg > tol:
        report["violations"].append("marginal feasibility")

    slack = c - (plan.dual_u[:, None] + plan.dual_v[None, :])
    dual_feas = float(slack.min())
    report["min_dual_slack"] = dual_feas
    if dual_feas < -tol:
        report["violations"].append("dual feasibility")

    support = mass > tol
    comp = float(np.abs(slack[support]).max()) if support.any() else 0.0
    report["max_support_slack"] = comp
    if comp > tol:
        report["violations"].append("complementary slackness")

    cost_from_mass = float((mass * c).sum())
    dual_value = float(plan.dual_u @ mu.weights + plan.dual_v @ nu.weights)
    report["cost_recomputed"] = cost_from_mass
    report["duality_gap"] = abs(cost_from_mass - dual_value)
    if abs(cost_from_mass - plan.cost_value) > tol:
        report["violations"].append("cost value mismatch")
    if report["duality_gap"] > tol:
        report["violations"].append("strong duality")

    return (not report["violations"], report)


def concentration_rate(n: int, d: int) -> float:
    """Mean-field concentration rate of N-sample empirical measures.

    N^{-1/2} for d = 1, N^{-1/2} log(1 + N) for d = 2, N^{-1/d} for d > 2.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    if d == 1:
        return float(n**-0.5)
    if d == 2:
        return float(n**-0.5 * np.log1p(n))
    return float(n ** (-1.0 / d))
