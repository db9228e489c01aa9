"""Feasibility solver for small systems of affine linear matrix inequalities.

Every constraint ``F(z) = C + sum_i z_i A_i`` is required to be negative
definite (``sense="neg"``) or positive definite (``sense="pos"``) with a
margin ``eps``. The solver alternates between clipping each constraint's
spectrum into the feasible cone and a least-squares re-fit of the decision
vector ``z`` onto the affine image. It is not a decision procedure: a
``not-found`` status does not prove infeasibility.

Extreme eigenvalues used for certification come from :func:`eig_extreme`
(Householder tridiagonalization followed by implicit QL), a code path
separate from the LAPACK ``eigh`` the projection step uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "FEASIBLE",
    "NOT_FOUND",
    "LmiVariable",
    "LmiConstraint",
    "LmiProblem",
    "LmiSolution",
    "solve",
    "check_solution",
    "eig_extreme",
    "symmetric_eigenvalues",
    "tridiagonalize",
    "schur_negdef_check",
    "violation",
    "spectral_project",
]

FEASIBLE = "feasible"
NOT_FOUND = "infeasible-certificate-not-found"


# ---------------------------------------------------------------------------
# eigenvalues

def tridiagonalize(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Householder reduction of a symmetric matrix; returns diagonal and sub-diagonal."""
    A = np.array(M, dtype=float, copy=True)
    n = A.shape[0]
    for k in range(n - 2):
        x = A[k + 1:, k].copy()
        norm_x = math.sqrt(float(x @ x))
        if norm_x == 0.0:
            continue
        alpha = -math.copysign(norm_x, x[0])
        v = x
        v[0] -= alpha
        vnorm = math.sqrt(float(v @ v))
        if vnorm == 0.0:
            continue
        v /= vnorm
        # A <- H A H with H = I - 2 v v^T acting on rows/cols k+1..n-1
        sub = A[k + 1:, k:]
        sub -= 2.0 * np.outer(v, v @ sub)
        A[k + 1:, k:] = sub
        sub = A[k:, k + 1:]
        sub -= 2.0 * np.outer(sub @ v, v)
        A[k:, k + 1:] = sub
    d = np.diag(A).copy()
    e = np.diag(A, -1).copy() if n > 1 else np.zeros(0)
    return d, e


def _tql_implicit(d: np.ndarray, e: np.ndarray, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of the symmetric tridiagonal matrix (d, e) by shifted implicit QL."""
    d = [float(v) for v in d]
    n = len(d)
    e = [float(v) for v in e] + [0.0]
    eps = np.finfo(float).eps
    for l in range(n):
        sweeps = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            sweeps += 1
            if sweeps > max_sweeps:
                raise ArithmeticError("implicit QL failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
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
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return np.sort(np.array(d))


def symmetric_eigenvalues(M: np.ndarray, sym_tol: float = 1e-9) -> np.ndarray:
    """All eigenvalues (ascending) of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"square matrix required, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and float(np.max(np.abs(M - M.T))) > sym_tol * scale:
        raise ValueError("matrix is not symmetric")
    if M.shape[0] == 0:
        return np.zeros(0)
    Ms = 0.5 * (M + M.T)
    return _tql_implicit(*tridiagonalize(Ms))


def eig_extreme(M: np.ndarray, sym_tol: float = 1e-9) -> tuple[float, float]:
    """``(lambda_min, lambda_max)`` of a symmetric matrix."""
    w = symmetric_eigenvalues(M, sym_tol)
    return float(w[0]), float(w[-1])


def schur_negdef_check(X: np.ndarray, Y: np.ndarray, Z: np.ndarray, margin: float = 0.0) -> bool:
    """True iff ``[[X, Y], [Y^T, Z]] <= -margin*I`` strictly, tested via the Schur complement of Z."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape[0] != X.shape[1] or Z.shape[0] != Z.shape[1]:
        raise ValueError("X and Z must be square")
    if Y.shape != (X.shape[0], Z.shape[0]):
        raise ValueError(f"Y must be {X.shape[0]}x{Z.shape[0]}, got {Y.shape}")
    Zs = Z + margin * np.eye(Z.shape[0])
    if eig_extreme(Zs)[1] >= 0.0:
        return False
    S = X + margin * np.eye(X.shape[0]) - Y @ np.linalg.solve(Zs, Y.T)
    return eig_extreme(0.5 * (S + S.T))[1] < 0.0


# ---------------------------------------------------------------------------
# problem description

@dataclass(frozen=True)
class LmiVariable:
    name: str
    shape: tuple[int, int]
    kind: str  # "sym", "full" or "scalar"
    offset: int

    @property
    def size(self) -> int:
        if self.kind == "sym":
            n = self.shape[0]
            return n * (n + 1) // 2
        return self.shape[0] * self.shape[1]

    def unpack(self, z: np.ndarray) -> np.ndarray | float:
        chunk = z[self.offset:self.offset + self.size]
        if self.kind == "scalar":
            return float(chunk[0])
        if self.kind == "full":
            return chunk.reshape(self.shape).copy()
        n = self.shape[0]
        out = np.zeros((n, n))
        out[np.triu_indices(n)] = chunk
        return out + np.triu(out, 1).T


@dataclass
class LmiConstraint:
    name: str
    constant: np.ndarray
    coeffs: np.ndarray  # (n_dof, k, k)
    sense: str = "neg"
    eps: float = 0.0

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        return self.constant + np.tensordot(z, self.coeffs, axes=1)


@dataclass
class LmiProblem:
    """Decision variables plus affine matrix constraints.

    Constraints are given as callables mapping a ``{name: value}`` dict to a
    symmetric matrix; they are compiled into constant and coefficient blocks
    on registration, so the callable must be affine in the variables.
    """

    rel_margin: float = 1e-7
    variables: list[LmiVariable] = field(default_factory=list)
    constraints: list[LmiConstraint] = field(default_factory=list)

    @property
    def n_dof(self) -> int:
        return sum(v.size for v in self.variables)

    def _add(self, name: str, shape: tuple[int, int], kind: str) -> LmiVariable:
        if any(v.name == name for v in self.variables):
            raise ValueError(f"duplicate variable {name!r}")
        if self.constraints:
            raise ValueError("declare all variables before constraints")
        var = LmiVariable(name, shape, kind, self.n_dof)
        self.variables.append(var)
        return var

    def symmetric(self, name: str, n: int) -> LmiVariable:
        return self._add(name, (n, n), "sym")

    def matrix(self, name: str, rows: int, cols: int) -> LmiVariable:
        return self._add(name, (rows, cols), "full")

    def scalar(self, name: str) -> LmiVariable:
        return self._add(name, (1, 1), "scalar")

    def unpack(self, z: np.ndarray) -> dict[str, np.ndarray | float]:
        return {v.name: v.unpack(z) for v in self.variables}

    def pack(self, values: dict) -> np.ndarray:
        """Inverse of :meth:`unpack`; missing variables are zero."""
        z = np.zeros(self.n_dof)
        for v in self.variables:
            if v.name not in values:
                continue
            val = np.asarray(values[v.name], dtype=float)
            if v.kind == "sym":
                chunk = val[np.triu_indices(v.shape[0])]
            else:
                chunk = val.ravel()
            z[v.offset:v.offset + v.size] = chunk
        return z

    def add(self, name: str, expr: Callable[[dict], np.ndarray], sense: str = "neg") -> LmiConstraint:
        if sense not in ("neg", "pos"):
            raise ValueError("sense must be 'neg' or 'pos'")
        n = self.n_dof
        z = np.zeros(n)
        C = np.atleast_2d(np.asarray(expr(self.unpack(z)), dtype=float))
        if C.shape[0] != C.shape[1]:
            raise ValueError(f"constraint {name!r} is not square")
        coeffs = np.empty((n,) + C.shape)
        for i in range(n):
            z[i] = 1.0
            coeffs[i] = np.asarray(expr(self.unpack(z)), dtype=float) - C
            z[i] = 0.0
        for blk in (C, *coeffs):
            if np.max(np.abs(blk - blk.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(blk), initial=0.0)):
                raise ValueError(f"constraint {name!r} has a non-symmetric block")
        C = 0.5 * (C + C.T)
        coeffs = 0.5 * (coeffs + coeffs.transpose(0, 2, 1))
        eps = self.rel_margin * (1.0 + (np.linalg.norm(C, 2) if C.size else 0.0))
        con = LmiConstraint(name, C, coeffs, sense, float(eps))
        self.constraints.append(con)
        return con

    # -- text dump -------------------------------------------------------
    def dump(self) -> str:
        out = [f"rel_margin {self.rel_margin:.17g}", f"variables {len(self.variables)}"]
        for v in self.variables:
            out.append(f"var {v.name} {v.kind} {v.shape[0]} {v.shape[1]}")
        out.append(f"constraints {len(self.constraints)}")
        fmt = lambda a: " ".join(f"{x:.17g}" for x in np.ravel(a))
        for c in self.constraints:
            out.append(f"con {c.name} {c.sense} {c.size} {c.eps:.17g}")
            out.append(fmt(c.constant))
            for blk in c.coeffs:
                out.append(fmt(blk))
        return "\n".join(out) + "\n"

    @classmethod
    def load(cls, text: str) -> "LmiProblem":
        lines = iter(ln for ln in text.splitlines() if ln.strip())
        prob = cls(rel_margin=float(next(lines).split()[1]))
        nvar = int(next(lines).split()[1])
        for _ in range(nvar):
            _, name, kind, r, c = next(lines).split()
            prob._add(name, (int(r), int(c)), kind)
        ncon = int(next(lines).split()[1])
        for _ in range(ncon):
            _, name, sense, k, eps = next(lines).split()
            k = int(k)
            C = np.array(next(lines).split(), dtype=float).reshape(k, k)
            coeffs = np.array([np.array(next(lines).split(), dtype=float).reshape(k, k)
                               for _ in range(prob.n_dof)]).reshape(prob.n_dof, k, k)
            prob.constraints.append(LmiConstraint(name, C, coeffs, sense, float(eps)))
        return prob


@dataclass
class LmiSolution:
    status: str
    values: dict[str, np.ndarray | float]
    z: np.ndarray
    extreme: dict[str, float]
    iterations: int
    seed: int | None
    worst: tuple[str, float]

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


# ---------------------------------------------------------------------------
# solver

def _oriented(con: LmiConstraint, S: np.ndarray) -> np.ndarray:
    return S if con.sense == "neg" else -S


def violation(eigs: np.ndarray, eps: float) -> float:
    """``sum(max(0, lambda + eps)**2)`` over the eigenvalues of an oriented constraint."""
    return float(np.sum(np.clip(eigs + eps, 0.0, None) ** 2))


def spectral_project(S: np.ndarray, level: float) -> np.ndarray:
    """Nearest (Frobenius) symmetric matrix with all eigenvalues ``<= -level``."""
    w, V = np.linalg.eigh(S)
    return (V * np.minimum(w, -level)) @ V.T


class _Compiled:
    def __init__(self, problem: LmiProblem, depth: float):
        self.problem = problem
        rows, consts, self.slices, self.iu, self.w = [], [], [], [], []
        start = 0
        for con in problem.constraints:
            k = con.size
            iu = np.triu_indices(k)
            wt = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
            sign = 1.0 if con.sense == "neg" else -1.0
            consts.append(sign * con.constant[iu] * wt)
            rows.append((sign * con.coeffs[:, iu[0], iu[1]] * wt).T)
            self.slices.append(slice(start, start + iu[0].size))
            self.iu.append(iu)
            self.w.append(wt)
            start += iu[0].size
        self.M = np.vstack(rows) if rows else np.zeros((0, problem.n_dof))
        self.c = np.concatenate(consts) if consts else np.zeros(0)
        self.Mp = np.linalg.pinv(self.M)
        self.eps = np.array([c.eps for c in problem.constraints])
        scale = np.array([1.0 + np.linalg.norm(c.constant, 2) for c in problem.constraints])
        self.level = np.maximum(10.0 * self.eps, depth * scale)
        self._group()

    def matrices(self, z: np.ndarray) -> list[np.ndarray]:
        vec = self.M @ z + self.c
        out = []
        for con, sl, iu, wt in zip(self.problem.constraints, self.slices, self.iu, self.w):
            k = con.size
            S = np.zeros((k, k))
            S[iu] = vec[sl] / wt
            out.append(S + np.triu(S, 1).T)
        return out

    def vectorize(self, mats: list[np.ndarray]) -> np.ndarray:
        return np.concatenate([S[iu] * wt for S, iu, wt in zip(mats, self.iu, self.w)])

    def _group(self) -> None:
        # constraints of equal size share one batched eigendecomposition
        by_size: dict[int, list[int]] = {}
        for j, con in enumerate(self.problem.constraints):
            by_size.setdefault(con.size, []).append(j)
        self.groups = []
        for k, members in by_size.items():
            full = np.zeros((len(members), k, k), dtype=int)
            upper = []
            for g, j in enumerate(members):
                iu = self.iu[j]
                pos = np.arange(self.slices[j].start, self.slices[j].stop)
                full[g][iu] = pos
                full[g][iu[1], iu[0]] = pos
                upper.append(pos)
            wfull = np.full((k, k), math.sqrt(2.0))
            np.fill_diagonal(wfull, 1.0)
            iu = np.triu_indices(k)
            self.groups.append((full, wfull, np.array(upper), iu, wfull[iu],
                                self.eps[members][:, None], self.level[members][:, None]))

    def project(self, vec: np.ndarray) -> tuple[float, bool, np.ndarray]:
        """Violation, feasibility flag and blockwise spectral projection of a stacked vector."""
        out = np.empty_like(vec)
        viol, feasible = 0.0, True
        for full, wfull, upper, iu, wt, eps, level in self.groups:
            lam, V = np.linalg.eigh(vec[full] / wfull)
            viol += float(np.sum(np.clip(lam + eps, 0.0, None) ** 2))
            feasible = feasible and bool(np.all(lam[:, -1:] <= -eps))
            P = (V * np.minimum(lam, -level)[:, None, :]) @ np.swapaxes(V, 1, 2)
            out[upper] = P[:, iu[0], iu[1]] * wt
        return viol, feasible, out


def solve(problem: LmiProblem, budget: int = 20000, seeds=(0, 1, 2),
          depth: float = 1e-3, method: str = "dr", stall_window: int = 1500,
          z0: np.ndarray | None = None) -> LmiSolution:
    """Search for ``z`` satisfying every constraint with its margin.

    Both methods alternate a spectral projection of every constraint block
    onto ``{S <= -level I}`` with a least-squares re-fit of ``z``;
    ``method="ap"`` is plain alternating projection, ``method="dr"`` adds the
    Douglas-Rachford reflection, which converges far faster on the
    ill-conditioned problems met in gain synthesis. Spectra are clipped to
    ``level = max(10 eps, depth * (1 + ||C||))`` so that iterates land
    strictly inside the margin.

    Each seed restarts from ``z = z0`` (or 0) for seed 0 and from a seeded
    Gaussian draw otherwise, and runs for at most ``budget`` iterations,
    abandoning the start when the best violation has not improved by 1e-6
    relative over ``stall_window`` iterations.
    """
    if method not in ("dr", "ap"):
        raise ValueError("method must be 'dr' or 'ap'")
    comp = _Compiled(problem, depth)
    best = None
    total_iter = 0
    for seed in seeds:
        if seed == 0:
            z = np.zeros(problem.n_dof) if z0 is None else np.asarray(z0, dtype=float).copy()
        else:
            z = np.random.default_rng(seed).standard_normal(problem.n_dof)
        w = comp.M @ z + comp.c
        run_best, run_best_it = math.inf, 0
        for it in range(budget):
            z = comp.Mp @ (w - comp.c)
            v_a = comp.M @ z + comp.c
            viol, feasible, proj_a = comp.project(v_a)
            total_iter += 1
            if feasible:
                return _finish(problem, z, FEASIBLE, total_iter, seed)
            if best is None or viol < best[0]:
                best = (viol, z.copy(), seed)
            if viol < run_best * (1.0 - 1e-6):
                run_best, run_best_it = viol, it
            elif it - run_best_it > stall_window:
                break
            if method == "ap":
                w = proj_a
            else:
                _, _, proj_r = comp.project(2.0 * v_a - w)
                w = w + proj_r - v_a
    return _finish(problem, best[1], NOT_FOUND, total_iter, best[2])


def _finish(problem: LmiProblem, z: np.ndarray, status: str, iterations: int, seed) -> LmiSolution:
    extreme = {}
    worst = ("", -math.inf)
    for con in problem.constraints:
        S = _oriented(con, con.evaluate(z))
        lam = float(np.linalg.eigvalsh(0.5 * (S + S.T))[-1])
        extreme[con.name] = lam if con.sense == "neg" else -lam
        if lam + con.eps > worst[1]:
            worst = (con.name, lam + con.eps)
    return LmiSolution(status, problem.unpack(z), z, extreme, iterations, seed, worst)


def check_solution(problem: LmiProblem, z: np.ndarray) -> dict[str, float]:
    """Re-verify a candidate with :func:`eig_extreme`.

    Returns, per constraint, the signed slack ``-(lambda_max + eps)`` of the
    oriented matrix; all entries are >= 0 iff the point is feasible.
    """
    out = {}
    for con in problem.constraints:
        S = _oriented(con, con.evaluate(z))
        out[con.name] = -(eig_extreme(0.5 * (S + S.T), sym_tol=1e-6)[1] + con.eps)
    return out
