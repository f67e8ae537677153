"""End-to-end runs, error metrics against the analytic references, parameter
sweeps and condition-number reports, plus the writers for their output files.
"""

from dataclasses import asdict, dataclass, field, fields
import csv
import io
import json
import logging
import math
import os
import platform
import time
from importlib import metadata

import numpy as np

from .assembly import OperatorCoeffs, assemble_mass, assemble_stiffness, dump_matrix
from .basisnet import dumps_params, eval_basis
from .estimator import SubspaceEigensolver, reduce_and_project
from .linalg import cond_number
from .problems import get_problem
from .training import write_loss_csv

__all__ = [
    "RunConfig",
    "EigenSolution",
    "ErrorRow",
    "ErrorReport",
    "run",
    "compute_errors",
    "sweep",
    "condition_report",
    "write_run_outputs",
]

log = logging.getLogger(__name__)

CONDITION_FIELDS = ["M", "pod_gram", "gamma", "K", "epochs", "kappa_A", "kappa_B",
                    "kappa_A_red", "kappa_B_red", "kappa_saturated"]
# float64 cannot resolve eigenvalue ratios much beyond 1/eps
KAPPA_SATURATION = 1.0 / np.finfo(float).eps


def _fmt(x):
    """17 significant digits, or an empty field for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.16e}"


def _atomic_write(path, data):
    tmp = f"{path}.tmp"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
        fh.write(data)
    os.replace(tmp, path)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row.get(h)) for h in header])
    return buf.getvalue()


@dataclass
class RunConfig:
    """One run; ``None`` fields take the problem's defaults."""

    problem: str = "laplace2d"
    M: int | None = None
    k: int | None = None
    seed: int = 1
    quad_points: int | None = None
    eps_tol: float | None = None
    n_max: int = 5000
    gamma: float | None = None
    pod_gram: str = "mass"
    reduce: bool = True
    indicator: str = "sqrt"
    compute_conditions: bool = True
    out: str | None = None

    def resolved(self):
        """Copy with every problem default filled in."""
        spec = get_problem(self.problem)
        cfg = RunConfig(**asdict(self))
        cfg.M = spec.M if self.M is None else int(self.M)
        cfg.k = spec.k if self.k is None else int(self.k)
        cfg.quad_points = spec.quad_points if self.quad_points is None else int(self.quad_points)
        cfg.eps_tol = spec.eps_tol if self.eps_tol is None else float(self.eps_tol)
        cfg.gamma = spec.gamma if self.gamma is None else float(self.gamma)
        if not 1 <= cfg.k <= cfg.M:
            raise ValueError(f"need 1 <= k <= M, got k={cfg.k}, M={cfg.M}")
        if not 0.0 < cfg.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {cfg.gamma}")
        if cfg.pod_gram not in ("mass", "stiffness"):
            raise ValueError(f"pod_gram must be 'mass' or 'stiffness', got {cfg.pod_gram!r}")
        return cfg

    def estimator(self):
        cfg = self.resolved()
        return SubspaceEigensolver(
            problem=cfg.problem, n_basis=cfg.M, n_eigs=cfg.k, seed=cfg.seed, eps_tol=cfg.eps_tol,
            n_max=cfg.n_max, gamma=cfg.gamma, pod_gram=cfg.pod_gram, indicator=cfg.indicator,
            reduce=cfg.reduce, compute_conditions=cfg.compute_conditions,
        )

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class EigenSolution:
    """Eigenpairs of one run; ``coef`` expands them in the original basis."""

    eigenvalues: np.ndarray
    coef: np.ndarray
    K: int
    trace: object
    conditions: dict
    values: np.ndarray  # (n_pts, k) on the run grid
    grads: np.ndarray  # (d, n_pts, k)
    solver: str
    b_orthonormality: float
    reduction: object = None
    cholesky_failure: dict | None = None
    params: object = None

    @classmethod
    def from_estimator(cls, est):
        return cls(
            eigenvalues=est.eigenvalues_, coef=est.coef_, K=est.n_reduced_, trace=est.loss_trace_,
            conditions=dict(est.conditions_), values=est.values_, grads=est.grads_,
            solver=est.solver_, b_orthonormality=est.b_orthonormality_, reduction=est.reduction_,
            cholesky_failure=est.cholesky_failure_, params=est.params_,
        )


@dataclass
class ErrorRow:
    l: int
    n1: int
    n2: int
    lam: float
    lam_h: float
    err_lambda: float
    err_L2: float
    err_H1: float


@dataclass
class ErrorReport:
    rows: list
    clusters: list  # groups of 0-based indices treated as one eigenspace
    cluster_angles: list  # largest principal angle (radians) per multi-member cluster
    epochs: int = 0
    wall_time: float = 0.0

    def as_dicts(self):
        return [asdict(r) for r in self.rows]


def _h1_sq(grid, v, g):
    return float(np.dot(grid.weights, v * v + np.einsum("an,an->n", g, g)))


def compute_errors(solution, problem, grid):
    """Relative eigenvalue, L2 and H1 errors against the reference eigenpairs.

    Computed eigenfunctions are b-normalised and sign-aligned with their
    reference. Inside a degenerate cluster the individual eigenfunctions are
    only defined up to a rotation, so each reference is compared with its
    b-orthogonal projection onto the span of the computed cluster members.
    """
    k = solution.eigenvalues.size
    ref = problem.reference_on_grid(grid, k)
    rho = grid.weights
    Uh = solution.values.copy()
    Gh = solution.grads.copy()
    norms = np.sqrt(np.einsum("n,nk,nk->k", rho, Uh, Uh))
    Uh /= norms
    Gh /= norms

    rows, angles = [], []
    for cluster in ref.clusters:
        idx = np.array(cluster)
        Vc, Gc = Uh[:, idx], Gh[:, :, idx]
        if len(cluster) > 1:
            # b-orthonormal basis of the computed cluster span
            L = np.linalg.cholesky((Vc * rho[:, None]).T @ Vc)
            T = np.linalg.inv(L).T
            Vc, Gc = Vc @ T, Gc @ T
        cross = (Vc * rho[:, None]).T @ ref.values[:, idx]  # <u_h,j, u_i>_b
        if len(cluster) > 1:
            cosines = np.clip(np.linalg.svd(cross, compute_uv=False), 0.0, 1.0)
            angles.append(float(np.arccos(cosines.min())))
        for col, i in enumerate(cluster):
            u, g = ref.values[:, i], ref.grads[:, :, i]
            if len(cluster) == 1:
                s = 1.0 if cross[0, 0] >= 0 else -1.0
                ev, eg = u - s * Vc[:, 0], g - s * Gc[:, :, 0]
            else:
                c = cross[:, col]
                ev, eg = u - Vc @ c, g - Gc @ c
            lam, lam_h = float(ref.eigenvalues[i]), float(solution.eigenvalues[i])
            rows.append(ErrorRow(
                l=i + 1, n1=ref.labels[i][0], n2=ref.labels[i][1], lam=lam, lam_h=lam_h,
                err_lambda=abs(lam - lam_h) / abs(lam),
                err_L2=math.sqrt(float(np.dot(rho, ev * ev)) / float(np.dot(rho, u * u))),
                err_H1=math.sqrt(_h1_sq(grid, ev, eg) / _h1_sq(grid, u, g)),
            ))
    rows.sort(key=lambda r: r.l)
    return ErrorReport(rows, ref.clusters, angles)


def run(config):
    """Train, reduce, solve and score one configuration.

    Writes the output files when ``config.out`` is set.
    Returns ``(EigenSolution, ErrorReport)``.
    """
    cfg = config.resolved()
    spec = get_problem(cfg.problem)
    grid = spec.grid(cfg.quad_points)
    t0 = time.perf_counter()
    est = cfg.estimator().fit(grid.points, sample_weight=grid.weights)
    wall = time.perf_counter() - t0
    solution = EigenSolution.from_estimator(est)
    report = compute_errors(solution, spec, grid)
    report.epochs = solution.trace.n_epochs
    report.wall_time = wall
    log.info("%s M=%d: K=%d, %d epochs, max err_lambda %.3e, %.1f s", cfg.problem, cfg.M,
             solution.K, report.epochs, max(r.err_lambda for r in report.rows), wall)
    if cfg.out:
        write_run_outputs(cfg.out, cfg, solution, report, timings=est.timings_)
    return solution, report


def _condition_row(cfg, solution):
    c = solution.conditions
    kB = c.get("kappa_B")
    return {
        "M": cfg.M, "pod_gram": cfg.pod_gram if cfg.reduce else "none", "gamma": cfg.gamma,
        "K": solution.K, "epochs": solution.trace.n_epochs,
        "kappa_A": c.get("kappa_A"), "kappa_B": kB,
        "kappa_A_red": c.get("kappa_A_red"), "kappa_B_red": c.get("kappa_B_red"),
        "kappa_saturated": None if kB is None else bool(kB >= KAPPA_SATURATION),
    }


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba", "scikit-learn", "artifact"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_run_outputs(out, cfg, solution, report, timings=None):
    """errors.csv, loss.csv, reduction.json, conditions.csv, meta.json and params.bin."""
    os.makedirs(out, exist_ok=True)
    err_rows = [{"l": r.l, "n1": r.n1, "n2": r.n2, "err_lambda": r.err_lambda,
                 "err_L2": r.err_L2, "err_H1": r.err_H1} for r in report.rows]
    _atomic_write(os.path.join(out, "errors.csv"),
                  _csv_text(["l", "n1", "n2", "err_lambda", "err_L2", "err_H1"], err_rows))

    tmp = os.path.join(out, "loss.csv.tmp")
    write_loss_csv(solution.trace, tmp)
    os.replace(tmp, os.path.join(out, "loss.csv"))

    if solution.reduction is not None:
        red = solution.reduction.to_dict()
        red["reduced"] = True
    else:
        red = {"reduced": False, "K": solution.K, "M": cfg.M}
    red["pod_gram"] = cfg.pod_gram if cfg.reduce else None
    red["conditions"] = solution.conditions
    _atomic_write(os.path.join(out, "reduction.json"), json.dumps(red, indent=2))

    _atomic_write(os.path.join(out, "conditions.csv"),
                  _csv_text(CONDITION_FIELDS, [_condition_row(cfg, solution)]))

    meta = {
        "config": asdict(cfg),
        "versions": _versions(),
        "epochs": solution.trace.n_epochs,
        "stop_reason": solution.trace.reason,
        "final_loss": solution.trace.losses[-1],
        "K": solution.K,
        "solver": solution.solver,
        "cholesky_failure": solution.cholesky_failure,
        "b_orthonormality": solution.b_orthonormality,
        "eigenvalues": [float(x) for x in solution.eigenvalues],
        "clusters": report.clusters,
        "cluster_angles": report.cluster_angles,
        "wall_time": report.wall_time,
        "timings": timings or {},
    }
    _atomic_write(os.path.join(out, "meta.json"), json.dumps(meta, indent=2))
    if solution.params is not None:
        _atomic_write(os.path.join(out, "params.bin"), dumps_params(solution.params))


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    K_nondecreasing: bool = True


def sweep(config, M_list):
    """One run per M; rows carry K, epochs and the per-index eigenvalue errors.

    A K that decreases with M is logged, not raised.
    """
    result = SweepResult()
    for M in M_list:
        cfg = RunConfig(**{**asdict(config), "M": int(M)})
        if config.out:
            cfg.out = os.path.join(config.out, f"M{int(M)}")
        solution, report = run(cfg)
        row = {"M": int(M), "K": solution.K, "epochs": report.epochs}
        for r in report.rows:
            row[f"err_lambda_{r.l}"] = r.err_lambda
        result.rows.append(row)
    Ks = [r["K"] for r in result.rows]
    result.K_nondecreasing = all(a <= b for a, b in zip(Ks, Ks[1:]))
    if not result.K_nondecreasing:
        log.warning("reduced dimension is not monotone in M: %s", Ks)
    if config.out:
        k = max((len(r) - 3 for r in result.rows), default=0)
        header = ["M", "K", "epochs"] + [f"err_lambda_{l}" for l in range(1, k + 1)]
        os.makedirs(config.out, exist_ok=True)
        _atomic_write(os.path.join(config.out, "sweep.csv"), _csv_text(header, result.rows))
    return result


def condition_report(config, M_list, dump_dir=None):
    """kappa(A), kappa(B) before and kappa(A_red), kappa(B_red) after reduction.

    Each M is trained once; the trained basis is then reduced under both the
    mass and the stiffness Gram. With ``dump_dir`` the matrices are written
    with :func:`~rsnn.assembly.dump_matrix`.
    """
    rows = []
    base = RunConfig(**{**asdict(config), "reduce": True, "pod_gram": "mass",
                        "compute_conditions": False})
    for M in M_list:
        cfg = RunConfig(**{**asdict(base), "M": int(M)}).resolved()
        spec = get_problem(cfg.problem)
        grid = spec.grid(cfg.quad_points)
        est = cfg.estimator().fit(grid.points, sample_weight=grid.weights)
        coeffs = OperatorCoeffs(spec.alpha, spec.potential(grid.points))
        basis = eval_basis(est.params_, est.envelope_, grid.points)
        A = assemble_stiffness(basis, grid, coeffs)
        B = assemble_mass(basis, grid)
        kA, kB = cond_number(A), cond_number(B)
        if dump_dir:
            os.makedirs(dump_dir, exist_ok=True)
            dump_matrix(A, os.path.join(dump_dir, f"M{M}_A.bin"), "stiffness A")
            dump_matrix(B, os.path.join(dump_dir, f"M{M}_B.bin"), "mass B")
        for gram in ("mass", "stiffness"):
            red, _, A_red, B_red = reduce_and_project(basis, grid, coeffs, gram, cfg.gamma, cfg.indicator)
            if dump_dir:
                dump_matrix(A_red, os.path.join(dump_dir, f"M{M}_{gram}_Ared.bin"), "reduced A")
                dump_matrix(B_red, os.path.join(dump_dir, f"M{M}_{gram}_Bred.bin"), "reduced B")
            rows.append({
                "M": int(M), "pod_gram": gram, "gamma": cfg.gamma, "K": red.K,
                "epochs": est.loss_trace_.n_epochs, "kappa_A": kA, "kappa_B": kB,
                "kappa_A_red": cond_number(A_red), "kappa_B_red": cond_number(B_red),
                "kappa_saturated": bool(kB >= KAPPA_SATURATION),
            })
            log.info("M=%d %s Gram: K=%d kappa(A)=%.3e kappa(B)=%.3e kappa(A_red)=%.6g kappa(B_red)=%.6g",
                     M, gram, red.K, kA, kB, rows[-1]["kappa_A_red"], rows[-1]["kappa_B_red"])
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        _atomic_write(os.path.join(config.out, "conditions.csv"), _csv_text(CONDITION_FIELDS, rows))
    return rows
