"""Simulation and the estimate -> synthesize -> certify -> measure experiment loop.

Every trial owns a private random stream derived from the master seed and
the trial's global ordinal (position in the ``(N, trial)`` grid), so results
do not depend on execution order or on the number of worker processes.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bounds import ConstantsTable, compute_bounds, compute_constants
from .covariance import (
    DEFAULT_BETA,
    DEFAULT_EPSILON,
    DEFAULT_SIGMA_SQ,
    confidence_radius,
    tightest_band,
)
from .errors import InvalidInputError, MnlqrError, NotMSSError
from .io import load_system, matrix_value, read_key_values, write_rows
from .lyapunov import solve_lyapunov
from .riccati import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    RiccatiSolution,
    mss_spectral_radius,
    solve_riccati,
)
from .system import SystemModel, kron_quadratic, block_transpose, sigma_bar, spectral_norm

log = logging.getLogger(__name__)

NOISE_KINDS = ("gaussian", "uniform-sphere", "zero")
OVERFLOW_NORM = 1e150
SAMPLE_CHUNK = 1_000_000
DEFAULT_GRID = (100, 1000, 10_000, 100_000)


# -- random streams and noise --------------------------------------------------

def trial_rng(seed: int, ordinal: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(ordinal,)))


def covariance_root(Sigma) -> np.ndarray:
    """Symmetric square root; works for singular PSD ``Sigma``."""
    ev, V = np.linalg.eigh(np.atleast_2d(Sigma))
    return (V * np.sqrt(np.clip(ev, 0.0, None))) @ V.T


def draw_noise(rng: np.random.Generator, root: np.ndarray, n: int, kind: str = "gaussian") -> np.ndarray:
    """``n`` zero-mean draws with covariance ``root @ root.T``, shape ``(n, n_w)``."""
    n_w = root.shape[0]
    if kind == "zero":
        return np.zeros((n, n_w))
    z = rng.standard_normal((n, n_w))
    if kind == "uniform-sphere":
        # uniform on the sphere of radius sqrt(n_w) has identity covariance
        z *= math.sqrt(n_w) / np.linalg.norm(z, axis=1, keepdims=True)
    elif kind != "gaussian":
        raise InvalidInputError(f"unknown noise distribution {kind!r}; choose from {NOISE_KINDS}")
    return z @ root.T


def sampled_covariance(rng: np.random.Generator, Sigma, N: int, kind: str = "gaussian",
                       chunk: int = SAMPLE_CHUNK) -> np.ndarray:
    """Sample covariance of ``N`` fresh draws, accumulated in fixed-size chunks."""
    root = covariance_root(Sigma)
    n_w = root.shape[0]
    acc = np.zeros((n_w, n_w))
    left = N
    while left > 0:
        m = min(chunk, left)
        W = draw_noise(rng, root, m, kind)
        acc += W.T @ W
        left -= m
    acc /= N
    return 0.5 * (acc + acc.T)


# -- simulation -----------------------------------------------------------------

@dataclass
class Trajectory:
    states: np.ndarray
    cost: float
    diverged: bool


def simulate_trajectory(system: SystemModel, K, x0, horizon: int, rng: np.random.Generator,
                        kind: str = "gaussian") -> Trajectory:
    """Roll out ``u = K x`` for ``horizon`` steps and sum the stage costs.

    States whose norm exceeds 1e150 stop the rollout with ``diverged=True``.
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    L = system.closed_loop_blocks(K)
    W = draw_noise(rng, covariance_root(system.Sigma), horizon, kind)
    Qc = system.Q + K.T @ system.R @ K
    x = np.asarray(x0, dtype=float).ravel().copy()
    states = [x]
    cost = 0.0
    for k in range(horizon):
        cost += float(x @ Qc @ x)
        x = L[0] @ x + np.einsum("i,ijk,k->j", W[k], L[1:], x)
        states.append(x)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > OVERFLOW_NORM:
            return Trajectory(np.array(states), cost, True)
    return Trajectory(np.array(states), cost, False)


def adaptive_horizon(system: SystemModel, K, x0, rel: float = 1e-10, max_horizon: int = 100_000) -> int:
    """First ``k`` at which ``E||x_k||^2 < rel * ||x0||^2``, capped at ``max_horizon``."""
    x0 = np.asarray(x0, dtype=float).ravel()
    Ls = block_transpose(system.closed_loop_blocks(K))
    X = np.outer(x0, x0)
    target = rel * float(x0 @ x0)
    for k in range(max_horizon):
        if np.trace(X) < target:
            return max(k, 1)
        X = kron_quadratic(Ls, system.Sigma_bar, X, Ls)
    return max_horizon


@dataclass
class MonteCarloEstimate:
    mean: float
    stderr: float
    n_trajectories: int
    horizon: int
    n_diverged: int


def monte_carlo_cost(system: SystemModel, K, x0, n_trajectories: int, rng: np.random.Generator,
                     horizon: Optional[int] = None, kind: str = "gaussian",
                     batch: int = 20_000) -> MonteCarloEstimate:
    """Trajectory-averaged cost, vectorized over batches of rollouts."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if horizon is None:
        horizon = adaptive_horizon(system, K, x0)
    L = system.closed_loop_blocks(K)
    root = covariance_root(system.Sigma)
    Qc = system.Q + K.T @ system.R @ K
    x0 = np.asarray(x0, dtype=float).ravel()
    costs = np.empty(n_trajectories)
    diverged = 0
    done = 0
    while done < n_trajectories:
        m = min(batch, n_trajectories - done)
        X = np.tile(x0, (m, 1))
        c = np.zeros(m)
        for _ in range(horizon):
            c += np.einsum("mi,ij,mj->m", X, Qc, X)
            Y = np.einsum("kij,mj->mki", L, X)
            W = draw_noise(rng, root, m, kind)
            X = Y[:, 0] + np.einsum("mk,mki->mi", W, Y[:, 1:])
        bad = ~np.isfinite(c) | (np.linalg.norm(X, axis=1) > OVERFLOW_NORM)
        diverged += int(bad.sum())
        costs[done:done + m] = c
        done += m
    return MonteCarloEstimate(
        mean=float(costs.mean()),
        stderr=float(costs.std(ddof=1) / math.sqrt(n_trajectories)) if n_trajectories > 1 else math.inf,
        n_trajectories=n_trajectories,
        horizon=horizon,
        n_diverged=diverged,
    )


# -- experiment configuration -----------------------------------------------------

@dataclass
class ExperimentConfig:
    system: Optional[str] = None
    noise: str = "gaussian"
    n_grid: tuple = DEFAULT_GRID
    trials: int = 50
    seed: int = 0
    beta: float = DEFAULT_BETA
    epsilon: float = DEFAULT_EPSILON
    sigma_sq: float = DEFAULT_SIGMA_SQ
    x0: Optional[tuple] = None
    mc_horizon: Optional[int] = None  # None: adaptive
    mc_trajectories: int = 10_000
    out: Optional[str] = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    workers: int = 1

    def validate(self, n_x: Optional[int] = None) -> None:
        grid = list(self.n_grid)
        if not grid or any(int(n) < 1 for n in grid):
            raise InvalidInputError("n_grid must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidInputError("n_grid must be strictly increasing")
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if self.noise not in ("gaussian", "uniform-sphere"):
            raise InvalidInputError(f"noise must be 'gaussian' or 'uniform-sphere', got {self.noise!r}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        if self.x0 is not None:
            x0 = np.asarray(self.x0, dtype=float)
            if not np.any(x0):
                raise InvalidInputError("x0 must be nonzero")
            if n_x is not None and x0.size != n_x:
                raise InvalidInputError(f"x0 has {x0.size} entries, system has n_x = {n_x}")
        # parameter ranges are checked by confidence_radius
        confidence_radius(self.beta, self.epsilon, 1, 1, self.sigma_sq)


_INT_KEYS = {"trials", "seed", "max_iter", "workers", "mc_trajectories"}
_FLOAT_KEYS = {"beta", "epsilon", "sigma_sq", "tol"}


def _parse_number_list(value: str) -> list:
    parts = value.strip().strip("[]").replace(";", ",").split(",")
    return [float(p) for p in parts if p.strip()]


def load_config(path) -> ExperimentConfig:
    """Read an experiment config (``key = value``; paths relative to the file)."""
    path = Path(path)
    kv = read_key_values(path)
    cfg = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    for key, value in kv.items():
        if key not in known:
            raise InvalidInputError(f"{path}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                setattr(cfg, key, int(float(value)) if "e" in value.lower() else int(value))
            elif key in _FLOAT_KEYS:
                setattr(cfg, key, float(value))
            elif key == "n_grid":
                cfg.n_grid = tuple(int(round(v)) for v in _parse_number_list(value))
            elif key == "x0":
                if value.strip().startswith("[") or "," in value or _is_number(value):
                    cfg.x0 = tuple(_parse_number_list(value))
                else:
                    cfg.x0 = tuple(matrix_value(value, path.parent).ravel())
            elif key == "mc_horizon":
                cfg.mc_horizon = None if value.strip() == "adaptive" else int(value)
            elif key in ("system", "out"):
                p = Path(value)
                setattr(cfg, key, str(p if p.is_absolute() else path.parent / p))
            else:
                setattr(cfg, key, value.strip())
        except ValueError as exc:
            if isinstance(exc, InvalidInputError):
                raise
            raise InvalidInputError(f"{path}: bad value for {key!r}: {value!r}") from exc
    return cfg


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


# -- trials --------------------------------------------------------------------

@dataclass
class TrialRecord:
    N: int
    trial: int
    status: str
    sigma_m: Optional[float] = None
    delta_lower: Optional[float] = None
    delta_upper: Optional[float] = None
    t_sig: Optional[float] = None
    eps_P: Optional[float] = None
    ricpcond_ok: bool = False
    muP_ok: bool = False
    eps_K: Optional[float] = None
    stab_ok: bool = False
    mss_gate_ok: bool = False
    subopt_bound: Optional[float] = None
    eps_P_tsig: Optional[float] = None
    eps_K_tsig: Optional[float] = None
    subopt_bound_tsig: Optional[float] = None
    tsig_covers: Optional[bool] = None
    actual_dP: Optional[float] = None
    actual_dK: Optional[float] = None
    actual_subopt: Optional[float] = None
    khat_radius: Optional[float] = None
    khat_mss: Optional[bool] = None
    viol_P: bool = False
    viol_K: bool = False
    viol_subopt: bool = False
    viol_stab: bool = False

    @property
    def valid(self) -> bool:
        return self.status == "ok" and self.eps_P is not None and self.subopt_bound is not None

    @property
    def any_violation(self) -> bool:
        return self.viol_P or self.viol_K or self.viol_subopt or self.viol_stab

    def as_row(self) -> dict:
        return asdict(self)


TRIAL_FIELDS = [f.name for f in fields(TrialRecord)]


@dataclass
class Nominal:
    """Per-system quantities computed once and shared by every trial."""

    system: SystemModel
    solution: RiccatiSolution
    constants: ConstantsTable
    x0: np.ndarray
    cost: float

    @classmethod
    def build(cls, system: SystemModel, x0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        sol = solve_riccati(system, tol=tol, max_iter=max_iter)
        c = compute_constants(system, sol)
        x0 = np.ones(system.n_x) / math.sqrt(system.n_x) if x0 is None else np.asarray(x0, float).ravel()
        return cls(system, sol, c, x0, exact_cost(system, system.Sigma_bar, sol.K, x0))


def exact_cost(system: SystemModel, Sigma_bar, K, x0) -> float:
    """``tr[(Q + K^T R K) X]`` with ``X`` the adjoint Lyapunov solution for ``x0 x0^T``."""
    K = np.atleast_2d(K)
    x0 = np.asarray(x0, dtype=float).ravel()
    X = solve_lyapunov(system, Sigma_bar, K, np.outer(x0, x0), adjoint=True).X
    return float(np.trace((system.Q + K.T @ system.R @ K) @ X))


def evaluate_estimate(nominal: Nominal, Sigma_hat, N: int, trial: int = 0,
                      beta=DEFAULT_BETA, epsilon=DEFAULT_EPSILON, sigma_sq=DEFAULT_SIGMA_SQ,
                      tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> TrialRecord:
    """Certify and measure the empirical controller built from ``Sigma_hat``."""
    system, c = nominal.system, nominal.constants
    n_bar = min(system.n_x, system.n_u)
    x0_norm = float(np.linalg.norm(nominal.x0))
    band = tightest_band(system.Sigma, Sigma_hat)
    t_sig = confidence_radius(beta, epsilon, system.n_w, N, sigma_sq)
    rec = TrialRecord(N=N, trial=trial, status="ok", sigma_m=band.sigma_m,
                      delta_lower=band.delta_lower, delta_upper=band.delta_upper, t_sig=t_sig,
                      tsig_covers=band.sigma_m <= t_sig)

    report = compute_bounds(c, band.sigma_m, n_bar, x0_norm)
    rec.eps_P, rec.ricpcond_ok, rec.muP_ok = report.eps_P, report.cond_ricpcond_ok, report.cond_muP_ok
    rec.eps_K, rec.stab_ok, rec.mss_gate_ok = report.eps_K, report.cond_stab_ok, report.mss_gate_ok
    rec.subopt_bound = report.subopt_bound
    prior = compute_bounds(c, t_sig, n_bar, x0_norm)
    rec.eps_P_tsig, rec.eps_K_tsig, rec.subopt_bound_tsig = prior.eps_P, prior.eps_K, prior.subopt_bound

    try:
        emp = solve_riccati(system, sigma_bar(Sigma_hat), tol=tol, max_iter=max_iter)
    except MnlqrError as exc:
        log.debug("synthesis failed at N=%d trial=%d: %s", N, trial, exc)
        rec.status = "synthesis_failed"
        return rec

    rec.actual_dP = spectral_norm(emp.P - nominal.solution.P)
    rec.actual_dK = spectral_norm(emp.K - nominal.solution.K)
    rec.khat_radius = mss_spectral_radius(system, system.Sigma_bar, emp.K)
    rec.khat_mss = rec.khat_radius < 1.0
    if rec.khat_mss:
        try:
            rec.actual_subopt = exact_cost(system, system.Sigma_bar, emp.K, nominal.x0) - nominal.cost
        except NotMSSError:
            rec.khat_mss = False
    if not rec.khat_mss:
        rec.actual_subopt = math.inf

    rec.viol_P = rec.eps_P is not None and rec.actual_dP > rec.eps_P
    rec.viol_K = rec.eps_K is not None and rec.eps_P is not None and rec.actual_dK > rec.eps_K
    rec.viol_subopt = rec.subopt_bound is not None and rec.actual_subopt > rec.subopt_bound
    rec.viol_stab = bool(rec.mss_gate_ok and not rec.khat_mss)
    return rec


def run_trial(nominal: Nominal, config: ExperimentConfig, N: int, rng: np.random.Generator,
              trial: int = 0) -> TrialRecord:
    """Draw ``N`` noise samples and evaluate the resulting empirical controller."""
    Sigma_hat = sampled_covariance(rng, nominal.system.Sigma, N, config.noise)
    return evaluate_estimate(nominal, Sigma_hat, N, trial, config.beta, config.epsilon,
                             config.sigma_sq, config.tol, config.max_iter)


def _trial_task(args):
    nominal, config, N, trial, ordinal = args
    return run_trial(nominal, config, N, trial_rng(config.seed, ordinal), trial)


# -- sweep and rate fit ------------------------------------------------------------

def fit_loglog_slope(Ns: Sequence[float], values: Sequence[float]) -> float:
    x = np.log(np.asarray(Ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class SweepResult:
    records: list
    per_n: list
    summary: dict
    warnings: list = field(default_factory=list)

    @property
    def n_violations(self) -> int:
        return sum(r.any_violation for r in self.records)


def summarize(records: Sequence[TrialRecord], grid: Sequence[int]) -> tuple:
    per_n = []
    for N in grid:
        rs = [r for r in records if r.N == N]
        valid = [r for r in rs if r.valid]
        ok = [r for r in rs if r.status == "ok" and r.actual_subopt is not None]
        per_n.append({
            "N": N,
            "trials": len(rs),
            "valid": len(valid),
            "synthesis_failed": sum(r.status != "ok" for r in rs),
            "violations": sum(r.any_violation for r in rs),
            "median_sigma_m": _median([r.sigma_m for r in rs]),
            "t_sig": rs[0].t_sig if rs else None,
            "median_subopt_bound": _median([r.subopt_bound for r in valid]),
            "median_actual_subopt": _median([r.actual_subopt for r in ok]),
        })

    # longest run of grid points, ending at the largest N, where every trial is certified
    fit_rows = []
    for row in reversed(per_n):
        if row["trials"] > 0 and row["valid"] == row["trials"] and row["median_actual_subopt"] is not None:
            fit_rows.append(row)
        else:
            break
    fit_rows.reverse()
    summary = {"fit_points": len(fit_rows), "fit_N_min": None, "fit_N_max": None,
               "bound_slope": None, "actual_slope": None, "status": "ok"}
    warnings = []
    if len(fit_rows) < 3:
        msg = f"rate fit omitted: {len(fit_rows)} fully certified N values (need at least 3)"
        summary["status"] = "warning: " + msg
        warnings.append(msg)
    else:
        Ns = [r["N"] for r in fit_rows]
        summary["fit_N_min"], summary["fit_N_max"] = Ns[0], Ns[-1]
        summary["bound_slope"] = fit_loglog_slope(Ns, [r["median_subopt_bound"] for r in fit_rows])
        actual = [r["median_actual_subopt"] for r in fit_rows]
        if all(a > 0 and math.isfinite(a) for a in actual):
            summary["actual_slope"] = fit_loglog_slope(Ns, actual)
    return per_n, summary, warnings


def _median(values):
    vals = [v for v in values if v is not None]
    return float(np.median(vals)) if vals else None


def run_sweep(config: ExperimentConfig, system: Optional[SystemModel] = None,
              nominal: Optional[Nominal] = None) -> SweepResult:
    """Run every ``(N, trial)`` cell of the grid and fit the decay rate of the medians."""
    if nominal is None:
        if system is None:
            if config.system is None:
                raise InvalidInputError("config has no system")
            system = load_system(config.system)
        config.validate(system.n_x)
        nominal = Nominal.build(system, config.x0, config.tol, config.max_iter)
    else:
        config.validate(nominal.system.n_x)
    grid = [int(n) for n in config.n_grid]
    tasks = [(nominal, config, N, t, i * config.trials + t)
             for i, N in enumerate(grid) for t in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_trial_task, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))
    else:
        records = [_trial_task(t) for t in tasks]
    per_n, summary, warnings = summarize(records, grid)
    for w in warnings:
        log.warning(w)
    result = SweepResult(records, per_n, summary, warnings)
    if config.out:
        write_sweep(result, config.out)
    return result


def summary_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + "_summary" + (out.suffix or ".csv"))


def write_sweep(result: SweepResult, out) -> None:
    write_rows(out, [r.as_row() for r in result.records], TRIAL_FIELDS)
    rows = [{"kind": "per_N", **row} for row in result.per_n]
    rows.append({"kind": "rate_fit", **result.summary})
    names = ["kind"] + list(result.per_n[0].keys()) + list(result.summary.keys())
    write_rows(summary_path(out), rows, names)


def deterministic_rate(constants: ConstantsTable, c: float, grid: Sequence[float],
                       x0_norm: float = 1.0, n_bar: int = 1) -> tuple:
    """Suboptimality bounds along the schedule ``sigma_m = c / sqrt(N)`` and their log-log slope."""
    bounds = []
    for N in grid:
        rep = compute_bounds(constants, c / math.sqrt(N), n_bar, x0_norm)
        if rep.subopt_bound is None:
            raise InvalidInputError(f"bound chain invalid at N={N} (sigma_m={c / math.sqrt(N):.3g})")
        bounds.append(rep.subopt_bound)
    return bounds, fit_loglog_slope(grid, bounds)
