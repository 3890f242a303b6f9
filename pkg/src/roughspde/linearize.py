"""Linearized flow along a base trajectory, Galerkin cocycles, Lyapunov
spectra by sequential QR, and stability probes.

The tangent equation shares the Picard machinery of the solver; its rough
integrand is DG(Z)[zeta] with derivative blocks

    DG_a(Z)[ DG_b(Z)[zeta] ] + D^2 G_a(Z)[ G_b(Z), zeta ]

along the base Z.  Because the equation is linear, whole frames of initial
vectors are iterated as one batch.

Lyapunov exponents are time averages over one long trajectory; the stable
directions handed to ``stable_direction_check`` are the trailing QR frame,
which is a standard numerical proxy for the non-positive Oseledets
complement and is labeled as such in every report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .controlled import ControlledPath
from .driver import GridPath, RoughPathGrid, lift_piecewise_linear, sample_fbm
from .errors import ConfigError, GridError, NumericalFailure
from .solver import MildSolution, ProblemSpec, SolverConfig, solve_mild
from .spectral import SpectralField, _coeff_norm
from .util import fmt, linreg

__all__ = [
    "TangentPath",
    "LyapunovReport",
    "DriverConfig",
    "solve_linearized",
    "build_cocycle_matrix",
    "lyapunov_spectrum",
    "stability_probe",
    "stable_direction_check",
]


@dataclass(frozen=True)
class TangentPath:
    """Tangent trajectory zeta with derivative structure DG(Z)[zeta]."""

    basis: object
    times: np.ndarray
    zeta: np.ndarray       # (M+1, C)
    derivative: np.ndarray  # (M+1, n, C)
    alpha: float
    gamma: float

    def field(self, j: int) -> SpectralField:
        return SpectralField(self.basis, self.zeta[j])

    def as_controlled(self) -> ControlledPath:
        return ControlledPath(
            basis=self.basis,
            times=self.times,
            z=self.zeta,
            zprime=self.derivative,
            alpha=self.alpha,
            gamma=self.gamma,
        )


def _tangent_build(problem: ProblemSpec, base_z: np.ndarray):
    """Integrand factory for the linear equation along a frozen base slice.

    base_z: (L+1, C).  The returned callable maps zeta (L+1, B, C) to
    (f, y, yprime) with f = DF(Z)[zeta], y_a = DG_a(Z)[zeta] and the
    second-level blocks above."""
    basis = problem.basis
    drift = problem.drift
    diff = problem.diffusion
    n = diff.n_channels
    zb = base_z[:, None, :]
    g_base = diff.apply(basis, zb)  # (L+1, 1, n, C)

    def build(zeta):
        f = None if drift.is_zero else drift.d_apply(basis, zb, zeta)
        y = diff.d_apply(basis, zb, zeta)
        cols = []
        for b in range(n):
            first = diff.d_apply(basis, zb, y[..., b, :])
            second = diff.d2_apply(basis, zb, g_base[..., b, :], zeta)
            cols.append(first + second)
        yp = np.stack(cols, axis=-2)
        return f, y, yp

    return build


def _base_slice(base: MildSolution, rough: RoughPathGrid, interval):
    traj = base.trajectory
    off = rough.base.index_of(float(traj.times[0]))
    if interval is None:
        ia, ib = off, off + traj.m
    else:
        ia = rough.base.index_of(interval[0])
        ib = rough.base.index_of(interval[1])
    la, lb = ia - off, ib - off
    if la < 0 or lb > traj.m or la >= lb:
        raise GridError("base trajectory does not cover the interval")
    return ia, ib, la, lb


def _segment_indices(base: MildSolution, rough: RoughPathGrid, ia: int, ib: int):
    """Greedy points of the base solve restricted to [ia, ib], as indices."""
    pts = [rough.base.index_of(p) for p in base.partition.points]
    inner = [i for i in pts if ia < i < ib]
    return [ia] + inner + [ib]


def _solve_tangent_batch(
    problem: ProblemSpec,
    rough: RoughPathGrid,
    base: MildSolution,
    zeta0: np.ndarray,
    interval=None,
    config: SolverConfig | None = None,
):
    """Batched linear solve; zeta0 has shape (B, C)."""
    cfg = config if config is not None else base.config
    ia, ib, la, lb = _base_slice(base, rough, interval)
    seg = _segment_indices(base, rough, ia, ib)
    off = la - ia  # maps absolute grid indices into the base trajectory
    cache: dict = {}

    def make(i: int, j: int):
        # the Picard engine works on absolute-index windows; freeze the base
        # slice that covers the same window
        if (i, j) not in cache:
            cache[(i, j)] = _tangent_build(
                problem, base.trajectory.z[i + off : j + off + 1]
            )
        return cache[(i, j)]

    z, zp, iters = _march_windowed(make, rough, problem, zeta0, seg, cfg)
    return z, zp, iters, (ia, ib)


def _march_windowed(make_build, rough, problem, z0, seg_idx, cfg):
    """Like solver._march but the integrand factory depends on the window."""
    from .solver import _NoContraction, _picard_interval

    basis = problem.basis
    ia0, ib0 = seg_idx[0], seg_idx[-1]
    B, C = z0.shape
    dtype = complex if basis.is_complex else float
    z_out = np.zeros((ib0 - ia0 + 1, B, C), dtype=dtype)
    zp_out = None
    iters = []
    cur = z0.astype(dtype)

    def solve(i, j):
        nonlocal cur, zp_out
        try:
            z, zp, it = _picard_interval(
                make_build(i, j),
                rough,
                problem.semigroup,
                basis,
                problem.alpha,
                problem.gamma,
                cur,
                i,
                j,
                cfg,
            )
        except _NoContraction:
            if j - i < 2:
                raise NumericalFailure(
                    "linearized Picard iteration failed on a single grid step"
                )
            mid = (i + j) // 2
            solve(i, mid)
            solve(mid, j)
            return
        if zp_out is None:
            zp_out = np.zeros((ib0 - ia0 + 1,) + zp.shape[1:], dtype=zp.dtype)
        z_out[i - ia0 : j - ia0 + 1] = z
        zp_out[i - ia0 : j - ia0 + 1] = zp
        iters.append(it)
        cur = z[-1]

    z_out[0] = cur
    for a, b in zip(seg_idx[:-1], seg_idx[1:]):
        solve(a, b)
    return z_out, zp_out, tuple(iters)


def solve_linearized(
    problem: ProblemSpec,
    rough: RoughPathGrid,
    base: MildSolution,
    zeta0: SpectralField,
    interval=None,
    config: SolverConfig | None = None,
) -> TangentPath:
    """Solve the tangent equation along ``base`` from direction ``zeta0``."""
    if zeta0.basis != problem.basis:
        raise ConfigError("tangent direction lives on a different basis")
    dtype = complex if problem.basis.is_complex else float
    z, zp, _, (ia, ib) = _solve_tangent_batch(
        problem, rough, base, zeta0.coeffs[None, :].astype(dtype), interval, config
    )
    return TangentPath(
        basis=problem.basis,
        times=rough.base.times[ia : ib + 1],
        zeta=z[:, 0, :],
        derivative=zp[:, 0, :, :],
        alpha=problem.alpha,
        gamma=problem.gamma,
    )


def _frame_matrix(
    problem: ProblemSpec,
    rough: RoughPathGrid,
    base: MildSolution,
    interval,
    columns: np.ndarray,
    config: SolverConfig | None = None,
) -> np.ndarray:
    """Propagate real-coordinate columns through the tangent flow over the
    interval; returns the end-time frame in real coordinates (d, B)."""
    basis = problem.basis
    if interval is not None and interval[0] == interval[1]:
        return columns.copy()
    zeta0 = basis.from_real(columns.T, alpha=problem.alpha)
    if not basis.is_complex:
        zeta0 = zeta0.astype(float)
    z, _, _, _ = _solve_tangent_batch(
        problem, rough, base, zeta0, interval, config
    )
    return basis.to_real(z[-1], alpha=problem.alpha).T


def build_cocycle_matrix(
    problem: ProblemSpec,
    rough: RoughPathGrid,
    base: MildSolution,
    window,
    K: int,
    config: SolverConfig | None = None,
) -> np.ndarray:
    """K-by-K matrix of the tangent flow over one window in real coordinates
    (ordered by increasing Laplacian eigenvalue).  Column j is the linearized
    solve from the j-th coordinate direction, compressed to the leading K
    coordinates."""
    d = problem.basis.real_dim
    if not (1 <= K <= d):
        raise ConfigError(f"K must lie in [1, {d}]")
    cols = np.eye(d)[:, :K]
    out = _frame_matrix(problem, rough, base, window, cols, config)
    return out[:K, :]


@dataclass(frozen=True)
class DriverConfig:
    H: float | None = 0.45
    m: int = 1024
    T: float = 1.0
    channels: int = 1
    scale: float = 1.0

    def sample(self, seed, gamma_cap: float = 0.5) -> RoughPathGrid:
        if self.H is None or self.scale == 0.0:
            times = np.linspace(0.0, self.T, self.m + 1)
            vals = np.zeros((self.m + 1, self.channels))
            return lift_piecewise_linear(
                GridPath(times=times, values=vals), gamma_cap=gamma_cap
            )
        path = sample_fbm(self.H, self.channels, self.m, self.T, seed)
        if self.scale != 1.0:
            path = GridPath(
                times=path.times, values=self.scale * path.values, seed=path.seed
            )
        return lift_piecewise_linear(path, gamma_cap=gamma_cap)


@dataclass(frozen=True)
class LyapunovReport:
    """Estimated exponents (descending), one-trajectory QR diagnostics, and
    the running-mean trace used for the convergence interval."""

    t0: float
    K: int
    windows: int
    lambdas: np.ndarray
    ci: np.ndarray
    trace: np.ndarray       # (windows, K) running means
    log_r: np.ndarray       # (windows, K) per-window log diagonals
    stable_frame: np.ndarray  # (d, K) trailing QR frame (numerical proxy)

    def to_json(self) -> str:
        return json.dumps(
            {
                "t0": self.t0,
                "K": self.K,
                "W": self.windows,
                "lambdas": [float(v) for v in self.lambdas],
                "ci": [float(v) for v in self.ci],
                "trace": [[float(v) for v in row] for row in self.trace],
                "stable_frame_note": (
                    "trailing QR frame; numerical proxy for the slow/stable "
                    "directions, not an exact Oseledets splitting"
                ),
            },
            indent=2,
        )


def lyapunov_spectrum(
    problem: ProblemSpec,
    driver: DriverConfig,
    z0: SpectralField,
    windows: int,
    t0: float,
    K: int,
    seed=0,
    config: SolverConfig = SolverConfig(),
    q0: np.ndarray | None = None,
) -> LyapunovReport:
    """Exponents of the linearized flow along one long trajectory.

    Sequential QR over ``windows`` windows of length t0: the tangent frame is
    pushed through each window (full Galerkin dimension), orthonormalized,
    and log |diag R| accumulates; lambda_j is the time average.  The reported
    interval is the spread of the running means over the last half of the
    windows, a Cauchy-style diagnostic of convergence."""
    if windows < 10:
        raise ConfigError("need at least 10 windows")
    d = problem.basis.real_dim
    if not (1 <= K <= d):
        raise ConfigError(f"K must lie in [1, {d}]")
    if driver.m % windows != 0:
        raise ConfigError("driver grid must split evenly into windows")
    total_T = windows * t0
    drv = DriverConfig(
        H=driver.H,
        m=driver.m,
        T=total_T,
        channels=driver.channels,
        scale=driver.scale,
    )
    rough = drv.sample(seed, gamma_cap=problem.gamma)
    base = solve_mild(problem, rough, z0, config=config)

    q = np.eye(d)[:, :K] if q0 is None else np.array(q0, dtype=float)
    if q.shape != (d, K):
        raise ConfigError(f"q0 must have shape {(d, K)}")
    logs = np.zeros((windows, K))
    for w in range(windows):
        s, t = w * t0, (w + 1) * t0
        frame = _frame_matrix(problem, rough, base, (s, t), q, config)
        q, r = np.linalg.qr(frame)
        diag = np.diag(r).copy()
        flip = diag < 0
        q[:, flip] *= -1.0
        diag = np.abs(diag)
        if np.any(diag < 1e-300):
            raise NumericalFailure(
                "QR diagonal collapsed below 1e-300; reduce K (mode collapse)"
            )
        logs[w] = np.log(diag)

    running = np.cumsum(logs, axis=0) / (
        np.arange(1, windows + 1)[:, None] * t0
    )
    lambdas = running[-1]
    half = running[windows // 2 :]
    ci = (half.max(axis=0) - half.min(axis=0)) / 2.0
    order = np.argsort(-lambdas)
    return LyapunovReport(
        t0=t0,
        K=K,
        windows=windows,
        lambdas=lambdas[order],
        ci=ci[order],
        trace=running[:, order],
        log_r=logs[:, order],
        stable_frame=q[:, order],
    )


@dataclass(frozen=True)
class DecayReport:
    rows: tuple              # per-path dicts: path_id, rho, fitted_rate, r2
    fraction_decaying: float
    median_rate: float
    lambda1: float

    def write_csv(self, fname) -> None:
        import csv

        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "rho", "fitted_rate", "r2"])
            for r in self.rows:
                w.writerow(
                    [r["path_id"], fmt(r["rho"]), fmt(r["fitted_rate"]), fmt(r["r2"])]
                )


def _sphere_point(basis, alpha: float, rho: float, rng) -> SpectralField:
    v = rng.standard_normal(basis.real_dim)
    v *= rho / np.linalg.norm(v)
    c = basis.from_real(v, alpha=alpha)
    if not basis.is_complex:
        c = c.astype(float)
    return SpectralField(basis, c)


def stability_probe(
    problem: ProblemSpec,
    driver: DriverConfig,
    rho: float,
    horizon: float,
    lambda1: float,
    n_paths: int = 32,
    seed=0,
    burn_in: float = 0.25,
    config: SolverConfig = SolverConfig(),
) -> DecayReport:
    """Decay statistics of the nonlinear flow started on a sphere of radius
    rho around zero (requires F(0) = G(0) = 0 so that zero is stationary).

    Per path, the decay rate is the least-squares slope of log |Z_t|_alpha
    after discarding the first ``burn_in`` fraction of the horizon (fast
    modes bias the early slope); non-decay is reported as data, never as an
    error."""
    rows = []
    m = driver.m
    drv = DriverConfig(
        H=driver.H, m=m, T=horizon, channels=driver.channels, scale=driver.scale
    )
    for i in range(n_paths):
        rough = drv.sample([seed, i], gamma_cap=problem.gamma)
        rng = np.random.default_rng(np.random.SeedSequence([seed, i, 1]))
        xi = _sphere_point(problem.basis, problem.alpha, rho, rng)
        sol = solve_mild(problem, rough, xi, config=config)
        norms = _coeff_norm(sol.trajectory.z, problem.basis, problem.alpha)
        keep = (norms > 1e-280) & (sol.trajectory.times >= burn_in * horizon)
        tsel = sol.trajectory.times[keep]
        rate, _, r2 = linreg(tsel, np.log(norms[keep]))
        rows.append(
            {"path_id": i, "rho": rho, "fitted_rate": rate, "r2": r2}
        )
    rates = np.array([r["fitted_rate"] for r in rows])
    return DecayReport(
        rows=tuple(rows),
        fraction_decaying=float((rates < 0).mean()),
        median_rate=float(np.median(rates)),
        lambda1=lambda1,
    )


def stable_direction_check(
    problem: ProblemSpec,
    driver: DriverConfig,
    z0: SpectralField,
    K: int,
    upsilon: float,
    windows: int = 12,
    t0: float = 0.5,
    magnitudes=(1e-1, 1e-2, 1e-3, 1e-4),
    bound_factor: float = 10.0,
    seed=0,
    config: SolverConfig = SolverConfig(),
) -> dict:
    """Probe contraction along the numerically estimated non-positive
    directions: perturb the stationary point along the trailing QR frame
    (a proxy; no exact Oseledets splitting is constructed), evolve the
    nonlinear flow, and record the largest magnitude for which
    e^(n t0 upsilon) |phi^(n t0)(xi)| stays within bound_factor times its
    start."""
    report = lyapunov_spectrum(
        problem, driver, z0, windows, t0, K, seed=seed, config=config
    )
    neg = report.lambdas < 0
    if not np.any(neg):
        raise NumericalFailure("spectrum has no negative exponents")
    lam_j0 = float(report.lambdas[neg].max())
    if not (0.0 < upsilon < -lam_j0):
        raise ConfigError(
            f"upsilon must lie in (0, {-lam_j0:.4g}) for this spectrum"
        )
    frame = report.stable_frame[:, report.lambdas <= 0]
    drv = DriverConfig(
        H=driver.H,
        m=driver.m,
        T=windows * t0,
        channels=driver.channels,
        scale=driver.scale,
    )
    rough = drv.sample([seed, 77], gamma_cap=problem.gamma)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 78]))
    combo = rng.standard_normal(frame.shape[1])
    direction = frame @ (combo / np.linalg.norm(combo))

    basis = problem.basis
    passing = []
    results = []
    for mag in sorted(magnitudes, reverse=True):
        c = basis.from_real(mag * direction, alpha=problem.alpha)
        if not basis.is_complex:
            c = c.astype(float)
        xi = SpectralField(basis, c)
        try:
            sol = solve_mild(problem, rough, xi, config=config)
        except NumericalFailure:
            results.append({"magnitude": mag, "ok": False, "sup_weighted": None})
            continue
        idx = [rough.base.index_of(n * t0) for n in range(windows + 1)]
        norms = _coeff_norm(
            sol.trajectory.z[idx], basis, problem.alpha
        )
        weighted = np.exp(upsilon * t0 * np.arange(windows + 1)) * norms
        ok = bool(weighted.max() <= bound_factor * mag)
        results.append(
            {"magnitude": mag, "ok": ok, "sup_weighted": float(weighted.max())}
        )
        if ok:
            passing.append(mag)
    return {
        "upsilon": upsilon,
        "lambda_j0": lam_j0,
        "lambdas": [float(v) for v in report.lambdas],
        "largest_passing_magnitude": max(passing) if passing else 0.0,
        "results": results,
        "note": (
            "directions are the trailing QR frame, a numerical proxy for the "
            "non-positive spectral complement"
        ),
    }
