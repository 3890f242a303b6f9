"""Gaussian driving signals on uniform grids and their rough-path lifts.

A driver is a discrete path ``X`` on a uniform grid together with second-level
blocks (one n-by-n matrix per grid segment).  All two-parameter quantities
(increments, second-level blocks, Hoelder norms, control values) are derived
from the per-segment data through Chen's relation, so every lift produced here
is Chen-consistent by construction.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridError, NumericalFailure

__all__ = [
    "GridPath",
    "RoughPathGrid",
    "GreedyPartition",
    "HoelderNorms",
    "sample_fbm",
    "lift_piecewise_linear",
    "hoelder_norms",
    "control_value",
    "control_profile",
    "control_segment_cost",
    "greedy_partition",
    "translate",
    "cm_variation",
    "restrict",
    "write_path_csv",
    "read_path_csv",
    "write_levy_csv",
    "read_rough_csv",
]

# Relative tolerance for matching a time to a grid node.
_GRID_RTOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridPath:
    """A path sampled on a uniform time grid.

    times has shape (m+1,), values has shape (m+1, n) with n the channel
    count.  Spacing must be uniform and values finite.
    """

    times: np.ndarray
    values: np.ndarray
    seed: tuple | None = None

    def __post_init__(self):
        t = _readonly(np.asarray(self.times, dtype=float))
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        v = _readonly(v)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or len(t) < 2:
            raise GridError("grid needs at least two time points")
        if v.shape[0] != len(t):
            raise GridError("times/values length mismatch")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise GridError("times must be strictly increasing")
        if not np.allclose(dt, dt[0], rtol=1e-8, atol=0.0):
            raise GridError("grid spacing must be uniform")
        if not np.all(np.isfinite(v)):
            raise GridError("path values must be finite")

    @property
    def m(self) -> int:
        return len(self.times) - 1

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return float((self.times[-1] - self.times[0]) / self.m)

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is off the grid."""
        j = int(round((t - self.times[0]) / self.dt))
        scale = max(1.0, abs(self.times[-1] - self.times[0]))
        if j < 0 or j > self.m or abs(self.times[j] - t) > _GRID_RTOL * scale:
            raise GridError(f"time {t} is not a grid point")
        return j


def sample_fbm(H: float, n_channels: int, m: int, T: float, seed) -> GridPath:
    """Sample fractional Brownian motion on m uniform steps over [0, T].

    Uses circulant embedding (Davies-Harte) of the increment covariance, so
    the returned increments carry the exact stationary Gaussian law.  Channels
    are independent; channel c draws from the c-th spawned child of
    ``numpy.random.SeedSequence(seed)``, which makes the output reproducible
    and safe to split across replicates by seeding with ``[base, replicate]``.

    m must be a power of two; H must lie in (0, 1).  H outside the rough
    regime (1/3, 1/2] is accepted with a warning (H > 1/2 is handy for
    Young-regime sanity checks).
    """
    if not (0.0 < H < 1.0):
        raise ValueError(f"Hurst parameter must be in (0,1), got {H}")
    if not (1.0 / 3.0 < H <= 0.5):
        warnings.warn(
            f"H={H} is outside the rough regime (1/3, 1/2]; proceeding anyway",
            stacklevel=2,
        )
    if m < 2 or (m & (m - 1)) != 0:
        raise ValueError(f"step count must be a power of two, got {m}")
    if n_channels < 1:
        raise ValueError("need at least one channel")
    if T <= 0:
        raise ValueError("horizon must be positive")

    eigs = _circulant_eigenvalues(_fgn_covariance(H, m))
    dt = T / m
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_channels)
    incs = np.empty((m, n_channels))
    for c in range(n_channels):
        rng = np.random.default_rng(children[c])
        incs[:, c] = _davies_harte_draw(eigs, m, rng) * dt**H
    values = np.vstack([np.zeros((1, n_channels)), np.cumsum(incs, axis=0)])
    times = np.linspace(0.0, T, m + 1)
    seed_rec = tuple(np.atleast_1d(seed).tolist()) if seed is not None else None
    return GridPath(times=times, values=values, seed=seed_rec)


def _fgn_covariance(H: float, m: int) -> np.ndarray:
    """Autocovariance of unit-spacing fractional Gaussian noise at lags 0..m-1."""
    k = np.arange(m, dtype=float)
    return 0.5 * ((k + 1) ** (2 * H) + np.abs(k - 1) ** (2 * H) - 2 * k ** (2 * H))


def _circulant_eigenvalues(rho: np.ndarray) -> np.ndarray:
    """Eigenvalues of the 2m-circulant embedding of a covariance sequence.

    Raises NumericalFailure if the embedding is not nonnegative definite
    (cannot happen for fractional Gaussian noise, but is checked)."""
    m = len(rho)
    first_row = np.concatenate([rho, [0.0], rho[1:][::-1]])
    eigs = np.fft.fft(first_row).real
    floor = -1e-12 * max(1.0, float(eigs.max()))
    if eigs.min() < floor:
        raise NumericalFailure(
            f"circulant embedding has negative eigenvalue {eigs.min():.3e}"
        )
    return np.clip(eigs, 0.0, None)


def _davies_harte_draw(eigs: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """One length-m stationary Gaussian draw given circulant eigenvalues."""
    z = np.empty(2 * m, dtype=complex)
    z[0] = rng.standard_normal()
    z[m] = rng.standard_normal()
    v = rng.standard_normal((m - 1, 2))
    z[1:m] = (v[:, 0] + 1j * v[:, 1]) / math.sqrt(2.0)
    z[m + 1 :] = np.conj(z[1:m][::-1])
    return math.sqrt(2 * m) * np.fft.ifft(np.sqrt(eigs) * z).real[:m]


@dataclass(frozen=True)
class RoughPathGrid:
    """A discrete rough path: first level on the grid plus per-segment blocks.

    ``levy[i]`` is the second-level block over [t_i, t_{i+1}].  Blocks over
    longer intervals are composed through Chen's relation, so Chen consistency
    holds exactly (up to floating-point) for every split point.
    """

    base: GridPath
    levy: np.ndarray
    gamma_cap: float = 0.5

    def __post_init__(self):
        lv = _readonly(np.asarray(self.levy, dtype=float))
        object.__setattr__(self, "levy", lv)
        m, n = self.base.m, self.base.n
        if lv.shape != (m, n, n):
            raise GridError(f"levy blocks must have shape {(m, n, n)}, got {lv.shape}")
        if not np.all(np.isfinite(lv)):
            raise GridError("levy blocks must be finite")

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def m(self) -> int:
        return self.base.m

    @cached_property
    def _chen_prefix(self) -> np.ndarray:
        """A[j] = second level over [t_0, t_j], built by Chen recursion."""
        v = self.base.values
        d = np.diff(v, axis=0)
        cross = np.einsum("ja,jb->jab", v[:-1] - v[0], d)
        out = np.zeros((self.m + 1, self.n, self.n))
        np.cumsum(self.levy + cross, axis=0, out=out[1:])
        return out

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.base.values[j] - self.base.values[i]

    def second_level(self, i: int, j: int) -> np.ndarray:
        """Block over [t_i, t_j] composed via Chen's relation."""
        v = self.base.values
        a = self._chen_prefix
        return a[j] - a[i] - np.outer(v[i] - v[0], v[j] - v[i])

    def second_level_from(self, i: int, js: np.ndarray) -> np.ndarray:
        """Blocks over [t_i, t_j] for an array of right endpoints."""
        v = self.base.values
        a = self._chen_prefix
        return a[js] - a[i] - np.einsum("a,jb->jab", v[i] - v[0], v[js] - v[i])


def lift_piecewise_linear(path: GridPath, gamma_cap: float = 0.5) -> RoughPathGrid:
    """Canonical geometric lift of the piecewise-linear interpolant.

    Over a single segment the iterated integral of a straight line is exactly
    half the outer square of the increment, so the per-segment Levy area
    vanishes and the symmetric-part identity holds exactly."""
    d = np.diff(path.values, axis=0)
    levy = 0.5 * np.einsum("ja,jb->jab", d, d)
    return RoughPathGrid(base=path, levy=levy, gamma_cap=gamma_cap)


@dataclass(frozen=True)
class HoelderNorms:
    x: float
    xx: float
    rho: float


def _interval_indices(path: GridPath, interval) -> tuple[int, int]:
    if interval is None:
        return 0, path.m
    s, t = interval
    a, b = path.index_of(s), path.index_of(t)
    if a > b:
        raise GridError("interval endpoints out of order")
    return a, b


def hoelder_norms(rough: RoughPathGrid, gamma: float, interval=None) -> HoelderNorms:
    """Exact suprema of |dX|/(t-s)^gamma and |XX|/(t-s)^(2 gamma) over grid pairs.

    Also returns rho = 1 + |X| + |XX|, the combined rough-path scale."""
    a, b = _interval_indices(rough.base, interval)
    if a == b:
        raise GridError("empty interval")
    t = rough.base.times
    v = rough.base.values
    best_x = 0.0
    best_xx = 0.0
    for i in range(a, b):
        js = np.arange(i + 1, b + 1)
        dts = t[js] - t[i]
        dn = np.linalg.norm(v[js] - v[i], axis=1)
        xxn = np.linalg.norm(
            rough.second_level_from(i, js).reshape(len(js), -1), axis=1
        )
        best_x = max(best_x, float(np.max(dn / dts**gamma)))
        best_xx = max(best_xx, float(np.max(xxn / dts ** (2 * gamma))))
    return HoelderNorms(x=best_x, xx=best_xx, rho=1.0 + best_x + best_xx)


def _cost_rows(
    rough: RoughPathGrid, j: int, i_arr: np.ndarray, p1: float, p2: float, q: float
) -> np.ndarray:
    """Control summand over the last interval [t_i, t_j] for candidate i."""
    t = rough.base.times
    v = rough.base.values
    pref = rough._chen_prefix
    dts = t[j] - t[i_arr]
    dn = np.linalg.norm(v[j] - v[i_arr], axis=1)
    blocks = (
        pref[j] - pref[i_arr] - np.einsum("ia,ib->iab", v[i_arr] - v[0], v[j] - v[i_arr])
    )
    xxn = np.linalg.norm(blocks.reshape(len(i_arr), -1), axis=1)
    return dts ** (-q) * (dn**p1 + xxn**p2)


def control_segment_cost(
    rough: RoughPathGrid, gamma: float, eta1: float, i: int, j: int
) -> float:
    """The one-interval summand of the control functional (shared by the DP
    and by exhaustive-search oracles, so comparisons can be exact)."""
    p1 = 1.0 / (gamma - eta1)
    return float(_cost_rows(rough, j, np.array([i]), p1, 0.5 * p1, eta1 * p1)[0])


def control_profile(
    rough: RoughPathGrid,
    gamma: float,
    eta1: float,
    a: int,
    b: int,
    stop_above: float | None = None,
) -> np.ndarray:
    """W(t_a, t_j) for j = a..b by dynamic programming over the last breakpoint.

    The supremum defining W ranges over grid partitions only; on the grid the
    DP is exact because every partition has a last interval.  W(t_a, .) is
    nondecreasing, so if ``stop_above`` is given the computation stops at the
    first j whose value exceeds it (remaining entries are +inf)."""
    if not (0.0 <= eta1 < gamma):
        raise ValueError(f"need 0 <= eta1 < gamma, got eta1={eta1}, gamma={gamma}")
    p1 = 1.0 / (gamma - eta1)
    p2 = 0.5 * p1
    q = eta1 * p1
    best = np.full(b - a + 1, np.inf)
    best[0] = 0.0
    for j in range(a + 1, b + 1):
        costs = _cost_rows(rough, j, np.arange(a, j), p1, p2, q)
        best[j - a] = float(np.max(best[: j - a] + costs))
        if stop_above is not None and best[j - a] > stop_above:
            break
    return best


def control_value(
    rough: RoughPathGrid, gamma: float, eta1: float, s: float, t: float
) -> float:
    """Exact grid supremum of the two-level control functional on [s, t]."""
    a = rough.base.index_of(s)
    b = rough.base.index_of(t)
    if a > b:
        raise GridError("need s <= t")
    if a == b:
        return 0.0
    return float(control_profile(rough, gamma, eta1, a, b)[-1])


@dataclass(frozen=True)
class GreedyPartition:
    """Greedy time points: each step extends as far as the control threshold allows."""

    points: np.ndarray
    chi: float
    eta1: float
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "points", _readonly(self.points))

    @property
    def N(self) -> int:
        return len(self.points) - 1


def greedy_partition(
    rough: RoughPathGrid,
    gamma: float,
    eta1: float,
    chi: float,
    interval=None,
) -> GreedyPartition:
    """Greedy points on the grid: tau_{n+1} is the largest grid point with
    W(tau_n, tau)^(gamma - eta1) <= chi; stops once the right endpoint is hit."""
    if chi <= 0:
        raise ValueError("chi must be positive")
    a, b = _interval_indices(rough.base, interval)
    if a == b:
        raise GridError("empty interval")
    w_limit = chi ** (1.0 / (gamma - eta1))
    idx = [a]
    cur = a
    while cur < b:
        prof = control_profile(rough, gamma, eta1, cur, b, stop_above=w_limit)
        over = np.nonzero(prof > w_limit)[0]
        if len(over) == 0:
            nxt = b
        else:
            if over[0] == 1:
                raise GridError(
                    f"grid too coarse for chi={chi}: single step "
                    f"[{rough.base.times[cur]:.6g}, {rough.base.times[cur + 1]:.6g}] "
                    "already violates the threshold"
                )
            nxt = cur + int(over[0]) - 1
        idx.append(nxt)
        cur = nxt
    return GreedyPartition(
        points=rough.base.times[np.array(idx)], chi=chi, eta1=eta1, gamma=gamma
    )


def translate(
    rough: RoughPathGrid, h: GridPath, gamma: float, gamma_prime: float
) -> RoughPathGrid:
    """Shift the rough path by a Cameron-Martin style perturbation h.

    h must be piecewise linear on the same grid; the three cross integrals are
    Young integrals and are computed exactly per segment (each equals half the
    outer product of the two increments there)."""
    if gamma + gamma_prime <= 1:
        raise ValueError("translation needs gamma + gamma_prime > 1")
    if h.values.shape != rough.base.values.shape or not np.allclose(
        h.times, rough.base.times, rtol=1e-10, atol=0.0
    ):
        raise GridError("perturbation must live on the same grid")
    dx = np.diff(rough.base.values, axis=0)
    dh = np.diff(h.values, axis=0)
    cross = 0.5 * (
        np.einsum("ja,jb->jab", dh, dh)
        + np.einsum("ja,jb->jab", dh, dx)
        + np.einsum("ja,jb->jab", dx, dh)
    )
    base = GridPath(
        times=rough.base.times,
        values=rough.base.values + h.values,
        seed=rough.base.seed,
    )
    return RoughPathGrid(base=base, levy=rough.levy + cross, gamma_cap=rough.gamma_cap)


def cm_variation(h: GridPath, gamma_prime: float, eta1: float) -> float:
    """First-level-only control functional of a smooth shift over its full span.

    Same dynamic program as the two-level control, with exponent
    1/(gamma_prime - eta1) on the increments."""
    if not (0.0 <= eta1 < gamma_prime):
        raise ValueError("need 0 <= eta1 < gamma_prime")
    p = 1.0 / (gamma_prime - eta1)
    q = eta1 * p
    t = h.times
    v = h.values
    m = h.m
    best = np.zeros(m + 1)
    for j in range(1, m + 1):
        i_arr = np.arange(0, j)
        dts = t[j] - t[i_arr]
        dn = np.linalg.norm(v[j] - v[i_arr], axis=1)
        best[j] = float(np.max(best[:j] + dts ** (-q) * dn**p))
    return float(best[-1])


def restrict(rough: RoughPathGrid, s: float, t: float) -> RoughPathGrid:
    """Restriction of a rough path to a grid subinterval (times kept absolute)."""
    a = rough.base.index_of(s)
    b = rough.base.index_of(t)
    if a >= b:
        raise GridError("empty restriction")
    base = GridPath(
        times=rough.base.times[a : b + 1],
        values=rough.base.values[a : b + 1],
        seed=rough.base.seed,
    )
    return RoughPathGrid(base=base, levy=rough.levy[a:b], gamma_cap=rough.gamma_cap)


# ---------------------------------------------------------------------------
# serialization: full round-trip precision CSV
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_path_csv(path: GridPath, fname) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(path.n)])
        for j in range(path.m + 1):
            w.writerow([_fmt(path.times[j])] + [_fmt(x) for x in path.values[j]])


def read_path_csv(fname) -> GridPath:
    with open(fname, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    return GridPath(times=data[:, 0], values=data[:, 1:])


def write_levy_csv(rough: RoughPathGrid, fname) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "a", "b", "XX_ab"])
        for i in range(rough.m):
            for a in range(rough.n):
                for b in range(rough.n):
                    w.writerow([i, a, b, _fmt(rough.levy[i, a, b])])


def read_rough_csv(path_fname, levy_fname, gamma_cap: float = 0.5) -> RoughPathGrid:
    base = read_path_csv(path_fname)
    levy = np.zeros((base.m, base.n, base.n))
    with open(levy_fname, newline="") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        i, a, b = int(row[0]), int(row[1]), int(row[2])
        levy[i, a, b] = float(row[3])
    return RoughPathGrid(base=base, levy=levy, gamma_cap=gamma_cap)
