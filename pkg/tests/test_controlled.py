"""Controlled-path tests: remainder reconstruction, the D-norm against hand
computations, and the semigroup rough integral against independent references."""

import numpy as np
import pytest

from roughspde import (
    ControlledPath,
    GridError,
    GridPath,
    Semigroup,
    SpectralBasis,
    dnorm,
    grid_rough_integral,
    lift_piecewise_linear,
    local_expansion_defect,
    sample_fbm,
    sewing_integral,
)
GAMMA = 0.45


def brownian_rough(m, seed, n=1, T=1.0):
    return lift_piecewise_linear(sample_fbm(0.5, n, m, T, seed=seed))


def mode0_basis():
    return SpectralBasis("periodic", 1.0, 0)


def single_mode_dirichlet(mu=0.5):
    # domain length chosen so the one retained eigenvalue equals mu
    return SpectralBasis("dirichlet", np.pi / np.sqrt(mu), 1)


def controlled_from_driver(rough, c=1.0, cprime=0.0, alpha=0.0):
    """Scalar path Z_t = c X_t with constant derivative, on mode zero."""
    b = mode0_basis()
    x = rough.base.values[:, 0]
    z = (c * x)[:, None].astype(complex)
    zp = np.full((len(x), 1, 1), cprime, dtype=complex)
    return ControlledPath(
        basis=b, times=rough.base.times, z=z, zprime=zp, alpha=alpha, gamma=GAMMA
    )


# ----------------------------------------------------------- reconstruction


def test_remainder_reconstruction_identity():
    r = brownian_rough(32, seed=1)
    cp = controlled_from_driver(r, c=0.8, cprime=0.8)
    for i, j in [(0, 32), (5, 20), (11, 12)]:
        rem = cp.remainder(r, i, j)
        dz = cp.z[j] - cp.z[i]
        recon = np.einsum("nc,n->c", cp.zprime[i], r.increment(i, j)) + rem
        assert np.abs(recon - dz).max() == 0.0


# ------------------------------------------------------------------ d-norm


def test_dnorm_constant_path():
    r = brownian_rough(16, seed=2)
    b = mode0_basis()
    z = np.full((17, 1), 2.5, dtype=complex)
    zp = np.zeros((17, 1, 1), dtype=complex)
    cp = ControlledPath(basis=b, times=r.base.times, z=z, zprime=zp, alpha=0.0, gamma=GAMMA)
    out = dnorm(cp, r)
    assert out.total == pytest.approx(2.5, abs=1e-14)
    assert out.zprime_part == 0.0 and out.remainder_part == 0.0


def test_dnorm_hand_computation_small_grid():
    # Z_t = c X_t, Z' = c on a 4-point grid: remainder vanishes, and the norm
    # is sup|Z| + |c| (the derivative is constant, weight (1+0)^anything = 1)
    t = np.linspace(0.0, 1.0, 4)
    x = np.array([0.0, 0.4, -0.2, 0.9])
    r = lift_piecewise_linear(GridPath(times=t, values=x[:, None]))
    c = 1.3
    cp = controlled_from_driver(r, c=c, cprime=c, alpha=0.2)
    out = dnorm(cp, r)
    assert out.remainder_part <= 1e-13
    assert out.z_sup == pytest.approx(c * np.abs(x).max(), rel=1e-14)
    assert out.zprime_part == pytest.approx(c, rel=1e-14)
    assert out.total == pytest.approx(c * np.abs(x).max() + c, rel=1e-12)


def test_dnorm_delta_z_inequality():
    # sup |dZ|_(a-g) / (t-s)^g <= (1 + |X|_g) * dnorm, by direct evaluation
    from roughspde import hoelder_norms

    rng = np.random.default_rng(3)
    for seed in range(5):
        r = brownian_rough(32, seed=[40, seed])
        c = rng.uniform(0.2, 2.0)
        cp = controlled_from_driver(r, c=c, cprime=c * rng.uniform(0.0, 1.0))
        out = dnorm(cp, r)
        xnorm = hoelder_norms(r, GAMMA).x
        t = cp.times
        lhs = 0.0
        for i in range(cp.m):
            dts = t[i + 1 :] - t[i]
            dn = np.abs(cp.z[i + 1 :, 0] - cp.z[i, 0])
            lhs = max(lhs, float((dn / dts**GAMMA).max()))
        assert lhs <= (1 + xnorm) * out.total * (1 + 1e-12)


def test_dnorm_empty_interval():
    r = brownian_rough(16, seed=4)
    cp = controlled_from_driver(r)
    with pytest.raises(GridError):
        dnorm(cp, r, interval=(0.5, 0.5))


# ---------------------------------------------------------------- sewing


def test_sewing_zero_integrand():
    r = brownian_rough(64, seed=5)
    cp = controlled_from_driver(r, c=0.0, cprime=0.0)
    val, defects = sewing_integral(cp, r, Semigroup(mode0_basis()), 0.0, 1.0, 6)
    assert np.abs(val.coeffs).max() == 0.0
    assert defects.max() == 0.0


def test_sewing_trivial_semigroup_telescopes():
    # constant integrand, zero derivative, mu = 0: every level equals c dX
    r = brownian_rough(64, seed=6)
    b = mode0_basis()
    z = np.full((65, 1), 0.7, dtype=complex)
    zp = np.zeros((65, 1, 1), dtype=complex)
    cp = ControlledPath(basis=b, times=r.base.times, z=z, zprime=zp, alpha=0.0, gamma=GAMMA)
    val, defects = sewing_integral(cp, r, Semigroup(b), 0.0, 1.0, 6)
    expect = 0.7 * (r.base.values[-1, 0] - r.base.values[0, 0])
    assert abs(val.coeffs[0] - expect) < 1e-14
    assert defects.max() < 1e-14


def test_sewing_matches_fine_grid_convolution_oracle():
    # independent reference: left-point Riemann sum on a 16x finer grid
    b = single_mode_dirichlet(mu=0.5)
    sg = Semigroup(b)
    mu = sg.mu[0]
    fine = sample_fbm(0.5, 1, 2**14, 1.0, seed=11)
    coarse = GridPath(times=fine.times[::16], values=fine.values[::16])
    rc = lift_piecewise_linear(coarse)
    z = np.full((coarse.m + 1, 1), 1.0)
    zp = np.zeros((coarse.m + 1, 1, 1))
    cp = ControlledPath(basis=b, times=coarse.times, z=z, zprime=zp, alpha=0.0, gamma=GAMMA)
    val, defects = sewing_integral(cp, rc, sg, 0.0, 1.0, 10)
    dxf = np.diff(fine.values[:, 0])
    ref = float(np.sum(np.exp(-mu * (1.0 - fine.times[:-1])) * dxf))
    assert abs(val.coeffs[0] - ref) / abs(ref) <= 1e-3
    # defect levels decay geometrically
    ratios = defects[1:, 0] / defects[:-1, 0]
    assert np.median(ratios) < 0.8


def test_sewing_additivity_with_semigroup_twist():
    b = single_mode_dirichlet(mu=2.0)
    sg = Semigroup(b)
    r = brownian_rough(128, seed=7)
    rng = np.random.default_rng(8)
    z = rng.standard_normal((129, 1))
    zp = rng.standard_normal((129, 1, 1))
    cp = ControlledPath(basis=b, times=r.base.times, z=z, zprime=zp, alpha=0.0, gamma=GAMMA)
    whole, _ = sewing_integral(cp, r, sg, 0.0, 1.0, 7)
    left, _ = sewing_integral(cp, r, sg, 0.0, 0.5, 6)
    right, _ = sewing_integral(cp, r, sg, 0.5, 1.0, 6)
    glued = sg.apply(left.coeffs, 0.5) + right.coeffs
    assert np.abs(glued - whole.coeffs).max() <= 1e-9 * max(1, np.abs(whole.coeffs).max())


def test_sewing_interval_validation():
    rng = np.random.default_rng(9)
    vals = 0.1 * rng.standard_normal((25, 1)).cumsum(axis=0)
    r = lift_piecewise_linear(GridPath(times=np.linspace(0, 1, 25), values=vals))
    cp = controlled_from_driver(r)
    sg = Semigroup(mode0_basis())
    with pytest.raises(GridError):
        sewing_integral(cp, r, sg, 0.0, 1.0, 4)  # 24 steps, not divisible by 16
    with pytest.raises(GridError):
        sewing_integral(cp, r, sg, 0.5, 0.5, 1)


def test_recursion_equals_deepest_level():
    b = single_mode_dirichlet(mu=1.0)
    sg = Semigroup(b)
    r = brownian_rough(64, seed=10)
    rng = np.random.default_rng(11)
    z = rng.standard_normal((65, 1))
    zp = rng.standard_normal((65, 1, 1))
    cp = ControlledPath(basis=b, times=r.base.times, z=z, zprime=zp, alpha=0.0, gamma=GAMMA)
    val, _ = sewing_integral(cp, r, sg, 0.0, 1.0, 6)
    y = z[:, None, None, :]            # (M+1, B, n, C)
    yp = zp[:, None, :, None, :]       # (M+1, B, n, n, C)
    run = grid_rough_integral(y, yp, r, sg, 0, 64)
    assert abs(run[-1, 0, 0] - val.coeffs[0]) < 1e-13


# ----------------------------------------------------- expansion defects


def test_local_expansion_trivial_cases():
    r = brownian_rough(32, seed=12)
    cp = controlled_from_driver(r, c=0.6, cprime=0.0)
    sg = Semigroup(mode0_basis())
    assert np.array_equal(local_expansion_defect(cp, r, sg, 0.25, 0.25), np.zeros(3))
    # constant integrand + trivial semigroup: one-step expansion is exact
    z = np.full((33, 1), 0.9, dtype=complex)
    zp = np.zeros((33, 1, 1), dtype=complex)
    cpc = ControlledPath(
        basis=mode0_basis(), times=r.base.times, z=z, zprime=zp, alpha=0.0, gamma=GAMMA
    )
    d = local_expansion_defect(cpc, r, sg, 0.0, 1.0)
    assert d.max() < 1e-14


def test_local_expansion_halving_scaling():
    """Halving the interval shrinks the i=0 defect by about 2^(gamma - eta);
    median over 50 random integrand paths."""
    b = single_mode_dirichlet(mu=1.5)
    sg = Semigroup(b)
    gamma, eta = GAMMA, 0.0
    ratios = []
    for seed in range(50):
        r = brownian_rough(64, seed=[60, seed])
        x = r.base.values[:, 0]
        # a genuinely controlled integrand: Y = sin(X), Y' = cos(X)
        z = np.sin(x)[:, None]
        zp = np.cos(x)[:, None, None]
        cp = ControlledPath(basis=b, times=r.base.times, z=z, zprime=zp, alpha=0.0, gamma=gamma)
        d_full = local_expansion_defect(cp, r, sg, 0.0, 1.0)[0]
        d_half = local_expansion_defect(cp, r, sg, 0.0, 0.5)[0]
        if d_half > 0:
            ratios.append(d_full / d_half)
    assert np.median(ratios) >= 2 ** (gamma - eta - 0.05)


def test_defect_trace_csv(tmp_path):
    from roughspde import write_defect_csv

    r = brownian_rough(64, seed=14)
    cp = controlled_from_driver(r, c=0.5, cprime=0.5)
    _, defects = sewing_integral(cp, r, Semigroup(mode0_basis()), 0.0, 1.0, 6)
    write_defect_csv(defects, tmp_path / "d.csv")
    rows = (tmp_path / "d.csv").read_text().strip().splitlines()
    assert rows[0] == "m,defect_i0,defect_i1,defect_i2"
    assert len(rows) == 1 + len(defects)
    back = np.array([[float(x) for x in row.split(",")[1:]] for row in rows[1:]])
    assert np.array_equal(back, defects)


def test_defect_levels_summable():
    b = single_mode_dirichlet(mu=1.0)
    sg = Semigroup(b)
    r = brownian_rough(256, seed=13)
    x = r.base.values[:, 0]
    cp = ControlledPath(
        basis=b,
        times=r.base.times,
        z=np.sin(x)[:, None],
        zprime=np.cos(x)[:, None, None],
        alpha=0.0,
        gamma=GAMMA,
    )
    _, defects = sewing_integral(cp, r, sg, 0.0, 1.0, 8)
    # observed geometric decay => summability of the level series
    ratios = defects[2:, 0] / defects[1:-1, 0]
    assert np.median(ratios) < 0.85
    assert defects[-1, 0] < defects[0, 0]
