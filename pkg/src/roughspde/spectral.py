"""Spectral Sobolev scale on an interval, with the analytic heat semigroup.

Fields are truncated coefficient vectors, either complex exponentials on the
torus (optionally with the mean mode removed) or a sine basis for Dirichlet
conditions.  The scale carries weights (1 + mu_k)^alpha against the Laplacian
eigenvalues mu_k, so negative alpha is allowed and the zero mode is harmless.
All norms are coefficient-space ell^2 norms with those weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

from .errors import ConfigError, NumericalFailure

__all__ = [
    "SpectralBasis",
    "SpectralField",
    "Semigroup",
    "norm_alpha",
    "apply_semigroup",
    "apply_pointwise",
    "apply_multiplier",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class SpectralBasis:
    """Basis bookkeeping: kind, domain length, truncation, mean handling."""

    kind: str
    domain_length: float
    K: int
    zero_mean: bool = False

    def __post_init__(self):
        if self.kind not in ("periodic", "dirichlet"):
            raise ConfigError(f"unknown basis kind {self.kind!r}")
        if self.domain_length <= 0:
            raise ConfigError("domain length must be positive")
        if self.kind == "dirichlet" and self.K < 1:
            raise ConfigError("dirichlet basis needs K >= 1")
        if self.kind == "periodic" and self.K < 0:
            raise ConfigError("periodic basis needs K >= 0")
        if self.zero_mean and self.kind != "periodic":
            raise ConfigError("zero_mean only applies to the periodic basis")

    @property
    def size(self) -> int:
        return 2 * self.K + 1 if self.kind == "periodic" else self.K

    @property
    def is_complex(self) -> bool:
        return self.kind == "periodic"

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        if self.kind == "periodic":
            return np.arange(-self.K, self.K + 1)
        return np.arange(1, self.K + 1)

    @cached_property
    def mu(self) -> np.ndarray:
        """Eigenvalues of minus the Laplacian on the retained modes."""
        k = self.wavenumbers.astype(float)
        if self.kind == "periodic":
            return (2.0 * np.pi * k / self.domain_length) ** 2
        return (np.pi * k / self.domain_length) ** 2

    @cached_property
    def mu_min(self) -> float:
        mu = self.mu
        if self.kind == "periodic" and self.zero_mean:
            mu = mu[self.wavenumbers != 0]
        return float(mu.min()) if len(mu) else 0.0

    def weights(self, alpha: float) -> np.ndarray:
        return (1.0 + self.mu) ** alpha

    # ---- collocation transforms (3x dealiasing, covers cubic products) ----

    @cached_property
    def colloc_size(self) -> int:
        return max(3 * self.size, 8)

    def to_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Synthesize point values on the dealiased collocation grid.

        Works on the last axis; leading axes are batched."""
        M = self.colloc_size
        if self.kind == "periodic":
            spec = np.zeros(coeffs.shape[:-1] + (M,), dtype=complex)
            spec[..., self.wavenumbers % M] = coeffs
            return np.fft.ifft(spec, axis=-1) * M
        pad = np.zeros(coeffs.shape[:-1] + (M,), dtype=float)
        pad[..., : self.K] = coeffs
        return 0.5 * scipy.fft.dst(pad, type=1, axis=-1)

    def from_values(self, values: np.ndarray) -> np.ndarray:
        """Analyze point values back to truncated coefficients (projects onto
        the retained modes; the zero mode is dropped for zero-mean bases)."""
        M = self.colloc_size
        if self.kind == "periodic":
            spec = np.fft.fft(values, axis=-1) / M
            out = spec[..., self.wavenumbers % M]
            if self.zero_mean:
                out = out.copy()
                out[..., self.K] = 0.0
            return out
        full = scipy.fft.dst(np.real(values), type=1, axis=-1) / (M + 1)
        return full[..., : self.K].copy()

    # ---- real coordinates (isometric for real fields) ----

    @property
    def real_dim(self) -> int:
        if self.kind == "dirichlet":
            return self.K
        return 2 * self.K if self.zero_mean else 2 * self.K + 1

    def coord_mu(self) -> np.ndarray:
        """Laplacian eigenvalue attached to each real coordinate, in order."""
        if self.kind == "dirichlet":
            return self.mu
        ks = np.arange(1, self.K + 1, dtype=float)
        pairs = np.repeat((2.0 * np.pi * ks / self.domain_length) ** 2, 2)
        if self.zero_mean:
            return pairs
        return np.concatenate([[0.0], pairs])

    def to_real(self, coeffs: np.ndarray, alpha: float = 0.0) -> np.ndarray:
        """Map coefficients to real coordinates; Euclidean norm = alpha-norm.

        Periodic ordering: (mean,) then per k >= 1 the pair
        (sqrt2 Re c_k, sqrt2 Im c_k), increasing in k."""
        w = self.weights(alpha)
        if self.kind == "dirichlet":
            return np.real(coeffs) * w
        K = self.K
        pos = coeffs[..., K + 1 :]
        wk = w[K + 1 :]
        parts = np.stack(
            [np.sqrt(2.0) * wk * np.real(pos), np.sqrt(2.0) * wk * np.imag(pos)],
            axis=-1,
        ).reshape(coeffs.shape[:-1] + (2 * K,))
        if self.zero_mean:
            return parts
        mean = (w[K] * np.real(coeffs[..., K]))[..., None]
        return np.concatenate([mean, parts], axis=-1)

    def from_real(self, vec: np.ndarray, alpha: float = 0.0) -> np.ndarray:
        w = self.weights(alpha)
        if self.kind == "dirichlet":
            return vec / w
        K = self.K
        if self.zero_mean:
            mean = np.zeros(vec.shape[:-1] + (1,))
            body = vec
        else:
            mean = vec[..., :1] / w[K]
            body = vec[..., 1:]
        pairs = body.reshape(vec.shape[:-1] + (K, 2))
        pos = (pairs[..., 0] + 1j * pairs[..., 1]) / (np.sqrt(2.0) * w[K + 1 :])
        neg = np.conj(pos)[..., ::-1]
        return np.concatenate([neg, mean.astype(complex), pos], axis=-1)

    def zeros(self) -> np.ndarray:
        dtype = complex if self.is_complex else float
        return np.zeros(self.size, dtype=dtype)


@dataclass(frozen=True)
class SpectralField:
    """One element of the scale: a basis plus its truncated coefficients."""

    basis: SpectralBasis
    coeffs: np.ndarray

    def __post_init__(self):
        dtype = complex if self.basis.is_complex else float
        c = np.array(self.coeffs, dtype=dtype, copy=True)
        if c.shape != (self.basis.size,):
            raise ConfigError(
                f"coefficients must have shape ({self.basis.size},), got {c.shape}"
            )
        if not np.all(np.isfinite(c.view(float))):
            raise NumericalFailure("field coefficients must be finite")
        if self.basis.is_complex and self.basis.zero_mean:
            c[self.basis.K] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def norm(self, alpha: float = 0.0) -> float:
        return norm_alpha(self, alpha)

    def is_real(self, tol: float = 1e-10) -> bool:
        if not self.basis.is_complex:
            return True
        c = self.coeffs
        scale = max(1.0, float(np.abs(c).max()))
        return bool(np.abs(c[::-1].conj() - c).max() <= tol * scale)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.basis, self.coeffs * a)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Semigroup:
    """Diagonal analytic semigroup generated by the Laplacian on the basis."""

    basis: SpectralBasis

    @property
    def mu(self) -> np.ndarray:
        return self.basis.mu

    def factors(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("semigroup time must be nonnegative")
        return np.exp(-self.basis.mu * t)

    def apply(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        return coeffs * self.factors(t)


def _coeff_norm(coeffs: np.ndarray, basis: SpectralBasis, alpha: float):
    w2 = basis.weights(2.0 * alpha)
    return np.sqrt(np.sum(w2 * np.abs(coeffs) ** 2, axis=-1))


def norm_alpha(field: SpectralField, alpha: float) -> float:
    """Weighted coefficient norm (sum_k (1 + mu_k)^(2 alpha) |c_k|^2)^(1/2)."""
    return float(_coeff_norm(field.coeffs, field.basis, alpha))


def apply_semigroup(field: SpectralField, t: float) -> SpectralField:
    """Heat propagation: coefficient-wise decay by exp(-mu_k t); identity at t=0."""
    sg = Semigroup(field.basis)
    return SpectralField(field.basis, sg.apply(field.coeffs, t))


def _real_values(coeffs: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    vals = basis.to_values(coeffs)
    if basis.is_complex:
        im = np.abs(vals.imag).max() if vals.size else 0.0
        scale = max(1.0, float(np.abs(vals.real).max()))
        if im > 1e-8 * scale:
            raise NumericalFailure(
                "pointwise operations need a real field (conjugate symmetry broken)"
            )
        vals = vals.real
    return vals


def apply_pointwise(field: SpectralField, f) -> SpectralField:
    """Nemytskii action: evaluate on the dealiased collocation grid, apply the
    scalar map f pointwise, project back onto the truncated basis."""
    vals = _real_values(field.coeffs, field.basis)
    out = np.asarray(f(vals), dtype=float)
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("pointwise map returned non-finite values")
    return SpectralField(field.basis, field.basis.from_values(out))


def apply_multiplier(
    field: SpectralField, g: SpectralField, eta: float
) -> SpectralField:
    """Weighted fractional-Laplacian action u -> g(x) * (-Laplace)^eta u."""
    if eta < 0:
        raise ValueError("fractional power must be nonnegative")
    if g.basis != field.basis:
        raise ConfigError("multiplier and field must share a basis")
    frac = field.coeffs * field.basis.mu**eta
    vals = field.basis.to_values(frac)
    gvals = _real_values(g.coeffs, g.basis)
    return SpectralField(field.basis, field.basis.from_values(vals * gvals))


def write_field_csv(field: SpectralField, fname) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "re", "im"])
        for k, c in zip(field.basis.wavenumbers, field.coeffs):
            w.writerow([int(k), repr(float(np.real(c))), repr(float(np.imag(c)))])


def read_field_csv(fname, basis: SpectralBasis) -> SpectralField:
    with open(fname, newline="") as fh:
        rows = list(csv.reader(fh))
    coeffs = basis.zeros().astype(complex)
    ks = list(basis.wavenumbers)
    for row in rows[1:]:
        k, re, im = int(row[0]), float(row[1]), float(row[2])
        coeffs[ks.index(k)] = re + 1j * im
    if not basis.is_complex:
        coeffs = coeffs.real
    return SpectralField(basis, coeffs)
