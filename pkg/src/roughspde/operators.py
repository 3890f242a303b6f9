"""Drift and diffusion families for the mild solver.

Everything evaluates on batched coefficient arrays (leading axes carried
through, coefficients on the last axis), so a whole trajectory or a batch of
tangent columns goes through one transform.  Scalar nonlinearities come from
named families with closed-form first and second derivatives; derivative
growth is degree 0 or 1 for every shipped family, which is validated and
reported at configuration time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericalFailure
from .spectral import SpectralBasis, SpectralField

__all__ = [
    "SCALAR_FAMILIES",
    "SpatialProfile",
    "Drift",
    "ZeroDrift",
    "NemytskiiDrift",
    "Diffusion",
    "ZeroDiffusion",
    "ConstantDiffusion",
    "MultiplierDiffusion",
    "NemytskiiDiffusion",
]


# name -> (f, f', f'') as callables of (u, a, b); a scales the output,
# b scales the argument.  All families have f(0) = 0 and f'(0) = a.
SCALAR_FAMILIES: dict[str, tuple[Callable, Callable, Callable]] = {
    "identity": (
        lambda u, a, b: a * u,
        lambda u, a, b: a * np.ones_like(u),
        lambda u, a, b: np.zeros_like(u),
    ),
    "sin": (
        lambda u, a, b: a * np.sin(b * u) / b,
        lambda u, a, b: a * np.cos(b * u),
        lambda u, a, b: -a * b * np.sin(b * u),
    ),
    "tanh": (
        lambda u, a, b: a * np.tanh(b * u) / b,
        lambda u, a, b: a / np.cosh(b * u) ** 2,
        lambda u, a, b: -2 * a * b * np.tanh(b * u) / np.cosh(b * u) ** 2,
    ),
    "u_cos": (
        lambda u, a, b: a * u * np.cos(b * u),
        lambda u, a, b: a * (np.cos(b * u) - b * u * np.sin(b * u)),
        lambda u, a, b: -a * b * (2 * np.sin(b * u) + b * u * np.cos(b * u)),
    ),
}

# bounded families keep all derivatives bounded (degree-0 growth); the others
# have linear growth with bounded derivatives (degree 1)
_FAMILY_GROWTH_DEGREE = {"identity": 1, "sin": 0, "tanh": 0, "u_cos": 1}


@dataclass(frozen=True)
class SpatialProfile:
    """Weight profile g(x), evaluated directly on the collocation grid.

    kinds: "constant" (value), "cosine" (offset + amplitude cos(2 pi mode x/l)
    on the torus, offset + amplitude sin(pi mode x/l) for dirichlet)."""

    kind: str = "constant"
    value: float = 1.0
    offset: float = 0.0
    amplitude: float = 1.0
    mode: int = 1

    def values(self, basis: SpectralBasis) -> np.ndarray:
        M = basis.colloc_size
        if self.kind == "constant":
            return np.full(M, self.value)
        if self.kind == "cosine":
            if basis.kind == "periodic":
                x = np.arange(M) / M
                return self.offset + self.amplitude * np.cos(
                    2.0 * np.pi * self.mode * x
                )
            x = np.arange(1, M + 1) / (M + 1)
            return self.offset + self.amplitude * np.sin(np.pi * self.mode * x)
        raise ConfigError(f"unknown profile kind {self.kind!r}")


def _profile_values(weight, basis: SpectralBasis) -> np.ndarray:
    if weight is None:
        return np.ones(basis.colloc_size)
    if isinstance(weight, SpatialProfile):
        return weight.values(basis)
    if isinstance(weight, SpectralField):
        vals = weight.basis.to_values(weight.coeffs)
        return vals.real if weight.basis.is_complex else vals
    raise ConfigError(f"cannot use {type(weight)!r} as a spatial weight")


def _to_real_values(basis: SpectralBasis, coeffs: np.ndarray) -> np.ndarray:
    vals = basis.to_values(coeffs)
    return vals.real if basis.is_complex else vals


def _check_finite(vals: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(vals)):
        raise NumericalFailure(f"{what} produced non-finite values")
    return vals


class Drift:
    """Interface: apply(u) and the directional derivative d_apply(u, v)."""

    is_zero = False
    growth_degree = 1

    def apply(self, basis: SpectralBasis, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def d_apply(self, basis: SpectralBasis, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroDrift(Drift):
    is_zero = True
    growth_degree = 0

    def apply(self, basis, u):
        return np.zeros_like(u)

    def d_apply(self, basis, u, v):
        return np.zeros_like(v)


@dataclass(frozen=True)
class NemytskiiDrift(Drift):
    """F(u) = g(x) f(u) pointwise; covers the linear multiplier V(x) u with
    family "identity"."""

    family: str = "identity"
    a: float = 1.0
    b: float = 1.0
    weight: object = None

    def __post_init__(self):
        if self.family not in SCALAR_FAMILIES:
            raise ConfigError(f"unknown scalar family {self.family!r}")

    @property
    def growth_degree(self) -> int:
        return _FAMILY_GROWTH_DEGREE[self.family]

    def _w(self, basis):
        return _profile_values(self.weight, basis)

    def apply(self, basis, u):
        f = SCALAR_FAMILIES[self.family][0]
        vals = _to_real_values(basis, u)
        out = self._w(basis) * _check_finite(f(vals, self.a, self.b), "drift")
        return basis.from_values(out)

    def d_apply(self, basis, u, v):
        df = SCALAR_FAMILIES[self.family][1]
        uvals = _to_real_values(basis, u)
        vvals = _to_real_values(basis, v)
        out = self._w(basis) * df(uvals, self.a, self.b) * vvals
        return basis.from_values(_check_finite(out, "drift derivative"))


class Diffusion:
    """Interface: n channels; apply/d_apply/d2_apply with channel axis before
    the coefficient axis."""

    is_zero = False
    growth_degree = 1

    @property
    def n_channels(self) -> int:
        raise NotImplementedError

    def apply(self, basis: SpectralBasis, u: np.ndarray) -> np.ndarray:
        """(..., C) -> (..., n, C)"""
        raise NotImplementedError

    def d_apply(self, basis, u, v):
        raise NotImplementedError

    def d2_apply(self, basis, u, v, w):
        raise NotImplementedError


def _stack_channels(parts) -> np.ndarray:
    return np.stack(parts, axis=-2)


@dataclass(frozen=True)
class ZeroDiffusion(Diffusion):
    channels: int = 1
    is_zero = True
    growth_degree = 0

    @property
    def n_channels(self) -> int:
        return self.channels

    def _zeros(self, u):
        return np.zeros(u.shape[:-1] + (self.channels, u.shape[-1]), dtype=u.dtype)

    def apply(self, basis, u):
        return self._zeros(u)

    def d_apply(self, basis, u, v):
        return self._zeros(np.broadcast_arrays(u, v)[1])

    def d2_apply(self, basis, u, v, w):
        return self._zeros(np.broadcast_arrays(u, v, w)[1])


@dataclass(frozen=True)
class ConstantDiffusion(Diffusion):
    """Additive noise: G_i(u) = c_i, a fixed field per channel."""

    fields: tuple
    growth_degree = 0

    @property
    def n_channels(self) -> int:
        return len(self.fields)

    def apply(self, basis, u):
        consts = np.stack([np.asarray(f.coeffs) for f in self.fields], axis=0)
        shape = u.shape[:-1] + (self.n_channels, u.shape[-1])
        out = np.zeros(shape, dtype=u.dtype)
        out[...] = consts
        return out

    def d_apply(self, basis, u, v):
        b = np.broadcast_arrays(u, v)[1]
        return np.zeros(b.shape[:-1] + (self.n_channels, b.shape[-1]), dtype=b.dtype)

    def d2_apply(self, basis, u, v, w):
        return self.d_apply(basis, u, v)


@dataclass(frozen=True)
class MultiplierDiffusion(Diffusion):
    """Bounded linear channels G_i(u) = g_i(x) (-Laplace)^eta u."""

    weights: tuple
    power: float = 0.0
    growth_degree = 1

    def __post_init__(self):
        if self.power < 0:
            raise ConfigError("fractional power must be nonnegative")

    @property
    def n_channels(self) -> int:
        return len(self.weights)

    def apply(self, basis, u):
        frac = u * basis.mu**self.power
        vals = basis.to_values(frac)
        parts = [
            basis.from_values(vals * _profile_values(w, basis)) for w in self.weights
        ]
        return _stack_channels(parts)

    def d_apply(self, basis, u, v):
        u2, v2 = np.broadcast_arrays(u, v)
        return self.apply(basis, v2)

    def d2_apply(self, basis, u, v, w):
        b = np.broadcast_arrays(u, v, w)[1]
        return np.zeros(b.shape[:-1] + (self.n_channels, b.shape[-1]), dtype=b.dtype)


@dataclass(frozen=True)
class NemytskiiDiffusion(Diffusion):
    """Bounded smooth channels G_i(u) = g_i(x) f(u) with three bounded
    derivatives (families "sin" and "tanh" are bounded; G(0) = 0 always)."""

    weights: tuple
    family: str = "sin"
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.family not in SCALAR_FAMILIES:
            raise ConfigError(f"unknown scalar family {self.family!r}")

    @property
    def growth_degree(self) -> int:
        return _FAMILY_GROWTH_DEGREE[self.family]

    @property
    def n_channels(self) -> int:
        return len(self.weights)

    def _scalar(self, which: int, u_vals: np.ndarray) -> np.ndarray:
        fn = SCALAR_FAMILIES[self.family][which]
        return _check_finite(fn(u_vals, self.a, self.b), "diffusion")

    def _project(self, basis, vals):
        parts = [
            basis.from_values(vals * _profile_values(w, basis)) for w in self.weights
        ]
        return _stack_channels(parts)

    def apply(self, basis, u):
        return self._project(basis, self._scalar(0, _to_real_values(basis, u)))

    def d_apply(self, basis, u, v):
        fp = self._scalar(1, _to_real_values(basis, u))
        return self._project(basis, fp * _to_real_values(basis, v))

    def d2_apply(self, basis, u, v, w):
        fpp = self._scalar(2, _to_real_values(basis, u))
        return self._project(
            basis, fpp * _to_real_values(basis, v) * _to_real_values(basis, w)
        )
