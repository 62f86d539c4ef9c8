"""Periodic grid, discrete Fourier analysis and norms.

Conventions: for ``n`` samples on a torus of length ``L`` the Fourier
coefficients are ``u_hat[k] = (1/n) * sum_j u(x_j) exp(-i xi_k x_j)`` with
integer wavenumbers ``k`` in ``(-n/2, n/2]`` stored in FFT order and physical
frequencies ``xi_k = 2 pi k / L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicGrid:
    n: int
    length: float = 2 * np.pi

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise GridError(f"grid size must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise GridError(f"grid length must be positive, got {self.length}")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    @cached_property
    def k(self) -> np.ndarray:
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        k[self.n // 2] = self.n // 2
        return k

    @cached_property
    def xi(self) -> np.ndarray:
        return 2 * np.pi * self.k / self.length

    @property
    def xi_max(self) -> float:
        """Largest representable frequency (the Nyquist frequency)."""
        return np.pi * self.n / self.length

    @cached_property
    def _ik(self) -> np.ndarray:
        ik = 1j * self.xi
        ik[self.n // 2] = 0.0
        return ik

    # array-level helpers; the GridFunction API below wraps these
    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft(values, axis=-1) / self.n

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifft(coeffs, axis=-1) * self.n

    def deriv(self, values: np.ndarray) -> np.ndarray:
        return np.fft.ifft(self._ik * np.fft.fft(values, axis=-1), axis=-1)

    def multiplier(self, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return np.fft.ifft(symbol * np.fft.fft(values, axis=-1), axis=-1)

    def l2(self, values: np.ndarray) -> float:
        return float(np.sqrt(self.spacing * np.sum(np.abs(values) ** 2)))

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        """Discrete L2 inner product, conjugate-linear in ``g``."""
        return complex(self.spacing * np.sum(f * np.conj(g)))

    def sobolev(self, values: np.ndarray, s: float) -> float:
        c = self.fft(values)
        w = (1.0 + self.xi**2) ** s
        return float(np.sqrt(self.length * np.sum(w * np.abs(c) ** 2)))


@dataclass
class GridFunction:
    """Complex samples of a function on a periodic grid."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n,):
            raise GridError(
                f"expected {self.grid.n} samples, got shape {self.values.shape}")

    @classmethod
    def from_callable(cls, grid: PeriodicGrid, func) -> "GridFunction":
        return cls(grid, func(grid.x))

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "GridFunction":
        return cls(grid, np.zeros(grid.n, dtype=complex))

    def _check(self, other: "GridFunction"):
        if other.grid != self.grid:
            raise GridError("grid functions live on different grids")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, self.values * other.values)
        return GridFunction(self.grid, self.values * other)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    @property
    def real(self) -> np.ndarray:
        return self.values.real


def fourier_forward(f: GridFunction) -> np.ndarray:
    return f.grid.fft(f.values)


def fourier_inverse(grid: PeriodicGrid, coeffs: np.ndarray) -> GridFunction:
    return GridFunction(grid, grid.ifft(np.asarray(coeffs)))


def spectral_derivative(f: GridFunction) -> GridFunction:
    """Exact derivative of the trigonometric interpolant, Nyquist mode dropped."""
    return GridFunction(f.grid, f.grid.deriv(f.values))


def l2_norm(f: GridFunction) -> float:
    return f.grid.l2(f.values)


def sobolev_norm_fourier(f: GridFunction, s: float) -> float:
    """``sqrt(L * sum_k (1 + xi_k^2)^s |u_hat_k|^2)``; equals the L2 norm at s = 0."""
    return f.grid.sobolev(f.values, s)


def random_band_limited(grid: PeriodicGrid, kmax: int, rng: np.random.Generator,
                        decay: float = 0.0, real: bool = True) -> GridFunction:
    """Random trigonometric polynomial with wavenumbers ``|k| <= kmax``.

    Coefficients are standard complex normals scaled by ``(1 + k^2)^(-decay/2)``.
    """
    if kmax >= grid.n // 2:
        raise GridError(f"kmax={kmax} must stay below the Nyquist index {grid.n // 2}")
    c = np.zeros(grid.n, dtype=complex)
    mask = np.abs(grid.k) <= kmax
    m = int(mask.sum())
    c[mask] = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * (1 + grid.k[mask] ** 2) ** (-decay / 2)
    values = grid.ifft(c)
    if real:
        values = values.real.astype(complex)
    return GridFunction(grid, values)
