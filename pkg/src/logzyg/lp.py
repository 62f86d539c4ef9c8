"""Littlewood-Paley dyadic decomposition on the periodic grid.

Blocks are exact Fourier multipliers ``u_nu = phi_nu(D) u`` with
``phi_0`` the smooth even cutoff below and ``phi_nu(xi) = phi(2^-nu xi)``,
``phi(xi) = phi_0(xi) - phi_0(2 xi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, PeriodicGrid


class ConfigurationError(ValueError):
    pass


def _g(s):
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def phi0(xi) -> np.ndarray:
    """Smooth even cutoff: 1 on |xi| <= 1, 0 on |xi| >= 2, decreasing in between."""
    a = np.abs(np.asarray(xi, dtype=float))
    up = _g(2.0 - a)
    down = _g(a - 1.0)
    with np.errstate(invalid="ignore"):
        mid = up / (up + down)
    return np.where(a <= 1.0, 1.0, np.where(a >= 2.0, 0.0, mid))


def phi_nu(xi, nu: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if nu < 0:
        return np.zeros_like(xi)
    if nu == 0:
        return phi0(xi)
    scaled = xi / 2.0**nu
    return phi0(scaled) - phi0(2.0 * scaled)


def psi_mu(xi, mu: int) -> np.ndarray:
    return phi_nu(xi, mu - 1) + phi_nu(xi, mu) + phi_nu(xi, mu + 1)


@dataclass(eq=False)
class LPProfile:
    """Cutoff profile bound to a grid; multipliers are cached per index."""

    grid: PeriodicGrid
    nu_max: int
    _cache: dict = field(default_factory=dict, repr=False)

    def phi0(self, xi):
        return phi0(xi)

    def phi(self, nu: int) -> np.ndarray:
        """``phi_nu`` sampled at the grid frequencies (any nu >= -1 allowed)."""
        key = ("phi", nu)
        if key not in self._cache:
            self._cache[key] = phi_nu(self.grid.xi, nu)
        return self._cache[key]

    def psi(self, mu: int) -> np.ndarray:
        key = ("psi", mu)
        if key not in self._cache:
            self._cache[key] = self.phi(mu - 1) + self.phi(mu) + self.phi(mu + 1)
        return self._cache[key]

    def remainder_symbol(self) -> np.ndarray:
        """Symbol of the part of u above the last full block (``1 - phi0(2^-nu_max xi)``)."""
        key = ("rem",)
        if key not in self._cache:
            self._cache[key] = 1.0 - phi0(self.grid.xi / 2.0**self.nu_max)
        return self._cache[key]

    def check_index(self, nu: int):
        if not 0 <= nu <= self.nu_max:
            raise IndexError(f"block index {nu} outside [0, {self.nu_max}]")


def build_profile(grid: PeriodicGrid) -> LPProfile:
    """Profile whose top block ``[2^(nu_max-1), 2^(nu_max+1)]`` fits under Nyquist."""
    if grid.n < 32:
        raise ConfigurationError(f"n={grid.n} cannot hold three dyadic shells (need n >= 32)")
    nu_max = int(np.floor(np.log2(grid.xi_max))) - 1
    if nu_max < 2:
        raise ConfigurationError(
            f"grid of length {grid.length} resolves only up to xi={grid.xi_max:.3g}")
    return LPProfile(grid, nu_max)


@dataclass
class DyadicBlockSet:
    """Blocks ``u_0 .. u_nu_max`` plus the truncated part above them.

    ``remainder`` is what the grid holds above ``2^nu_max``; it is the top
    shell ``nu_max + 1`` cut at Nyquist and is zero for band-limited input.
    """

    blocks: list
    remainder: GridFunction
    profile: LPProfile

    @property
    def remainder_norm(self) -> float:
        return self.remainder.grid.l2(self.remainder.values)

    def with_remainder(self) -> list:
        return list(self.blocks) + [self.remainder]

    def reconstruct(self) -> GridFunction:
        total = np.sum([b.values for b in self.blocks], axis=0)
        return GridFunction(self.profile.grid, total)


def dyadic_block(f: GridFunction, nu: int, profile: LPProfile) -> GridFunction:
    profile.check_index(nu)
    return GridFunction(f.grid, f.grid.multiplier(f.values, profile.phi(nu)))


def psi_block(f: GridFunction, mu: int, profile: LPProfile) -> GridFunction:
    profile.check_index(mu)
    return GridFunction(f.grid, f.grid.multiplier(f.values, profile.psi(mu)))


def decompose(f: GridFunction, profile: LPProfile) -> DyadicBlockSet:
    grid = f.grid
    c = np.fft.fft(f.values)
    blocks = [GridFunction(grid, np.fft.ifft(profile.phi(nu) * c))
              for nu in range(profile.nu_max + 1)]
    rem = GridFunction(grid, np.fft.ifft(profile.remainder_symbol() * c))
    return DyadicBlockSet(blocks, rem, profile)


def block_arrays(values: np.ndarray, profile: LPProfile) -> np.ndarray:
    """All blocks including the truncated top one, as a (nu_max + 2, n) array."""
    c = np.fft.fft(values)
    symbols = [profile.phi(nu) for nu in range(profile.nu_max + 1)]
    symbols.append(profile.remainder_symbol())
    return np.fft.ifft(np.asarray(symbols) * c, axis=-1)


def sobolev_norm_dyadic(blocks: DyadicBlockSet, s: float,
                        include_remainder: bool = True) -> float:
    """``sqrt(sum_nu 2^(2 nu s) ||u_nu||^2)``, summed in ascending nu.

    The truncated top shell counts as index ``nu_max + 1`` unless excluded.
    """
    parts = blocks.with_remainder() if include_remainder else blocks.blocks
    total = 0.0
    for nu, b in enumerate(parts):
        total += 2.0 ** (2 * nu * s) * b.grid.l2(b.values) ** 2
    return float(np.sqrt(total))


def dyadic_sobolev_array(values: np.ndarray, profile: LPProfile, s: float) -> float:
    """Dyadic H^s norm straight from samples (remainder included)."""
    grid = profile.grid
    c = np.fft.fft(values) / grid.n
    power = grid.length * np.abs(c) ** 2
    total = 0.0
    for nu in range(profile.nu_max + 2):
        sym = profile.phi(nu) if nu <= profile.nu_max else profile.remainder_symbol()
        total += 2.0 ** (2 * nu * s) * np.sum(sym**2 * power)
    return float(np.sqrt(total))


def multiplier_sum(xi, s: float, nu_top: int) -> np.ndarray:
    """``sum_{nu <= nu_top} 2^(2 nu s) phi_nu(xi)^2``."""
    xi = np.asarray(xi, dtype=float)
    return sum(2.0 ** (2 * nu * s) * phi_nu(xi, nu) ** 2 for nu in range(nu_top + 1))


def equivalence_band(profile: LPProfile, s: float, n_scan: int = 200001) -> tuple:
    """Range of the single-frequency ratio dyadic / Fourier H^s norm.

    Scans ``sqrt(sum_nu 2^(2 nu s) phi_nu(xi)^2 / (1 + xi^2)^s)`` over
    ``0 <= xi <= xi_max`` (dense points plus the grid frequencies), with the
    truncated top shell counted as index ``nu_max + 1``. Returns ``(lo, hi)``.
    """
    grid = profile.grid
    xi = np.concatenate([np.linspace(0.0, grid.xi_max, n_scan), np.abs(grid.xi)])
    rem = 1.0 - phi0(xi / 2.0**profile.nu_max)
    m = multiplier_sum(xi, s, profile.nu_max) + 2.0 ** (2 * (profile.nu_max + 1) * s) * rem**2
    ratio = np.sqrt(m / (1.0 + xi**2) ** s)
    return float(ratio.min()), float(ratio.max())


@dataclass
class BernsteinReport:
    r1: dict
    r2: dict

    @property
    def passed(self) -> bool:
        return all(v <= 1.0 + 1e-12 for v in self.r1.values()) and \
            all(v <= 1.0 + 1e-12 for v in self.r2.values())

    @property
    def worst(self) -> float:
        vals = list(self.r1.values()) + list(self.r2.values())
        return max(vals) if vals else 0.0


def verify_bernstein(blocks: DyadicBlockSet, skip_below: float = 1e-13) -> BernsteinReport:
    """Ratios ``||u_nu'|| / (2^(nu+1) ||u_nu||)`` and ``2^(nu-1) ||u_nu|| / ||u_nu'||``."""
    r1, r2 = {}, {}
    for nu, b in enumerate(blocks.blocks):
        grid = b.grid
        norm = grid.l2(b.values)
        if norm < skip_below:
            continue
        dnorm = grid.l2(grid.deriv(b.values))
        r1[nu] = dnorm / (2.0 ** (nu + 1) * norm)
        if nu >= 1:
            r2[nu] = norm * 2.0 ** (nu - 1) / dnorm
    return BernsteinReport(r1, r2)
