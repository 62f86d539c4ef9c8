"""Commutators ``[phi_nu(D), f]`` with multiplication operators and their norms.

Norms are L2 operator norms of the grid operator. The dense route assembles
the matrix by applying the operator to the unit Fourier modes that the
cutoff lets through, then runs power iteration on the normal matrix. The
randomized route only probes the operator and returns a lower bound.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, GridError
from .lp import LPProfile


class ResourceError(RuntimeError):
    pass


class CoverageError(KeyError):
    pass


def _field_values(f, grid) -> np.ndarray:
    if callable(f):
        f = f(grid.x)
    f = np.asarray(f)
    if f.shape != (grid.n,):
        raise GridError(f"field has shape {f.shape}, grid has {grid.n} points")
    if np.iscomplexobj(f):
        if np.max(np.abs(f.imag)) > 1e-12 * max(1.0, np.max(np.abs(f.real))):
            raise ValueError("commutator field must be real-valued")
        f = f.real
    return f.astype(float)


def _apply(symbol: np.ndarray, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``m(D)(f g) - f m(D) g`` along the last axis."""
    fg = np.fft.ifft(symbol * np.fft.fft(f * g, axis=-1), axis=-1)
    return fg - f * np.fft.ifft(symbol * np.fft.fft(g, axis=-1), axis=-1)


def commutator_apply(nu: int, f, g: GridFunction, profile: LPProfile) -> GridFunction:
    """``phi_nu(D)(f g) - f phi_nu(D) g`` for a real field f frozen in time."""
    profile.check_index(nu)
    fv = _field_values(f, g.grid)
    return GridFunction(g.grid, _apply(profile.phi(nu), fv, g.values))


def commutator_matrix(nu: int, mu, f, profile: LPProfile) -> np.ndarray:
    """Dense matrix of ``[phi_nu, f] Psi_mu`` from unit modes to L2 samples.

    ``mu=None`` drops the ``Psi_mu`` factor (the full commutator). Columns
    correspond to the grid modes in the support of ``psi_mu`` and are
    scaled so that the spectral norm equals the L2 operator norm.
    """
    grid = profile.grid
    profile.check_index(nu)
    fv = _field_values(f, grid)
    if mu is None:
        weights = np.ones(grid.n)
    else:
        profile.check_index(mu)
        weights = profile.psi(mu)
    cols = np.flatnonzero(weights > 0)
    if cols.size == 0:
        return np.zeros((grid.n, 0), dtype=complex)
    # unit-norm modes exp(i xi_k x) / sqrt(L), one per row
    modes = np.exp(1j * np.outer(grid.xi[cols], grid.x)) / np.sqrt(grid.length)
    modes *= weights[cols, None]
    out = _apply(profile.phi(nu), fv, modes)
    return (out * np.sqrt(grid.spacing)).T


def largest_singular_value(M: np.ndarray, tol: float = 1e-12, max_iter: int = 5000,
                           block: int = 8, seed: int = 0) -> float:
    """Block power iteration on ``M^H M`` with a Rayleigh-Ritz step.

    A small block converges at the rate of the gap to the ``block + 1``-th
    eigenvalue, so the near-degenerate pairs that real fields produce
    (modes at +xi and -xi) do not stall it.
    """
    if M.size == 0:
        return 0.0
    G = M.conj().T @ M
    scale = float(np.max(np.abs(np.diag(G))))
    if scale == 0.0:
        return 0.0
    G = G / scale
    m = G.shape[0]
    k = min(block, m)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
    V, _ = np.linalg.qr(V)
    lam = 0.0
    for it in range(max_iter):
        W = G @ V
        H = V.conj().T @ W
        new = float(np.linalg.eigvalsh((H + H.conj().T) / 2)[-1])
        V, _ = np.linalg.qr(W)
        if it > 2 and abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return float(np.sqrt(max(lam, 0.0) * scale))


def randomized_lower_bound(nu: int, mu, f, profile: LPProfile, n_probe: int = 200,
                           n_steps: int = 20, seed: int = 0) -> float:
    """max ``||A v|| / ||v||`` over random starts refined by a few power steps.

    Never exceeds the true norm. ``A = [phi_nu, f] Psi_mu`` is applied
    matrix-free, so any grid size works.
    """
    grid = profile.grid
    fv = _field_values(f, grid)
    phi = profile.phi(nu)
    psi = np.ones(grid.n) if mu is None else profile.psi(mu)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_probe, grid.n)) + 1j * rng.standard_normal((n_probe, grid.n))

    def A(w):
        return _apply(phi, fv, np.fft.ifft(psi * np.fft.fft(w, axis=-1), axis=-1))

    def AH(w):
        # adjoint of m(D) f - f m(D) is f m(D) - m(D) f for real f, real even m
        fw = np.fft.ifft(phi * np.fft.fft(fv * w, axis=-1), axis=-1)
        x = fv * np.fft.ifft(phi * np.fft.fft(w, axis=-1), axis=-1) - fw
        return np.fft.ifft(psi * np.fft.fft(x, axis=-1), axis=-1)

    for _ in range(n_steps):
        w = AH(A(v))
        nrm = np.linalg.norm(w, axis=-1, keepdims=True)
        nrm[nrm == 0] = 1.0
        v = w / nrm
    num = np.linalg.norm(A(v), axis=-1)
    den = np.linalg.norm(v, axis=-1)
    den[den == 0] = 1.0
    return float(np.max(num / den))


@dataclass
class NormResult:
    value: float
    lower_bound_only: bool = False


def operator_norm(nu: int, mu, f, profile: LPProfile, dense_cap: int = 1024,
                  mode: str = "dense") -> NormResult:
    """``||[phi_nu, f] Psi_mu||`` on L2 (``mu=None`` for the full commutator)."""
    grid = profile.grid
    if mode == "randomized":
        return NormResult(randomized_lower_bound(nu, mu, f, profile), True)
    if grid.n > dense_cap:
        raise ResourceError(
            f"n={grid.n} exceeds the dense cap {dense_cap}; use mode='randomized' "
            "for a lower bound")
    return NormResult(largest_singular_value(commutator_matrix(nu, mu, f, profile)))


@dataclass
class CommutatorNormTable:
    norms: np.ndarray
    f_kind: str
    t: float
    nus: list
    mus: list
    lower_bound_only: bool = False

    def __post_init__(self):
        self.norms = np.asarray(self.norms, dtype=float)
        if np.any(self.norms < 0):
            raise ValueError("operator norms must be nonnegative")

    def get(self, nu: int, mu: int) -> float:
        try:
            return float(self.norms[self.nus.index(nu), self.mus.index(mu)])
        except ValueError:
            raise CoverageError(f"table has no entry ({nu}, {mu})") from None

    def covers(self, N: int) -> bool:
        need = set(range(N))
        return need <= set(self.nus) and need <= set(self.mus)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["nu", "mu", "norm", "kind", "t"])
            for i, nu in enumerate(self.nus):
                for j, mu in enumerate(self.mus):
                    w.writerow([nu, mu, f"{self.norms[i, j]:.17g}", self.f_kind,
                                f"{self.t:.17g}"])


def build_norm_table(f, profile: LPProfile, f_kind: str, t: float = 0.0,
                     indices=None, mode: str = "dense",
                     dense_cap: int = 1024) -> CommutatorNormTable:
    idx = list(range(profile.nu_max + 1)) if indices is None else list(indices)
    norms = np.zeros((len(idx), len(idx)))
    lower = False
    for i, nu in enumerate(idx):
        for j, mu in enumerate(idx):
            r = operator_norm(nu, mu, f, profile, dense_cap, mode)
            norms[i, j] = r.value
            lower |= r.lower_bound_only
    return CommutatorNormTable(norms, f_kind, float(t), idx, idx, lower)


# ---------------------------------------------------------------------------
# decay verification


@dataclass
class DecayReport:
    kind: str
    nus: np.ndarray
    norms: np.ndarray
    ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slope: float = np.nan
    slope_fit: dict = field(default_factory=dict)
    growth_limit: float = 1.5

    @property
    def max_over_median(self) -> float:
        if self.ratios.size == 0:
            return 0.0
        med = float(np.median(self.ratios))
        return 0.0 if med == 0 else float(self.ratios.max() / med)

    @property
    def last_over_median(self) -> float:
        if self.ratios.size == 0:
            return 0.0
        med = float(np.median(self.ratios))
        return 0.0 if med == 0 else float(self.ratios[-1] / med)

    @property
    def passed(self) -> bool:
        if np.all(self.norms <= 1e-12):      # commutator with a constant, up to roundoff
            return True
        if self.kind == "log-lipschitz":
            return self.max_over_median <= self.growth_limit
        if self.kind.startswith("hoelder"):
            omega = float(self.kind[len("hoelder("):-1])
            return omega - 0.1 <= -self.slope <= omega + 0.2
        return bool(np.all(np.isfinite(self.norms)))


def decay_slope(nus, norms) -> float:
    """Least-squares slope of ``log2(norm)`` against nu."""
    nus = np.asarray(nus, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if np.any(norms <= 0):
        return -np.inf
    return float(np.polyfit(nus, np.log2(norms), 1)[0])


def verify_comm_decay(f, f_kind: str, nu_range, profile: LPProfile,
                      sup_norm: float = 0.0, C0: float = 0.0,
                      mode: str = "dense") -> DecayReport:
    """Full-commutator norms over ``nu_range`` and the normalized decay ratios.

    log-lipschitz: ratio ``||[phi_nu, f]|| 2^nu / ((||f||_inf + C0)(nu + 1))``.
    hoelder(omega): log2 slope of the norms, compared with both -1 and -omega.
    """
    nus = np.asarray(list(nu_range))
    norms = np.array([operator_norm(int(nu), None, f, profile, mode=mode).value for nu in nus])
    rep = DecayReport(f_kind, nus, norms)
    if f_kind == "log-lipschitz":
        scale = sup_norm + C0
        rep.ratios = norms * 2.0**nus / (scale * (nus + 1)) if scale > 0 else np.zeros_like(norms)
    elif f_kind.startswith("hoelder"):
        omega = float(f_kind[len("hoelder("):-1])
        rep.slope = decay_slope(nus, norms)
        rep.ratios = norms * 2.0 ** (nus * omega)
        rep.slope_fit = {"measured": rep.slope, "rate_2^-nu": -1.0, "rate_2^-nu*omega": -omega}
    else:
        rep.slope = decay_slope(nus, norms) if np.all(norms > 0) else np.nan
    return rep
