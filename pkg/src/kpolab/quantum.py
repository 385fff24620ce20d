"""Truncated-Fock Hamiltonian, Z_mu sector decomposition and diagonalization."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import ConvergenceError, TruncationWarning
from .params import ControlParams

CERTIFY_RTOL = 1e-8
RESIDUAL_RTOL = 1e-9


def drive_couplings(n, mu: int, xi: float) -> np.ndarray:
    """Matrix elements <n+mu| -xi(a+^mu + a^mu) |n> for Fock indices ``n``.

    Built as a product of per-factor square roots, so it neither overflows nor
    loses precision for any representable truncation.
    """
    n = np.asarray(n, dtype=float)
    amp = np.ones_like(n)
    for j in range(1, mu + 1):
        amp *= np.sqrt(n + j)
    return -xi * amp


def kerr_diagonal(n, delta: float) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return n * (n - 1.0) - delta * n


@dataclass(frozen=True)
class HamiltonianMatrix:
    """Real symmetric matrix with nonzeros only on the diagonal and the +/-mu bands.

    ``band[k]`` holds H[k + mu, k] = H[k, k + mu].
    """

    mu: int
    diag: np.ndarray
    band: np.ndarray

    @property
    def dim(self) -> int:
        return self.diag.size

    def toarray(self) -> np.ndarray:
        h = np.diag(self.diag)
        k = np.arange(self.band.size)
        h[k + self.mu, k] = self.band
        h[k, k + self.mu] = self.band
        return h

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        shape = (-1,) + (1,) * (v.ndim - 1)
        d, b, m = self.diag.reshape(shape), self.band.reshape(shape), self.mu
        out = d * v
        out[m:] += b * v[:-m]
        out[:-m] += b * v[m:]
        return out


def build_hamiltonian(params: ControlParams) -> HamiltonianMatrix:
    n = np.arange(params.n_trunc)
    diag = kerr_diagonal(n, params.delta)
    band = drive_couplings(n[: params.n_trunc - params.mu], params.mu, params.xi)
    return HamiltonianMatrix(params.mu, diag, band)


@dataclass(frozen=True)
class SectorBlock:
    """Tridiagonal block of the Fock states n = residue, residue+mu, ... < N."""

    residue: int
    mu: int
    dim: int
    fock: np.ndarray
    diag: np.ndarray
    offdiag: np.ndarray

    @property
    def local_dim(self) -> int:
        return self.fock.size


def sector_block(params: ControlParams, residue: int, n_trunc: int | None = None) -> SectorBlock:
    dim = params.n_trunc if n_trunc is None else n_trunc
    fock = np.arange(residue, dim, params.mu)
    return SectorBlock(
        residue=residue,
        mu=params.mu,
        dim=dim,
        fock=fock,
        diag=kerr_diagonal(fock, params.delta),
        offdiag=drive_couplings(fock[:-1], params.mu, params.xi),
    )


def sector_decompose(params: ControlParams) -> list[SectorBlock]:
    return [sector_block(params, r) for r in range(params.mu)]


@dataclass(frozen=True)
class EigenSolution:
    """Eigenpairs sorted by energy (ties: residue, then index within the sector).

    ``states`` is ``None`` when only eigenvalues were requested; otherwise its
    columns are eigenvectors over the full truncated Fock basis.
    """

    energies: np.ndarray
    sector_labels: np.ndarray
    local_index: np.ndarray
    mu: int
    dim: int
    states: np.ndarray | None = None
    converged_count: int | None = None
    max_residual: float = 0.0
    warnings: tuple = field(default_factory=tuple)

    def __len__(self):
        return self.energies.size

    def sector(self, residue: int) -> np.ndarray:
        return self.energies[self.sector_labels == residue]

    @property
    def certified(self) -> np.ndarray:
        n = len(self) if self.converged_count is None else self.converged_count
        return self.energies[:n]


def _solve_block(block: SectorBlock, vectors: bool, count: int | None):
    select, select_range = "a", None
    if count is not None and count < block.local_dim:
        select, select_range = "i", (0, count - 1)
    if block.local_dim == 1:
        w = block.diag.copy()
        return w, (np.ones((1, 1)) if vectors else None)
    try:
        if vectors:
            return eigh_tridiagonal(block.diag, block.offdiag, select=select, select_range=select_range)
        w = eigh_tridiagonal(block.diag, block.offdiag, eigvals_only=True,
                             select=select, select_range=select_range)
        return w, None
    except LinAlgError as exc:
        raise ConvergenceError(f"tridiagonal eigensolver failed in sector {block.residue}: {exc}") from exc


def diagonalize(block: SectorBlock, vectors: bool = True, count: int | None = None) -> EigenSolution:
    """Eigen-decomposition of one sector block (optionally only the lowest ``count``)."""
    w, v = _solve_block(block, vectors, count)
    states = None
    max_res = 0.0
    if vectors:
        tv = block.diag[:, None] * v
        tv[1:] += block.offdiag[:, None] * v[:-1]
        tv[:-1] += block.offdiag[:, None] * v[1:]
        res = np.linalg.norm(tv - v * w, axis=0)
        max_res = float(np.max(res / np.maximum(1.0, np.abs(w)))) if w.size else 0.0
        states = np.zeros((block.dim, w.size))
        states[block.fock] = v
    return EigenSolution(
        energies=w,
        sector_labels=np.full(w.size, block.residue),
        local_index=np.arange(w.size),
        mu=block.mu,
        dim=block.dim,
        states=states,
        converged_count=w.size,
        max_residual=max_res,
    )


def merge(parts: list[EigenSolution], count: int | None = None) -> EigenSolution:
    energies = np.concatenate([p.energies for p in parts])
    labels = np.concatenate([p.sector_labels for p in parts])
    local = np.concatenate([p.local_index for p in parts])
    order = np.lexsort((local, labels, energies))
    if count is not None:
        order = order[:count]
    states = None
    if all(p.states is not None for p in parts):
        states = np.concatenate([p.states for p in parts], axis=1)[:, order]
    return EigenSolution(
        energies=energies[order],
        sector_labels=labels[order],
        local_index=local[order],
        mu=parts[0].mu,
        dim=parts[0].dim,
        states=states,
        max_residual=max(p.max_residual for p in parts),
    )


def _sector_count(params: ControlParams, k: int | None, residue: int, dim: int) -> int | None:
    # the lowest k merged levels contain at most k levels of any one sector
    if k is None:
        return None
    return min(k, len(range(residue, dim, params.mu)))


def solve(params: ControlParams, k: int | None = None, vectors: bool = False,
          n_trunc: int | None = None, workers: int = 1) -> EigenSolution:
    """Merged sector spectrum at a given truncation, without certification."""
    dim = params.n_trunc if n_trunc is None else n_trunc
    blocks = [sector_block(params, r, dim) for r in range(params.mu)]

    def run(block):
        return diagonalize(block, vectors=vectors, count=_sector_count(params, k, block.residue, dim))

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return merge(parts, count=k)


def certify(params: ControlParams, solution: EigenSolution, k: int) -> int:
    """Number of leading levels stable under doubling the truncation."""
    ref = solve(params, k=k, n_trunc=2 * params.n_trunc)
    e = solution.energies[:k]
    bad = np.abs(ref.energies[: e.size] - e) > CERTIFY_RTOL * np.maximum(1.0, np.abs(e))
    return int(np.argmax(bad)) if bad.any() else int(e.size)


def full_spectrum(params: ControlParams, k: int | None = None, vectors: bool = False,
                  certify_levels: bool = True, workers: int = 1) -> EigenSolution:
    """Lowest ``k`` levels of all sectors, merge-sorted, with truncation certification.

    Convergence is certified by re-solving at truncation 2N; a
    :class:`TruncationWarning` carrying the first unconverged index is issued
    (and stored on the result) when fewer than ``k`` levels pass.
    """
    if k is not None and not 0 < k <= params.n_trunc:
        raise ValueError(f"k must lie in [1, {params.n_trunc}], got {k}")
    sol = solve(params, k=k, vectors=vectors, workers=workers)
    if not certify_levels:
        return sol
    want = len(sol) if k is None else k
    converged = certify(params, sol, want)
    notes = ()
    if converged < want:
        msg = (f"truncation N={params.n_trunc} certifies only {converged} of {want} levels "
               f"(first unconverged index {converged})")
        warnings.warn(TruncationWarning(msg, converged), stacklevel=2)
        notes = (msg,)
    return EigenSolution(
        energies=sol.energies,
        sector_labels=sol.sector_labels,
        local_index=sol.local_index,
        mu=sol.mu,
        dim=sol.dim,
        states=sol.states,
        converged_count=converged,
        max_residual=sol.max_residual,
        warnings=notes,
    )


def default_truncation(k: int) -> int:
    return max(400, 4 * k)


def ground_energy(params: ControlParams) -> float:
    return float(solve(params, k=1).energies[0])
