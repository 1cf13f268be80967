"""Sixteen-setting two-qubit polarization tomography.

Reconstruction runs in two stages. Linear inversion solves the 16x16 design
system exactly and can return an unphysical matrix. Maximum likelihood then
fits ``rho = T^dagger T`` with ``T`` lower triangular and maximizes the
Poisson likelihood of the raw counts. ``T`` is left unnormalized, so its
trace carries the overall count scale ``n0``.
"""

from __future__ import annotations

import csv
import itertools
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .errors import ConfigError, ReconstructionError
from .qstate import PAULIS, DensityMatrix, as_density

BASIS_LABELS = ("HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
                "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL")

_S = 1.0 / np.sqrt(2.0)
KETS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, 1j * _S], dtype=complex),
    "L": np.array([_S, -1j * _S], dtype=complex),
}
# Physicality tolerance for reconstructed states.
RECON_TOL = 1e-8


def projector_for(label: str) -> np.ndarray:
    """Rank-1 projector ``|ab><ab|`` for a two-letter label such as ``"DR"``."""
    if not isinstance(label, str) or len(label) != 2 or any(ch not in KETS for ch in label):
        raise ValueError(f"unknown basis label {label!r}")
    ket = np.kron(KETS[label[0]], KETS[label[1]])
    return np.outer(ket, ket.conj())


_PROJ = np.array([projector_for(lab) for lab in BASIS_LABELS])
_PAULI16 = np.array([np.kron(a, b) for a, b in itertools.product((np.eye(2), *PAULIS), repeat=2)])
# _DESIGN[k, mu] = Tr[P_k sigma_mu] (real for Hermitian pairs)
_DESIGN = np.real(np.einsum("kij,mji->km", _PROJ, _PAULI16))
assert abs(np.linalg.det(_DESIGN)) > 1e-6, "tomography settings are not informationally complete"


@dataclass(frozen=True, eq=False)
class TomographyCounts:
    """Counts for the 16 canonical settings.

    Input in any order is sorted into canonical order. ``counts`` may hold
    real numbers so the same type can carry predicted means.
    """

    labels: tuple
    counts: np.ndarray
    acquisition_s: np.ndarray

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        counts = np.asarray(self.counts, dtype=float).reshape(-1)
        acq = np.broadcast_to(np.asarray(self.acquisition_s, dtype=float), counts.shape).copy()
        if len(labels) != 16 or counts.shape != (16,):
            raise ConfigError(f"tomography needs exactly 16 entries, got {len(labels)}")
        if len(set(labels)) != 16:
            dup = sorted({x for x in labels if labels.count(x) > 1})
            raise ConfigError(f"duplicate basis labels: {', '.join(dup)}")
        unknown = [x for x in labels if x not in BASIS_LABELS]
        if unknown:
            raise ConfigError(f"labels not in the canonical set: {', '.join(unknown)}")
        if np.any(~np.isfinite(counts)) or np.any(counts < 0):
            raise ConfigError("counts must be finite and nonnegative")
        if np.any(~(acq > 0)):
            raise ConfigError("acquisition_s must be > 0")
        order = [labels.index(x) for x in BASIS_LABELS]
        counts, acq = counts[order], acq[order]
        counts.setflags(write=False)
        acq.setflags(write=False)
        object.__setattr__(self, "labels", BASIS_LABELS)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "acquisition_s", acq)

    @classmethod
    def from_mapping(cls, counts: dict, acquisition_s: float | dict = 1.0) -> TomographyCounts:
        labels = list(counts)
        acq = [acquisition_s[x] for x in labels] if isinstance(acquisition_s, dict) else acquisition_s
        return cls(tuple(labels), [counts[x] for x in labels], acq)

    def as_dict(self) -> dict:
        return dict(zip(self.labels, self.counts.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["basis_label", "counts", "acquisition_s"])
            for lab, c, a in zip(self.labels, self.counts, self.acquisition_s):
                w.writerow([lab, int(c) if float(c).is_integer() else repr(float(c)), repr(float(a))])

    @classmethod
    def from_csv(cls, path) -> TomographyCounts:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(x.strip() for x in r)]
        if not rows or [x.strip() for x in rows[0]] != ["basis_label", "counts", "acquisition_s"]:
            raise ConfigError("header must be 'basis_label,counts,acquisition_s'", path=str(path))
        body = rows[1:]
        if len(body) != 16:
            raise ConfigError(f"expected 16 data rows, found {len(body)}", path=str(path))
        labels, counts, acq = [], [], []
        for i, row in enumerate(body, start=2):
            if len(row) != 3:
                raise ConfigError(f"row {i}: expected 3 fields, got {len(row)}", path=str(path))
            try:
                labels.append(row[0].strip())
                counts.append(float(row[1]))
                acq.append(float(row[2]))
            except ValueError:
                raise ConfigError(f"row {i}: non-numeric value in {row!r}", path=str(path)) from None
        try:
            return cls(tuple(labels), counts, acq)
        except ConfigError as exc:
            raise ConfigError(str(exc), path=str(path)) from None


def predicted_counts(rho, n0: float, acquisition_s) -> TomographyCounts:
    """Mean counts ``n0 * Tr[rho P_k] * acquisition_s`` in canonical order."""
    if n0 < 0:
        raise ValueError("n0 must be >= 0")
    r = as_density(rho).elements
    p = np.clip(np.real(np.einsum("kij,ji->k", _PROJ, r)), 0.0, None)
    acq = np.broadcast_to(np.asarray(acquisition_s, dtype=float), (16,))
    return TomographyCounts(BASIS_LABELS, n0 * p * acq, acq)


def linear_inversion(counts: TomographyCounts) -> np.ndarray:
    """Hermitian, unit-trace estimate solving the design system exactly (may be unphysical)."""
    rates = counts.counts / counts.acquisition_s
    if not np.any(rates > 0):
        raise ReconstructionError("all-zero counts: the state is undetermined")
    s = np.linalg.solve(_DESIGN, rates)
    if s[0] <= 0:
        raise ReconstructionError("linear inversion gives a nonpositive trace; counts are too sparse")
    rho = np.einsum("m,mij->ij", s, _PAULI16) / (4.0 * s[0])
    return 0.5 * (rho + rho.conj().T)


def project_to_physical(mat: np.ndarray) -> np.ndarray:
    """Closest density matrix in 2-norm to a Hermitian unit-trace matrix.

    Negative eigenvalues are zeroed and their weight is spread evenly over the
    remaining ones (iteratively, since that can push small ones negative).
    """
    w, v = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    w = w[::-1].copy()
    v = v[:, ::-1]
    excess = 0.0
    n = len(w)
    for i in range(n - 1, -1, -1):
        if w[i] + excess / (i + 1) < 0:
            excess += w[i]
            w[i] = 0.0
        else:
            w[: i + 1] += excess / (i + 1)
            break
    return (v * w) @ v.conj().T


def _probs(rho_elems):
    return np.real(np.einsum("kij,ji->k", _PROJ, rho_elems))


def log_likelihood(rho, counts: TomographyCounts, n0: float | None = None) -> float:
    """Poisson log-likelihood of ``counts``.

    ``n0=None`` uses its maximum-likelihood value for this ``rho``, so two
    states can be compared on equal footing.
    """
    r = as_density(rho, tol=RECON_TOL).elements
    a = counts.acquisition_s
    c = counts.counts
    p = np.clip(_probs(r), 0.0, None)
    if n0 is None:
        n0 = c.sum() / np.dot(a, p)
    mu = n0 * a * p
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(c > 0, c * np.log(mu), 0.0)
    if np.any((c > 0) & (mu <= 0)):
        return -np.inf
    return float(np.sum(term - mu - gammaln(c + 1.0)))


_TRIL = np.tril_indices(4, -1)


def _unpack(x):
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    t[_TRIL] = x[4:10] + 1j * x[10:16]
    return t


def _pack(t):
    return np.concatenate([np.real(np.diag(t)), np.real(t[_TRIL]), np.imag(t[_TRIL])])


def _lower_factor(mat):
    """Lower-triangular ``T`` with ``T^dagger T = mat`` (mat positive definite)."""
    j = np.eye(4)[::-1]
    lr = np.linalg.cholesky(j @ mat @ j)
    return (j @ lr @ j).conj().T


@dataclass(frozen=True)
class MLEResult:
    rho: DensityMatrix
    n0: float
    log_likelihood: float
    iterations: int
    converged: bool


def mle_reconstruct(counts: TomographyCounts, *, max_iter: int = 5000, seed: int = 0,
                    restarts: int = 3) -> MLEResult:
    """Maximum-likelihood state for the 16 counts.

    Starts from the physical projection of the linear-inversion estimate;
    failed runs are retried from seeded perturbations of that start.
    """
    c = counts.counts
    a = counts.acquisition_s
    total = c.sum()
    if total <= 0:
        raise ReconstructionError("all-zero counts: the state is undetermined")
    scale = total

    def nll(x):
        t = _unpack(x)
        m = t.conj().T @ t
        mu = np.clip(a * _probs(m), 1e-300, None)
        f = np.sum(mu - c * np.log(mu)) / scale
        g_mat = np.einsum("k,kij->ij", a * (1.0 - c / mu), _PROJ)
        g = 2.0 * (t @ g_mat)
        grad = np.concatenate([np.real(np.diag(g)), np.real(g[_TRIL]), np.imag(g[_TRIL])])
        return f, grad / scale

    try:
        rho0 = project_to_physical(linear_inversion(counts))
    except ReconstructionError:
        # very sparse data: start from the maximally mixed state
        rho0 = np.eye(4) / 4.0
    n0_hat = total / np.dot(a, np.clip(_probs(rho0), 0, None))
    x0 = _pack(_lower_factor(n0_hat * (rho0 + 1e-3 * np.eye(4)) / 1.004))
    rng = np.random.default_rng(seed)

    best = None
    iters = 0
    for attempt in range(restarts + 1):
        start = x0 if attempt == 0 else x0 + rng.normal(scale=0.05 * np.sqrt(n0_hat), size=16)
        res = minimize(nll, start, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-12, "maxcor": 30})
        iters += int(res.nit)
        gnorm = float(np.max(np.abs(res.jac)))
        ok = res.success or gnorm < 1e-7
        if best is None or res.fun < best[0].fun:
            best = (res, ok)
        if ok:
            break

    res, ok = best
    t = _unpack(res.x)
    m = t.conj().T @ t
    n0 = float(np.real(np.trace(m)))
    rho = DensityMatrix(0.5 * (m + m.conj().T) / n0, tol=RECON_TOL)
    out = MLEResult(rho, n0, log_likelihood(rho, counts, n0), iters, ok)
    if not ok:
        raise ReconstructionError(f"likelihood maximization did not converge: {res.message}", best=out)
    return out


def permuted(counts: TomographyCounts, order: Sequence[int]) -> TomographyCounts:
    """Same data supplied in another row order (normalized back on construction)."""
    return TomographyCounts(tuple(counts.labels[i] for i in order),
                            counts.counts[list(order)], counts.acquisition_s[list(order)])
