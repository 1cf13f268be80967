"""Two-qubit polarization states and entanglement metrics.

All matrices use the basis order ``|HH>, |HV>, |VH>, |VV>`` (first slot is the
signal photon).  Values are treated as immutable: constructors copy their input
and freeze the stored array.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NonPhysicalStateError

BASIS_ORDER = ("HH", "HV", "VH", "VV")
PHYS_TOL = 1e-9
NORM_TOL = 1e-12
TSIRELSON = 2.0 * np.sqrt(2.0)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)
_YY = np.kron(SIGMA_Y, SIGMA_Y)


def _frozen(arr):
    arr = np.array(arr, dtype=complex, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized two-qubit ket."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.shape != (4,):
            raise ValueError(f"a two-qubit ket needs 4 amplitudes, got shape {amp.shape}")
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"ket is not normalized (norm={norm:.15g})")
        object.__setattr__(self, "amplitudes", _frozen(amp))

    @classmethod
    def normalized(cls, amplitudes) -> PureState:
        amp = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amp)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amp / norm)

    @classmethod
    def from_alpha_beta(cls, alpha, beta) -> PureState:
        """Source state ``alpha|HH> + beta|VV>``."""
        return cls([alpha, 0, 0, beta])

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def overlap(self, other: PureState) -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Physical 4x4 density matrix.

    ``tol`` bounds the allowed Hermiticity, trace and negativity violations.
    Reconstruction code may pass a looser value explicitly.
    """

    elements: np.ndarray
    tol: float = PHYS_TOL

    def __post_init__(self):
        rho = np.asarray(self.elements, dtype=complex)
        if rho.shape != (4, 4):
            raise NonPhysicalStateError(f"density matrix must be 4x4, got {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise NonPhysicalStateError("density matrix has non-finite entries")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > self.tol:
            raise NonPhysicalStateError(f"not Hermitian (max |rho - rho^H| = {herm:.3g})")
        tr = np.trace(rho)
        if abs(tr - 1.0) > self.tol:
            raise NonPhysicalStateError(f"trace is {tr.real:.12g}, expected 1")
        lam_min = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
        if lam_min < -self.tol:
            raise NonPhysicalStateError(f"negative eigenvalue {lam_min:.3g}")
        object.__setattr__(self, "elements", _frozen(rho))

    @classmethod
    def from_pure(cls, state: PureState) -> DensityMatrix:
        return cls(state.projector())

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in ascending order."""
        return np.linalg.eigvalsh(self.elements)

    def expectation(self, op) -> complex:
        return complex(np.trace(self.elements @ op))

    def to_json(self) -> dict:
        return {
            "basis_order": list(BASIS_ORDER),
            "elements": [[[float(z.real), float(z.imag)] for z in row] for row in self.elements],
        }

    @classmethod
    def from_json(cls, obj: dict, tol: float = PHYS_TOL) -> DensityMatrix:
        order = tuple(obj.get("basis_order", BASIS_ORDER))
        if order != BASIS_ORDER:
            raise NonPhysicalStateError(f"unsupported basis order {order}")
        arr = np.array(obj["elements"], dtype=float)
        if arr.shape != (4, 4, 2):
            raise NonPhysicalStateError(f"elements must be 4x4 [re, im] pairs, got {arr.shape}")
        return cls(arr[..., 0] + 1j * arr[..., 1], tol=tol)


class BellKind(enum.Enum):
    PhiPlus = "PhiPlus"
    PhiMinus = "PhiMinus"
    PsiPlus = "PsiPlus"
    PsiMinus = "PsiMinus"


_BELL = {
    BellKind.PhiPlus: (1, 0, 0, 1),
    BellKind.PhiMinus: (1, 0, 0, -1),
    BellKind.PsiPlus: (0, 1, 1, 0),
    BellKind.PsiMinus: (0, 1, -1, 0),
}


def bell_state(kind: BellKind | str) -> PureState:
    kind = BellKind(kind)
    return PureState(np.array(_BELL[kind], dtype=complex) / np.sqrt(2.0))


def as_density(rho, tol: float = PHYS_TOL) -> DensityMatrix:
    """Coerce a DensityMatrix, PureState or array into a validated DensityMatrix."""
    if isinstance(rho, DensityMatrix):
        return rho
    if isinstance(rho, PureState):
        return DensityMatrix.from_pure(rho)
    return DensityMatrix(rho, tol=tol)


def werner(p: float) -> DensityMatrix:
    """``p |Phi+><Phi+| + (1 - p) I/4``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Werner weight must lie in [0, 1], got {p}")
    phi = bell_state(BellKind.PhiPlus).projector()
    return DensityMatrix(p * phi + (1.0 - p) * np.eye(4) / 4.0)


def fidelity(rho, target: PureState) -> float:
    """Probability fidelity ``<phi|rho|phi>`` (not the square-root form)."""
    rho = as_density(rho)
    phi = target.amplitudes
    return float(np.real(np.vdot(phi, rho.elements @ phi)))


def max_pure_fidelity(rho) -> float:
    """Largest ``<phi|rho|phi>`` over all pure states, i.e. the top eigenvalue."""
    return float(as_density(rho).eigenvalues[-1])


def purity(rho) -> float:
    r = as_density(rho).elements
    return float(np.real(np.trace(r @ r)))


def _psd_sqrt(mat):
    w, v = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    # roundoff-level eigenvalues are zeroed so rank-deficient states stay exact
    w = np.where(w > 1e-14 * max(w[-1], 1.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def concurrence(rho) -> float:
    """Wootters concurrence.

    The lambdas, the square roots of the eigenvalues of ``rho rho~``, are
    computed as the singular values of ``sqrt(rho) sqrt(rho~)``.  This keeps
    small lambdas accurate to machine precision instead of its square root.
    """
    r = as_density(rho).elements
    s = _psd_sqrt(r)
    s_tilde = _YY @ s.conj() @ _YY
    lam = np.linalg.svd(s @ s_tilde, compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def correlation_matrix(rho) -> np.ndarray:
    """3x3 matrix ``T_ij = Tr[rho (sigma_i x sigma_j)]``."""
    r = as_density(rho).elements
    return np.array(
        [[np.real(np.trace(r @ np.kron(a, b))) for b in PAULIS] for a in PAULIS]
    )


def chsh_max(rho) -> float:
    """Maximal CHSH value over measurement settings (Horodecki criterion)."""
    t = correlation_matrix(rho)
    m = np.sort(np.linalg.eigvalsh(t.T @ t))[::-1]
    return float(2.0 * np.sqrt(max(m[0] + m[1], 0.0)))


@dataclass(frozen=True)
class EntanglementReport:
    fidelity_to_target: float
    max_pure_fidelity: float
    concurrence: float
    chsh_s: float
    purity: float

    def to_json(self) -> dict:
        return {
            "fidelity_to_target": self.fidelity_to_target,
            "max_pure_fidelity": self.max_pure_fidelity,
            "concurrence": self.concurrence,
            "chsh_s": self.chsh_s,
            "purity": self.purity,
        }


def entanglement_report(rho, target: PureState | BellKind | str = BellKind.PhiPlus) -> EntanglementReport:
    rho = as_density(rho)
    if not isinstance(target, PureState):
        target = bell_state(target)
    return EntanglementReport(
        fidelity_to_target=fidelity(rho, target),
        max_pure_fidelity=max_pure_fidelity(rho),
        concurrence=concurrence(rho),
        chsh_s=chsh_max(rho),
        purity=purity(rho),
    )


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> DensityMatrix:
    """Ginibre-distributed random state of the given rank."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real)


def random_unitary(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
