"""Spin-phonon coupling: derivative fitting, analytic dipolar derivatives,
normal-mode projection and coupling-norm distributions."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .units import DIPOLAR_PREFACTOR_CM1_A3, ZERO_POINT_LENGTH_A

#: channels, keyed by the target-tensor kind
CHANNEL_OF_KIND = {"g": "zeeman", "A": "hyperfine", "dip": "dipolar"}
CHANNELS = ("zeeman", "hyperfine", "dipolar")

DEFAULT_OMEGA_MIN = 0.01  # cm^-1, guards the 1/sqrt(omega) amplitude


@dataclass(frozen=True)
class DerivativeScan:
    """Displacement scan of one tensor along one Cartesian direction.

    ``displacements`` in Angstrom (spanning zero, >= 5 distinct values),
    ``tensors`` the 3x3 tensor at each displacement.
    """

    target: tuple  # e.g. ("g", center_id) or ("A", (i, j))
    atom: int
    direction: int
    displacements: np.ndarray
    tensors: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.displacements, dtype=float)
        t = np.asarray(self.tensors, dtype=float)
        object.__setattr__(self, "displacements", x)
        object.__setattr__(self, "tensors", t)
        if len(np.unique(x)) < 5:
            raise ValidationError("scan needs at least 5 distinct displacements")
        if x.min() >= 0 or x.max() <= 0:
            raise ValidationError("scan displacements must span zero")
        if t.shape != (x.size, 3, 3) or not np.all(np.isfinite(t)):
            raise ValidationError("scan tensors must be finite with shape (n, 3, 3)")


def fit_derivative_scan(scan, rejection_threshold=0.07):
    """Quartic fit of each tensor component; returns the linear term.

    Each component is fitted with p0 + p1 x + ... + p4 x^4. A component
    is set to zero when the standard error of p1 exceeds
    rejection_threshold * |p1|. Returns (d_tensor, decisions) where
    decisions[u][v] is one of "kept", "rejected", "zero".
    """
    x = scan.displacements
    X = np.vander(x, 5, increasing=True)
    n = x.size
    if np.linalg.matrix_rank(X) < 5:
        raise NumericalError("rank-deficient design matrix in derivative scan fit")
    XtX_inv = np.linalg.inv(X.T @ X)
    out = np.zeros((3, 3))
    decisions = [["zero"] * 3 for _ in range(3)]
    for u in range(3):
        for v in range(3):
            y = scan.tensors[:, u, v]
            coef, *_ = np.linalg.lstsq(X, y, rcond=None)
            p1 = coef[1]
            resid = y - X @ coef
            dof = max(n - 5, 1)
            var = float(resid @ resid) / dof
            se = np.sqrt(var * XtX_inv[1, 1])
            if p1 == 0.0:
                decisions[u][v] = "zero"
            elif se > rejection_threshold * abs(p1):
                decisions[u][v] = "rejected"
            else:
                out[u, v] = p1
                decisions[u][v] = "kept"
    return out, decisions


def dipolar_derivative(center_i, center_j, r_vec, s):
    """d D^dip / d r_s for the point-dipole tensor, r_vec = x_j - x_i (A).

    Closed-form differentiation of C/r^3 [gi^T gj - 3 gi^T rhat rhat^T gj].
    Displacing center j along s adds +this; displacing center i, -this.
    """
    r_vec = np.asarray(r_vec, dtype=float)
    r = np.linalg.norm(r_vec)
    if r <= 0.1:
        raise ValidationError("singular separation in dipolar derivative")
    gi, gj = center_i.g, center_j.g
    C = DIPOLAR_PREFACTOR_CM1_A3
    G = gi.T @ gj
    e = np.zeros(3)
    e[s] = 1.0
    M = np.outer(gi.T @ r_vec, r_vec @ gj)
    dM = np.outer(gi.T @ e, r_vec @ gj) + np.outer(gi.T @ r_vec, e @ gj)
    return C * (
        -3.0 * r_vec[s] * G / r**5
        - 3.0 * dM / r**5
        + 15.0 * r_vec[s] * M / r**7
    )


@dataclass(frozen=True)
class CouplingDerivativeSet:
    """Cartesian derivatives of spin-Hamiltonian tensors, one per record.

    targets[k] identifies the tensor (("g", center), ("A", (i, j)) or
    ("dip", (i, j))); atom/s/lvec locate the displaced degree of freedom;
    tensors[k] is the 3x3 derivative per Angstrom (g dimensionless/A,
    A and dip in cm^-1/A).
    """

    targets: tuple
    atom: np.ndarray
    s: np.ndarray
    lvecs: np.ndarray
    tensors: np.ndarray
    provenance: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "atom", np.asarray(self.atom, dtype=int))
        object.__setattr__(self, "s", np.asarray(self.s, dtype=int))
        lv = np.asarray(self.lvecs, dtype=int)
        if lv.size == 0:
            lv = lv.reshape(0, 3)
        object.__setattr__(self, "lvecs", lv)
        t = np.asarray(self.tensors, dtype=float)
        if t.size == 0:
            t = t.reshape(0, 3, 3)
        object.__setattr__(self, "tensors", t)
        if not np.all(np.isfinite(t)):
            raise ValidationError("non-finite derivative tensors")
        if len(self.provenance) != len(self.targets):
            object.__setattr__(
                self, "provenance", tuple(["synthetic"] * len(self.targets))
            )

    @property
    def n_records(self):
        return len(self.targets)

    def channel_of(self, k):
        return CHANNEL_OF_KIND[self.targets[k][0]]

    @property
    def channels(self):
        return tuple(c for c in CHANNELS
                     if any(self.channel_of(k) == c for k in range(self.n_records)))

    def select_channels(self, channels):
        keep = [k for k in range(self.n_records) if self.channel_of(k) in channels]
        return self._subset(keep)

    def scaled(self, factor, channel=None):
        """Scale derivative tensors, optionally only one channel's."""
        t = self.tensors.copy()
        for k in range(self.n_records):
            if channel is None or self.channel_of(k) == channel:
                t[k] *= factor
        return CouplingDerivativeSet(self.targets, self.atom, self.s,
                                     self.lvecs, t, self.provenance)

    def _subset(self, keep):
        return CouplingDerivativeSet(
            targets=[self.targets[k] for k in keep],
            atom=self.atom[keep],
            s=self.s[keep],
            lvecs=self.lvecs[keep],
            tensors=self.tensors[keep],
            provenance=[self.provenance[k] for k in keep],
        )

    def merged(self, other):
        return CouplingDerivativeSet(
            targets=list(self.targets) + list(other.targets),
            atom=np.concatenate([self.atom, other.atom]),
            s=np.concatenate([self.s, other.s]),
            lvecs=np.concatenate([self.lvecs, other.lvecs]),
            tensors=np.concatenate([self.tensors, other.tensors]),
            provenance=list(self.provenance) + list(other.provenance),
        )


def dipolar_pair_records(center_i, center_j, atom_i, atom_j,
                         lvec_j=(0, 0, 0), lvec_i=(0, 0, 0)):
    """Analytic dipolar derivative records for one electron pair.

    Rigid translation invariance is built in: the derivative with
    respect to the carrier atom of i is minus that of j.
    """
    r_vec = center_j.position - center_i.position
    targets, atoms, ss, lvecs, tensors, prov = [], [], [], [], [], []
    for s in range(3):
        d = dipolar_derivative(center_i, center_j, r_vec, s)
        for atom, sign, lv in ((atom_j, 1.0, lvec_j), (atom_i, -1.0, lvec_i)):
            targets.append(("dip", (center_i.id, center_j.id)))
            atoms.append(atom)
            ss.append(s)
            lvecs.append(lv)
            tensors.append(sign * d)
            prov.append("analytic")
    return CouplingDerivativeSet(targets, atoms, ss, lvecs, tensors, prov)


def mode_tensor_derivatives(derivs, mode, crystal, n_q):
    """Project Cartesian derivative records on one normal mode.

    Returns {target: complex 3x3} with the amplitude factor
    sqrt(hbar / (N_q omega m_i)) folded in, so each entry is the
    derivative of that tensor with respect to the mode coordinate.
    """
    if mode.imaginary or mode.omega <= 0:
        raise ValidationError("cannot project on an imaginary/zero mode")
    masses = crystal.masses
    amp = ZERO_POINT_LENGTH_A / np.sqrt(n_q * mode.omega * masses[derivs.atom])
    phase = np.exp(2j * np.pi * (derivs.lvecs @ np.asarray(mode.q, float)))
    L = mode.eigvec[3 * derivs.atom + derivs.s]
    coeff = amp * phase * L
    out = {}
    for k, tgt in enumerate(derivs.targets):
        if tgt not in out:
            out[tgt] = np.zeros((3, 3), dtype=complex)
        out[tgt] += coeff[k] * derivs.tensors[k]
    return out


@dataclass(frozen=True)
class ModeCoupling:
    """Hermitian spin-space coupling operator for one mode and channel.

    Complex e^{iq.R} phases are handled by splitting each mode's tensor
    derivative into real and imaginary standing-wave parts; summed over
    an inversion-symmetric q-grid this reproduces the +-q paired rates
    independently of eigenvector phase conventions.
    """

    omega: float
    q: np.ndarray
    branch: int
    channel: str
    operator: np.ndarray  # product basis, cm^-1
    V: np.ndarray  # eigenbasis matrix elements


def _tensor_to_operator(system, ops, target, tensor):
    kind, key = target
    if kind == "g":
        c = system.center(key)
        S = ops.embedded[key]
        gB = system.field_B @ tensor  # B . dg
        return c.magneton_cm1_per_T * np.einsum("v,vab->ab", gB, S)
    i, j = key
    Si = ops.embedded[i]
    Sj = ops.embedded[j]
    return np.einsum("uv,uab,vbc->ac", np.asarray(tensor, complex), Si, Sj)


def project_to_mode(derivs, mode, crystal, n_q, system, ops, ham,
                    channels=None, omega_min=DEFAULT_OMEGA_MIN):
    """Build Hermitian ModeCoupling operators for one phonon mode.

    Same-channel tensor derivatives are summed coherently; channels stay
    separate (same-index cross terms only enter the rate assembly).
    """
    if mode.omega < omega_min:
        raise ValidationError(
            f"mode omega {mode.omega:.4g} below omega_min {omega_min:.4g}")
    tensors = mode_tensor_derivatives(derivs, mode, crystal, n_q)
    per_channel = {}
    for tgt, T in tensors.items():
        ch = CHANNEL_OF_KIND[tgt[0]]
        if channels is not None and ch not in channels:
            continue
        op = _tensor_to_operator(system, ops, tgt, T)
        per_channel[ch] = per_channel.get(ch, 0.0) + op
    out = []
    for ch, op in per_channel.items():
        herm = 0.5 * (op + op.conj().T)
        anti = 0.5 * (op - op.conj().T) / 1j
        for part in (herm, anti):
            if np.max(np.abs(part)) == 0.0:
                continue
            V = ham.to_eigenbasis(part)
            out.append(ModeCoupling(omega=mode.omega, q=np.asarray(mode.q, float),
                                    branch=mode.branch, channel=ch,
                                    operator=part, V=V))
    return out


def coupling_norm_distribution(precursors, n_q, bin_width=2.0):
    """q-averaged squared Frobenius norms of tensor derivatives vs omega.

    ``precursors`` iterates (omega, {target: complex 3x3}) pairs, e.g.
    from mode_tensor_derivatives over a grid. Returns
    {channel: (bin_centers, V2)} with V2 = (1/N_q) sum |dT/dQ|_F^2
    accumulated per frequency bin.
    """
    omega_max = 0.0
    items = []
    for omega, tensors in precursors:
        omega_max = max(omega_max, omega)
        items.append((omega, tensors))
    nbins = max(1, int(np.ceil(omega_max / bin_width)) + 1)
    acc = {ch: np.zeros(nbins) for ch in CHANNELS}
    for omega, tensors in items:
        b = min(int(omega / bin_width), nbins - 1)
        for tgt, T in tensors.items():
            ch = CHANNEL_OF_KIND[tgt[0]]
            acc[ch][b] += float(np.sum(np.abs(T) ** 2))
    centers = (np.arange(nbins) + 0.5) * bin_width
    return {ch: (centers, acc[ch] / max(n_q, 1)) for ch in CHANNELS}
