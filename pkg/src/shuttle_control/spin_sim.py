"""Spatial shuttling pulses acting on the electron and donor nuclear spins.

State vectors live in a 48-dimensional space ordered site-major, then electron
spin (up, down), then the three nuclear spins (up, down) of sites 1, 2, 3:

    index = 16 * site + 8 * e + 4 * n1 + 2 * n2 + n3        (all 0-based)

The spin Hamiltonian is ``B g_e sz_e - B g_N sum_i sz_Ni + A sum_i |i><i| s_e.s_Ni``
with Pauli matrices, added to the donor-chain spatial Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .propagator import PiecewiseControls
from .units import HBAR_MEV_NS, mhz_to_mev

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY_IM = np.array([[0.0, -1.0], [1.0, 0.0]])  # sigma_y = 1j * SY_IM
SZ = np.diag([1.0, -1.0])
I2 = np.eye(2)

HYPERFINE_CONVENTIONS = ("splitting", "coefficient")

#: Free-electron and 31P gyromagnetic ratios (gamma / 2 pi) in MHz per gauss.
GAMMA_E_MHZ_PER_G = 2.8025
GAMMA_P31_MHZ_PER_G = 1.7235e-3
#: 31P hyperfine constant in MHz.
HYPERFINE_P31_MHZ = 117.5

_SPIN_DIM = 16
DIM = 3 * _SPIN_DIM


@dataclass(frozen=True)
class SpinConfig:
    """Spin-Hamiltonian coefficients: ``A`` in meV, field ``B`` in gauss,
    ``gamma_e`` and ``gamma_N`` in meV per gauss (coefficients of the Pauli
    z operators)."""

    A: float
    B: float
    gamma_e: float
    gamma_N: float

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError("hyperfine constant A must be non-negative")
        if not self.gamma_e > 0:
            raise ValueError("gamma_e must be positive")
        for name in ("A", "B", "gamma_e", "gamma_N"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def from_frequencies(
        cls,
        field_gauss: float,
        hyperfine_mhz: float = HYPERFINE_P31_MHZ,
        gamma_e_mhz_per_gauss: float = GAMMA_E_MHZ_PER_G,
        gamma_n_mhz_per_gauss: float = GAMMA_P31_MHZ_PER_G,
        hyperfine_convention: str = "splitting",
    ) -> "SpinConfig":
        """Build from laboratory units.

        A Zeeman frequency ``gamma * B`` splits the two levels of a spin by
        ``h gamma B``, so the Pauli-z coefficient is half of it.  With the
        ``"splitting"`` convention the hyperfine frequency is read as the
        observed splitting ``4 A`` between the ``s.s = +1`` and ``-3`` levels;
        with ``"coefficient"`` it is ``A`` itself.
        """
        if hyperfine_convention == "splitting":
            A = mhz_to_mev(hyperfine_mhz) / 4.0
        elif hyperfine_convention == "coefficient":
            A = mhz_to_mev(hyperfine_mhz)
        else:
            raise ValueError(f"hyperfine_convention must be one of {HYPERFINE_CONVENTIONS}")
        return cls(
            A=A,
            B=float(field_gauss),
            gamma_e=mhz_to_mev(gamma_e_mhz_per_gauss) / 2.0,
            gamma_N=mhz_to_mev(gamma_n_mhz_per_gauss) / 2.0,
        )


@dataclass(frozen=True, eq=False)
class HyperfineEigenstate:
    """Eigenpair of the single-site electron-nuclear Hamiltonian.

    ``vector`` is over ``(e, n)`` with index ``2 * e + n``; ``label`` is one of
    ``up_up``, ``down_down``, ``anti_minus`` (the branch that is the singlet at
    zero field) and ``anti_plus``.
    """

    label: str
    energy: float
    vector: np.ndarray

    @property
    def anti_aligned_coefficients(self) -> tuple[float, float]:
        """Coefficients on (e-up n-down, e-down n-up)."""
        return float(self.vector[1]), float(self.vector[2])


def _kron(*ops):
    out = np.ones((1, 1))
    for op in ops:
        out = np.kron(out, op)
    return out


def _dot_product(a: int, b: int, n_spins: int = 4) -> np.ndarray:
    """``sigma_a . sigma_b`` on ``n_spins`` qubits (real because sy x sy is real)."""
    def place(op, pos):
        ops = [I2] * n_spins
        ops[pos] = op
        return ops

    xx = _kron(*[x @ y for x, y in zip(place(SX, a), place(SX, b))])
    # (i M) x (i M) = - M x M
    yy = -_kron(*[x @ y for x, y in zip(place(SY_IM, a), place(SY_IM, b))])
    zz = _kron(*[x @ y for x, y in zip(place(SZ, a), place(SZ, b))])
    return xx + yy + zz


def _single_z(pos: int, n_spins: int) -> np.ndarray:
    ops = [I2] * n_spins
    ops[pos] = SZ
    return _kron(*ops)


def site_spin_hamiltonian(cfg: SpinConfig) -> np.ndarray:
    """4x4 electron-nuclear Hamiltonian of one occupied site, basis ``(e, n)``."""
    return (
        cfg.B * cfg.gamma_e * _single_z(0, 2)
        - cfg.B * cfg.gamma_N * _single_z(1, 2)
        + cfg.A * _dot_product(0, 1, 2)
    )


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # largest component positive; on a tie the first of the tied components
    mags = np.abs(v)
    top = np.flatnonzero(mags >= mags.max() - 1e-12)[0]
    return v if v[top] >= 0 else -v


def single_site_hyperfine_eigenstates(cfg: SpinConfig) -> list[HyperfineEigenstate]:
    """The four eigenstates of one site, sorted by energy.

    The aligned states are exact eigenstates for every field; the anti-aligned
    pair is obtained by diagonalising the 2x2 block they span, which keeps the
    labels well defined at zero field where three levels are degenerate.
    """
    h = site_spin_hamiltonian(cfg)
    states = []
    for label, idx in (("up_up", 0), ("down_down", 3)):
        v = np.zeros(4)
        v[idx] = 1.0
        states.append(HyperfineEigenstate(label, float(h[idx, idx]), v))
    block = h[np.ix_([1, 2], [1, 2])]
    energies, vecs = np.linalg.eigh(block)
    for label, e, col in zip(("anti_minus", "anti_plus"), energies, vecs.T):
        v = np.zeros(4)
        v[[1, 2]] = _fix_sign(col)
        states.append(HyperfineEigenstate(label, float(e), v))
    order = {"anti_minus": 0, "up_up": 1, "anti_plus": 2, "down_down": 3}
    return sorted(states, key=lambda s: (round(s.energy, 15), order[s.label]))


def hyperfine_eigenstate(cfg: SpinConfig, label: str) -> HyperfineEigenstate:
    for state in single_site_hyperfine_eigenstates(cfg):
        if state.label == label:
            return state
    raise KeyError(label)


# -- 48-dimensional model --------------------------------------------------


def _site_projector(site: int) -> np.ndarray:
    p = np.zeros((3, 3))
    p[site, site] = 1.0
    return p


def _hop(a: int, b: int) -> np.ndarray:
    p = np.zeros((3, 3))
    p[a, b] = p[b, a] = 1.0
    return p


def static_hamiltonian(cfg: SpinConfig, delta: float) -> np.ndarray:
    """Part of the full Hamiltonian that does not depend on the pulses."""
    spin_id = np.eye(_SPIN_DIM)
    zeeman = cfg.B * cfg.gamma_e * _single_z(0, 4) - cfg.B * cfg.gamma_N * sum(
        _single_z(i, 4) for i in (1, 2, 3)
    )
    h = delta * np.kron(_site_projector(1), spin_id) + np.kron(np.eye(3), zeeman)
    for site in range(3):
        h += cfg.A * np.kron(_site_projector(site), _dot_product(0, site + 1, 4))
    return h


def tunnelling_operators() -> tuple[np.ndarray, np.ndarray]:
    """Operators multiplying ``Omega_12`` and ``Omega_23``."""
    spin_id = np.eye(_SPIN_DIM)
    return -np.kron(_hop(0, 1), spin_id), -np.kron(_hop(1, 2), spin_id)


def build_full_hamiltonian(omega12: float, omega23: float, cfg: SpinConfig, delta: float) -> np.ndarray:
    """The 48x48 (real symmetric) Hamiltonian in meV."""
    k12, k23 = tunnelling_operators()
    return static_hamiltonian(cfg, delta) + omega12 * k12 + omega23 * k23


def total_sz() -> np.ndarray:
    """Total spin projection ``(sz_e + sum_i sz_Ni) / 2`` on the full space."""
    spin = sum(_single_z(i, 4) for i in range(4)) / 2.0
    return np.kron(np.eye(3), spin)


def product_state(site: int, pair_state: np.ndarray, other_nuclei: str = "up") -> np.ndarray:
    """Electron on ``site`` (1-based) with ``pair_state`` over (e, nucleus at that site).

    The two remaining nuclei are both ``up`` or both ``down``.
    """
    if site not in (1, 2, 3):
        raise ValueError("site must be 1, 2 or 3")
    pair = np.asarray(pair_state, dtype=np.complex128).reshape(2, 2)
    other = 0 if other_nuclei == "up" else 1
    psi = np.zeros((3, 2, 2, 2, 2), dtype=np.complex128)
    for e in range(2):
        for n in range(2):
            idx = [site - 1, e, other, other, other]
            idx[1 + site] = n
            psi[tuple(idx)] = pair[e, n]
    return psi.reshape(DIM)


def propagate_spin(
    psi0, controls: PiecewiseControls, cfg: SpinConfig, delta: float, substeps: int = 1,
    chunk: int = 512,
) -> np.ndarray:
    """Exact slice-wise propagation of one or several 48-dim states.

    ``psi0`` has shape ``(48,)`` or ``(n, 48)``.  Returns the states on the
    refined grid of ``N * substeps + 1`` points, shape ``(M, 48)`` or
    ``(M, n, 48)``.  Sub-slices share the slice Hamiltonian, so ``substeps``
    only refines the output time grid.
    """
    if controls.model.name != "donor_chain":
        raise ValueError("spin propagation needs donor-chain controls")
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    psi = np.array(psi0, dtype=np.complex128)
    single = psi.ndim == 1
    psi = np.atleast_2d(psi)
    if psi.shape[1] != DIM:
        raise ValueError(f"states must have dimension {DIM}")
    h_static = static_hamiltonian(cfg, delta)
    k12, k23 = tunnelling_operators()
    values = controls.values
    n = controls.n_slices
    sub_dt = controls.dt / substeps
    out = np.empty((n * substeps + 1,) + psi.shape, dtype=np.complex128)
    out[0] = psi
    state = psi.T.copy()  # (48, n_states)
    row = 1
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        hams = (
            h_static
            + values[start:stop, 0, None, None] * k12
            + values[start:stop, 1, None, None] * k23
        )
        energies, vecs = np.linalg.eigh(hams)
        phases = np.exp(-1j * energies * (sub_dt / HBAR_MEV_NS))
        for j in range(stop - start):
            v = vecs[j]
            for _ in range(substeps):
                state = v @ (phases[j][:, None] * (v.T @ state))
                out[row] = state.T
                row += 1
    return out[:, 0] if single else out


def site3_reduced(psi) -> np.ndarray:
    """Unnormalised site-3 block traced over nuclei 1 and 2, basis ``(e, n3)``.

    Accepts a single state ``(48,)`` or any stack ``(..., 48)``.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    block = psi.reshape(psi.shape[:-1] + (3, 2, 2, 2, 2))[..., 2, :, :, :, :]
    rho = np.einsum("...abcd,...ebcf->...adef", block, block.conj())
    return rho.reshape(psi.shape[:-1] + (4, 4))


def distance_measure(rho_T, rho_hf) -> float | np.ndarray:
    """``1 - ||rho_T - rho_hf||_2`` with the spectral norm (stacks allowed)."""
    diff = np.asarray(rho_T) - np.asarray(rho_hf)
    return 1.0 - np.abs(np.linalg.eigvalsh(diff)).max(axis=-1)


def site_populations(psi) -> np.ndarray:
    psi = np.asarray(psi)
    blocks = np.abs(psi.reshape(psi.shape[:-1] + (3, _SPIN_DIM))) ** 2
    return blocks.sum(axis=-1)


def spatial_fidelity(psi_final) -> float:
    """Total population on site 3."""
    return float(site_populations(psi_final)[..., 2])


@dataclass(frozen=True, eq=False)
class TransferRun:
    label: str
    field_gauss: float
    eigenstate: HyperfineEigenstate
    times: np.ndarray
    site1: np.ndarray
    site3: np.ndarray
    distance: np.ndarray

    @property
    def spatial_fidelity(self) -> float:
        return float(self.site3[-1])


def hyperfine_transfer(
    controls: PiecewiseControls, cfg: SpinConfig, delta: float,
    labels=("anti_minus", "down_down", "anti_plus", "up_up"),
) -> list[TransferRun]:
    """Transfer each single-site eigenstate from site 1 under ``controls``.

    Nuclei 2 and 3 start up; ``D`` is evaluated against the same eigenstate
    placed on site 3 at every slice boundary.
    """
    eig = {s.label: s for s in single_site_hyperfine_eigenstates(cfg)}
    states = [eig[label] for label in labels]
    psi0 = np.stack([product_state(1, s.vector) for s in states])
    traj = propagate_spin(psi0, controls, cfg, delta)
    times = np.arange(traj.shape[0]) * controls.dt
    pops = site_populations(traj)
    reduced = site3_reduced(traj)
    runs = []
    for i, s in enumerate(states):
        target = np.outer(s.vector, s.vector).astype(np.complex128)
        runs.append(TransferRun(
            label=s.label,
            field_gauss=cfg.B,
            eigenstate=s,
            times=times,
            site1=pops[:, i, 0],
            site3=pops[:, i, 2],
            distance=distance_measure(reduced[:, i], target),
        ))
    return runs
