"""Domain types, synthetic systems, the periodic Coulomb kernel and WFN1 I/O.

Conventions: hartree / bohr units; wavefunctions are real and orthonormal
under the dV-weighted inner product ``psi.T @ psi * dV = I``; grid points are
flattened in C order over ``dims``.
"""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, GuardError, PreconditionError, ValidationError
from .linalg import dft

ORTHO_TOL = 1e-10
DENSE_COULOMB_MAX_NR = 4096
WFN_MAGIC = b"WFN1"


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    dims: tuple
    cell_lengths: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        cell = tuple(float(c) for c in self.cell_lengths)
        if len(dims) != 3 or len(cell) != 3:
            raise ValidationError("grid needs three dims and three cell lengths")
        if min(dims) < 2:
            raise ValidationError(f"every grid dimension must be >= 2, got {dims}")
        if min(cell) <= 0:
            raise ValidationError(f"cell lengths must be positive, got {cell}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "cell_lengths", cell)

    @property
    def n_r(self):
        n1, n2, n3 = self.dims
        return n1 * n2 * n3

    @property
    def volume(self):
        a, b, c = self.cell_lengths
        return a * b * c

    @property
    def dV(self):
        return self.volume / self.n_r

    def g_squared(self):
        """|G|^2 at every grid point in FFT ordering, flattened like real space."""
        comps = [
            2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
            for n, length in zip(self.dims, self.cell_lengths)
        ]
        g1, g2, g3 = np.meshgrid(*comps, indexing="ij")
        return (g1**2 + g2**2 + g3**2).ravel()


@dataclass(frozen=True)
class ElectronicStructure:
    grid: Grid
    psi: np.ndarray
    energies: np.ndarray
    vxc: np.ndarray
    n_v: int
    n_c: int

    def __post_init__(self):
        n_v, n_c = int(self.n_v), int(self.n_c)
        if n_v < 1 or n_c < 1:
            raise ValidationError("need at least one occupied and one unoccupied band")
        nb = n_v + n_c
        psi = _frozen(self.psi)
        energies = _frozen(self.energies)
        vxc = _frozen(self.vxc)
        if psi.shape != (self.grid.n_r, nb):
            raise ValidationError(f"psi has shape {psi.shape}, expected {(self.grid.n_r, nb)}")
        if energies.shape != (nb,) or vxc.shape != (nb,):
            raise ValidationError("energies and vxc must have one entry per band")
        if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(energies)) and np.all(np.isfinite(vxc))):
            raise ValidationError("non-finite values in electronic structure")
        if np.any(np.diff(energies) < 0):
            raise ValidationError("band energies must be non-decreasing")
        if not energies[n_v] - energies[n_v - 1] > 0:
            raise PreconditionError(
                f"gap must be positive, got {energies[n_v] - energies[n_v - 1]!r}"
            )
        defect = orthonormality_defect(psi, self.grid.dV)
        if defect > ORTHO_TOL:
            raise ValidationError(f"wavefunctions not orthonormal (defect {defect:.3e})")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "vxc", vxc)
        object.__setattr__(self, "n_v", n_v)
        object.__setattr__(self, "n_c", n_c)

    @property
    def n_bands(self):
        return self.n_v + self.n_c

    @property
    def psi_v(self):
        return self.psi[:, : self.n_v]

    @property
    def psi_c(self):
        return self.psi[:, self.n_v :]

    @property
    def gap(self):
        """Smallest occupied-to-unoccupied difference ``q``."""
        return float(self.energies[self.n_v] - self.energies[self.n_v - 1])

    @property
    def span(self):
        """Largest occupied-top-to-unoccupied difference ``Q``."""
        return float(self.energies[-1] - self.energies[self.n_v - 1])


def orthonormality_defect(psi, dV):
    psi = np.asarray(psi)
    return float(np.linalg.norm(psi.T @ psi * dV - np.eye(psi.shape[1])))


def omega_diagonal(energies, n_v, n_c):
    """Diagonal of Omega: ``e_i - e_j`` for occupied i, unoccupied j, i fastest."""
    e = np.asarray(energies, dtype=float)
    ev = e[:n_v]
    ec = e[n_v : n_v + n_c]
    return (ev[None, :] - ec[:, None]).ravel()


def pair_products(psi_a, psi_b):
    """Pair matrix with column ``i + N1*j`` equal to ``psi_a[:, i] * psi_b[:, j]``."""
    psi_a = np.asarray(psi_a)
    psi_b = np.asarray(psi_b)
    n1, n2 = psi_a.shape[1], psi_b.shape[1]
    return (psi_b[:, :, None] * psi_a[:, None, :]).reshape(psi_a.shape[0], n1 * n2)


def _band_energies(rng, n, low, high):
    if n == 1:
        return np.array([high if low < 0 else low])
    inner = np.sort(rng.uniform(low, high, size=n - 2))
    e = np.concatenate(([low], inner, [high]))
    # strictly increasing: nudge exact ties (vanishingly rare) apart
    for k in range(1, n):
        if e[k] <= e[k - 1]:
            e[k] = np.nextafter(e[k - 1], np.inf)
    return e


def build_synthetic_system(seed, grid, n_v, n_c, gap, bandwidth, envelope=0.1):
    """Seeded stand-in for a KS-DFT calculation.

    Wavefunctions are random reciprocal-space coefficients under a Gaussian
    low-pass envelope of width ``envelope * max|G|``, taken to real space,
    made real, then orthonormalised. Occupied energies span
    ``[-bandwidth, 0]`` and unoccupied ``[gap, gap + bandwidth]``, both ends
    pinned so the gap and span are exact.
    """
    n_v, n_c = int(n_v), int(n_c)
    if not gap > 0:
        raise PreconditionError(f"gap must be positive, got {gap!r}")
    if bandwidth < gap:
        raise ValidationError(f"bandwidth ({bandwidth}) must be >= gap ({gap})")
    if n_v < 1 or n_c < 1:
        raise ValidationError("need at least one occupied and one unoccupied band")
    nb = n_v + n_c
    if nb > grid.n_r:
        raise ValidationError(f"grid of {grid.n_r} points is too small for {nb} bands")
    rng = np.random.default_rng(seed)
    g2 = grid.g_squared()
    sigma = envelope * np.sqrt(g2.max())
    env = np.exp(-g2 / (2.0 * sigma**2))
    coeff = (rng.standard_normal((grid.n_r, nb)) + 1j * rng.standard_normal((grid.n_r, nb))) * env[:, None]
    fields = dft(coeff, grid.dims, inverse=True).real
    q, r = np.linalg.qr(fields)
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    psi = q / np.sqrt(grid.dV)
    energies = np.concatenate(
        (
            _band_energies(rng, n_v, -float(bandwidth), 0.0),
            _band_energies(rng, n_c, float(gap), float(gap) + float(bandwidth)),
        )
    )
    return ElectronicStructure(grid=grid, psi=psi, energies=energies, vxc=np.zeros(nb), n_v=n_v, n_c=n_c)


@dataclass(frozen=True)
class CoulombOperator:
    grid: Grid
    mode: str
    kernel: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.mode not in ("reciprocal_diagonal", "dense"):
            raise ValidationError(f"unknown Coulomb mode {self.mode!r}")
        object.__setattr__(self, "kernel", _frozen(self.kernel))


def coulomb_kernel(grid):
    """``4 pi / |G|^2`` with the G = 0 term set to zero."""
    g2 = grid.g_squared()
    v = np.zeros_like(g2)
    nz = g2 > 0
    v[nz] = 4.0 * np.pi / g2[nz]
    return v


def _materialise(v, grid):
    if grid.n_r > DENSE_COULOMB_MAX_NR:
        raise GuardError(f"dense Coulomb refused for N_r={grid.n_r} > {DENSE_COULOMB_MAX_NR}")
    dense = _apply_reciprocal(v, grid.dims, np.eye(grid.n_r))
    return 0.5 * (dense + dense.T)


def build_coulomb(grid, mode="reciprocal_diagonal"):
    v = coulomb_kernel(grid)
    if mode == "reciprocal_diagonal":
        return CoulombOperator(grid=grid, mode=mode, kernel=v)
    if mode == "dense":
        return CoulombOperator(grid=grid, mode=mode, kernel=_materialise(v, grid))
    raise ValidationError(f"unknown Coulomb mode {mode!r}")


def dense_coulomb(V):
    """The operator as an explicit N_r x N_r matrix, built from its own kernel."""
    if V.mode == "dense":
        return V.kernel
    return _materialise(V.kernel, V.grid)


def _apply_reciprocal(v, dims, X):
    Xg = dft(X, dims)
    Xg *= v.reshape((-1,) + (1,) * (X.ndim - 1))
    return np.ascontiguousarray(dft(Xg, dims, inverse=True).real)


def apply_coulomb(V, X):
    X = np.asarray(X, dtype=float)
    if X.shape[0] != V.grid.n_r:
        raise ValidationError(f"operand has {X.shape[0]} rows, grid has {V.grid.n_r} points")
    if V.mode == "dense":
        return V.kernel @ X
    return _apply_reciprocal(V.kernel, V.grid.dims, X)


def save_system(path, es):
    header = {
        "dims": list(es.grid.dims),
        "cell": list(es.grid.cell_lengths),
        "nv": es.n_v,
        "nc": es.n_c,
        "nr": es.grid.n_r,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WFN_MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        fh.write(np.asfortranarray(es.psi).astype("<f8").tobytes(order="F"))
        fh.write(es.energies.astype("<f8").tobytes())
        fh.write(es.vxc.astype("<f8").tobytes())


def load_system(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != WFN_MAGIC:
        raise FormatError("bad magic")
    if len(raw) < 8:
        raise FormatError("truncated header length")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise FormatError("truncated header")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
        dims = tuple(int(d) for d in header["dims"])
        cell = tuple(float(c) for c in header["cell"])
        n_v, n_c = int(header["nv"]), int(header["nc"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable header: {exc}") from exc
    grid = Grid(dims, cell)
    if "nr" in header and int(header["nr"]) != grid.n_r:
        raise ValidationError(f"header N_r={header['nr']} does not match dims product {grid.n_r}")
    nb = n_v + n_c
    expected = 8 * (grid.n_r * nb + 2 * nb)
    payload = raw[8 + hlen :]
    if len(payload) < expected:
        raise FormatError(f"truncated payload: {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise FormatError(f"trailing bytes after payload: {len(payload) - expected}")
    data = np.frombuffer(payload, dtype="<f8").astype(float)
    npsi = grid.n_r * nb
    psi = data[:npsi].reshape((grid.n_r, nb), order="F")
    energies = data[npsi : npsi + nb]
    vxc = data[npsi + nb :]
    return ElectronicStructure(grid=grid, psi=psi, energies=energies, vxc=vxc, n_v=n_v, n_c=n_c)
