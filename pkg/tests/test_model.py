import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import explicit_coulomb_matrix
from lowrank_gw.errors import FormatError, GuardError, PreconditionError, ValidationError
from lowrank_gw.model import (
    CoulombOperator,
    ElectronicStructure,
    Grid,
    apply_coulomb,
    build_coulomb,
    build_synthetic_system,
    dense_coulomb,
    load_system,
    omega_diagonal,
    orthonormality_defect,
    save_system,
)


def test_grid_fields():
    g = Grid((4, 6, 8), (2.0, 3.0, 4.0))
    assert g.n_r == 192
    assert g.dV == pytest.approx(24.0 / 192)


@pytest.mark.parametrize("dims", [(1, 4, 4), (4, 4)])
def test_grid_rejects_bad_dims(dims):
    with pytest.raises(ValidationError):
        Grid(dims, (1.0, 1.0, 1.0))


def test_synthetic_orthonormal():
    es = build_synthetic_system(1, Grid((4, 4, 4), (5.0, 5.0, 5.0)), 2, 2, 1.0, 1.0)
    assert orthonormality_defect(es.psi, es.grid.dV) <= 1e-10


def test_synthetic_deterministic():
    g = Grid((4, 4, 4), (5.0, 5.0, 5.0))
    a = build_synthetic_system(1, g, 2, 2, 1.0, 1.0)
    b = build_synthetic_system(1, g, 2, 2, 1.0, 1.0)
    assert a.psi.tobytes() == b.psi.tobytes()
    assert a.energies.tobytes() == b.energies.tobytes()
    assert a.vxc.tobytes() == b.vxc.tobytes()


def test_synthetic_gap_prescribed():
    es = build_synthetic_system(1, Grid((8, 8, 8), (10.26,) * 3), 16, 16, 1.0, 1.8)
    assert es.energies[16] - es.energies[15] == 1.0


def test_synthetic_energy_windows(si8_es):
    e = si8_es.energies
    assert np.all(np.diff(e) > 0)
    assert e[:16].min() >= -1.8 and e[:16].max() <= 0.0
    assert e[16:].min() >= 0.2 and e[16:].max() <= 2.0
    assert np.all(si8_es.vxc == 0)
    assert np.isrealobj(si8_es.psi)


def test_synthetic_errors():
    g = Grid((2, 2, 2), (1.0, 1.0, 1.0))
    with pytest.raises(ValidationError):
        build_synthetic_system(0, g, 6, 6, 0.5, 1.0)
    with pytest.raises(PreconditionError):
        build_synthetic_system(0, g, 2, 2, 0.0, 1.0)
    with pytest.raises(ValidationError):
        build_synthetic_system(0, g, 2, 2, 1.0, 0.5)


def test_electronic_structure_invariants(tiny_es):
    kw = dict(grid=tiny_es.grid, vxc=tiny_es.vxc, n_v=2, n_c=2)
    with pytest.raises(ValidationError):
        ElectronicStructure(psi=2 * tiny_es.psi, energies=tiny_es.energies, **kw)
    e = tiny_es.energies.copy()
    e[2] = e[1]
    with pytest.raises(PreconditionError):
        ElectronicStructure(psi=tiny_es.psi, energies=e, **kw)
    with pytest.raises(ValidationError):
        ElectronicStructure(psi=tiny_es.psi, energies=e[::-1], **kw)


def test_omega_diagonal(tiny_es):
    om = omega_diagonal(tiny_es.energies, 2, 2)
    e = tiny_es.energies
    expected = [e[i] - e[2 + j] for j in range(2) for i in range(2)]
    np.testing.assert_array_equal(om, expected)
    assert np.all(om < 0)
    assert np.abs(om).min() == pytest.approx(tiny_es.gap)


def test_coulomb_constant_nulled():
    V = build_coulomb(Grid((4, 4, 4), (5.0, 5.0, 5.0)))
    assert np.abs(apply_coulomb(V, np.ones(64))).max() <= 1e-12


def test_coulomb_dense_vs_explicit_dft():
    grid = Grid((4, 4, 4), (5.0, 6.0, 7.0))
    oracle = explicit_coulomb_matrix(grid)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(64)
    for mode in ("reciprocal_diagonal", "dense"):
        y = apply_coulomb(build_coulomb(grid, mode), x)
        assert np.linalg.norm(y - oracle @ x) <= 1e-10 * np.linalg.norm(oracle @ x)


def test_coulomb_modes_agree_and_symmetric():
    grid = Grid((4, 4, 8), (5.0, 5.0, 10.0))
    Vd = build_coulomb(grid, "dense")
    Vr = build_coulomb(grid)
    assert np.abs(Vd.kernel - Vd.kernel.T).max() <= 1e-12 * np.abs(Vd.kernel).max()
    X = np.random.default_rng(1).standard_normal((grid.n_r, 5))
    for k in range(5):
        d = apply_coulomb(Vd, X[:, k]) - apply_coulomb(Vr, X[:, k])
        assert np.linalg.norm(d) <= 1e-10 * np.linalg.norm(X[:, k])
    np.testing.assert_allclose(apply_coulomb(Vr, X), Vd.kernel @ X, rtol=0, atol=1e-10 * np.abs(Vd.kernel @ X).max())


@given(
    st.tuples(st.integers(2, 6), st.integers(2, 6), st.integers(2, 6)),
    st.tuples(*(st.floats(0.5, 20.0),) * 3),
)
@settings(max_examples=25, deadline=None)
def test_coulomb_kernel_nonnegative(dims, cell):
    V = build_coulomb(Grid(dims, cell))
    assert np.all(V.kernel >= 0)
    assert V.kernel[0] == 0.0


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_coulomb_symmetric_psd(seed):
    V = build_coulomb(Grid((4, 4, 4), (5.0, 5.0, 5.0)))
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 64))
    xVy, yVx = x @ apply_coulomb(V, y), y @ apply_coulomb(V, x)
    assert abs(xVy - yVx) <= 1e-10 * max(1.0, abs(xVy))
    assert x @ apply_coulomb(V, x) >= -1e-12 * (x @ x)


def test_apply_coulomb_zero_and_mismatch():
    V = build_coulomb(Grid((4, 4, 4), (5.0, 5.0, 5.0)))
    assert np.all(apply_coulomb(V, np.zeros((64, 3))) == 0)
    with pytest.raises(ValidationError):
        apply_coulomb(V, np.zeros((63, 3)))


def test_dense_coulomb_guard():
    with pytest.raises(GuardError):
        build_coulomb(Grid((17, 17, 17), (1.0, 1.0, 1.0)), "dense")


def test_coulomb_operator_bad_mode():
    with pytest.raises(ValidationError):
        CoulombOperator(grid=Grid((2, 2, 2), (1.0, 1.0, 1.0)), mode="fft", kernel=np.zeros(8))


def test_wfn_round_trip(tmp_path, small_es):
    es = ElectronicStructure(
        grid=small_es.grid, psi=small_es.psi, energies=small_es.energies,
        vxc=np.linspace(-0.1, 0.1, small_es.n_bands), n_v=small_es.n_v, n_c=small_es.n_c,
    )
    path = tmp_path / "sys.wfn"
    save_system(path, es)
    back = load_system(path)
    assert back.psi.tobytes() == es.psi.tobytes()
    assert back.energies.tobytes() == es.energies.tobytes()
    assert back.vxc.tobytes() == es.vxc.tobytes()
    assert back.grid == es.grid and (back.n_v, back.n_c) == (es.n_v, es.n_c)


def test_wfn_layout(tmp_path, tiny_es):
    """Decode the file by hand: magic, length-prefixed JSON, column-major psi, energies, vxc."""
    path = tmp_path / "sys.wfn"
    save_system(path, tiny_es)
    raw = path.read_bytes()
    assert raw[:4] == b"WFN1"
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen])
    assert header["dims"] == [4, 4, 4] and header["nv"] == 2 and header["nc"] == 2
    data = np.frombuffer(raw[8 + hlen :], dtype="<f8")
    assert data.size == 64 * 4 + 8
    np.testing.assert_array_equal(data[:64], tiny_es.psi[:, 0])
    np.testing.assert_array_equal(data[256:260], tiny_es.energies)


def test_wfn_bad_magic(tmp_path, tiny_es):
    path = tmp_path / "sys.wfn"
    save_system(path, tiny_es)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="bad magic"):
        load_system(path)


def test_wfn_truncated(tmp_path, tiny_es):
    path = tmp_path / "sys.wfn"
    save_system(path, tiny_es)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError, match="truncated"):
        load_system(path)


def test_wfn_header_inconsistent(tmp_path, tiny_es):
    path = tmp_path / "sys.wfn"
    save_system(path, tiny_es)
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen])
    header["nr"] = 63
    hb = json.dumps(header).encode()
    path.write_bytes(b"WFN1" + struct.pack("<I", len(hb)) + hb + raw[8 + hlen :])
    with pytest.raises(ValidationError):
        load_system(path)


def test_dense_coulomb_uses_operator_kernel():
    grid = Grid((4, 4, 4), (5.0, 5.0, 5.0))
    zero = CoulombOperator(grid=grid, mode="reciprocal_diagonal", kernel=np.zeros(64))
    assert np.all(dense_coulomb(zero) == 0)
    np.testing.assert_allclose(dense_coulomb(build_coulomb(grid)), explicit_coulomb_matrix(grid), atol=1e-12)
