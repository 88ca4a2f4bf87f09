import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcurl.physics import (
    HamiltonianSpec,
    LabeledState,
    analytic_label,
    cluster_hamiltonian,
    corrupt_labels,
    ground_state,
    lanczos,
    load_dataset,
    make_phase_dataset,
    make_unitary_tasks,
    save_dataset,
    string_order,
    string_order_label,
)
from qcurl.physics import _grid
from qcurl.sim import PAULI, fidelity, substream

from conftest import kron_op

X, Z = PAULI["X"], PAULI["Z"]


def kron_hamiltonian(Q, h1, h2, boundary):
    """Term-by-term Kronecker construction of the cluster-Ising matrix."""
    wrap = boundary == "periodic"
    H = np.zeros((1 << Q, 1 << Q), dtype=np.complex128)
    for i in range(Q if wrap else Q - 2):
        H -= kron_op(Q, {i: Z, (i + 1) % Q: X, (i + 2) % Q: Z})
    for i in range(Q):
        H -= h1 * kron_op(Q, {i: X})
    for i in range(Q if wrap else Q - 1):
        H -= h2 * kron_op(Q, {i: X, (i + 1) % Q: X})
    return H


def energy(Q, h1, h2, boundary="open", method="auto"):
    return ground_state(cluster_hamiltonian(HamiltonianSpec(Q, h1, h2, boundary)), method)


def test_hamiltonian_validation():
    with pytest.raises(ValueError):
        HamiltonianSpec(1, 0, 0)
    with pytest.raises(ValueError):
        HamiltonianSpec(2, 0, 0, "periodic")
    with pytest.raises(ValueError):
        HamiltonianSpec(4, 0, 0, "twisted")
    with pytest.raises(ValueError):
        HamiltonianSpec(11, 0, 0)


@pytest.mark.parametrize("Q,h1,h2,boundary", [(4, 0.5, 0.2, "open"), (5, 1.3, -0.7, "periodic"), (3, 0.0, 0.9, "open")])
def test_hamiltonian_matches_kronecker(Q, h1, h2, boundary):
    H = cluster_hamiltonian(HamiltonianSpec(Q, h1, h2, boundary)).dense()
    assert np.abs(H - kron_hamiltonian(Q, h1, h2, boundary)).max() < 1e-12


@settings(max_examples=20)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**32 - 1))
def test_matvec_matches_dense_and_is_real_symmetric(h1, h2, seed):
    H = cluster_hamiltonian(HamiltonianSpec(5, h1, h2, "periodic"))
    D = H.dense()
    assert np.isrealobj(D) and np.array_equal(D, D.T)
    psi = np.random.default_rng(seed).standard_normal(32) + 0j
    assert np.allclose(H.matvec(psi), D @ psi, atol=1e-12)


def test_analytic_energies():
    assert energy(3, 0.0, 0.0).energy == pytest.approx(-1.0, abs=1e-12)
    gs = energy(2, 1.0, 0.5)
    assert gs.energy == pytest.approx(-2.5, abs=1e-12)
    assert np.allclose(gs.state, np.full(4, 0.5), atol=1e-12)
    for h1, h2 in [(0.3, 0.0), (0.7, 1.1), (0.0, 0.4)]:
        assert energy(2, h1, h2).energy == pytest.approx(-2 * h1 - h2, abs=1e-12)
    assert energy(3, 0.0, 0.0, method="lanczos").energy == pytest.approx(-1.0, abs=1e-12)


def test_lanczos_matches_dense_at_eight_qubits():
    H = cluster_hamiltonian(HamiltonianSpec(8, 0.5, 0.0))
    ref = np.linalg.eigvalsh(H.dense())[0]
    gs = ground_state(H, "lanczos")
    assert gs.energy == pytest.approx(ref, abs=1e-8)
    assert np.linalg.norm(H.matvec(gs.state) - gs.energy * gs.state) <= 1e-8


@pytest.mark.parametrize("Q", [3, 4, 5, 6])
def test_lanczos_random_fields(Q):
    rng = np.random.default_rng(Q)
    for h1, h2 in rng.uniform(-1.6, 1.6, (5, 2)):
        H = cluster_hamiltonian(HamiltonianSpec(Q, h1, h2))
        gs = ground_state(H, "lanczos")
        assert gs.energy == pytest.approx(np.linalg.eigvalsh(H.dense())[0], abs=1e-8)
        assert np.linalg.norm(H.matvec(gs.state) - gs.energy * gs.state) <= 1e-8
        trial = rng.standard_normal((100, 1 << Q)) + 1j * rng.standard_normal((100, 1 << Q))
        rayleigh = np.einsum("ij,ij->i", trial.conj(), np.stack([H.matvec(t) for t in trial])).real
        assert gs.energy <= (rayleigh / np.einsum("ij,ij->i", trial.conj(), trial).real).min()


def test_lanczos_deflation_finds_second_level(rng):
    H = cluster_hamiltonian(HamiltonianSpec(5, 0.8, 0.3, "periodic"))
    evals = np.linalg.eigvalsh(H.dense())
    e0, v0 = lanczos(H.matvec, 32, rng)
    e1, _ = lanczos(H.matvec, 32, rng, deflate=v0[None, :])
    assert e0 == pytest.approx(evals[0], abs=1e-9)
    assert e1 == pytest.approx(evals[1], abs=1e-8)


def test_degeneracy_flag():
    assert energy(6, 0.0, 0.0).degenerate  # free edge modes of the open cluster chain
    assert energy(8, 0.0, 0.0, method="lanczos").degenerate
    assert not energy(6, 1.3, 0.2, "periodic").degenerate


def test_sign_convention():
    psi = energy(5, 0.4, 0.1).state
    first = np.flatnonzero(np.abs(psi) > 1e-8)[0]
    assert psi[first].real > 0 and psi[first].imag == 0


def test_analytic_labels():
    assert analytic_label(0.0, 0) == 1
    assert analytic_label(1.6, 0) == 0
    assert analytic_label(1.0, 0) == 0
    with pytest.raises(ValueError):
        analytic_label(0.5, 0.1)


@pytest.mark.parametrize("Q", [4, 5, 8])
def test_string_order_on_cluster_and_product_states(Q):
    cluster = energy(Q, 0.0, 0.0).state
    assert string_order(cluster) == pytest.approx(1.0, abs=1e-10)
    assert string_order_label(cluster) == 1
    plus = np.full(1 << Q, 2 ** (-Q / 2), dtype=np.complex128)
    assert string_order(plus) == pytest.approx(0.0, abs=1e-12)
    assert string_order_label(plus) == 0


def test_string_order_deep_in_phases():
    assert string_order_label(energy(8, 0.2, 0.0).state, 0.2) == 1
    assert string_order_label(energy(8, 1.6, 0.0).state, 0.2) == 0
    assert string_order_label(energy(8, 0.2, -1.5).state, 0.2) == 0


def synthetic(n):
    return [LabeledState(np.ones(1), i % 2, i % 2, (0.0, 0.0)) for i in range(n)]


def test_corrupt_labels():
    data = synthetic(10**4)
    rng = np.random.default_rng(0)
    assert [d.label for d in corrupt_labels(data, 0.0, rng)] == [d.label for d in data]
    assert all(d.label != d.true_label for d in corrupt_labels(data, 1.0, rng))
    flipped = corrupt_labels(data, 0.3, rng)
    frac = np.mean([d.label != d.true_label for d in flipped])
    assert abs(frac - 0.3) <= 0.015
    with pytest.raises(ValueError):
        corrupt_labels(data, 1.2, rng)


def test_corrupt_labels_reproducible():
    data = synthetic(500)
    a = corrupt_labels(data, 0.3, substream(7, "noise", 1))
    b = corrupt_labels(data, 0.3, substream(7, "noise", 1))
    assert [d.label for d in a] == [d.label for d in b]


def test_dataset_grids():
    assert len(_grid("train")) == 40
    assert len(_grid("test")) == 400
    assert len(_grid("heatmap_grid")) == 4096
    assert _grid("train")[0] == (0.0, 0.0) and _grid("train")[-1] == (1.6, 0.0)
    with pytest.raises(ValueError):
        _grid("validation")


def test_train_dataset():
    data = make_phase_dataset("train", 4)
    assert len(data) == 40
    assert sum(d.label for d in data) == 25  # h1 < 1 on a 40-point grid of [0, 1.6]
    assert all(d.params[1] == 0.0 for d in data)
    assert all(abs(np.linalg.norm(d.state) - 1) < 1e-12 for d in data)


@pytest.mark.slow
def test_test_dataset_size():
    assert len(make_phase_dataset("test", 6)) == 400


def test_dataset_io_round_trip(tmp_path, rng):
    data = make_phase_dataset("train", 4)[::7]
    data = corrupt_labels(data, 0.5, rng)
    save_dataset(tmp_path / "d.bin", data, manifest=tmp_path / "d.csv")
    states, labels = load_dataset(tmp_path / "d.bin")
    assert np.array_equal(states, np.stack([d.state for d in data]))
    assert labels.tolist() == [d.label for d in data]
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "index,h1,h2,label,true_label" and len(rows) == len(data) + 1
    raw = (tmp_path / "d.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(raw[:-1])
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "bad.bin")
    (tmp_path / "junk.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "junk.bin")


def test_unitary_tasks():
    tasks = make_unitary_tasks(4, range(1, 21), 20, 3, 4, "full", substream(1, "t"))
    assert [t.task_id for t in tasks] == list(range(1, 21))
    assert [t.layer_count for t in tasks] == list(range(1, 21))
    assert all(len(t) == 20 and t.dim == 16 for t in tasks)
    again = make_unitary_tasks(4, range(1, 21), 20, 3, 4, "full", substream(1, "t"))
    assert all(np.array_equal(a.targets, b.targets) and np.array_equal(a.inputs, b.inputs) for a, b in zip(tasks, again))
    assert all(np.allclose(np.linalg.norm(t.targets, axis=1), 1) for t in tasks)


def test_unitary_task_single_pair():
    (task,) = make_unitary_tasks(2, [1], 1, 0, 0, "product", substream(2, "t"))
    f = fidelity(task.inputs[0], task.targets[0])
    assert 0.0 <= f <= 1.0 + 1e-12
    fresh = make_unitary_tasks(3, [1, 2], 4, 0, 0, "full", substream(2, "t"), shared_inputs=False)
    assert not np.allclose(fresh[0].inputs, fresh[1].inputs)
