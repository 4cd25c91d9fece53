import numpy as np
import pytest
from scipy.stats import chi2

from nuflavor.hamiltonian import NeutrinoSystem
from nuflavor.noise import (NoiseModel, amplitude_damping_kraus, apply_readout, depolarizing_kraus,
                            global_fidelity, noisy_distribution, preset, readout_matrix, run_noisy,
                            unfold_readout)
from nuflavor.qudit import MeasurementRecord, RegisterShape, apply_circuit, probabilities, sample_shots
from nuflavor.trotter import TrotterPlan, build_evolution, initial_register_state

SYS2 = NeutrinoSystem(2, initial_flavors="e mu")
CIRC = build_evolution(SYS2, 3.0, TrotterPlan("LO", 1, "qubit-B"))
PSI = initial_register_state(SYS2, "qubit-B")


def completeness(ops):
    d = ops[0].shape[0]
    return np.max(np.abs(sum(k.conj().T @ k for k in ops) - np.eye(d)))


def test_kraus_sets_complete():
    assert completeness(depolarizing_kraus(0.1, (2, 2))) <= 1e-14
    assert completeness(depolarizing_kraus(0.3, (3,))) <= 1e-14
    assert completeness(amplitude_damping_kraus(0.2)) <= 1e-14


def test_presets():
    h = preset("H1-1-like")
    assert (h.kind, h.p2q, h.p1q, h.readout) == ("local_depolarizing", 1e-3, 2e-5, 2e-4)
    t = preset("torino-like", 8)
    assert t.kind == "composite" and 0 < t.gamma < 1
    assert preset("none").kind == "none"
    with pytest.raises(ValueError):
        preset("sycamore")
    with pytest.raises(ValueError):
        NoiseModel("global_depolarizing", p2q=1.5)
    with pytest.raises(ValueError):
        NoiseModel("dephasing")


def test_noiseless_equals_sampled_clean():
    clean = probabilities(apply_circuit(PSI, CIRC))
    a = run_noisy(CIRC, NoiseModel(), 500, seed=4, initial_state=PSI)
    b = sample_shots(clean, 500, seed=4)
    assert np.array_equal(a.counts, b.counts)
    exp = run_noisy(CIRC, NoiseModel(), None, seed=0, initial_state=PSI)
    assert np.allclose(exp.probabilities, clean.probabilities, atol=1e-14)


def test_global_depolarizing_full_noise_is_uniform():
    nm = NoiseModel("global_depolarizing", p2q=1.0)
    assert global_fidelity(CIRC, nm) == 0.0
    rec = run_noisy(CIRC, nm, 10 ** 6, seed=21, initial_state=PSI)
    expected = np.full(16, 10 ** 6 / 16)
    stat = np.sum((rec.counts - expected) ** 2 / expected)
    assert stat < chi2.ppf(0.999, 15)


def test_global_fidelity_product():
    nm = NoiseModel("global_depolarizing", p2q=0.01, p1q=0.001)
    n2 = CIRC.entangling_count()
    n1 = len(CIRC.gates) - n2
    assert global_fidelity(CIRC, nm) == pytest.approx(0.99 ** n2 * 0.999 ** n1, rel=1e-12)


def test_trajectories_match_density_matrix():
    nm = NoiseModel("local_depolarizing", p2q=0.01)
    exact = noisy_distribution(CIRC, nm, PSI, "density_matrix")
    M = 100_000
    traj = noisy_distribution(CIRC, nm, PSI, "trajectory", trajectories=M, seed=3)
    tv = 0.5 * np.abs(exact - traj).sum()
    sigma = 0.5 * np.sqrt(exact * (1 - exact) / M).sum()
    assert tv <= 3 * sigma


def test_composite_density_matrix_is_physical():
    nm = NoiseModel("composite", p2q=0.02, gamma=0.05)
    p = noisy_distribution(CIRC, nm, PSI, "density_matrix")
    assert p.sum() == pytest.approx(1.0, abs=1e-12) and p.min() >= -1e-14
    # the state starts physical; only noise feeds the unphysical 11 codes
    assert p[15] < 0.05
    M = 20_000
    traj = noisy_distribution(CIRC, nm, PSI, "trajectory", trajectories=M, seed=5)
    tv = 0.5 * np.abs(p - traj).sum()
    assert tv <= 3 * 0.5 * np.sqrt(p * (1 - p) / M).sum()


def test_trajectories_deterministic():
    nm = NoiseModel("local_depolarizing", p2q=0.05)
    a = run_noisy(CIRC, nm, 200, seed=9, initial_state=PSI)
    b = run_noisy(CIRC, nm, 200, seed=9, initial_state=PSI)
    assert np.array_equal(a.counts, b.counts) and a.counts.sum() == 200
    assert a.metadata["trajectories"] == 200


def test_density_matrix_cap():
    big = build_evolution(NeutrinoSystem(8), 1.0, TrotterPlan("LO", 1, "qubit-B"))
    with pytest.raises(ValueError):
        run_noisy(big, NoiseModel("local_depolarizing", p2q=0.01), None, 0, method="density_matrix")
    with pytest.raises(ValueError):
        run_noisy(CIRC, NoiseModel("local_depolarizing", p2q=0.01), None, 0, PSI, method="analytic")


def test_readout_round_trip():
    shape = RegisterShape.qubits(3)
    p = np.random.default_rng(0).dirichlet(np.ones(8))
    noisy = apply_readout(p, shape, 0.03)
    assert noisy.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(apply_readout(noisy, shape, 0.03, inverse=True), p, atol=1e-12)
    back = unfold_readout(MeasurementRecord(shape, noisy), 0.03)
    assert np.allclose(back.probabilities, p, atol=1e-12)
    M = readout_matrix(0.1, 3)
    assert np.allclose(M.sum(axis=0), 1.0) and M[0, 0] == pytest.approx(0.9)
