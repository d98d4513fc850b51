from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import random_state
from trotterscar.analysis import (
    ErrorPredictor,
    commensurate_ladder_state,
    compute_trajectory,
    ensemble_curves,
    estimate_ladder_frequency,
    ladder_report,
    local_expectations,
    loschmidt_exact,
    loschmidt_trotter,
    perturbative_error,
    resolve_total_spin,
    stroboscopic_weight,
    total_spin_expectation,
)
from trotterscar.formulas import (
    ErrorKernel,
    error_kernel,
    measured_trotter_error,
    schedule_for_order,
    trotter_evolve,
)
from trotterscar.linalg import SX, SpectralDecomposition, basis_state, eigendecompose_hermitian, product_state
from trotterscar.models import SplitHamiltonian, build_model
from trotterscar.variational import haar_random_product_state


def diagonal_spec(energies):
    e = np.asarray(energies, dtype=float)
    return SpectralDecomposition(e, np.eye(e.size, dtype=complex))


def test_weight_series_limit():
    t = 3.0
    for omega in (0.0, 1e-9, -2e-8, 3e-8):
        assert abs(stroboscopic_weight(np.array([omega]), t)[0] - t) < 1e-8
    w = np.array([0.7])
    assert stroboscopic_weight(w, t)[0] == pytest.approx(2 * math.sin(0.7 * t / 2) / 0.7)
    # continuity across the switch-over
    below = stroboscopic_weight(np.array([0.99e-7 / t]), t)[0]
    above = stroboscopic_weight(np.array([1.01e-7 / t]), t)[0]
    assert abs(below - above) < 1e-12


def test_weight_vanishes_at_strobe():
    assert abs(stroboscopic_weight(np.array([2.0]), 2 * math.pi)[0]) < 1e-14


def test_predictor_trivial_cases():
    spec = diagonal_spec([0.0, 0.5, 1.0, 2.0])
    kernel = ErrorKernel(2, np.diag([0.3, -1.2, 0.4, 0.9]).astype(complex))
    psi = basis_state("01")
    assert perturbative_error(spec, kernel, psi, 0.01, 0.0) == 0.0
    assert perturbative_error(spec, kernel, psi, 0.01, 4.0) == pytest.approx(0.01**2 * 1.2 * 4.0, rel=1e-12)


def test_predictor_dimension_mismatch():
    with pytest.raises(ValueError):
        ErrorPredictor(diagonal_spec([0, 1]), ErrorKernel(1, np.eye(4)))


def test_predictor_tracks_measurement():
    ham = build_model("heisenberg", 6)
    spec = eigendecompose_hermitian(ham.dense)
    psi = haar_random_product_state(6, 5)
    times = np.arange(50, 1001, 50) * 0.01
    measured = measured_trotter_error(ham, schedule_for_order(2), 0.01, psi, times)
    predicted = ErrorPredictor(spec, error_kernel(ham, 2)).curve(psi, 0.01, times)
    assert np.max(np.abs(predicted / measured - 1)) < 0.1


def test_echo_examples():
    spec = diagonal_spec([0.0, 0.5, 1.0])
    times = np.linspace(0, 20, 41)
    assert np.allclose(loschmidt_exact(spec, np.eye(3)[1], times), 1)
    half = np.array([1, 1, 0]) / math.sqrt(2)
    assert np.allclose(loschmidt_exact(spec, half, times), np.cos(0.5 * times / 2) ** 2)
    ladder = np.array([0.6, 0.3, 0.74162])
    ladder /= np.linalg.norm(ladder)
    strobes = 2 * math.pi * np.arange(1, 6) / 0.5
    assert np.all(np.abs(loschmidt_exact(spec, ladder, strobes) - 1) < 1e-10)


def test_trotter_echo_examples(rng):
    ham = build_model("stark", 4)
    psi = random_state(rng, 16)
    traj = trotter_evolve(ham, schedule_for_order(2), 0.05, 10, psi)
    assert loschmidt_trotter(psi, traj)[0] == pytest.approx(1.0)
    single = SplitHamiltonian(4, ham.odd_terms, (), ham.model_spec)
    spec = eigendecompose_hermitian(single.dense)
    traj = trotter_evolve(single, schedule_for_order(2), 0.05, 40, psi)
    times = np.arange(41) * 0.05
    assert np.max(np.abs(loschmidt_trotter(psi, traj) - loschmidt_exact(spec, psi, times))) < 1e-10


def test_trotter_echo_converges_quadratically():
    ham = build_model("heisenberg", 6)
    spec = eigendecompose_hermitian(ham.dense)
    psi = haar_random_product_state(6, 2)
    gaps = []
    for dt in (0.04, 0.02):
        n = round(10 / dt)
        echoes = loschmidt_trotter(psi, trotter_evolve(ham, schedule_for_order(2), dt, n, psi))
        gaps.append(np.max(np.abs(echoes - loschmidt_exact(spec, psi, np.arange(n + 1) * dt))))
    assert gaps[0] / gaps[1] == pytest.approx(4.0, rel=0.2)


def test_ladder_exact():
    omega, residual, coverage = estimate_ladder_frequency([0.0, 0.5, 1.0], [0.3, 0.4, 0.3])
    assert omega == pytest.approx(0.5, abs=1e-12) and residual < 1e-10 and coverage == 1.0


def test_ladder_incommensurate():
    omega, residual, coverage = estimate_ladder_frequency([0.0, 1.0, math.sqrt(2)], [1 / 3] * 3)
    assert coverage < 0.95 and residual > 0.05


def test_ladder_quarter_spacing():
    """{0, 0.5, 1.25} are all multiples of 0.25, so they do form a ladder."""
    omega, residual, coverage = estimate_ladder_frequency([0.0, 0.5, 1.25], [1 / 3] * 3)
    assert omega == pytest.approx(0.25) and residual < 1e-10


def test_ladder_report_fields():
    spec = diagonal_spec([0.0, 0.5, 1.0, 7.3])
    psi = np.array([0.6, 0.6, np.sqrt(0.28 - 1e-6), 1e-3])
    psi /= np.linalg.norm(psi)
    rep = ladder_report(spec, psi, weight_cutoff=1e-4, K=3)
    assert rep.omega == pytest.approx(0.5)
    assert rep.strobe_times == pytest.approx([2 * math.pi * p / 0.5 for p in range(1, 6)])
    assert len(rep.top_overlaps) == 3
    assert [w for _, w in rep.top_overlaps] == sorted((w for _, w in rep.top_overlaps), reverse=True)
    assert rep.residual >= 0 and rep.total_weight == pytest.approx(1, abs=1e-10)


def test_ladder_report_undefined():
    rep = ladder_report(diagonal_spec([0.0, 1.0]), np.array([1.0, 0.0]))
    assert rep.omega is None and rep.strobe_times == [] and not rep.commensurate


def test_ladder_report_degenerate_clusters_use_projectors():
    spec = diagonal_spec([0.0, 0.0, 1.0])
    rep = ladder_report(spec, np.array([0.6, 0.0, 0.8]))
    rotated = SpectralDecomposition(spec.energies, np.array([[1, 1, 0], [1, -1, 0], [0, 0, math.sqrt(2)]]) / math.sqrt(2))
    rep2 = ladder_report(rotated, np.array([0.6, 0.0, 0.8]))
    assert np.allclose(rep.top_overlaps, rep2.top_overlaps)


@pytest.mark.parametrize("kw", [{"weight_cutoff": 0.0}, {"weight_cutoff": 1.0}, {"K": 1}])
def test_ladder_report_rejects(kw):
    with pytest.raises(ValueError):
        ladder_report(diagonal_spec([0, 1]), np.array([1.0, 0.0]), **kw)


def test_bloch_examples():
    for site in (1, 2, 3):
        assert local_expectations(basis_state("000"), site) == pytest.approx((0, 0, 1))
    rx = np.array([1, -1j]) / math.sqrt(2)  # R_x(pi/2)|0>
    psi = product_state([[1, 0], rx, [1, 0]])
    assert local_expectations(psi, 2) == pytest.approx((0, -1, 0), abs=1e-15)
    bell = (basis_state("00") + basis_state("11")) / math.sqrt(2)
    assert local_expectations(bell, 1) == pytest.approx((0, 0, 0), abs=1e-15)
    with pytest.raises(ValueError):
        local_expectations(bell, 3)


def test_bloch_norm_bounded(rng):
    psi = random_state(rng, 64)
    for site in range(1, 7):
        assert np.linalg.norm(local_expectations(psi, site)) <= 1 + 1e-10


def test_total_spin_examples():
    assert total_spin_expectation(basis_state("0000")) == pytest.approx(6.0)
    singlet = (basis_state("01") - basis_state("10")) / math.sqrt(2)
    assert total_spin_expectation(singlet) == pytest.approx(0.0, abs=1e-14)


def test_total_spin_labels_heisenberg():
    ham = build_model("heisenberg", 4)
    spec = eigendecompose_hermitian(ham.dense)
    basis, spins = resolve_total_spin(spec, 4)
    for n in range(spec.dim):
        s2 = total_spin_expectation(basis[:, n])
        S = spins[n]
        assert abs(2 * S - round(2 * S)) < 1e-8
        assert s2 == pytest.approx(S * (S + 1), abs=1e-8)


@pytest.fixture(scope="module")
def stark_ladder():
    ham = build_model("stark", 6, h_z=8.0)
    spec = eigendecompose_hermitian(ham.dense)
    dt = math.pi / 8.0 / 80
    psi, _ = commensurate_ladder_state(spec, error_kernel(ham, 2), 16.0, dt)
    return ham, spec, psi, dt


@pytest.mark.parametrize("q", [1, 2, 4])
def test_strobe_dips_for_every_order(stark_ladder, q):
    ham, spec, psi, dt = stark_ladder
    times = np.arange(241) * dt
    measured = measured_trotter_error(ham, schedule_for_order(q), dt, psi, times)
    predicted = ErrorPredictor(spec, error_kernel(ham, q)).curve(psi, dt, times)
    for p in (1, 2, 3):
        window = slice((p - 1) * 80 + 1, p * 80)
        assert measured[p * 80] < 0.2 * measured[window].max()
        assert predicted[p * 80] < 0.2 * predicted[window].max()
    assert np.all(loschmidt_exact(spec, psi, times[[80, 160, 240]]) > 0.999)


def test_ladder_state_needs_commensurate_dt(stark_ladder):
    ham, spec, _, _ = stark_ladder
    with pytest.raises(ValueError):
        commensurate_ladder_state(spec, error_kernel(ham, 2), 16.0, 0.01)


def test_trajectory_record():
    ham = build_model("heisenberg", 4)
    psi = haar_random_product_state(4, 9)
    rec = compute_trajectory(ham, psi, 2, 0.05, 40, stride=4, sites=(3,), kernel=error_kernel(ham, 2))
    assert rec.times.size == 11 and rec.times[-1] == pytest.approx(2.0)
    assert rec.loschmidt_exact[0] == pytest.approx(1) and rec.trotter_error[0] < 1e-14
    assert np.all((rec.loschmidt_trotter >= 0) & (rec.loschmidt_trotter <= 1 + 1e-9))
    assert np.all(np.linalg.norm(rec.bloch[3], axis=1) <= 1 + 1e-9)
    assert rec.columns()[-3:] == ["bloch_x_3", "bloch_y_3", "bloch_z_3"]
    no_kernel = compute_trajectory(ham, psi, 6, 0.05, 4)
    assert np.all(np.isnan(no_kernel.predicted_error))


def test_ensemble_matches_stepping():
    ham = build_model("pxp", 5)
    states = [haar_random_product_state(5, s) for s in range(3)]
    errs, echoes = ensemble_curves(ham, 1, 0.02, [0, 7, 50], states)
    for i, psi in enumerate(states):
        ref = compute_trajectory(ham, psi, 1, 0.02, 50)
        assert errs[i] == pytest.approx(ref.trotter_error[[0, 7, 50]], abs=1e-12)
        assert echoes[i] == pytest.approx(ref.loschmidt_trotter[[0, 7, 50]], abs=1e-12)
