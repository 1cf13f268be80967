import numpy as np
import pytest

from conftest import uhlmann_fidelity
from tpcomb import (BASIS_LABELS, BellKind, ConfigError, DensityMatrix, ReconstructionError,
                    TomographyCounts, bell_state, concurrence, fidelity, linear_inversion,
                    max_pure_fidelity, mle_reconstruct, predicted_counts, projector_for,
                    simulate_tomography_counts, werner)
from tpcomb.qstate import random_density_matrix
from tpcomb.tomography import RECON_TOL, log_likelihood, permuted, project_to_physical

# Two-qubit X state with top eigenvalue 0.961 and concurrence 0.930.
X_STATE = np.array([[0.496, 0, 0, 0.465],
                    [0, 0.0, 0, 0],
                    [0, 0, 0.008, 0],
                    [0.465, 0, 0, 0.496]], dtype=complex)


def counts_from(mean):
    return TomographyCounts(mean.labels, mean.counts, mean.acquisition_s)


class TestProjectors:
    def test_hh(self):
        np.testing.assert_allclose(projector_for("HH"), np.diag([1, 0, 0, 0]))

    def test_dd(self):
        np.testing.assert_allclose(projector_for("DD"), np.full((4, 4), 0.25), atol=1e-15)

    def test_rl(self):
        phi = bell_state("PhiPlus").projector()
        assert np.trace(phi @ projector_for("RL")).real == pytest.approx(0.5, abs=1e-15)

    def test_rank_one_and_hermitian(self):
        for lab in BASIS_LABELS:
            p = projector_for(lab)
            np.testing.assert_allclose(p @ p, p, atol=1e-15)
            np.testing.assert_allclose(p, p.conj().T)
            assert np.trace(p).real == pytest.approx(1.0)

    def test_unknown_label(self):
        for bad in ("HX", "H", "HHV", 3):
            with pytest.raises(ValueError):
                projector_for(bad)

    def test_canonical_sequence(self):
        assert BASIS_LABELS == ("HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
                                "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL")


class TestPredictedCounts:
    def test_hh_state(self):
        c = predicted_counts(np.diag([1.0, 0, 0, 0]), 100.0, 1.0).as_dict()
        for lab, v in c.items():
            overlap = abs(projector_for(lab)[0, 0])
            assert (v > 0) == (overlap > 0)

    def test_psi_plus(self):
        c = predicted_counts(bell_state("PsiPlus"), 800.0, 15.0).as_dict()
        assert c["DD"] == pytest.approx(800 * 15 / 2)
        assert c["HH"] == pytest.approx(0.0, abs=1e-12)

    def test_zero_rate(self):
        assert np.all(predicted_counts(werner(0.4), 0.0, 15.0).counts == 0)


class TestLinearInversion:
    def test_maximally_mixed(self):
        rho = linear_inversion(counts_from(predicted_counts(np.eye(4) / 4, 1e3, 1.0)))
        np.testing.assert_allclose(rho, np.eye(4) / 4, atol=1e-12)

    @pytest.mark.parametrize("kind", list(BellKind))
    def test_bell_exact(self, kind):
        truth = bell_state(kind).projector()
        rho = linear_inversion(counts_from(predicted_counts(truth, 1e3, 15.0)))
        np.testing.assert_allclose(rho, truth, atol=1e-10)

    def test_noisy_counts_can_be_unphysical(self):
        neg = 0
        for seed in range(50):
            c = simulate_tomography_counts(bell_state("PhiPlus"), 70.0, 15.0, seed)
            rho = linear_inversion(c)
            assert np.trace(rho).real == pytest.approx(1.0)
            np.testing.assert_allclose(rho, rho.conj().T, atol=1e-14)
            neg += np.linalg.eigvalsh(rho)[0] < -1e-9
        assert neg > 25

    def test_uneven_acquisition_times(self, rng):
        truth = random_density_matrix(rng)
        acq = rng.uniform(5, 20, 16)
        rho = linear_inversion(counts_from(predicted_counts(truth, 300.0, acq)))
        np.testing.assert_allclose(rho, truth.elements, atol=1e-12)

    def test_all_zero(self):
        with pytest.raises(ReconstructionError, match="all-zero"):
            linear_inversion(TomographyCounts(BASIS_LABELS, np.zeros(16), 1.0))

    def test_sparse_counts_nonpositive_trace(self):
        c = np.zeros(16)
        c[BASIS_LABELS.index("DD")] = 1
        with pytest.raises(ReconstructionError, match="nonpositive"):
            linear_inversion(TomographyCounts(BASIS_LABELS, c, 1.0))
        DensityMatrix(mle_reconstruct(TomographyCounts(BASIS_LABELS, c, 1.0)).rho.elements, tol=RECON_TOL)


class TestProjection:
    def test_physical_input_unchanged(self, rng):
        r = random_density_matrix(rng).elements
        np.testing.assert_allclose(project_to_physical(r), r, atol=1e-12)

    def test_output_physical(self):
        out = project_to_physical(np.diag([0.7, 0.5, -0.1, -0.1]))
        np.testing.assert_allclose(np.diag(out).real, [0.6, 0.4, 0, 0], atol=1e-12)
        DensityMatrix(out)


class TestMLE:
    @pytest.mark.parametrize("kind", list(BellKind))
    def test_noiseless_bell(self, kind):
        res = mle_reconstruct(counts_from(predicted_counts(bell_state(kind), 1e3, 15.0)))
        assert fidelity(res.rho, bell_state(kind)) > 0.9999
        assert res.converged and res.iterations > 0

    def test_matches_linear_inversion_when_physical(self, rng):
        for _ in range(10):
            truth = random_density_matrix(rng)
            c = counts_from(predicted_counts(truth, 1e3, 15.0))
            lin = linear_inversion(c)
            assert np.linalg.eigvalsh(lin)[0] > 0
            res = mle_reconstruct(c)
            assert np.max(np.abs(res.rho.elements - lin)) < 1e-6
            assert res.n0 == pytest.approx(1e3, rel=1e-6)

    def test_physical_in_random_noisy_trials(self):
        rng = np.random.default_rng(1000)
        for trial in range(1000):
            truth = random_density_matrix(rng, rank=1 + trial % 4)
            n0 = 10 ** rng.uniform(0.5, 4)
            c = simulate_tomography_counts(truth, n0, 1.0, seed=trial)
            if c.counts.sum() == 0:
                continue
            rho = mle_reconstruct(c, seed=trial).rho.elements
            DensityMatrix(rho, tol=RECON_TOL)
            assert np.linalg.eigvalsh(rho)[0] >= -RECON_TOL

    def test_likelihood_beats_projected_linear(self):
        for seed in range(30):
            c = simulate_tomography_counts(werner(0.9), 50.0, 1.0, seed)
            res = mle_reconstruct(c)
            proj = project_to_physical(linear_inversion(c))
            assert res.log_likelihood >= log_likelihood(DensityMatrix(proj, tol=RECON_TOL), c) - 1e-9

    def test_permutation_equivariance(self, rng):
        c = simulate_tomography_counts(werner(0.8), 300.0, 15.0, seed=5)
        ref = mle_reconstruct(c).rho.elements
        for _ in range(5):
            p = permuted(c, rng.permutation(16))
            np.testing.assert_allclose(mle_reconstruct(p).rho.elements, ref, atol=1e-12)

    def test_fidelity_improves_with_counts(self):
        truth = werner(0.95)
        medians = []
        for n in (1e2, 1e3, 1e4, 1e5):
            f = [uhlmann_fidelity(mle_reconstruct(simulate_tomography_counts(truth, n, 1.0, s)).rho, truth)
                 for s in range(40)]
            medians.append(np.median(f))
        assert np.all(np.diff(medians) > 0)
        assert medians[-1] > 0.99

    def test_x_state_reproduction(self):
        truth = DensityMatrix(X_STATE)
        assert max_pure_fidelity(truth) == pytest.approx(0.961, abs=1e-12)
        assert concurrence(truth) == pytest.approx(0.930, abs=1e-12)
        for seed in range(5):
            res = mle_reconstruct(simulate_tomography_counts(truth, 2e4, 15.0, seed))
            assert max_pure_fidelity(res.rho) == pytest.approx(0.961, abs=0.01)
            assert concurrence(res.rho) == pytest.approx(0.930, abs=0.01)

    def test_all_zero_counts(self):
        with pytest.raises(ReconstructionError, match="all-zero"):
            mle_reconstruct(TomographyCounts(BASIS_LABELS, np.zeros(16), 15.0))

    def test_nonconvergence_carries_best_iterate(self):
        c = simulate_tomography_counts(werner(0.7), 500.0, 1.0, seed=1)
        with pytest.raises(ReconstructionError) as info:
            mle_reconstruct(c, max_iter=1, restarts=0)
        assert info.value.best is not None
        DensityMatrix(info.value.best.rho.elements, tol=RECON_TOL)

    def test_seeded_restarts_deterministic(self):
        c = simulate_tomography_counts(werner(0.6), 40.0, 1.0, seed=2)
        a, b = mle_reconstruct(c, seed=3), mle_reconstruct(c, seed=3)
        np.testing.assert_array_equal(a.rho.elements, b.rho.elements)


class TestCountsIO:
    def test_reorder_on_construction(self):
        labels = list(reversed(BASIS_LABELS))
        c = TomographyCounts(tuple(labels), np.arange(16), 15.0)
        assert c.labels == BASIS_LABELS
        assert c.as_dict()["RL"] == 0 and c.as_dict()["HH"] == 15

    def test_csv_round_trip(self, tmp_path):
        c = simulate_tomography_counts(werner(0.9), 200.0, 15.0, seed=0)
        p = tmp_path / "counts.csv"
        c.to_csv(p)
        assert p.read_text().splitlines()[0] == "basis_label,counts,acquisition_s"
        back = TomographyCounts.from_csv(p)
        np.testing.assert_array_equal(back.counts, c.counts)
        np.testing.assert_array_equal(back.acquisition_s, c.acquisition_s)

    def test_csv_reordered_rows(self, tmp_path):
        c = simulate_tomography_counts(werner(0.9), 200.0, 15.0, seed=0)
        rows = [f"{lab},{int(v)},15.0" for lab, v in zip(c.labels, c.counts)][::-1]
        p = tmp_path / "counts.csv"
        p.write_text("basis_label,counts,acquisition_s\n" + "\n".join(rows) + "\n")
        np.testing.assert_array_equal(TomographyCounts.from_csv(p).counts, c.counts)

    @pytest.mark.parametrize("mutate, msg", [
        (lambda r: r[:-1], "expected 16 data rows"),
        (lambda r: r[:-1] + [r[0]], "duplicate"),
        (lambda r: r[:-1] + ["AA,3,15"], "canonical"),
        (lambda r: r[:3] + ["VH,x,15"] + r[4:], "row 5"),
        (lambda r: r[:3] + ["VH,3"] + r[4:], "row 5"),
        (lambda r: r[:3] + ["VH,-3,15"] + r[4:], "nonnegative"),
    ])
    def test_csv_errors(self, tmp_path, mutate, msg):
        rows = [f"{lab},10,15" for lab in BASIS_LABELS]
        p = tmp_path / "bad.csv"
        p.write_text("basis_label,counts,acquisition_s\n" + "\n".join(mutate(rows)) + "\n")
        with pytest.raises(ConfigError, match=msg):
            TomographyCounts.from_csv(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("label,counts\n")
        with pytest.raises(ConfigError, match="header"):
            TomographyCounts.from_csv(p)

    def test_wrong_length(self):
        with pytest.raises(ConfigError):
            TomographyCounts(BASIS_LABELS[:15], np.ones(15), 1.0)
