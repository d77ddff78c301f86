"""Lanczos on explicit matrices and on Hessian-vector products, plus per-batch spectrum runs."""
import math

import numpy as np
import pytest

from src.data.manifest_repository import load_manifest
from src.domain.errors import SpectrumError
from src.domain.models import HessianConfig, LanczosConfig, ManifestKind, SpectrumReport
from src.model.clip_model import init_model
from src.service.hessian_service import (DenseOracle, HessianService, HvpOracle, hessian_spectrum_run,
                                         hessian_spectrum_sweep, lanczos_extreme_eigs, large_magnitude_count,
                                         summarize_sharpness)
from src.service.training_service import load_training_data
from src.tensor import ops
from src.tensor.autodiff import ParamSet
from src.tensor.tensor import Tensor
from src.util import error_translator as codes


def _quadratic_builder(diagonals, scale=1.0):
    """0.5 * scale * sum(d * p^2) over every named vector; the Hessian is diag(scale * d)."""
    def build(params, indices):
        total = None
        for name, d in diagonals.items():
            term = ops.reduce_sum(ops.mul(ops.mul(params[name], params[name]), Tensor(0.5 * scale * d)))
            total = term if total is None else ops.add(total, term)
        return total
    return build


def _params(diagonals, rng):
    return ParamSet({name: rng.normal(size=d.shape) for name, d in diagonals.items()})


class TestLanczos:

    def test_diagonal_top_three(self):
        result = lanczos_extreme_eigs(DenseOracle(np.diag(np.arange(10.0, 0.0, -1.0))),
                                      LanczosConfig(k=3, iterations=10))
        np.testing.assert_allclose(result.eigenvalues, [10.0, 9.0, 8.0], rtol=1e-10)
        assert all(result.converged)

    def test_identity_breaks_down(self):
        result = lanczos_extreme_eigs(DenseOracle(np.eye(5)), LanczosConfig(k=3, iterations=5))
        assert result.breakdown
        assert result.iterations == 1
        assert result.eigenvalues == pytest.approx([1.0])

    def test_separated_outliers(self, rng):
        q, _ = np.linalg.qr(rng.normal(size=(200, 200)))
        spectrum = np.concatenate([[50.0, 40.0, -30.0], rng.uniform(-1.0, 1.0, size=197)])
        matrix = (q * spectrum) @ q.T
        result = lanczos_extreme_eigs(DenseOracle(matrix), LanczosConfig(k=3, iterations=60, seed=4))
        np.testing.assert_allclose(result.eigenvalues, [50.0, 40.0, -30.0], rtol=1e-8)
        assert all(result.converged)

    @pytest.mark.slow
    def test_matches_dense_solver_on_random_hessian_like_matrices(self):
        rng = np.random.default_rng(77)
        for trial in range(20):
            q, _ = np.linalg.qr(rng.normal(size=(200, 200)))
            outliers = (10.0 + 10.0 * np.arange(5) + rng.uniform(0.0, 5.0, size=5)) * rng.choice([-1.0, 1.0], 5)
            spectrum = np.concatenate([outliers, rng.uniform(-1.0, 1.0, size=195)])
            matrix = (q * spectrum) @ q.T
            matrix = 0.5 * (matrix + matrix.T)
            dense = np.linalg.eigvalsh(matrix)
            expected = sorted(dense, key=lambda v: -abs(v))[:5]
            result = lanczos_extreme_eigs(DenseOracle(matrix), LanczosConfig(k=5, iterations=40, seed=trial))
            np.testing.assert_allclose(result.eigenvalues, expected, rtol=1e-8)

    def test_signs_kept_and_ordered_by_magnitude(self):
        result = lanczos_extreme_eigs(DenseOracle(np.diag([1.0, -5.0, 3.0, 0.5])), LanczosConfig(k=2, iterations=4))
        np.testing.assert_allclose(result.eigenvalues, [-5.0, 3.0], rtol=1e-10)

    def test_iterations_clamped_to_dimension(self):
        result = lanczos_extreme_eigs(DenseOracle(np.diag([4.0, 3.0, 2.0, 1.0])), LanczosConfig(k=4, iterations=40))
        assert result.iterations <= 4
        np.testing.assert_allclose(sorted(result.eigenvalues), [1.0, 2.0, 3.0, 4.0], rtol=1e-10)

    def test_seeded(self, rng):
        matrix = rng.normal(size=(30, 30))
        matrix = matrix + matrix.T
        a = lanczos_extreme_eigs(DenseOracle(matrix), LanczosConfig(k=2, iterations=8, seed=9))
        b = lanczos_extreme_eigs(DenseOracle(matrix), LanczosConfig(k=2, iterations=8, seed=9))
        assert a.eigenvalues == b.eigenvalues

    @pytest.mark.parametrize("k,iterations", [(0, 5), (6, 5), (7, 10)])
    def test_invalid_config(self, k, iterations):
        with pytest.raises(SpectrumError) as info:
            lanczos_extreme_eigs(DenseOracle(np.eye(6)), LanczosConfig(k=k, iterations=iterations))
        assert info.value.code == codes.INVALID_LANCZOS_CONFIG

    def test_non_square(self):
        with pytest.raises(SpectrumError):
            DenseOracle(np.zeros((2, 3)))

    def test_hvp_oracle_on_quadratic(self, rng):
        diagonals = {"w": np.array([6.0, 5.0, 4.0, 3.0, 2.0, 1.0])}
        params = _params(diagonals, rng)
        oracle = HvpOracle(lambda p: _quadratic_builder(diagonals)(p, np.arange(1)), params)
        v = rng.normal(size=6)
        np.testing.assert_allclose(oracle.matvec(v), diagonals["w"] * v, rtol=1e-12)
        result = lanczos_extreme_eigs(oracle, LanczosConfig(k=3, iterations=6))
        np.testing.assert_allclose(result.eigenvalues, [6.0, 5.0, 4.0], rtol=1e-10)


class TestHessianService:

    diagonals = {"a": np.array([6.0, 5.0, 4.0]), "b": np.array([3.0, 2.0, 1.0])}

    def _run(self, rng, sample_count=30, scale=1.0, **overrides):
        settings = dict(num_samples=30, batch_size=15, k=5, iterations=6, workers=1)
        settings.update(overrides)
        service = HessianService(HessianConfig(**settings))
        return service.spectrum_run(_params(self.diagonals, rng), sample_count,
                                    _quadratic_builder(self.diagonals, scale), "quad")

    def test_batches_and_values(self, rng):
        report = self._run(rng)
        assert report.batch_count == 2
        assert report.sample_count == 30 and report.batch_size == 15
        for row in report.eigenvalues:
            np.testing.assert_allclose(row, [6.0, 5.0, 4.0, 3.0, 2.0], rtol=1e-10)

    def test_batch_indices_are_consecutive(self, rng):
        seen = []

        def builder(params, indices):
            seen.append(tuple(indices))
            return _quadratic_builder(self.diagonals)(params, indices)

        service = HessianService(HessianConfig(num_samples=6, batch_size=3, k=1, iterations=1, workers=1))
        service.spectrum_run(_params(self.diagonals, rng), 10, builder)
        assert set(seen) == {(0, 1, 2), (3, 4, 5)}

    def test_scaling_scales_eigenvalues(self, rng):
        base = self._run(rng)
        scaled = self._run(rng, scale=2.5)
        np.testing.assert_allclose(scaled.eigenvalues, 2.5 * np.asarray(base.eigenvalues), rtol=1e-10)

    def test_batch_larger_than_manifest(self, rng):
        with pytest.raises(SpectrumError) as info:
            self._run(rng, sample_count=10)
        assert info.value.code == codes.BATCH_LARGER_THAN_MANIFEST

    def test_num_samples_clamped(self, rng):
        report = self._run(rng, sample_count=20)
        assert report.sample_count == 20
        assert report.batch_count == 1

    def test_thread_pool_keeps_batch_order(self, rng):
        serial = self._run(np.random.default_rng(3), sample_count=60, num_samples=60, workers=1)
        pooled = self._run(np.random.default_rng(3), sample_count=60, num_samples=60, workers=3)
        assert pooled.eigenvalues == serial.eigenvalues

    def test_param_subset(self, rng):
        report = self._run(rng, param_subset="a", k=3, iterations=3)
        np.testing.assert_allclose(report.eigenvalues[0], [6.0, 5.0, 4.0], rtol=1e-10)
        with pytest.raises(SpectrumError):
            self._run(rng, param_subset="c")

    def test_missing_values_padded(self, rng):
        diagonals = {"w": np.ones(4)}
        service = HessianService(HessianConfig(num_samples=4, batch_size=4, k=3, iterations=4, workers=1))
        report = service.spectrum_run(_params(diagonals, rng), 4, _quadratic_builder(diagonals))
        row = report.eigenvalues[0]
        assert row[0] == pytest.approx(1.0)
        assert math.isnan(row[1]) and math.isnan(row[2])
        assert report.converged[0][1:] == [False, False]
        assert report.all_values() == pytest.approx([1.0])

    @pytest.mark.slow
    def test_protocol_defaults_on_a_logistic_toy_model(self):
        """Mean softplus(x.w) has Hessian X^T diag(s(1 - s)) X / n per batch."""
        rng = np.random.default_rng(5)
        features = rng.normal(size=(3000, 6))
        params = ParamSet({"w": 0.3 * rng.normal(size=6)})

        def build(p, indices):
            x = Tensor(features[indices])
            return ops.reduce_mean(ops.softplus(ops.matmul(x, ops.reshape(p["w"], (6, 1)))))

        config = HessianConfig()
        report = HessianService(config).spectrum_run(params, len(features), build, "toy")
        assert (config.num_samples, config.batch_size, config.k) == (3000, 15, 5)
        assert report.batch_count == 200
        assert np.asarray(report.eigenvalues).shape == (200, 5)
        assert len(report.all_values()) == 1000

        for batch_index, row in enumerate(report.eigenvalues):
            x = features[batch_index * 15:(batch_index + 1) * 15]
            s = 1.0 / (1.0 + np.exp(-x @ params["w"].data))
            dense = np.linalg.eigvalsh(x.T @ (x * (s * (1.0 - s))[:, None]) / 15)
            np.testing.assert_allclose(row, sorted(dense, key=lambda v: -abs(v))[:5], rtol=1e-8)

    def test_clip_model_spectrum(self, tiny_config, synthetic_dir):
        data = load_training_data(load_manifest(synthetic_dir["caption-pairs"], ManifestKind.CAPTION_PAIRS),
                                  tiny_config)
        model = init_model(tiny_config, seed=0, model_id="tiny")
        config = HessianConfig(num_samples=4, batch_size=2, k=2, iterations=3, workers=1,
                               param_subset="logit_scale,text.proj")
        report = hessian_spectrum_run(model, data, config)
        assert report.model_id == "tiny"
        assert np.asarray(report.eigenvalues).shape == (2, 2)
        assert np.all(np.isfinite(report.eigenvalues))
        sweep = hessian_spectrum_sweep([model, model], data, config)
        assert [r.eigenvalues for r in sweep] == [report.eigenvalues] * 2


class TestSharpness:

    def test_summary(self):
        report = SpectrumReport("m", 2, 4, eigenvalues=[[-1.0, 2.0], [-3.0, 4.0]], converged=[[True] * 2] * 2)
        summary = summarize_sharpness(report, bins=4)
        assert summary.negative_count == 2
        assert summary.negative_fraction == 0.5
        assert summary.max_abs_eigenvalue == 4.0
        assert summary.total == 4
        assert sum(count for _, _, count in summary.histogram) == 4
        assert summary.histogram[0][0] == -3.0 and summary.histogram[-1][1] == 4.0
        assert large_magnitude_count(report, 2.5) == 2

    def test_nan_padding_ignored(self):
        report = SpectrumReport("m", 2, 2, eigenvalues=[[5.0, math.nan]], converged=[[True, False]])
        assert summarize_sharpness(report).total == 1

    def test_empty_report(self):
        with pytest.raises(SpectrumError) as info:
            summarize_sharpness(SpectrumReport("m", 2, 0, eigenvalues=[], converged=[]))
        assert info.value.code == codes.EMPTY_REPORT
