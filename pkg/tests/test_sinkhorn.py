import mpmath
import numpy as np
import pytest

from incd.sinkhorn import SinkhornConfig, sinkhorn_codes


def mp_sinkhorn(logits, n_iters, epsilon, dps=60):
    """Arbitrary-precision re-implementation of the same recurrence."""
    with mpmath.workdps(dps):
        rows, cols = len(logits), len(logits[0])
        eps = mpmath.mpf(epsilon)
        mat = [[mpmath.exp(mpmath.mpf(logits[i][j]) / eps) for i in range(rows)]
               for j in range(cols)]  # (C, B)
        total = mpmath.fsum(x for row in mat for x in row)
        mat = [[x / total for x in row] for row in mat]
        for _ in range(n_iters):
            col_sums = [mpmath.fsum(mat[c][b] for c in range(cols)) * rows
                        for b in range(rows)]
            mat = [[mat[c][b] / col_sums[b] for b in range(rows)]
                   for c in range(cols)]
            row_sums = [mpmath.fsum(mat[c]) * cols for c in range(cols)]
            mat = [[x / row_sums[c] for x in mat[c]] for c in range(cols)]
        codes = [[mat[c][b] for c in range(cols)] for b in range(rows)]
        sums = [mpmath.fsum(row) for row in codes]
        return np.array([[float(x / s) for x in row]
                         for row, s in zip(codes, sums)])


class TestConfig:
    def test_defaults(self):
        cfg = SinkhornConfig()
        assert cfg.n_iters == 3 and cfg.epsilon == 0.05

    def test_validation(self):
        with pytest.raises(ValueError):
            SinkhornConfig(n_iters=0)
        with pytest.raises(ValueError):
            SinkhornConfig(epsilon=0.0)


class TestCodes:
    def test_uniform_logits_give_exactly_uniform_codes(self):
        for b, c in [(4, 3), (256, 10), (7, 5), (37, 19)]:
            codes = sinkhorn_codes(np.full((b, c), 1.7))
            assert np.all(codes == codes.flat[0])
            assert np.allclose(codes, 1.0 / c, rtol=1e-14, atol=0)

    def test_two_by_two_against_high_precision_oracle(self):
        logits = [[1.0, 0.0], [0.0, 1.0]]
        codes = sinkhorn_codes(np.array(logits), SinkhornConfig(3, 0.05))
        want = mp_sinkhorn(logits, 3, 0.05)
        assert np.array_equal(np.argmax(codes, axis=1), [0, 1])
        assert np.abs(codes - want).max() <= 1e-12

    def test_random_instances_against_oracle(self, rng):
        for _ in range(5):
            b, c = int(rng.integers(2, 8)), int(rng.integers(2, 6))
            logits = rng.normal(scale=0.5, size=(b, c))
            cfg = SinkhornConfig(int(rng.integers(1, 5)), 0.1)
            got = sinkhorn_codes(logits, cfg)
            want = mp_sinkhorn(logits.tolist(), cfg.n_iters, cfg.epsilon)
            assert np.abs(got - want).max() <= 1e-11

    def test_single_sample_batch_balances_to_uniform(self):
        # A one-sample batch is forced to the uniform row by the cluster
        # marginal; verified against the high-precision oracle.
        logits = [[1.0, 0.0, -0.5]]
        codes = sinkhorn_codes(np.array(logits), SinkhornConfig(3, 0.05))
        want = mp_sinkhorn(logits, 3, 0.05)
        assert np.abs(codes - want).max() <= 1e-12
        assert np.allclose(codes, 1.0 / 3.0, atol=1e-12)

    def test_rows_are_stochastic(self, rng):
        for _ in range(200):
            b = int(rng.integers(1, 65))
            c = int(rng.integers(2, 33))
            logits = rng.normal(scale=rng.uniform(0.05, 3.0), size=(b, c))
            codes = sinkhorn_codes(logits)
            assert np.abs(codes.sum(axis=1) - 1.0).max() <= 1e-6
            assert codes.min() >= 0.0 and codes.max() <= 1.0

    def test_batch_permutation_equivariance(self, rng):
        logits = rng.normal(size=(17, 6))
        perm = rng.permutation(17)
        base = sinkhorn_codes(logits)
        permuted = sinkhorn_codes(logits[perm])
        assert np.allclose(permuted, base[perm], rtol=1e-12, atol=1e-15)

    def test_class_permutation_equivariance(self, rng):
        logits = rng.normal(size=(17, 6))
        perm = rng.permutation(6)
        base = sinkhorn_codes(logits)
        permuted = sinkhorn_codes(logits[:, perm])
        assert np.allclose(permuted, base[:, perm], rtol=1e-12, atol=1e-15)

    def test_columns_balance_with_more_iterations(self, rng):
        # Cosine-logit-scale random inputs: masses converge to B/C.
        for _ in range(30):
            b, c = 128, int(rng.integers(2, 17))
            logits = rng.normal(scale=0.1, size=(b, c))
            col3 = sinkhorn_codes(logits, SinkhornConfig(3, 0.05)).sum(axis=0)
            col20 = sinkhorn_codes(logits, SinkhornConfig(20, 0.05)).sum(axis=0)
            assert np.abs(col3 - b / c).max() <= 0.25 * b / c
            assert np.abs(col20 - b / c).max() <= 1e-3 * b / c

    def test_non_finite_logits_rejected(self):
        bad = np.array([[1.0, np.inf], [0.0, 1.0]])
        with pytest.raises(ValueError):
            sinkhorn_codes(bad)

    def test_degenerate_shapes_rejected(self):
        with pytest.raises(ValueError):
            sinkhorn_codes(np.ones((0, 3)))
        with pytest.raises(ValueError):
            sinkhorn_codes(np.ones((3, 1)))
