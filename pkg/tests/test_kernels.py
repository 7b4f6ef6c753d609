"""Backend dispatch and compiled-vs-pure parity of the butterfly kernels."""
import numpy as np
import pytest

from conftest import rand4
from wavevit import ConfigError, kernels
from wavevit.bench import bench_attention, bench_kernels


class TestDispatch:
    def test_pure_always_available(self):
        assert "pure" in kernels.available_backends()

    def test_unknown_backend_rejected(self):
        with pytest.raises(ConfigError, match="unknown kernel backend"):
            kernels.set_backend("cuda")

    def test_use_backend_restores(self):
        before = kernels.active_backend()
        with kernels.use_backend("pure"):
            assert kernels.active_backend() == "pure"
        assert kernels.active_backend() == before


@pytest.mark.skipif("compiled" not in kernels.available_backends(), reason="extension not built")
class TestParity:
    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-14), (np.float32, 1e-6)])
    @pytest.mark.parametrize("dims", [(1, 1, 2, 2), (2, 3, 8, 6), (1, 4, 16, 16)])
    def test_dwt_agrees(self, dtype, tol, dims):
        x = rand4(1, dims, dtype=dtype)
        with kernels.use_backend("pure"):
            pure = kernels.dwt2d(x)
        with kernels.use_backend("compiled"):
            compiled = kernels.dwt2d(x)
        for a, b in zip(pure, compiled):
            assert a.dtype == b.dtype == dtype
            np.testing.assert_allclose(a, b, rtol=tol, atol=tol)

    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-14), (np.float32, 1e-6)])
    def test_idwt_agrees(self, dtype, tol):
        bands = [rand4(i, (2, 3, 4, 5), dtype=dtype) for i in range(4)]
        with kernels.use_backend("pure"):
            pure = kernels.idwt2d(*bands)
        with kernels.use_backend("compiled"):
            compiled = kernels.idwt2d(*bands)
        np.testing.assert_allclose(pure, compiled, rtol=tol, atol=tol)

    def test_compiled_roundtrip_exact(self):
        x = rand4(5, (1, 2, 8, 8))
        with kernels.use_backend("compiled"):
            back = kernels.idwt2d(*kernels.dwt2d(x))
        np.testing.assert_allclose(back, x, rtol=1e-12, atol=1e-14)


class TestBenchHarness:
    def test_attention_bench_rows(self):
        rows = bench_attention(h=8, w=8, d=8, heads=2, warmup=1, reps=2, seed=0)
        assert [r.label for r in rows] == ["none", "avgpool", "conv", "wavelet", "wavelet_idwt"]
        for r in rows:
            assert r.min_ms <= r.median_ms <= r.max_ms
            assert len(r.samples_ms) == 2
        by_mode = {r.label: r.extra["score_macs"] for r in rows}
        assert by_mode["none"] == 4 * by_mode["wavelet"]

    def test_kernel_bench_covers_backends(self):
        rows = bench_kernels(h=8, w=8, d=8, warmup=1, reps=2)
        backends = {r.extra["backend"] for r in rows}
        assert "pure" in backends
        assert any("BLAS" in str(b) for b in backends)

    def test_zero_reps_rejected(self):
        with pytest.raises(ConfigError, match="reps >= 1"):
            bench_attention(reps=0)

    def test_full_attention_slower_than_wavelet(self):
        # directional and machine-dependent, but the score product does 4x
        # the work; a 48x48 grid keeps the gap far above timer noise
        rows = {r.label: r.median_ms for r in bench_attention(h=48, w=48, d=32, heads=2, warmup=1, reps=3)}
        assert rows["none"] > rows["wavelet"]
