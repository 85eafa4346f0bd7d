import numpy as np
import pytest

import deepen


def small_problem(n=16, coils=2, seed=3):
    mask = deepen.make_vardens_mask(n, n, 4.0, seed)
    op = deepen.ForwardOperator(mask, deepen.make_coil_maps(n, n, coils))
    x = deepen.make_phantom(n, n, seed)
    return op, x, op.apply(x)


def test_shapes_and_dtypes():
    op, x, b = small_problem()
    assert x.shape == (16, 16) and x.dtype == np.complex128
    assert b.shape == (2, 16, 16)
    assert op.adjoint(b).shape == (16, 16)


def test_adjoint_identity():
    rng = np.random.default_rng(0)
    op, _, _ = small_problem()
    x = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    y = rng.normal(size=(2, 16, 16)) + 1j * rng.normal(size=(2, 16, 16))
    lhs = np.vdot(y, op.apply(x))
    rhs = np.vdot(op.adjoint(y), x)
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_quadratic_map_matches_closed_form():
    op, _, b = small_problem()
    x0 = deepen.sense_init(op, b)
    cfg = deepen.MapConfig()
    cfg.rel_tol = 1e-14
    cfg.max_iters = 2000
    out = deepen.map_estimate(op, deepen.QuadraticEnergy(1.0), b, x0, cfg)
    costs = np.asarray(out["costs"])
    assert np.all(np.diff(costs) <= 0)
    g = op.normal(out["estimate"]) + out["estimate"] - op.adjoint(b)
    assert np.linalg.norm(g) < 1e-6 * np.linalg.norm(op.adjoint(b))


def test_network_sampling_is_reproducible(tmp_path):
    op, truth, b = small_problem()
    cfg = deepen.NetConfig()
    cfg.layers, cfg.channels = 2, 4
    net = deepen.init_params(cfg, seed=1)
    path = tmp_path / "net.dpn1"
    net.save(path)
    loaded = deepen.load_params(path)
    assert loaded.energy(truth) == net.energy(truth)

    scfg = deepen.SamplerConfig()
    scfg.n_steps, scfg.seed = 10, 4
    x0 = deepen.sense_init(op, b)
    s1 = deepen.sample_posterior(op, net, b, x0, scfg)
    s2 = deepen.sample_posterior(op, loaded, b, x0, scfg)
    np.testing.assert_array_equal(s1, s2)

    rep = deepen.estimate_mmse_uncertainty(op, net, b, scfg, 8)
    assert rep["n_samples"] == 8
    assert np.all(rep["variance"] >= 0)
    assert deepen.psnr(truth, rep["mmse"]) > 0


def test_metrics():
    x = deepen.make_phantom(16, 16, 2)
    assert deepen.psnr(x, x) == 200.0
    assert deepen.ssim(x, x) == pytest.approx(1.0)
    assert deepen.mse(x, x) == 0.0


def test_errors_map_to_python():
    op, _, _ = small_problem()
    with pytest.raises(deepen.InvalidArgument):
        op.apply(np.zeros((8, 8), dtype=complex))
    with pytest.raises(deepen.Error):
        deepen.load_params("/nonexistent/net.dpn1")
