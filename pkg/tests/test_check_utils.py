import numpy as np
import pytest
import torch

import run_experiment as cli
from utils.check_utils import (KINK_MARGIN, TOLERANCES, check_bundles, check_determinism, check_poisson_oracle,
                               fd_grad, fd_laplacian, generic_points, kink_distance, kink_regions,
                               run_all_checks, scaled_error, smooth_stencil, tiny_network)
from utils.network_utils import MscaleNet
from utils.sampling_utils import Rng


def test_scaled_error():
    assert scaled_error([1., 2.], [1., 2.]) == 0.
    # absolute below 1, relative above
    assert scaled_error([0.1], [0.]) == pytest.approx(0.1)
    assert scaled_error([0.5], [0.4]) == pytest.approx(0.1)
    assert scaled_error([110.], [100.]) == pytest.approx(0.1)
    assert scaled_error([], []) == 0.


def test_fd_oracles_on_quadratic(gen):
    def f(x):
        return (x ** 2).sum(axis=1)

    x = gen.uniform(-1, 1, (10, 3))
    np.testing.assert_allclose(fd_grad(f, x), 2 * x, atol=1e-9)
    np.testing.assert_allclose(fd_laplacian(f, x), np.full(10, 6.), atol=1e-6)


def test_generic_points_with_margin(gen):
    net = tiny_network('srelu')
    x = generic_points(net, lambda: gen.uniform(-1, 1, (50, 2)), 30, margin=KINK_MARGIN)
    assert x.shape == (30, 2)
    assert np.all(kink_distance(net, x) >= KINK_MARGIN)


def test_generic_points_have_smooth_stencils(gen):
    net = tiny_network('srelu2', seed=3)
    x = generic_points(net, lambda: gen.uniform(-1, 1, (50, 2)), 30)
    assert np.all(smooth_stencil(net, x))


def test_kink_regions():
    # single hidden neuron with pre-activation x
    net = MscaleNet.from_weights([[[1.]], [[1.]]], [[0.], [0.]], 'srelu')
    regions = kink_regions(net, np.array([[-0.5], [0.], [0.5], [1.], [2.]]))
    np.testing.assert_array_equal(regions[:, 0], [0, 1, 1, 2, 2])
    assert not smooth_stencil(net, np.array([[1e-5]]))[0]
    assert smooth_stencil(net, np.array([[0.5]]))[0]


def _stuck_neuron_network():
    # Neuron 1 has zero input weights, so its pre-activation sits at 5e-3 from the kink at 0 everywhere
    weights = [[[1., -0.5], [0., 0.], [0.3, 0.8]], [[1., 2., -1.]]]
    biases = [[0.2, 5e-3, 0.1], [0.]]
    return MscaleNet.from_weights(weights, biases, 'srelu2')


def test_neuron_close_to_a_kink(gen):
    net = _stuck_neuron_network()

    def draw():
        return gen.uniform(0., 0.5, (40, 2))

    with pytest.raises(RuntimeError):
        generic_points(net, draw, 10, margin=KINK_MARGIN, max_draws=20)
    x = generic_points(net, draw, 10)
    assert np.all(kink_distance(net, x) < KINK_MARGIN)

    def f(p):
        with torch.no_grad():
            return net(p).numpy()

    with torch.no_grad():
        bundle = net.forward_bundle(x)
    assert scaled_error(bundle.grad_x.numpy(), fd_grad(f, x)) <= TOLERANCES['grad_x']
    assert scaled_error(bundle.laplacian_x.numpy(), fd_laplacian(f, x)) <= TOLERANCES['laplacian_x']


def test_bundle_check_with_default_seed():
    grad_result, lap_result = check_bundles(Rng(0).stream('eval'))
    assert grad_result['passed'], grad_result
    assert lap_result['passed'], lap_result


def test_poisson_oracle(gen):
    oracle, identity = check_poisson_oracle(gen, dims=(1, 3))
    assert oracle['passed'] and identity['passed']


def test_determinism():
    result, = check_determinism(seed=2)
    assert result['max_error'] == 0.


def test_all_checks_pass():
    df = run_all_checks(seed=0, show_progress=False)
    assert list(df.columns) == ['check', 'max_error', 'tolerance', 'passed']
    assert set(df['tolerance']) <= set(TOLERANCES.values())
    assert {'param_gradient[mse]', 'param_gradient[ritz]', 'param_gradient[lse]'} <= set(df['check'])
    assert df['passed'].all(), df.to_string()


def test_cli_check_reports_errors(monkeypatch, capsys):
    def failing_checks(seed, show_progress):
        raise RuntimeError('Could not find 10 points away from the activation kinks')

    monkeypatch.setattr(cli, 'run_all_checks', failing_checks)
    assert cli.main(['check', '--quiet']) == 1
    assert 'Error: Could not find' in capsys.readouterr().err
