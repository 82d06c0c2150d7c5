import numpy as np
import os
import pandas as pd
import tempfile
import torch

from tqdm import tqdm

from .activation_utils import ACTIVATIONS, act_deriv1, act_deriv2, act_value, kink_points
from .network_utils import MscaleNet, NetworkSpec, init_network, objective_param_gradient
from .optimizer_utils import LrSchedule, adam_reference_update, adam_step, make_adam
from .problem_utils import (Box, PoissonProblem, make_objective, lse_loss, poisson_g,
                            poisson_utrue_laplacian)
from .sampling_utils import Rng, sample_boundary, sample_interior


# Finite-difference steps
ACTIVATION_STEP = 1e-6
GRAD_STEP = 1e-5
LAPLACIAN_STEP = 1e-4
PARAM_STEP = 1e-4

# Minimum distance of every pre-activation from a kink for the parameter-gradient check,
# where perturbing a weight moves every pre-activation of the batch
KINK_MARGIN = 1e-2

# Input-space stencils x +- h e_i with h up to this reach must stay on one smooth piece
STENCIL_REACH = 2 * LAPLACIAN_STEP

TOLERANCES = {'activations': 1e-6,
              'grad_x': 1e-5,
              'laplacian_x': 1e-4,
              'param_gradient': 1e-4,
              'poisson_oracle': 1e-10,
              'poisson_identity': 1e-12,
              'scale_absorption': 1e-13,
              'adam': 1e-12,
              'determinism': 0.}


def scaled_error(a, b):
    '''
    max |a - b| / max(|b|, 1), elementwise over arrays.

    Relative error where |b| >= 1 and absolute error below, so reference values
    near 0 (gradients at flat points, Laplacians of nearly linear pieces) do not
    blow the error up. Every tolerance in TOLERANCES is on this scale.
    '''
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.)))


def _result(check, error, tolerance=None):
    tolerance = TOLERANCES[check] if tolerance is None else tolerance
    return {'check': check, 'max_error': error, 'tolerance': tolerance, 'passed': bool(error <= tolerance)}


#========================================
#   Points away from kinks
#========================================

def kink_distance(net, x):
    '''
    Distance of the closest hidden pre-activation to a kink of the activation, per point
    '''
    kinks = torch.as_tensor(kink_points(net.activation))
    dist = None
    for a in net.preactivations(x):
        d = torch.abs(a.unsqueeze(-1) - kinks).amin(dim=(-1, -2))
        dist = d if dist is None else torch.minimum(dist, d)
    return dist.numpy()


def kink_regions(net, x):
    '''
    Index of the smooth piece of the activation every hidden pre-activation lies on.

    Output: integer array (n, total hidden width)
    '''
    kinks = kink_points(net.activation)
    return np.concatenate([np.searchsorted(kinks, a.numpy(), side='right') for a in net.preactivations(x)],
                          axis=1)


def smooth_stencil(net, x, reach=STENCIL_REACH):
    '''
    True for the points whose finite-difference stencils x +- h e_i, h <= reach,
    keep every hidden pre-activation on the same smooth piece as x itself.
    '''
    x = np.asarray(x, dtype=float)
    center = kink_regions(net, x)
    smooth = np.ones(len(x), dtype=bool)
    for h in [reach / 2, reach]:
        for i in range(x.shape[1]):
            for sign in [1., -1.]:
                step = np.zeros(x.shape[1])
                step[i] = sign * h
                smooth &= np.all(kink_regions(net, x + step) == center, axis=1)
    return smooth


def generic_points(net, draw, n, margin=None, max_draws=10000):
    '''
    Collect n points where finite differences of the network are not spoiled by kinks.

    Inputs:
        - net: MscaleNet
        - draw: draw() returns a candidate batch of points
        - n: number of points
        - margin: None keeps points with a smooth stencil (smooth_stencil). A number
          keeps points whose pre-activations all stay that far from every kink.
        - max_draws: number of candidate batches before giving up

    Output: (n, d) array. Raises RuntimeError when too few candidates qualify.
    '''
    kept = []
    for _ in range(max_draws):
        candidates = draw()
        if margin is None:
            ok = smooth_stencil(net, candidates)
        else:
            ok = kink_distance(net, candidates) >= margin
        kept += list(candidates[ok])
        if len(kept) >= n:
            return np.array(kept[:n])
    raise RuntimeError(f'Could not find {n} points away from the activation kinks')


#========================================
#   Finite-difference oracles
#========================================

def fd_grad(f, x, h=GRAD_STEP):
    '''
    Central differences of a batched scalar function f: (n, d) -> (n,)
    '''
    grads = np.zeros_like(x)
    for i in range(x.shape[1]):
        step = np.zeros(x.shape[1])
        step[i] = h
        grads[:, i] = (f(x + step) - f(x - step)) / (2 * h)
    return grads


def fd_laplacian(f, x, h=LAPLACIAN_STEP):
    lap = np.zeros(len(x))
    center = f(x)
    for i in range(x.shape[1]):
        step = np.zeros(x.shape[1])
        step[i] = h
        lap += (f(x + step) - 2 * center + f(x - step)) / h ** 2
    return lap


def _net_values(net):
    def f(x):
        with torch.no_grad():
            return net(x).numpy()
    return f


def fd_param_gradient(net, objective, batch, h=PARAM_STEP):
    grads = {}
    with torch.no_grad():
        for name, p in net.named_parameters():
            g = torch.zeros_like(p)
            flat, g_flat = p.view(-1), g.view(-1)
            for j in range(flat.numel()):
                original = flat[j].item()
                flat[j] = original + h
                plus = objective(net, batch).item()
                flat[j] = original - h
                minus = objective(net, batch).item()
                flat[j] = original
                g_flat[j] = (plus - minus) / (2 * h)
            grads[name] = g
    return grads


#========================================
#   Checks
#========================================

def check_activations(gen, n=1000):
    errors = []
    for kind in ACTIVATIONS:
        x = gen.uniform(-0.5, 1.5, 4 * n)
        x = x[np.min(np.abs(x[:, None] - kink_points(kind)), axis=1) >= KINK_MARGIN][:n]
        d1_fd = (act_value(kind, x + ACTIVATION_STEP) - act_value(kind, x - ACTIVATION_STEP)) / (2 * ACTIVATION_STEP)
        d2_fd = (act_deriv1(kind, x + ACTIVATION_STEP) - act_deriv1(kind, x - ACTIVATION_STEP)) / (2 * ACTIVATION_STEP)
        errors += [scaled_error(act_deriv1(kind, x), d1_fd), scaled_error(act_deriv2(kind, x), d2_fd)]
    return [_result('activations', max(errors))]


def random_network(gen, activation, seed):
    '''
    Small random MscaleNet: input dim 1-3, 1-3 hidden layers of width 2-16, D2 init
    '''
    d = int(gen.integers(1, 4))
    hidden = [int(w) for w in gen.integers(2, 17, size=int(gen.integers(1, 4)))]
    scales = int(gen.integers(1, min(hidden[0], 3) + 1))
    spec = NetworkSpec([d] + hidden + [1], activation, scales, 'D2', seed)
    return init_network(spec)


def _network_with_points(gen, activation, index, n_nets, n_points, max_redraws=5):
    '''
    Random network and n_points generic points for it. A network on which no
    generic points turn up is replaced by a fresh one.
    '''
    for attempt in range(max_redraws):
        net = random_network(gen, activation, seed=index + attempt * n_nets)
        d = net.input_dim
        try:
            return net, generic_points(net, lambda: gen.uniform(-1., 1., (4 * n_points, d)), n_points,
                                       max_draws=100)
        except RuntimeError:
            continue
    raise RuntimeError(f'No {activation} network with generic points after {max_redraws} draws')


def check_bundles(gen, n_nets=20, n_points=10):
    grad_errors, lap_errors = [], []
    for i in range(n_nets):
        net, x = _network_with_points(gen, ACTIVATIONS[i % len(ACTIVATIONS)], i, n_nets, n_points)
        with torch.no_grad():
            bundle = net.forward_bundle(x)
        grad_errors.append(scaled_error(bundle.grad_x.numpy(), fd_grad(_net_values(net), x)))
        lap_errors.append(scaled_error(bundle.laplacian_x.numpy(), fd_laplacian(_net_values(net), x)))
    return [_result('grad_x', max(grad_errors)), _result('laplacian_x', max(lap_errors))]


def tiny_network(activation, seed=0):
    return init_network(NetworkSpec([2, 4, 1], activation, 2, 'D2', seed))


def loss_batch(net, loss, gen, n=8):
    '''
    Batch for a 2-d tiny net: (inputs, labels) for mse, (interior, boundary) otherwise
    '''
    box = Box.cube(0., 1., 2)
    interior = generic_points(net, lambda: sample_interior(box, 4 * n, gen), n, margin=KINK_MARGIN)
    if loss == 'mse':
        return interior, np.sin(3 * interior).sum(axis=1)
    boundary = generic_points(net, lambda: sample_boundary(box, 1, gen), 4, margin=KINK_MARGIN)
    return interior, boundary


# Activation used by the parameter-gradient check of each loss
GRADIENT_CHECK_ACTIVATIONS = {'mse': 'srelu', 'ritz': 'srelu2', 'lse': 'srelu3'}


def check_param_gradients(gen):
    results = []
    for loss, activation in GRADIENT_CHECK_ACTIVATIONS.items():
        net = tiny_network(activation)
        objective = make_objective(loss, PoissonProblem(2), beta=1000.)
        batch = loss_batch(net, loss, gen)
        _, grads = objective_param_gradient(net, objective, batch)
        fd = fd_param_gradient(net, objective, batch)
        error = max(scaled_error(grads[name].numpy(), fd[name].numpy()) for name in grads)
        results.append({**_result('param_gradient', error), 'check': f'param_gradient[{loss}]'})
    return results


def check_poisson_oracle(gen, dims=(1, 3, 10)):
    oracle_errors = []
    for d in dims:
        problem = PoissonProblem(d)
        box = problem.domain
        interior = sample_interior(box, 1000, gen)
        boundary = sample_boundary(box, 10, gen)
        loss = float(lse_loss(problem.solution, interior, boundary, 1000., problem))
        scale = float(np.mean(poisson_g(interior).numpy() ** 2))
        oracle_errors.append(loss / scale)

    x = torch.as_tensor(sample_interior(Box.cube(0., 1., 3), 10000, gen))
    identity_error = scaled_error((-poisson_utrue_laplacian(x)).numpy(), poisson_g(x).numpy())
    return [_result('poisson_oracle', max(oracle_errors)), _result('poisson_identity', identity_error)]


def check_scale_absorption(gen, n_points=1000):
    net = init_network(NetworkSpec([3, 8, 8, 1], 'srelu', 4, 'D2', seed=0))
    weights = [layer.weight.detach().numpy().copy() for layer in net.layers]
    biases = [layer.bias.detach().numpy() for layer in net.layers]
    weights[0] = net.scales.numpy()[:, None] * weights[0]
    absorbed = MscaleNet.from_weights(weights, biases, net.activation)

    x = gen.uniform(-1., 1., (n_points, 3))
    with torch.no_grad():
        return [_result('scale_absorption', scaled_error(net(x).numpy(), absorbed(x).numpy()))]


def check_adam():
    errors = []
    for theta, g, lr in [(0., 1., 0.1), (0.5, -0.3, 1e-3)]:
        param = torch.tensor([theta], dtype=torch.float64, requires_grad=True)
        schedule = LrSchedule(lr)
        optimizer = make_adam([param], schedule)
        adam_step(optimizer, [param], [torch.tensor([g], dtype=torch.float64)], schedule)
        errors.append(abs(param.item() - adam_reference_update(theta, g, lr)) / abs(adam_reference_update(theta, g, lr)))
    return [_result('adam', max(errors))]


def check_determinism(seed=0):
    '''
    Run a tiny Ritz problem three times (1, 1 and 2 threads) and compare the CSV bytes
    '''
    from .config_utils import resolve_run
    from .experiment_utils import run_experiment

    values = {'task': 'pde', 'loss': 'ritz', 'epochs': 3, 'seed': seed, 'widths': [2, 8, 1],
              'scales': 2, 'lr0': 1e-3, 'd': 2, 'n': 64, 'n_tilde': 4}
    threads_before = torch.get_num_threads()
    outputs = []
    try:
        with tempfile.TemporaryDirectory() as folder:
            for i, threads in enumerate([1, 1, 2]):
                config = resolve_run({**values, 'threads': threads, 'out': os.path.join(folder, str(i))})
                run_experiment(config, show_progress=False)
                with open(os.path.join(config.run_dir(), 'metrics.csv'), 'rb') as f:
                    outputs.append(f.read())
    finally:
        torch.set_num_threads(threads_before)
    mismatches = sum(out != outputs[0] for out in outputs[1:])
    return [_result('determinism', float(mismatches))]


def run_all_checks(seed=0, show_progress=True):
    '''
    Run every self-check.

    Output: DataFrame with columns check, max_error, tolerance, passed
    '''
    gen = Rng(seed).stream('eval')
    checks = [lambda: check_activations(gen),
              lambda: check_bundles(gen),
              lambda: check_param_gradients(gen),
              lambda: check_poisson_oracle(gen),
              lambda: check_scale_absorption(gen),
              check_adam,
              lambda: check_determinism(seed)]
    rows = []
    for check in tqdm(checks, disable=not show_progress):
        rows += check()
    return pd.DataFrame(rows, columns=['check', 'max_error', 'tolerance', 'passed'])
