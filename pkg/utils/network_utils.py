import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
import warnings

from collections import OrderedDict
from dataclasses import dataclass

from .activation_utils import activation_bundle, check_activation
from .problem_utils import DerivBundle, ScalarField, as_points
from .sampling_utils import Rng, normal_draws


INITS = ['D1', 'D2']

CHECKPOINT_FORMAT = 'mscale-net'
CHECKPOINT_VERSION = 1


#========================================
#   Network specification
#========================================

def build_scale_vector(n1, scales):
    '''
    Per-neuron scale vector K for a first hidden layer of width n1.

    Inputs:
        - n1: width of the first hidden layer
        - scales: either a part count A (1 <= A <= n1), or an explicit list of n1
          positive scales which is passed through unchanged

    With a part count, part i (1-indexed) is filled with the value i and the
    first n1 mod A parts take one extra neuron each.
    '''
    if isinstance(scales, (int, np.integer)) and not isinstance(scales, bool):
        A = int(scales)
        if not 1 <= A <= n1:
            raise ValueError(f'scales: part count must be in [1, {n1}], got {A}')
        sizes = [n1 // A + (1 if i < n1 % A else 0) for i in range(A)]
        return np.repeat(np.arange(1, A + 1, dtype=float), sizes)

    K = np.asarray(scales, dtype=float)
    if K.shape != (n1,):
        raise ValueError(f'scales: explicit list must have length {n1}, got shape {K.shape}')
    if not np.all(K > 0):
        raise ValueError('scales: every scale must be positive')
    return K.copy()


def init_std(init, n_in, n_out):
    '''
    Standard deviation of the weight/bias draws for one layer:
    D1 = N(0, (2/(n_in+n_out))^2), D2 = N(0, 2/(n_in+n_out))
    '''
    if init == 'D1':
        return 2 / (n_in + n_out)
    elif init == 'D2':
        return np.sqrt(2 / (n_in + n_out))
    raise ValueError(f'Unknown initialization "{init}". Options are {INITS}')


@dataclass
class NetworkSpec:
    layer_widths: list
    activation: str = 'srelu'
    scales: object = 1  # part count A or explicit per-neuron list
    init: str = 'D1'
    seed: int = 0

    def __post_init__(self):
        self.layer_widths = [int(n) for n in self.layer_widths]
        if len(self.layer_widths) < 2 or min(self.layer_widths) < 1:
            raise ValueError(f'layer_widths must have >= 2 positive entries, got {self.layer_widths}')
        if self.layer_widths[-1] != 1:
            raise ValueError(f'The output width must be 1, got {self.layer_widths[-1]}')
        check_activation(self.activation)
        if self.init not in INITS:
            raise ValueError(f'Unknown initialization "{self.init}". Options are {INITS}')
        build_scale_vector(self.layer_widths[1], self.scales)

    @property
    def input_dim(self):
        return self.layer_widths[0]

    def scale_vector(self):
        return build_scale_vector(self.layer_widths[1], self.scales)


#========================================
#   MscaleDNN
#========================================

class MscaleNet(nn.Module, ScalarField):
    '''
    h(x) = W_L s(W_{L-1} s( ... s(K * (W_0 x) + b_0) ... ) + b_{L-1}) + b_L

    The scale vector K multiplies W_0 x before the bias is added. The output
    layer is affine (with a bias) and has no activation.
    '''
    has_grad = True
    has_laplacian = True

    def __init__(self, layer_widths, activation='srelu', scales=None):
        super().__init__()
        check_activation(activation)
        self.layer_widths = [int(n) for n in layer_widths]
        self.activation = activation
        self.layers = nn.ModuleList([nn.Linear(n_in, n_out, dtype=torch.float64)
                                     for n_in, n_out in zip(self.layer_widths[:-1], self.layer_widths[1:])])
        if scales is None:
            scales = np.ones(self.layer_widths[1])
        K = torch.as_tensor(np.asarray(scales, dtype=float))
        assert K.shape == (self.layer_widths[1],), f'Scale vector has shape {tuple(K.shape)}'
        self.register_buffer('scales', K)

    @classmethod
    def from_weights(cls, weights, biases, activation='srelu', scales=None):
        '''
        Build a network from explicit per-layer weight matrices and bias vectors
        '''
        assert len(weights) == len(biases)
        widths = [np.shape(weights[0])[1]] + [np.shape(w)[0] for w in weights]
        net = cls(widths, activation, scales)
        with torch.no_grad():
            for layer, w, b in zip(net.layers, weights, biases):
                layer.weight.copy_(torch.as_tensor(np.asarray(w, dtype=float)))
                layer.bias.copy_(torch.as_tensor(np.asarray(b, dtype=float)))
        return net

    @property
    def input_dim(self):
        return self.layer_widths[0]

    def _check_input(self, x):
        x = as_points(x)
        if x.shape[1] != self.input_dim:
            raise ValueError(f'Network takes {self.input_dim}-dimensional inputs, got {x.shape[1]}')
        return x

    def _first_preactivation(self, x):
        first = self.layers[0]
        return self.scales * F.linear(x, first.weight) + first.bias

    def _propagate(self, x, order):
        # Carries the pre-activation a (B, n), its Jacobian w.r.t. x (B, n, d)
        # and its Laplacian w.r.t. x (B, n) through the layers.
        a = self._first_preactivation(x)
        jac = lap = None
        if order >= 1:
            first = self.layers[0]
            jac = (self.scales.unsqueeze(1) * first.weight).expand(x.shape[0], -1, -1)
        if order >= 2:
            lap = torch.zeros_like(a)

        for layer in self.layers[1:]:
            z, dz, d2z = activation_bundle(self.activation, a, order)
            if order >= 2:
                lap_z = d2z * (jac ** 2).sum(dim=-1) + dz * lap
                lap = F.linear(lap_z, layer.weight)
            if order >= 1:
                jac = torch.einsum('bnd,mn->bmd', dz.unsqueeze(-1) * jac, layer.weight)
            a = F.linear(z, layer.weight, layer.bias)
        return a, jac, lap

    def forward_bundle(self, x, order=2):
        '''
        Value, input gradient and input Laplacian of h.

        Inputs:
            - x: a single point (d,) or a batch (n, d)
            - order: 0 (value), 1 (+ gradient) or 2 (+ Laplacian)

        Output: DerivBundle. For a single point the entries have shapes (), (d,), ().
        Derivatives use the right-limit convention at activation kinks.
        '''
        single = getattr(x, 'ndim', np.ndim(x)) == 1
        a, jac, lap = self._propagate(self._check_input(x), order)
        bundle = DerivBundle(a[:, 0],
                             None if jac is None else jac[:, 0],
                             None if lap is None else lap[:, 0])
        if single:
            bundle = DerivBundle(*(None if t is None else t[0] for t in bundle))
        return bundle

    def forward(self, x):
        return self.forward_bundle(x, order=0).value

    def bundle(self, x, order=0):
        return self.forward_bundle(x, order)

    def value(self, x):
        return self.forward_bundle(x, order=0).value

    def grad(self, x):
        return self.forward_bundle(x, order=1).grad_x

    def laplacian(self, x):
        return self.forward_bundle(x, order=2).laplacian_x

    @torch.no_grad()
    def preactivations(self, x):
        '''
        Pre-activations of every hidden layer, as a list of (n, n_l) tensors
        '''
        a = self._first_preactivation(self._check_input(x))
        out = [a]
        for layer in self.layers[1:-1]:
            a = F.linear(activation_bundle(self.activation, a, 0)[0], layer.weight, layer.bias)
            out.append(a)
        return out

    @torch.no_grad()
    def first_layer_output(self, x):
        return activation_bundle(self.activation, self.preactivations(x)[0], 0)[0]

    def parameter_norm(self):
        with torch.no_grad():
            return float(torch.sqrt(sum((p ** 2).sum() for p in self.parameters())))


def init_network(spec, rng=None):
    '''
    Draw a network from a NetworkSpec.

    Every weight and bias entry is N(0, std^2) with std from init_std. The draws
    come from the 'init' stream of rng (Rng(spec.seed) if not given), layer by
    layer: the weight matrix in row-major order, then the bias vector.
    '''
    rng = Rng(spec.seed) if rng is None else rng
    gen = rng.stream('init')
    net = MscaleNet(spec.layer_widths, spec.activation, spec.scale_vector())
    with torch.no_grad():
        for layer in net.layers:
            n_out, n_in = layer.weight.shape
            std = init_std(spec.init, n_in, n_out)
            w = normal_draws(gen, n_out * n_in).reshape(n_out, n_in)
            b = normal_draws(gen, n_out)
            layer.weight.copy_(torch.from_numpy(std * w))
            layer.bias.copy_(torch.from_numpy(std * b))
    return net


#========================================
#   Parameter gradients
#========================================

def objective_param_gradient(net, objective, batch):
    '''
    Value of a batch-level objective and its exact gradient w.r.t. every
    weight and bias of net.

    Inputs:
        - net: MscaleNet
        - objective: callable (field, batch) -> scalar tensor. Its `order`
          attribute (0, 1 or 2) says which input derivatives it uses
        - batch: whatever the objective takes

    Output: (value as a float tensor, OrderedDict parameter name -> gradient)

    The gradient is reverse-mode differentiation through forward_bundle, so
    contributions through grad_x and laplacian_x are included.
    '''
    if getattr(objective, 'order', 0) >= 2 and net.activation == 'relu':
        warnings.warn('The input Laplacian of a ReLU network is zero almost everywhere', RuntimeWarning)

    names, params = zip(*net.named_parameters())
    value = objective(net, batch)
    grads = torch.autograd.grad(value, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    return value.detach(), OrderedDict(zip(names, grads))


#========================================
#   Checkpoints
#========================================

def save_network(net, path):
    '''
    Save a network as a torch file holding a dict with the format tag and
    version, layer widths, activation, K and the state dict (scales, then
    weight and bias of each layer in initialization order).
    '''
    torch.save({'format': CHECKPOINT_FORMAT,
                'version': CHECKPOINT_VERSION,
                'layer_widths': net.layer_widths,
                'activation': net.activation,
                'scales': net.scales.clone(),
                'state_dict': net.state_dict()}, path)


def load_network(path):
    checkpoint = torch.load(path, map_location='cpu')
    if checkpoint.get('format') != CHECKPOINT_FORMAT:
        raise ValueError(f'{path} is not a network checkpoint')
    if checkpoint.get('version') != CHECKPOINT_VERSION:
        raise ValueError(f'{path} has checkpoint version {checkpoint.get("version")}, '
                         f'expected {CHECKPOINT_VERSION}')
    net = MscaleNet(checkpoint['layer_widths'], checkpoint['activation'], checkpoint['scales'].numpy())
    net.load_state_dict(checkpoint['state_dict'])
    return net
