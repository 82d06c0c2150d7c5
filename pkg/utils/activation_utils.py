import numpy as np
import torch


ACTIVATIONS = ['relu', 'srelu', 'srelu2', 'srelu3']

# Power of sReLU used by each compact-support activation
SRELU_POWERS = {'srelu': 1, 'srelu2': 2, 'srelu3': 3}


def check_activation(kind):
    if kind not in ACTIVATIONS:
        raise ValueError(f'Unknown activation "{kind}". Options are {ACTIVATIONS}')


#========================================
#   Tensor versions (used by the network)
#========================================

def _relu_parts(x, order):
    value = torch.relu(x)
    d1 = d2 = None
    if order >= 1:
        d1 = (x >= 0).to(x.dtype) # right limit at the kink
    if order >= 2:
        d2 = torch.zeros_like(x)
    return value, d1, d2


def _srelu_parts(x, order):
    '''
    sReLU(x) = ReLU(1-x) * ReLU(x) and its a.e. derivatives. The support indicator
    is taken on [0,1) so derivative values at x=0 and x=1 are right limits.
    '''
    value = torch.relu(1 - x) * torch.relu(x)
    d1 = d2 = None
    inside = (x >= 0) & (x < 1)
    if order >= 1:
        d1 = torch.where(inside, 1 - 2 * x, torch.zeros_like(x))
    if order >= 2:
        d2 = torch.where(inside, torch.full_like(x, -2.0), torch.zeros_like(x))
    return value, d1, d2


def activation_bundle(kind, x, order=2):
    '''
    Evaluate sigma(x) and, up to the requested order, sigma'(x) and sigma''(x).

    Inputs:
        - kind: one of ACTIVATIONS
        - x: float64 tensor of any shape
        - order: 0, 1 or 2. Derivatives above the order are returned as None

    Output: value, d1, d2 (tensors shaped like x, or None)

    The formulas are written with differentiable torch ops so that autograd can
    differentiate through all three outputs (needed for parameter gradients of
    losses involving the input gradient or Laplacian).
    '''
    check_activation(kind)
    if kind == 'relu':
        return _relu_parts(x, order)

    s, ds, d2s = _srelu_parts(x, order)
    p = SRELU_POWERS[kind]
    if p == 1:
        return s, ds, d2s
    elif p == 2:
        value = s ** 2
        d1 = 2 * s * ds if order >= 1 else None
        d2 = 2 * ds ** 2 + 2 * s * d2s if order >= 2 else None
    else:
        value = s ** 3
        d1 = 3 * s ** 2 * ds if order >= 1 else None
        d2 = 6 * s * ds ** 2 + 3 * s ** 2 * d2s if order >= 2 else None
    return value, d1, d2


#========================================
#   Scalar / array front-ends
#========================================

def _evaluate(kind, x, index):
    is_tensor = isinstance(x, torch.Tensor)
    t = torch.as_tensor(x, dtype=torch.float64)
    out = activation_bundle(kind, t, order=index)[index]
    if is_tensor:
        return out
    if out.ndim == 0:
        return float(out)
    return out.numpy()


def act_value(kind, x):
    '''
    sigma(x). Accepts a float, a numpy array or a tensor; floats give floats.
    '''
    return _evaluate(kind, x, 0)


def act_deriv1(kind, x):
    '''
    sigma'(x) with the right-limit convention at kinks
    '''
    return _evaluate(kind, x, 1)


def act_deriv2(kind, x):
    '''
    sigma''(x) almost everywhere (distributional deltas at kinks are ignored)
    '''
    return _evaluate(kind, x, 2)


def kink_points(kind):
    '''
    Points where the activation (or one of its first two derivatives) is not smooth
    '''
    check_activation(kind)
    if kind == 'relu':
        return np.array([0.])
    return np.array([0., 1.])
