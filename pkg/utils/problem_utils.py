import numpy as np
import torch

from dataclasses import dataclass
from typing import NamedTuple, Optional


#========================================
#   Misc.
#========================================

# Batch reductions sum fixed-size chunks in index order, so loss values do not
# depend on the number of threads torch uses.
REDUCTION_CHUNK = 1024


def chunked_mean(values):
    '''
    Mean of a 1-D tensor, reduced chunk by chunk in index order
    '''
    n = values.shape[0]
    if n == 0:
        raise ValueError('Cannot average over an empty set of points')
    partial = torch.stack([chunk.sum() for chunk in values.split(REDUCTION_CHUNK)])
    return partial.sum() / n


def as_points(x):
    '''
    Convert a point or a batch of points to a float64 tensor of shape (n, d)
    '''
    x = torch.as_tensor(x, dtype=torch.float64)
    if x.ndim == 1:
        x = x.unsqueeze(0)
    if x.ndim != 2:
        raise ValueError(f'Expected a point or an (n, d) batch of points, got shape {tuple(x.shape)}')
    return x


def _is_single_point(x):
    return getattr(x, 'ndim', np.ndim(x)) == 1


class Box(NamedTuple):
    '''
    Axis-aligned box [low_1, high_1] x ... x [low_d, high_d]
    '''
    low: np.ndarray
    high: np.ndarray

    @classmethod
    def cube(cls, low, high, d):
        return cls(np.full(d, float(low)), np.full(d, float(high)))

    @property
    def dim(self):
        return len(self.low)

    def contains(self, points):
        points = np.atleast_2d(points)
        return np.all((points >= self.low) & (points <= self.high), axis=1)


def check_box(box):
    low = np.asarray(box[0], dtype=float)
    high = np.asarray(box[1], dtype=float)
    if low.shape != high.shape or low.ndim != 1 or len(low) == 0:
        raise ValueError('Box bounds must be two 1-D arrays of the same positive length')
    if not np.all(low < high):
        raise ValueError(f'Degenerate box: need low < high on every axis, got {low} and {high}')
    return Box(low, high)


#========================================
#   Scalar fields
#========================================

class DerivBundle(NamedTuple):
    '''
    Value, input gradient and input Laplacian of a field on a batch of n points.
    Shapes: (n,), (n, d), (n,). Entries above the requested order are None.
    '''
    value: torch.Tensor
    grad_x: Optional[torch.Tensor] = None
    laplacian_x: Optional[torch.Tensor] = None


class FieldCapabilityError(TypeError):
    pass


def require_capability(field, order, what='this loss'):
    '''
    Raise FieldCapabilityError if field cannot supply derivatives up to order
    '''
    if order >= 1 and not getattr(field, 'has_grad', False):
        raise FieldCapabilityError(f'{what} needs the input gradient, which {type(field).__name__} does not provide')
    if order >= 2 and not getattr(field, 'has_laplacian', False):
        raise FieldCapabilityError(f'{what} needs the input Laplacian, which {type(field).__name__} does not provide')


class ScalarField:
    '''
    Contract shared by networks and closed-form functions: value(x), and
    optionally grad(x) and laplacian(x), all on (n, d) batches. bundle(x, order)
    returns a DerivBundle with everything up to order.
    '''
    has_grad = False
    has_laplacian = False

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise FieldCapabilityError(f'{type(self).__name__} has no gradient')

    def laplacian(self, x):
        raise FieldCapabilityError(f'{type(self).__name__} has no Laplacian')

    def bundle(self, x, order=0):
        x = as_points(x)
        require_capability(self, order)
        grad = self.grad(x) if order >= 1 else None
        lap = self.laplacian(x) if order >= 2 else None
        return DerivBundle(self.value(x), grad, lap)


class AnalyticField(ScalarField):
    '''
    Field built from closed-form callables on (n, d) float64 tensors
    '''

    def __init__(self, value_fn, grad_fn=None, laplacian_fn=None):
        self._value_fn = value_fn
        self._grad_fn = grad_fn
        self._laplacian_fn = laplacian_fn
        self.has_grad = grad_fn is not None
        self.has_laplacian = laplacian_fn is not None

    @classmethod
    def constant(cls, c):
        def value(x):
            return torch.full((x.shape[0],), float(c), dtype=torch.float64)
        def grad(x):
            return torch.zeros_like(x)
        def laplacian(x):
            return torch.zeros(x.shape[0], dtype=torch.float64)
        return cls(value, grad, laplacian)

    def value(self, x):
        return self._value_fn(as_points(x))

    def grad(self, x):
        if self._grad_fn is None:
            return super().grad(x)
        return self._grad_fn(as_points(x))

    def laplacian(self, x):
        if self._laplacian_fn is None:
            return super().laplacian(x)
        return self._laplacian_fn(as_points(x))


def field_values(field, x):
    '''
    Values of a field (anything with bundle()) or of a plain callable at points x
    '''
    x = as_points(x)
    if hasattr(field, 'bundle'):
        return field.bundle(x, order=0).value
    return torch.as_tensor(field(x), dtype=torch.float64)


#========================================
#   Fitting targets
#========================================

# dim: dimension of the variable the target is evaluated on (None = d_in)
# domain: default sampling interval on every axis
FIT_TARGETS = {'osc3d': {'dim': 3, 'domain': (-np.pi / 2, np.pi / 2)},
               'embed60': {'dim': None, 'domain': (0., 1.)},
               'hf1d': {'dim': 1, 'domain': (0., np.pi)},
               'hf2d': {'dim': 2, 'domain': (0., np.pi)}}

EMBEDDINGS = ['none', 'linear', 'nonlinear']


@dataclass
class FitTarget:
    kind: str
    embedding: str = 'none'
    d: int = 60
    d_in: int = 3

    def __post_init__(self):
        if self.kind not in FIT_TARGETS:
            raise ValueError(f'Unknown target "{self.kind}". Options are {list(FIT_TARGETS)}')
        if self.embedding not in EMBEDDINGS:
            raise ValueError(f'Unknown embedding "{self.embedding}". Options are {EMBEDDINGS}')
        if self.kind != 'embed60' and self.embedding != 'none':
            raise ValueError(f'Target {self.kind} does not take an embedding')
        if self.kind == 'embed60' and not (1 <= self.d_in <= self.d):
            raise ValueError(f'Need 1 <= d_in <= d, got d_in={self.d_in}, d={self.d}')

    @property
    def sample_dim(self):
        '''Dimension of the sampled variable (t for embedded targets)'''
        dim = FIT_TARGETS[self.kind]['dim']
        return self.d_in if dim is None else dim

    @property
    def input_dim(self):
        '''Dimension the network sees'''
        if self.kind == 'embed60' and self.embedding != 'none':
            return self.d
        return self.sample_dim

    def default_domain(self):
        low, high = FIT_TARGETS[self.kind]['domain']
        return Box.cube(low, high, self.sample_dim)


def _cos_sin_sum(x):
    return np.sum(np.cos(10 * x) + np.sin(5 * x), axis=1)


def _two_sines(x):
    return np.sin(23 * x) + np.sin(32 * x)


def eval_target(target, inputs):
    '''
    Evaluate a fitting target on its own variable (x for osc3d/hf1d/hf2d, t for embed60).

    Inputs:
        - target: FitTarget
        - inputs: (n, target.sample_dim) array, or a single point

    Output: (n,) array, or a float for a single point
    '''
    single = _is_single_point(inputs)
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[1] != target.sample_dim:
        raise ValueError(f'Target {target.kind} takes {target.sample_dim}-dimensional inputs, got {x.shape[1]}')

    if target.kind in ['osc3d', 'embed60']:
        values = _cos_sin_sum(x)
    elif target.kind == 'hf1d':
        values = np.sin(23 * x[:, 0]) + np.sin(137 * x[:, 0]) + np.sin(203 * x[:, 0])
    else:
        values = _two_sines(x[:, 0]) * _two_sines(x[:, 1])

    return float(values[0]) if single else values


def embedding_indices(d, d_in):
    '''
    0-based index into t used by coordinate i = 1..d, i.e. [i/(d/d_in)] clamped to 1..d_in
    '''
    i = np.arange(1, d + 1)
    return np.clip((i * d_in) // d, 1, d_in) - 1


def _embed(t, d, nonlinear):
    single = _is_single_point(t)
    t = np.atleast_2d(np.asarray(t, dtype=float))
    i = np.arange(1, d + 1)
    x = np.cos(i) * t[:, embedding_indices(d, t.shape[1])]
    if nonlinear:
        x = np.cos(x)
    return x[0] if single else x


def embed_linear(t, d):
    '''
    x_i = cos(i) t_[i/(d/d_in)]
    '''
    return _embed(t, d, nonlinear=False)


def embed_nonlinear(t, d):
    '''
    x_i = cos(cos(i) t_[i/(d/d_in)])
    '''
    return _embed(t, d, nonlinear=True)


def embed_inputs(target, samples):
    '''
    Map sampled variables to network inputs (identity unless the target is embedded)
    '''
    if target.kind != 'embed60' or target.embedding == 'none':
        return np.atleast_2d(np.asarray(samples, dtype=float))
    if target.embedding == 'linear':
        return np.atleast_2d(embed_linear(samples, target.d))
    return np.atleast_2d(embed_nonlinear(samples, target.d))


#========================================
#   Poisson problem on the unit cube
#========================================

def _sum_sines(x, amplitude):
    # sum_i sin(x_i) + amplitude * sin(10 x_i)
    return (torch.sin(x) + amplitude * torch.sin(10 * x)).sum(dim=1)


def _scalar_or_batch(values, x):
    return float(values[0]) if _is_single_point(x) else values


def poisson_g(x):
    '''
    Source term g(x) = sum_i sin(x_i) + 100 sin(10 x_i)
    '''
    return _scalar_or_batch(_sum_sines(as_points(x), 100.), x)


def poisson_gtilde(x):
    '''
    Boundary data g~(x) = sum_i sin(x_i) + sin(10 x_i)
    '''
    return _scalar_or_batch(_sum_sines(as_points(x), 1.), x)


def poisson_utrue(x):
    '''
    True solution u(x) = sum_i sin(x_i) + sin(10 x_i)
    '''
    return _scalar_or_batch(_sum_sines(as_points(x), 1.), x)


def poisson_utrue_grad(x):
    x = as_points(x)
    return torch.cos(x) + 10 * torch.cos(10 * x)


def poisson_utrue_laplacian(x):
    x = as_points(x)
    return (-torch.sin(x) - 100 * torch.sin(10 * x)).sum(dim=1)


def poisson_solution_field():
    return AnalyticField(lambda x: _sum_sines(x, 1.), poisson_utrue_grad, poisson_utrue_laplacian)


@dataclass
class PoissonProblem:
    '''
    -epsilon * Laplacian(u) + V u = g in the box, u = g~ on its boundary.

    With the defaults (epsilon = 1, V = 0, g and g~ as above) the true solution
    is known and exposed as `solution`. Changing epsilon, V, or the data drops the
    default solution unless one is passed in.
    '''
    d: int
    epsilon: float = 1.
    potential: object = 0.  # constant, or callable on (n, d) points
    source: object = None
    boundary_data: object = None
    solution: object = None
    domain: Box = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f'Dimension must be >= 1, got {self.d}')
        if self.epsilon <= 0:
            raise ValueError(f'epsilon must be positive, got {self.epsilon}')
        default_data = self.source is None and self.boundary_data is None
        if self.source is None:
            self.source = poisson_g
        if self.boundary_data is None:
            self.boundary_data = poisson_gtilde
        if self.solution is None and default_data and self.epsilon == 1 and self._constant_potential() == 0:
            self.solution = poisson_solution_field()
        if self.domain is None:
            self.domain = Box.cube(0., 1., self.d)
        if self.domain.dim != self.d:
            raise ValueError(f'Domain dimension {self.domain.dim} does not match d={self.d}')

    def _constant_potential(self):
        return None if callable(self.potential) else float(self.potential)

    def check_points(self, x):
        x = as_points(x)
        if x.shape[1] != self.d:
            raise ValueError(f'Problem has dimension {self.d}, got points of dimension {x.shape[1]}')
        return x

    def g(self, x):
        return torch.as_tensor(self.source(x), dtype=torch.float64)

    def g_tilde(self, x):
        return torch.as_tensor(self.boundary_data(x), dtype=torch.float64)

    def V(self, x):
        if callable(self.potential):
            return torch.as_tensor(self.potential(x), dtype=torch.float64)
        return float(self.potential)

    def residual_check(self, x):
        '''
        Max |(-epsilon Lap u + V u) - g| / max|g| over x for the known solution
        '''
        assert self.solution is not None, 'No true solution to check'
        x = self.check_points(x)
        u = self.solution.bundle(x, order=2)
        lhs = -self.epsilon * u.laplacian_x + self.V(x) * u.value
        g = self.g(x)
        return float(torch.max(torch.abs(lhs - g)) / torch.clamp(torch.max(torch.abs(g)), min=1e-300))


#========================================
#   Loss functionals
#========================================

def boundary_penalty(field, boundary, problem):
    '''
    Mean over all boundary samples of (h(x) - g~(x))^2
    '''
    boundary = problem.check_points(boundary)
    value = field.bundle(boundary, order=0).value
    return chunked_mean((value - problem.g_tilde(boundary)) ** 2)


def ritz_loss(field, interior, boundary, beta, problem=None):
    '''
    Deep Ritz loss
        mean_S ( epsilon |grad h|^2 / 2 + V h^2 - g h ) + beta * mean_S~ (h - g~)^2

    Inputs:
        - field: ScalarField-like object with a gradient (e.g. MscaleNet)
        - interior: (n, d) interior samples S
        - boundary: (2 d n_tilde, d) boundary samples S~. The penalty is normalized by |S~|
        - beta: boundary penalty coefficient
        - problem: PoissonProblem (default: the sine problem in dimension d)

    Output: scalar tensor (differentiable w.r.t. network parameters)
    '''
    interior = as_points(interior)
    problem = PoissonProblem(interior.shape[1]) if problem is None else problem
    interior = problem.check_points(interior)
    require_capability(field, 1, 'Ritz loss')

    inner = field.bundle(interior, order=1)
    energy = (0.5 * problem.epsilon * (inner.grad_x ** 2).sum(dim=1)
              + problem.V(interior) * inner.value ** 2
              - problem.g(interior) * inner.value)
    return chunked_mean(energy) + beta * boundary_penalty(field, boundary, problem)


def lse_loss(field, interior, boundary, beta, problem=None):
    '''
    Least-squares residual loss
        mean_S ( epsilon Lap h - V h + g )^2 + beta * mean_S~ (h - g~)^2
    which for epsilon = 1, V = 0 is mean_S (Lap h + g)^2 + boundary penalty.
    '''
    interior = as_points(interior)
    problem = PoissonProblem(interior.shape[1]) if problem is None else problem
    interior = problem.check_points(interior)
    require_capability(field, 2, 'LSE loss')

    inner = field.bundle(interior, order=2)
    residual = problem.epsilon * inner.laplacian_x - problem.V(interior) * inner.value + problem.g(interior)
    return chunked_mean(residual ** 2) + beta * boundary_penalty(field, boundary, problem)


def fit_mse_loss(field, inputs, labels):
    '''
    Mean squared error of field values against labels
    '''
    inputs = as_points(inputs)
    labels = torch.as_tensor(labels, dtype=torch.float64).reshape(-1)
    if inputs.shape[0] != labels.shape[0]:
        raise ValueError(f'{inputs.shape[0]} inputs but {labels.shape[0]} labels')
    return chunked_mean((field_values(field, inputs) - labels) ** 2)


def mse_vs_true(field, points, u_true):
    '''
    MSE(h, u_true) = mean over points of (h(x) - u_true(x))^2.
    u_true may be a field or a plain callable.
    '''
    points = as_points(points)
    return chunked_mean((field_values(field, points) - field_values(u_true, points)) ** 2)


#========================================
#   Training objectives
#========================================

class FitObjective:
    '''batch = (inputs, labels)'''
    name = 'mse'
    order = 0

    def __call__(self, field, batch):
        inputs, labels = batch
        return fit_mse_loss(field, inputs, labels)


class RitzObjective:
    '''batch = (interior, boundary)'''
    name = 'ritz'
    order = 1

    def __init__(self, problem, beta):
        self.problem = problem
        self.beta = beta

    def __call__(self, field, batch):
        interior, boundary = batch
        return ritz_loss(field, interior, boundary, self.beta, self.problem)


class LSEObjective(RitzObjective):
    name = 'lse'
    order = 2

    def __call__(self, field, batch):
        interior, boundary = batch
        return lse_loss(field, interior, boundary, self.beta, self.problem)


LOSSES = {'mse': FitObjective, 'ritz': RitzObjective, 'lse': LSEObjective}


def make_objective(loss, problem=None, beta=1000.):
    if loss not in LOSSES:
        raise ValueError(f'Unknown loss "{loss}". Options are {list(LOSSES)}')
    if loss == 'mse':
        return FitObjective()
    assert problem is not None, f'The {loss} loss needs a PoissonProblem'
    return LOSSES[loss](problem, beta)
