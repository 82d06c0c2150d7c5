import numpy as np

from dataclasses import dataclass

from .problem_utils import Box, check_box, eval_target, embed_inputs


#========================================
#   Seeded random streams
#========================================

GENERATOR_NAME = 'numpy.random.PCG64'
GENERATOR_VERSION = 1

# Named sub-streams. Each name maps to a fixed spawn key, so the sequence drawn
# from one stream never depends on how much another stream has consumed.
STREAMS = {'init': 0, 'interior': 1, 'boundary': 2, 'data': 3, 'shuffle': 4, 'eval': 5}


def generator_description():
    return f'{GENERATOR_NAME} v{GENERATOR_VERSION} (numpy {np.__version__})'


class Rng:
    '''
    Seed plus lazily created, independent PCG64 sub-streams.

    Stream `name` is PCG64 seeded with SeedSequence(entropy=seed, spawn_key=(STREAMS[name],)),
    which is reproducible across platforms and numpy versions.
    '''

    def __init__(self, seed):
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
            raise ValueError(f'seed must be a non-negative integer, got {seed!r}')
        self.seed = int(seed)
        self._streams = {}

    def stream(self, name):
        if name not in STREAMS:
            raise ValueError(f'Unknown random stream "{name}". Options are {list(STREAMS)}')
        if name not in self._streams:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(STREAMS[name],))
            self._streams[name] = np.random.Generator(np.random.PCG64(seq))
        return self._streams[name]


def normal_draws(gen, size):
    '''
    Standard normal variates by Box-Muller on the uniform stream of gen.

    For m = ceil(size/2) pairs, u1 (m values, mapped to (0,1]) is drawn first,
    then u2 (m values). Output is interleaved: z[2k] = r_k cos(2 pi u2_k),
    z[2k+1] = r_k sin(2 pi u2_k), with r_k = sqrt(-2 log u1_k); truncated to size.
    '''
    m = (size + 1) // 2
    u1 = 1.0 - gen.random(m)
    u2 = gen.random(m)
    r = np.sqrt(-2 * np.log(u1))
    theta = 2 * np.pi * u2
    z = np.empty(2 * m)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:size]


#========================================
#   Domains, interiors and boundaries
#========================================

def sample_interior(box, n, gen):
    '''
    n points i.i.d. uniform in the box, shape (n, d). Coordinates lie in [low, high).
    '''
    box = check_box(box)
    if n < 1:
        raise ValueError(f'n must be >= 1, got {n}')
    return box.low + (box.high - box.low) * gen.random((n, box.dim))


def sample_boundary(box, n_tilde, gen):
    '''
    n_tilde points on each of the 2d faces of the box, shape (2 d n_tilde, d).

    Faces are visited axis by axis, lower face before upper face. On the face
    x_k = side the other coordinates are uniform in the box.
    '''
    box = check_box(box)
    if n_tilde < 1:
        raise ValueError(f'n_tilde must be >= 1, got {n_tilde}')
    faces = []
    for k in range(box.dim):
        for side in (box.low[k], box.high[k]):
            pts = sample_interior(box, n_tilde, gen)
            pts[:, k] = side
            faces.append(pts)
    return np.concatenate(faces, axis=0)


#========================================
#   Fitting datasets
#========================================

@dataclass
class Dataset:
    inputs: np.ndarray  # (size, network input dim)
    labels: np.ndarray  # (size,)
    split: str
    domain: Box  # box of the sampled variable (t for embedded targets)

    def __post_init__(self):
        assert len(self.inputs) == len(self.labels)

    def __len__(self):
        return len(self.labels)


def make_dataset(target, size, gen, split='train', domain=None):
    '''
    Sample a labelled dataset for a fitting target.

    Inputs:
        - target: FitTarget
        - size: number of samples
        - gen: numpy Generator (the 'data' stream)
        - split: 'train' or 'test'
        - domain: optional Box overriding the target's default sampling box

    For embedded targets the intrinsic variable t is sampled in the box, the
    inputs are the embedded points and the labels are evaluated on t.
    '''
    if split not in ['train', 'test']:
        raise ValueError(f'Invalid split "{split}"')
    domain = target.default_domain() if domain is None else check_box(domain)
    if domain.dim != target.sample_dim:
        raise ValueError(f'Domain has dimension {domain.dim}, target {target.kind} needs {target.sample_dim}')

    samples = sample_interior(domain, size, gen)
    labels = eval_target(target, samples)
    inputs = embed_inputs(target, samples)
    return Dataset(inputs, labels, split, domain)


class BatchSampler:
    '''
    Mini-batches over a fixed dataset. The order is reshuffled once per epoch and
    batches are contiguous slices of the shuffled order (the last one may be short).
    Full-batch mode (batch_size == len(dataset)) yields the dataset as-is once per
    epoch and consumes no random numbers.
    '''

    def __init__(self, dataset, batch_size, gen):
        if batch_size < 1 or batch_size > len(dataset):
            raise ValueError(f'batch_size must be in [1, {len(dataset)}], got {batch_size}')
        self.dataset = dataset
        self.batch_size = batch_size
        self.gen = gen
        self._queue = []

    @property
    def full_batch(self):
        return self.batch_size == len(self.dataset)

    @property
    def batches_per_epoch(self):
        return -(-len(self.dataset) // self.batch_size)

    def epoch(self):
        n = len(self.dataset)
        if self.full_batch:
            yield self.dataset.inputs, self.dataset.labels
            return
        order = self.gen.permutation(n)
        for start in range(0, n, self.batch_size):
            idx = order[start:start + self.batch_size]
            yield self.dataset.inputs[idx], self.dataset.labels[idx]

    def next_batch(self):
        if not self._queue:
            self._queue = list(self.epoch())
        return self._queue.pop(0)
