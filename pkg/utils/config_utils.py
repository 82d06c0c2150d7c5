import configparser
import joblib
import numpy as np
import os

from dataclasses import asdict, dataclass, replace

from .activation_utils import ACTIVATIONS
from .network_utils import INITS, NetworkSpec, build_scale_vector
from .optimizer_utils import DECAY_KINDS, LrSchedule
from .problem_utils import EMBEDDINGS, FIT_TARGETS, Box, FitTarget, PoissonProblem


class ConfigError(ValueError):
    pass


TASKS = {'fit': ['mse'], 'pde': ['ritz', 'lse']}
METRIC_MODES = ['fixed', 'per_step']
RUN_PREFIX = 'run '

REQUIRED = object()


#========================================
#   Value parsers
#========================================

def _int(minimum=None):
    def parse(s):
        value = int(s)
        if minimum is not None and value < minimum:
            raise ValueError(f'must be >= {minimum}, got {value}')
        return value
    return parse


def _float(positive=False, nonnegative=False):
    def parse(s):
        value = float(s)
        if not np.isfinite(value):
            raise ValueError(f'must be finite, got {s}')
        if positive and value <= 0:
            raise ValueError(f'must be positive, got {s}')
        if nonnegative and value < 0:
            raise ValueError(f'must be non-negative, got {s}')
        return value
    return parse


def _choice(options):
    def parse(s):
        if s not in options:
            raise ValueError(f'must be one of {list(options)}, got "{s}"')
        return s
    return parse


def _bool(s):
    if s.lower() in ['true', 'yes', 'on', '1']:
        return True
    if s.lower() in ['false', 'no', 'off', '0']:
        return False
    raise ValueError(f'must be true or false, got "{s}"')


def _widths(s):
    '''"3-2500-1" or "d-200-200-200-1" (the d token is resolved later)'''
    tokens = [t.strip() for t in s.split('-')]
    widths = []
    for i, t in enumerate(tokens):
        if t == 'd' and i == 0:
            widths.append('d')
        else:
            widths.append(_int(1)(t))
    if len(widths) < 2:
        raise ValueError(f'need at least an input and an output width, got "{s}"')
    return widths


def _float_list(s):
    return [float(v) for v in s.replace(',', ' ').split()]


def _batch_size(s):
    return 'full' if s == 'full' else _int(1)(s)


# section -> key -> (parser, default)
SCHEMA = {
    'experiment': {'task': (_choice(TASKS), REQUIRED),
                   'loss': (_choice(['mse', 'ritz', 'lse']), REQUIRED),
                   'epochs': (_int(0), REQUIRED),
                   'seed': (_int(0), REQUIRED),
                   'out': (str, 'results'),
                   'label': (str, None),
                   'threads': (_int(1), 1)},
    'network': {'widths': (_widths, REQUIRED),
                'activation': (_choice(ACTIVATIONS), 'srelu'),
                'scales': (_int(1), 1),
                'uniform_scale': (_float(positive=True), None),
                'scale_list': (_float_list, None),
                'init': (_choice(INITS), 'D1')},
    'optimizer': {'lr0': (_float(positive=True), REQUIRED),
                  'lr_decay': (_float(nonnegative=True), 0.),
                  'decay_kind': (_choice(DECAY_KINDS), 'inverse_time'),
                  'beta1': (_float(nonnegative=True), 0.9),
                  'beta2': (_float(nonnegative=True), 0.999),
                  'adam_eps': (_float(positive=True), 1e-8)},
    'data': {'target': (_choice(FIT_TARGETS), None),
             'embedding': (_choice(EMBEDDINGS), 'none'),
             'd': (_int(1), None),
             'd_in': (_int(1), 3),
             'train_size': (_int(1), 10000),
             'test_size': (_int(1), 10000),
             'batch_size': (_batch_size, 'full'),
             'domain_low': (float, None),
             'domain_high': (float, None),
             'n': (_int(1), 1000),
             'n_tilde': (_int(1), 100),
             'beta': (_float(nonnegative=True), 1000.),
             'epsilon': (_float(positive=True), 1.),
             'potential': (float, 0.)},
    'eval': {'metric_mode': (_choice(METRIC_MODES), 'fixed'),
             'eval_size': (_int(1), None),
             'wall_clock': (_bool, False)},
}

KEY_SECTION = {key: section for section, keys in SCHEMA.items() for key in keys}


#========================================
#   Resolved configuration
#========================================

@dataclass
class ExperimentConfig:
    '''
    One fully resolved and validated run: a base config with one [run ...]
    section and the command-line overrides applied.
    '''
    label: str
    task: str
    loss: str
    epochs: int
    seed: int
    out: str
    threads: int
    widths: list
    activation: str
    scales: object  # part count or explicit list
    init: str
    lr0: float
    lr_decay: float
    decay_kind: str
    beta1: float
    beta2: float
    adam_eps: float
    target: str
    embedding: str
    d: int
    d_in: int
    train_size: int
    test_size: int
    batch_size: int
    domain_low: float
    domain_high: float
    n: int
    n_tilde: int
    beta: float
    epsilon: float
    potential: float
    metric_mode: str
    eval_size: int
    wall_clock: bool
    source: str = None  # file the config was read from

    def network_spec(self):
        return NetworkSpec(self.widths, self.activation, self.scales, self.init, self.seed)

    def schedule(self):
        return LrSchedule(self.lr0, self.lr_decay, self.decay_kind)

    def fit_target(self):
        assert self.task == 'fit'
        return FitTarget(self.target, self.embedding, self.d, self.d_in)

    def domain(self):
        '''Sampling box: the fit target's variable, or the PDE domain'''
        if self.task == 'fit':
            box = self.fit_target().default_domain()
            dim = box.dim
        else:
            box = Box.cube(0., 1., self.d)
            dim = self.d
        low = box.low if self.domain_low is None else np.full(dim, self.domain_low)
        high = box.high if self.domain_high is None else np.full(dim, self.domain_high)
        return Box(low, high)

    def poisson_problem(self):
        assert self.task == 'pde'
        return PoissonProblem(self.d, epsilon=self.epsilon, potential=self.potential, domain=self.domain())

    def config_hash(self):
        values = asdict(self)
        values.pop('source')
        return joblib.hash(values)

    def run_dir(self):
        return os.path.join(self.out, self.label, f'seed={self.seed}')

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


#========================================
#   Loading
#========================================

def _read_ini(path):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#',))
    parser.optionxform = str
    if not os.path.exists(path):
        raise ConfigError(f'config: file {path} does not exist')
    try:
        with open(path) as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigError(f'config: cannot parse {path}: {e}')
    if parser.defaults():
        raise ConfigError('DEFAULT: a [DEFAULT] section is not supported')
    return parser


def _parse_entries(entries, allowed_sections):
    '''
    entries: list of (section, key, raw string). Returns key -> parsed value.
    '''
    values = {}
    for section, key, raw in entries:
        if key not in KEY_SECTION:
            raise ConfigError(f'{key}: unknown key in [{section}]')
        if section in SCHEMA and KEY_SECTION[key] != section:
            raise ConfigError(f'{key}: belongs in [{KEY_SECTION[key]}], found in [{section}]')
        if section not in allowed_sections:
            raise ConfigError(f'{key}: unknown section [{section}]')
        parse, _ = SCHEMA[KEY_SECTION[key]][key]
        try:
            values[key] = parse(raw.strip())
        except ValueError as e:
            raise ConfigError(f'{key}: {e}')
    return values


def _default_label(scales, uniform_scale, scale_list):
    if scale_list is not None:
        return 'custom'
    if uniform_scale is not None:
        return f'uniform{uniform_scale:g}'
    return f'ms{scales}'


def resolve_run(values, label=None, source=None):
    '''
    Apply defaults to parsed key -> value pairs and validate them as one run
    '''
    resolved = {}
    for section, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            if key in values:
                resolved[key] = values[key]
            elif default is REQUIRED:
                raise ConfigError(f'{key}: required key missing from [{section}]')
            else:
                resolved[key] = default

    task, loss = resolved['task'], resolved['loss']
    if loss not in TASKS[task]:
        raise ConfigError(f'loss: task "{task}" needs loss in {TASKS[task]}, got "{loss}"')

    # Scales
    uniform_scale, scale_list = resolved.pop('uniform_scale'), resolved.pop('scale_list')
    if uniform_scale is not None and scale_list is not None:
        raise ConfigError('uniform_scale: cannot be combined with scale_list')
    if label is None:
        label = resolved['label'] or _default_label(resolved['scales'], uniform_scale, scale_list)
    resolved.pop('label')

    # Problem dimension and target
    if task == 'fit':
        if resolved['target'] is None:
            raise ConfigError('target: required for fit tasks')
        if resolved['d'] is None:
            resolved['d'] = 60
        try:
            target = FitTarget(resolved['target'], resolved['embedding'], resolved['d'], resolved['d_in'])
        except ValueError as e:
            raise ConfigError(f'embedding: {e}')
        input_dim = target.input_dim
        if resolved['batch_size'] == 'full':
            resolved['batch_size'] = resolved['train_size']
        if resolved['batch_size'] > resolved['train_size']:
            raise ConfigError(f'batch_size: {resolved["batch_size"]} exceeds train_size {resolved["train_size"]}')
    else:
        if resolved['target'] is not None:
            raise ConfigError('target: only used by fit tasks')
        if resolved['d'] is None:
            resolved['d'] = 3
        input_dim = resolved['d']
        resolved['batch_size'] = resolved['n']

    # Widths
    widths = [input_dim if w == 'd' else w for w in resolved['widths']]
    if widths[0] != input_dim:
        raise ConfigError(f'widths: first width must be the input dimension {input_dim}, got {widths[0]}')
    if widths[-1] != 1:
        raise ConfigError(f'widths: last width must be 1, got {widths[-1]}')
    resolved['widths'] = widths

    if scale_list is not None:
        resolved['scales'] = scale_list
    elif uniform_scale is not None:
        resolved['scales'] = [uniform_scale] * widths[1]
    try:
        build_scale_vector(widths[1], resolved['scales'])
    except ValueError as e:
        raise ConfigError(str(e))

    low, high = resolved['domain_low'], resolved['domain_high']
    if low is not None and high is not None and not low < high:
        raise ConfigError(f'domain_low: must be below domain_high, got {low} >= {high}')
    for key in ['beta1', 'beta2']:
        if resolved[key] >= 1:
            raise ConfigError(f'{key}: must be < 1, got {resolved[key]}')
    if resolved['decay_kind'] == 'exponential' and resolved['lr_decay'] >= 1:
        raise ConfigError(f'lr_decay: exponential decay needs a rate < 1, got {resolved["lr_decay"]}')
    if resolved['eval_size'] is None:
        resolved['eval_size'] = 10 * resolved['n']

    return ExperimentConfig(label=label, source=source, **resolved)


def parse_overrides(pairs):
    '''
    ["key=value", ...] -> [(section, key, value)] for keys of the base sections
    '''
    entries = []
    for pair in pairs or []:
        if '=' not in pair:
            raise ConfigError(f'{pair}: overrides must look like key=value')
        key, raw = pair.split('=', 1)
        key = key.strip()
        if key not in KEY_SECTION:
            raise ConfigError(f'{key}: unknown key')
        entries.append((KEY_SECTION[key], key, raw))
    return entries


def load_config(path, overrides=None):
    '''
    Read a config file and resolve every run it describes.

    Inputs:
        - path: INI file with [experiment], [network], [optimizer], [data] and
          [eval] sections, and optionally [run <label>] sections whose keys
          override the base for that labelled run
        - overrides: list of "key=value" strings applied last to every run

    Output: list of ExperimentConfig, one per [run ...] section (or a single
    run when there are none). Every run is validated before returning.
    '''
    parser = _read_ini(path)
    override_entries = parse_overrides(overrides)

    base, runs = [], []
    for section in parser.sections():
        if section.startswith(RUN_PREFIX):
            label = section[len(RUN_PREFIX):].strip()
            if not label or '/' in label or os.sep in label:
                raise ConfigError(f'run: invalid run label "{label}"')
            runs.append(label)
        elif section in SCHEMA:
            base += [(section, key, raw) for key, raw in parser.items(section)]
        else:
            raise ConfigError(f'{section}: unknown section')

    if not runs:
        values = _parse_entries(base + override_entries, SCHEMA)
        return [resolve_run(values, source=path)]

    configs = []
    for label in runs:
        section = RUN_PREFIX + label
        run_entries = [(KEY_SECTION.get(key, section), key, raw) for key, raw in parser.items(section)]
        if any(key == 'label' for _, key, _ in run_entries):
            raise ConfigError(f'label: set by the section name in [{section}]')
        values = _parse_entries(base + run_entries + override_entries, SCHEMA)
        configs.append(resolve_run(values, label=label, source=path))
    return configs
