import pytest

from utils.sampling_utils import Rng


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow comparative runs')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def gen(rng):
    return rng.stream('eval')


@pytest.fixture
def write_config(tmp_path):
    '''Write config text to a file and return its path'''
    def write(text, name='test.cfg'):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


PDE_CONFIG = '''
[experiment]
task = pde
loss = ritz
epochs = 3
seed = 0
out = {out}

[network]
widths = 2-8-1
activation = srelu
scales = 2

[optimizer]
lr0 = 1e-3

[data]
d = 2
n = 32
n_tilde = 4
'''

FIT_CONFIG = '''
[experiment]
task = fit
loss = mse
epochs = 2
seed = 0
out = {out}

[network]
widths = 1-8-1
scales = 2

[optimizer]
lr0 = 1e-3

[data]
target = hf1d
train_size = 40
test_size = 20
batch_size = 16
'''


@pytest.fixture
def pde_config_text(tmp_path):
    return PDE_CONFIG.format(out=tmp_path / 'results')


@pytest.fixture
def fit_config_text(tmp_path):
    return FIT_CONFIG.format(out=tmp_path / 'results')
