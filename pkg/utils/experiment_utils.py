import glob
import json
import numpy as np
import os
import pandas as pd
import time
import torch

from dataclasses import asdict, dataclass, field
from tqdm import tqdm

from . import __version__
from .network_utils import init_network, objective_param_gradient, save_network
from .optimizer_utils import adam_step, make_adam
from .plotting_utils import emit_svg_plot, plot_fit_curve
from .problem_utils import embed_inputs, eval_target, fit_mse_loss, make_objective, mse_vs_true
from .sampling_utils import (BatchSampler, Rng, generator_description, make_dataset,
                             sample_boundary, sample_interior)


CSV_COLUMNS = ['epoch', 'lr', 'train_loss', 'test_loss', 'mse_true', 'wall_ms']
METRICS = ['train_loss', 'test_loss', 'mse_true']

# Points of the dense grid used for fitted-curve figures
CURVE_POINTS = 2000
# Second coordinate of the line the fitted-curve figure of 2d targets is drawn along
CURVE_SLICE_Y = 0.5


class TrainingDiverged(RuntimeError):

    def __init__(self, epoch, param_norm):
        super().__init__(f'Non-finite loss at epoch {epoch} (parameter L2 norm {param_norm:.6g})')
        self.epoch = epoch
        self.param_norm = param_norm


@dataclass
class RunRecord:
    label: str
    metrics: pd.DataFrame
    metadata: dict = field(default_factory=dict)
    net: object = None

    def final(self, metric):
        return float(self.metrics[metric].iloc[-1])


#========================================
#   CSV and metadata
#========================================

def metrics_frame(rows):
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def emit_csv(record, path):
    '''
    Write per-epoch metrics with the fixed header, 9 significant digits, LF line
    endings and empty cells for metrics that do not apply
    '''
    df = record.metrics if isinstance(record, RunRecord) else record
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    df[CSV_COLUMNS].to_csv(path, index=False, float_format='%.9g', lineterminator='\n', na_rep='')


def read_csv(path):
    df = pd.read_csv(path)
    if list(df.columns) != CSV_COLUMNS:
        raise ValueError(f'{path} does not have the metrics header {",".join(CSV_COLUMNS)}')
    df['epoch'] = df['epoch'].astype(int)
    for col in CSV_COLUMNS[1:]:
        df[col] = df[col].astype(float)
    return df


def load_record(run_dir):
    '''
    RunRecord from a run folder written by run_experiment
    '''
    with open(os.path.join(run_dir, 'metadata.json')) as f:
        metadata = json.load(f)
    return RunRecord(metadata['label'], read_csv(os.path.join(run_dir, 'metrics.csv')), metadata)


def run_metadata(config, epochs_completed):
    return {'label': config.label,
            'seed': config.seed,
            'config_hash': config.config_hash(),
            'config': asdict(config),
            'generator': generator_description(),
            'package_version': __version__,
            'torch_version': torch.__version__,
            'numpy_version': np.__version__,
            'epochs_completed': epochs_completed}


def _write_outputs(config, rows, net, run_dir):
    record = RunRecord(config.label, metrics_frame(rows), run_metadata(config, len(rows)), net)
    os.makedirs(run_dir, exist_ok=True)
    emit_csv(record, os.path.join(run_dir, 'metrics.csv'))
    with open(os.path.join(run_dir, 'metadata.json'), 'w') as f:
        json.dump(record.metadata, f, indent=2, sort_keys=True)
    save_network(net, os.path.join(run_dir, 'network.pt'))
    return record


#========================================
#   Training loops
#========================================

def _row(epoch, lr, train_loss, test_loss=np.nan, mse_true=np.nan, start=None):
    wall_ms = np.nan if start is None else 1000 * (time.perf_counter() - start)
    return {'epoch': epoch, 'lr': lr, 'train_loss': train_loss, 'test_loss': test_loss,
            'mse_true': mse_true, 'wall_ms': wall_ms}


def _check_finite(value, epoch, net, config, rows, run_dir):
    if torch.isfinite(value):
        return
    _write_outputs(config, rows, net, run_dir)
    raise TrainingDiverged(epoch, net.parameter_norm())


def _fit_loop(config, net, rng, run_dir, pbar, start):
    target = config.fit_target()
    domain = config.domain()
    train = make_dataset(target, config.train_size, rng.stream('data'), 'train', domain)
    test = make_dataset(target, config.test_size, rng.stream('data'), 'test', domain)
    sampler = BatchSampler(train, config.batch_size, rng.stream('shuffle'))
    objective = make_objective(config.loss)

    params = list(net.parameters())
    optimizer = make_adam(params, config.schedule(), config.beta1, config.beta2, config.adam_eps)
    rows = []
    for epoch in pbar:
        for batch in sampler.epoch():
            value, grads = objective_param_gradient(net, objective, batch)
            _check_finite(value, epoch, net, config, rows, run_dir)
            lr = adam_step(optimizer, params, grads.values(), config.schedule())
        with torch.no_grad():
            train_loss = float(fit_mse_loss(net, train.inputs, train.labels))
            test_loss = float(fit_mse_loss(net, test.inputs, test.labels))
        rows.append(_row(epoch, lr, train_loss, test_loss=test_loss, start=start))
        pbar.set_description(f'{config.label} train={train_loss:.3e} test={test_loss:.3e}')
    return rows, test


def _pde_loop(config, net, rng, run_dir, pbar, start):
    problem = config.poisson_problem()
    box = problem.domain
    objective = make_objective(config.loss, problem, config.beta)
    solution = problem.solution
    if solution is None:
        print('No closed-form solution for this problem, mse_true is left empty')

    eval_points = None
    if config.metric_mode == 'fixed' and solution is not None:
        gen = rng.stream('eval')
        eval_points = np.concatenate([sample_interior(box, config.eval_size, gen),
                                      sample_boundary(box, config.n_tilde, gen)])

    params = list(net.parameters())
    optimizer = make_adam(params, config.schedule(), config.beta1, config.beta2, config.adam_eps)
    rows = []
    for epoch in pbar:
        interior = sample_interior(box, config.n, rng.stream('interior'))
        boundary = sample_boundary(box, config.n_tilde, rng.stream('boundary'))
        value, grads = objective_param_gradient(net, objective, (interior, boundary))
        _check_finite(value, epoch, net, config, rows, run_dir)
        lr = adam_step(optimizer, params, grads.values(), config.schedule())

        mse_true = np.nan
        if solution is not None:
            points = eval_points if eval_points is not None else np.concatenate([interior, boundary])
            with torch.no_grad():
                mse_true = float(mse_vs_true(net, points, solution))
        rows.append(_row(epoch, lr, float(value), mse_true=mse_true, start=start))
        pbar.set_description(f'{config.label} loss={float(value):.3e} mse_true={mse_true:.3e}')
    return rows


def run_experiment(config, show_progress=True):
    '''
    Train one network as described by an ExperimentConfig and save its outputs.

    An epoch is one pass over the training set (fit) or one sampling + update
    step with fresh interior and boundary points (pde). The lr column holds the
    learning rate of the last update in the epoch; for pde runs train_loss is the
    loss of the sampled batch before its update.

    Outputs in config.run_dir(): metrics.csv, metadata.json, network.pt and, for
    fit runs, predictions.npz. Raises TrainingDiverged on a non-finite loss after
    writing the rows recorded so far.

    Output: RunRecord
    '''
    torch.set_num_threads(config.threads)
    rng = Rng(config.seed)
    net = init_network(config.network_spec(), rng)
    run_dir = config.run_dir()
    start = time.perf_counter() if config.wall_clock else None

    pbar = tqdm(range(1, config.epochs + 1), disable=not show_progress)
    if config.task == 'fit':
        rows, test = _fit_loop(config, net, rng, run_dir, pbar, start)
    else:
        rows = _pde_loop(config, net, rng, run_dir, pbar, start)

    record = _write_outputs(config, rows, net, run_dir)
    if config.task == 'fit':
        save_predictions(net, config.fit_target(), test, config.domain(), os.path.join(run_dir, 'predictions.npz'))
    print(f'Saved results to {run_dir}')
    return record


def run_all(configs, seeds=None, show_progress=True, plot=True):
    '''
    Run every labelled config for every seed. One combined loss plot is saved
    per seed (and one fitted-curve figure per low-dimensional fit run).

    Inputs:
        - configs: list of ExperimentConfig (e.g. from load_config)
        - seeds: seeds to run. Defaults to the seed of each config

    Output: dict label -> list of RunRecords (one per seed)
    '''
    records = {config.label: [] for config in configs}
    seeds = [None] if not seeds else seeds
    for seed in seeds:
        per_seed = []
        for config in configs:
            if seed is not None:
                config = config.with_seed(seed)
            print(f'====== label={config.label}, seed={config.seed} ======')
            record = run_experiment(config, show_progress=show_progress)
            records[config.label].append(record)
            per_seed.append(record)
            if plot and config.task == 'fit' and config.fit_target().sample_dim <= 2:
                plot_fit_curve(os.path.join(config.run_dir(), 'predictions.npz'),
                               os.path.join(config.run_dir(), 'fit.svg'), title=config.label)

        if plot and any(len(r.metrics) > 0 for r in per_seed):
            out = configs[0].out
            plot_path = os.path.join(out, f'seed={per_seed[0].metadata["seed"]}_loss.svg')
            emit_svg_plot(per_seed, plot_path)
            print(f'Saved plot to {plot_path}')
    return records


#========================================
#   Fitted curves
#========================================

def save_predictions(net, target, test, domain, path):
    '''
    Save test-set labels and predictions, plus a dense curve through the domain
    for 1d targets (the y = CURVE_SLICE_Y line for 2d targets)
    '''
    with torch.no_grad():
        predictions = net(test.inputs).numpy()
    arrays = {'inputs': test.inputs, 'labels': test.labels, 'predictions': predictions}

    if target.kind in ['hf1d', 'hf2d']:
        x = np.linspace(domain.low[0], domain.high[0], CURVE_POINTS)
        if target.sample_dim == 1:
            samples = x[:, None]
        else:
            samples = np.stack([x, np.full_like(x, CURVE_SLICE_Y)], axis=1)
        with torch.no_grad():
            arrays['curve_pred'] = net(embed_inputs(target, samples)).numpy()
        arrays['curve_x'] = x
        arrays['curve_true'] = eval_target(target, samples)
    np.savez(path, **arrays)


#========================================
#   Aggregating across seeds
#========================================

def smooth_curve(values, window):
    '''
    Trailing moving average; the first window-1 points are dropped
    '''
    return pd.Series(np.asarray(values, dtype=float)).rolling(window).mean().dropna().to_numpy()


def is_monotone_decreasing(values, tol=0.):
    return bool(np.all(np.diff(np.asarray(values, dtype=float)) <= tol))


def final_values(records, metric):
    return np.array([r.final(metric) for r in records])


def summarize_runs(folder, metrics=METRICS, print_results=True):
    '''
    Final-epoch metrics of every run under folder (<folder>/<label>/seed=<seed>/metrics.csv),
    aggregated across seeds.

    Output: DataFrame with one row per label and columns n_seeds, <metric>_mean,
    <metric>_se, <metric>_median
    '''
    file_names = sorted(glob.glob(os.path.join(folder, '*', 'seed=*', 'metrics.csv')))
    if not file_names:
        raise ValueError(f'No metrics.csv files found under {folder}')

    finals = {}
    for pth in file_names:
        label = os.path.basename(os.path.dirname(os.path.dirname(pth)))
        df = read_csv(pth)
        if len(df) == 0:
            print(f'Skipping {pth} (no epochs)')
            continue
        finals.setdefault(label, []).append(df.iloc[-1])

    rows = []
    for label, last_rows in finals.items():
        n = len(last_rows)
        row = {'label': label, 'n_seeds': n}
        for metric in metrics:
            values = np.array([r[metric] for r in last_rows], dtype=float)
            if np.all(np.isnan(values)):
                continue
            row[f'{metric}_mean'] = np.mean(values)
            row[f'{metric}_se'] = np.std(values) / np.sqrt(n)
            row[f'{metric}_median'] = np.median(values)
        rows.append(row)

    df = pd.DataFrame(rows)
    if print_results:
        print(df.to_string(index=False))
    return df
