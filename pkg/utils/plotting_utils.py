import matplotlib
matplotlib.use('Agg')

import matplotlib.pyplot as plt
import numpy as np
import os
import seaborn as sns


# Text stays text and element ids are stable, so the same records give the same file
SVG_RC = {'svg.fonttype': 'none', 'svg.hashsalt': 'mscale'}

# Line style and SVG id suffix of each plotted metric
LINE_STYLES = {'train_loss': '-', 'test_loss': '--', 'mse_true': '-'}
GID_SUFFIX = {'train_loss': 'train', 'test_loss': 'test', 'mse_true': 'mse_true'}


def set_style():
    sns.set_style(style='white', rc={'axes.spines.right': False, 'axes.spines.top': False})
    sns.set_palette('deep')
    sns.set_context('paper')


def _plotted_metrics(record):
    metrics = record.metrics
    if metrics['test_loss'].notna().any():
        return ['train_loss', 'test_loss']
    if metrics['mse_true'].notna().any():
        return ['mse_true']
    return ['train_loss']


def _save_svg(fig, path):
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


def emit_svg_plot(records, path, title=None):
    '''
    Loss-vs-epoch figure with a log-scale ordinate.

    Fit records draw the train loss (solid) and test loss (dashed) in one color
    per record; pde records draw mse_true (solid). Each curve is an SVG group with
    id "<label>-<train|test|mse_true>" and the legend lists every record label.

    Inputs:
        - records: list of RunRecords (or anything with .label and .metrics)
        - path: output .svg file
    '''
    if len(records) == 0 or any(len(r.metrics) == 0 for r in records):
        raise ValueError('Cannot plot an empty record')

    set_style()
    colors = sns.color_palette(n_colors=len(records))
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for record, color in zip(records, colors):
            for i, metric in enumerate(_plotted_metrics(record)):
                line, = ax.plot(record.metrics['epoch'], record.metrics[metric],
                                linestyle=LINE_STYLES[metric], color=color,
                                label=record.label if i == 0 else None)
                line.set_gid(f'{record.label}-{GID_SUFFIX[metric]}')
        ax.set_yscale('log')
        ax.set_xlabel('epoch')
        ax.set_ylabel('loss' if 'train_loss' in _plotted_metrics(records[0]) else 'MSE to true solution')
        if title is not None:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        _save_svg(fig, path)


def plot_fit_curve(predictions_path, path, title=None):
    '''
    True vs network output for a fitting run, from the predictions.npz it saved:
    the dense curve (1d targets, or the y = 0.5 line of 2d targets) when
    present, and test labels against predictions.
    '''
    data = np.load(predictions_path)
    has_curve = 'curve_x' in data.files

    set_style()
    with plt.rc_context(SVG_RC):
        fig, axes = plt.subplots(1, 2 if has_curve else 1, figsize=(10 if has_curve else 5, 4), squeeze=False)
        axes = axes[0]
        if has_curve:
            ax = axes[0]
            true_line, = ax.plot(data['curve_x'], data['curve_true'], color='black', label='target')
            pred_line, = ax.plot(data['curve_x'], data['curve_pred'], color='tab:red', linestyle='--', label='DNN')
            true_line.set_gid('target')
            pred_line.set_gid('prediction')
            ax.set_xlabel('x')
            ax.legend()

        ax = axes[-1]
        lo = min(data['labels'].min(), data['predictions'].min())
        hi = max(data['labels'].max(), data['predictions'].max())
        ax.scatter(data['labels'], data['predictions'], s=4, alpha=0.5)
        ax.plot([lo, hi], [lo, hi], color='black', linewidth=1)
        ax.set_xlabel('target (test set)')
        ax.set_ylabel('DNN output')
        if title is not None:
            fig.suptitle(title)
        fig.tight_layout()
        _save_svg(fig, path)
