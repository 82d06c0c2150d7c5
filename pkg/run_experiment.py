import argparse
import os
import sys

from utils.check_utils import run_all_checks
from utils.config_utils import load_config
from utils.experiment_utils import RunRecord, read_csv, run_all, summarize_runs
from utils.plotting_utils import emit_svg_plot
from utils.problem_utils import FieldCapabilityError


def build_parser():
    parser = argparse.ArgumentParser(description='Train multiscale DNNs on fitting and Poisson problems')
    subparsers = parser.add_subparsers(dest='command', required=True)

    run = subparsers.add_parser('run', help='Run every [run ...] section of a config for each seed')
    run.add_argument('--config', type=str, required=True,
                     help='Path to a .cfg file, e.g. configs/desk/poisson_ritz_d3.cfg')
    run.add_argument('--seed', type=int, nargs='+',
                     help='Seeds to run. List with spaces in between. Overrides the config seed')
    run.add_argument('--epochs', type=int, help='Overrides the config epoch count')
    run.add_argument('--out', type=str, help='Folder to save results to. Overrides the config')
    run.add_argument('--set', type=str, action='append', default=[], metavar='KEY=VALUE',
                     help='Override any config key, e.g. --set d=10 --set scales=100. Can be repeated')
    run.add_argument('--quiet', action='store_true', help='Hide progress bars')
    run.add_argument('--no_plot', action='store_true', help='Do not draw figures')

    plot = subparsers.add_parser('plot', help='Plot metrics.csv files into one SVG')
    plot.add_argument('--out', type=str, required=True, help='Output .svg path')
    plot.add_argument('csvs', type=str, nargs='+', help='metrics.csv files')
    plot.add_argument('--labels', type=str, nargs='+',
                      help='Legend labels. Defaults to the run folder names')
    plot.add_argument('--title', type=str, default=None)

    check = subparsers.add_parser('check', help='Run the finite-difference and oracle self-checks')
    check.add_argument('--seed', type=int, default=0)
    check.add_argument('--quiet', action='store_true')

    summarize = subparsers.add_parser('summarize', help='Final metrics across seeds for a results folder')
    summarize.add_argument('folder', type=str)
    return parser


def label_from_path(path):
    '''out/<label>/seed=<seed>/metrics.csv -> <label>'''
    folder = os.path.dirname(os.path.abspath(path))
    if os.path.basename(folder).startswith('seed='):
        return os.path.basename(os.path.dirname(folder))
    return os.path.splitext(os.path.basename(path))[0]


def run_command(args):
    overrides = list(args.set)
    if args.seed:
        overrides.append(f'seed={args.seed[0]}')
    if args.epochs is not None:
        overrides.append(f'epochs={args.epochs}')
    if args.out is not None:
        overrides.append(f'out={args.out}')
    configs = load_config(args.config, overrides)

    print(f'Loaded {len(configs)} run(s) from {args.config}: {[c.label for c in configs]}')
    run_all(configs, seeds=args.seed, show_progress=not args.quiet, plot=not args.no_plot)
    return 0


def plot_command(args):
    labels = args.labels or [label_from_path(p) for p in args.csvs]
    if len(labels) != len(args.csvs):
        raise ValueError(f'Got {len(labels)} labels for {len(args.csvs)} CSV files')
    records = [RunRecord(label, read_csv(p)) for label, p in zip(labels, args.csvs)]
    emit_svg_plot(records, args.out, title=args.title)
    print(f'Saved plot to {args.out}')
    return 0


def check_command(args):
    df = run_all_checks(seed=args.seed, show_progress=not args.quiet)
    print(df.to_string(index=False))
    if not df['passed'].all():
        print(f'Failed checks: {list(df.loc[~df["passed"], "check"])}', file=sys.stderr)
        return 1
    return 0


def summarize_command(args):
    summarize_runs(args.folder)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    commands = {'run': run_command, 'plot': plot_command, 'check': check_command,
                'summarize': summarize_command}
    try:
        return commands[args.command](args)
    except (ValueError, FieldCapabilityError, RuntimeError, OSError) as e:
        print(f'Error: {e}', file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
