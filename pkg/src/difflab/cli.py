"""Command line front end.

Exit codes: 0 success, 1 usage error, 2 I/O or format error, 3 numerical
abort during training, 4 sweep finished with failed cells.

Any long option can also come from ``--config FILE`` holding ``key=value``
lines (``#`` starts a comment); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import io
from .datasets import DatasetKind, DatasetParams, PointCloud, generate, split
from .denoiser import CheckpointError, load_checkpoint, save_checkpoint
from .evaluation import covariance_distance, loss_estimate, loss_vs_timestep, mean_distance, scaling_curves
from .losses import LossForm
from .plot import line_svg, scatter_svg
from .sampler import SampleConfig, sample
from .schedule import TargetSpace
from .trainer import NumericalAbort, TrainConfig, train

log = logging.getLogger("difflab")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3, 4
METRIC_SAMPLES = 2000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _choice(enum_cls):
    def parse(text):
        try:
            return enum_cls.parse(text)
        except ValueError:
            names = ", ".join(m.value for m in enum_cls)
            raise argparse.ArgumentTypeError(f"{text!r} is not one of {names}") from None

    parse.__name__ = enum_cls.__name__
    return parse


def _listed(item_type):
    """Accepts ``a,b`` or repeated values; used by sweep lists."""

    def parse(text):
        return [item_type(part) for part in str(text).split(",") if part.strip()]

    parse.__name__ = getattr(item_type, "__name__", "list")
    return parse


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _add_data_args(p, with_n=True):
    p.add_argument("--dataset", "--kind", dest="dataset", type=_choice(DatasetKind), default=DatasetKind.RING)
    if with_n:
        p.add_argument("--n", type=int, default=100_000, help="points generated before the split")
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--data-param", action="append", type=_key_value, default=[],
                   metavar="KEY=VALUE", help="override a dataset generator default")


def _add_train_args(p):
    p.add_argument("--epochs", type=_positive_int, default=200)
    p.add_argument("--batch-size", type=_positive_int, default=512)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--t-min", type=float, default=1e-5)
    p.add_argument("--eval-draws", type=_positive_int, default=8)
    p.add_argument("--width", type=_positive_int, default=128)
    p.add_argument("--layers", type=_positive_int, default=7)
    p.add_argument("--dtype", choices=["float32", "float64"], default="float32")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="difflab", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="key=value file supplying defaults for any option")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a normalized 2D dataset as CSV")
    _add_data_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one denoiser")
    p.add_argument("--space", type=_choice(TargetSpace), default=TargetSpace.EPS)
    p.add_argument("--form", type=_choice(LossForm), default=LossForm.WEIGHTED)
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--train-csv", help="use these training points instead of generating")
    p.add_argument("--test-csv", help="use these test points instead of generating")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sample", help="draw samples from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--steps", type=_positive_int, default=512)
    p.add_argument("--num-samples", type=_positive_int, default=METRIC_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clip", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="append one metrics row comparing samples with test data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True, help="held-out points CSV")
    p.add_argument("--samples", required=True, help="generated points CSV")
    p.add_argument("--form", type=_choice(LossForm), default=LossForm.WEIGHTED,
                   help="loss form the model was trained with; selects the loss column")
    p.add_argument("--dataset", type=_choice(DatasetKind), default=DatasetKind.RING)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-draws", type=_positive_int, default=8)
    p.add_argument("--t-min", type=float, default=1e-5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("timesteps", help="loss per time bin for a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--form", type=_choice(LossForm), default=LossForm.WEIGHTED)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--draws", type=_positive_int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-min", type=float, default=1e-5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("scaling", help="write 1/w(t) curves for the four spaces")
    p.add_argument("--t-lo", type=float, default=0.01)
    p.add_argument("--t-hi", type=float, default=0.99)
    p.add_argument("--points", type=int, default=99)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="train, sample and score every cell of a grid")
    p.add_argument("--spaces", type=_listed(_choice(TargetSpace)), default=list(TargetSpace))
    p.add_argument("--forms", type=_listed(_choice(LossForm)), default=[LossForm.NELBO, LossForm.WEIGHTED])
    p.add_argument("--datasets", type=_listed(_choice(DatasetKind)), default=[DatasetKind.RING])
    p.add_argument("--seeds", type=_listed(int), default=[0])
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--data-param", action="append", type=_key_value, default=[], metavar="KEY=VALUE")
    _add_train_args(p)
    p.add_argument("--steps", type=_positive_int, default=512)
    p.add_argument("--num-samples", type=_positive_int, default=METRIC_SAMPLES)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("plot", help="render CSV data as SVG")
    p.add_argument("--kind", required=True, help="scatter or line")
    p.add_argument("--input", action="append", required=True, help="CSV file; repeat to overlay")
    p.add_argument("--x", help="x column for line plots (default: first column)")
    p.add_argument("--y", action="append", help="y column(s) for line plots (default: all others)")
    p.add_argument("--where", action="append", type=_key_value, default=[], metavar="COL=VALUE",
                   help="keep only rows where COL equals VALUE")
    p.add_argument("--logy", action="store_true")
    p.add_argument("--title", default="")
    p.add_argument("--out", required=True)
    return parser


# -- config file --------------------------------------------------------------


def read_config(path) -> dict[str, str]:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise io.FormatError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _config_value(action: argparse.Action, text: str):
    if isinstance(action, argparse._StoreTrueAction):
        return text.lower() in ("1", "true", "yes", "on")
    conv = action.type or str
    if isinstance(action, argparse._AppendAction) or action.nargs == 2:
        # whitespace separates repeated values; flags append to these
        return [conv(part) for part in text.split()]
    return conv(text)


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    values = read_config(known.config)
    # Subcommand defaults live on the subparser that will handle argv.
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in argv if a in sub_action.choices), None)
    targets = [parser] + ([sub_action.choices[command]] if command else [])
    used = {"config"}
    for target in targets:
        defaults = {}
        for action in target._actions:
            if action.dest in values and action.dest not in ("help", "command"):
                try:
                    defaults[action.dest] = _config_value(action, values[action.dest])
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"{known.config}: {action.dest}: {exc}") from exc
                used.add(action.dest)
        target.set_defaults(**defaults)
    unknown = sorted(set(values) - used)
    if unknown:
        raise UsageError(f"{known.config}: unknown keys {', '.join(unknown)}")
    return parser.parse_args(argv)


# -- helpers --------------------------------------------------------------------


def dataset_params(overrides) -> DatasetParams:
    known = {f.name: f for f in fields(DatasetParams)}
    kwargs = {}
    for key, value in overrides:
        key = key.replace("-", "_")
        if key not in known:
            raise UsageError(f"unknown dataset parameter {key!r}")
        default = getattr(DatasetParams(), key)
        if isinstance(default, tuple):
            kwargs[key] = tuple(float(v) for v in value.split(";") if v.strip())
        else:
            kwargs[key] = type(default)(value)
    return DatasetParams(**kwargs)


def _train_config(args, space, form, dataset, seed) -> TrainConfig:
    return TrainConfig(
        space=space,
        form=form,
        dataset=dataset,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=seed,
        t_min=args.t_min,
        eval_draws_per_point=args.eval_draws,
        hidden_width=args.width,
        num_layers=args.layers,
        dtype=args.dtype,
    )


def _split_data(dataset, n, seed, test_fraction, params):
    cloud = generate(dataset, n, seed, params)
    return split(cloud, test_fraction)


def _write_run(out: Path, record) -> None:
    out.mkdir(parents=True, exist_ok=True)
    io.write_epochs(out / "epochs.csv", record.epochs)
    io.write_bins(out / "bins.csv", record.bins)
    tmp = out / "model.dllm.tmp"
    save_checkpoint(record.model, tmp)
    # The checkpoint lands last so its presence marks a finished run.
    os.replace(tmp, out / "model.dllm")


def _load_model(path):
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise io.FormatError(f"cannot read checkpoint {path}: {exc}") from exc


# -- commands --------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    if args.n < 2:
        raise UsageError(f"--n must be at least 2, got {args.n}")
    cloud = generate(args.dataset, args.n, args.seed, dataset_params(args.data_param))
    io.write_points(args.out, cloud)
    return EXIT_OK


def cmd_train(args) -> int:
    seed = args.seed
    data_seed = seed if args.data_seed is None else args.data_seed
    if args.train_csv or args.test_csv:
        if not (args.train_csv and args.test_csv):
            raise UsageError("--train-csv and --test-csv must be given together")
        train_cloud = PointCloud(io.read_points(args.train_csv), args.dataset, data_seed, True)
        test_cloud = PointCloud(io.read_points(args.test_csv), args.dataset, data_seed, True)
        if train_cloud.dim != test_cloud.dim:
            raise io.FormatError("train and test CSVs differ in dimension")
    else:
        if args.n < 2:
            raise UsageError(f"--n must be at least 2, got {args.n}")
        train_cloud, test_cloud = _split_data(
            args.dataset, args.n, data_seed, args.test_fraction, dataset_params(args.data_param)
        )
    try:
        config = _train_config(args, args.space, args.form, args.dataset, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    record = train(config, train_cloud, test_cloud)
    _write_run(Path(args.out), record)
    log.info("trained %s/%s in %.1fs", config.space.value, config.form.value, record.seconds)
    return EXIT_OK


def cmd_sample(args) -> int:
    model = _load_model(args.checkpoint)
    config = SampleConfig(args.steps, args.num_samples, args.seed,
                          tuple(args.clip) if args.clip else None)
    io.write_points(args.out, sample(model, config))
    return EXIT_OK


def metrics_row(space, form, dataset, seed, loss, samples, reference) -> list:
    return [
        TargetSpace.parse(space).value,
        LossForm.parse(form).value,
        DatasetKind.parse(dataset).value,
        int(seed),
        loss,
        mean_distance(samples, reference),
        covariance_distance(samples, reference),
    ]


def cmd_eval(args) -> int:
    model = _load_model(args.checkpoint)
    test = io.read_points(args.test)
    samples = io.read_points(args.samples)
    if test.shape[1] != samples.shape[1] or test.shape[1] != model.arch.data_dim:
        raise io.FormatError(
            f"dimension mismatch: test {test.shape[1]}, samples {samples.shape[1]}, "
            f"model {model.arch.data_dim}"
        )
    form = LossForm.NELBO if args.form is LossForm.NELBO else LossForm.WEIGHTED
    loss = loss_estimate(model, test, form, args.eval_draws, args.seed, args.t_min).value
    row = metrics_row(model.predict_space, args.form, args.dataset, args.seed, loss, samples, test)
    io.append_rows(args.out, io.METRICS_HEADER, [row])
    return EXIT_OK


def cmd_timesteps(args) -> int:
    if args.bins < 2:
        raise UsageError("--bins must be at least 2")
    model = _load_model(args.checkpoint)
    data = io.read_points(args.data)
    bins = loss_vs_timestep(model, data, args.form, args.bins, args.draws, args.seed, args.t_min)
    io.write_bins(args.out, [bins])
    return EXIT_OK


def cmd_scaling(args) -> int:
    if not (0.0 < args.t_lo < args.t_hi < 1.0) or args.points < 2:
        raise UsageError("need 0 < t-lo < t-hi < 1 and at least 2 points")
    grid = np.linspace(args.t_lo, args.t_hi, args.points)
    curves = scaling_curves(grid)
    header = ["t"] + [f"inv_w_{space.value}" for space in TargetSpace]
    rows = [[t] + [curves[space][i] for space in TargetSpace] for i, t in enumerate(grid)]
    io.write_rows(args.out, header, rows)
    return EXIT_OK


@dataclass(frozen=True)
class Cell:
    space: TargetSpace
    form: LossForm
    dataset: DatasetKind
    seed: int

    @property
    def relpath(self) -> Path:
        return Path(self.dataset.value) / f"seed{self.seed}" / f"{self.space.value}-{self.form.value}"


def run_cell(cell: Cell, args_dict: dict, root: str) -> list:
    """Train (unless a checkpoint exists), sample, and score one sweep cell."""
    args = argparse.Namespace(**args_dict)
    out = Path(root) / cell.relpath
    params = dataset_params(args.data_param)
    train_cloud, test_cloud = _split_data(cell.dataset, args.n, cell.seed, args.test_fraction, params)
    ckpt = out / "model.dllm"
    if not (ckpt.exists() and (out / "epochs.csv").exists()):
        config = _train_config(args, cell.space, cell.form, cell.dataset, cell.seed)
        record = train(config, train_cloud, test_cloud)
        _write_run(out, record)
        log.info("cell %s trained in %.0fs", cell.relpath, record.seconds)
    model = load_checkpoint(ckpt)
    samples_path = out / "samples.csv"
    if not samples_path.exists():
        samples = sample(model, SampleConfig(args.steps, args.num_samples, cell.seed))
        io.write_points(samples_path, samples)
    samples = io.read_points(samples_path)
    last = io.read_epochs(out / "epochs.csv")[-1]
    loss = last["test_nelbo"] if cell.form is LossForm.NELBO else last["test_weighted"]
    reference = test_cloud.points[: args.num_samples]
    return metrics_row(cell.space, cell.form, cell.dataset, cell.seed, loss, samples, reference)


def sweep_cells(args) -> list[Cell]:
    return [
        Cell(space, form, dataset, seed)
        for dataset in args.datasets
        for seed in args.seeds
        for space in args.spaces
        for form in args.forms
    ]


def cmd_sweep(args) -> int:
    for form in args.forms:
        if form is LossForm.RESCALED:
            raise UsageError("sweeps train with nelbo or weighted forms only")
    dataset_params(args.data_param)
    cells = sweep_cells(args)
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    args_dict = {k: v for k, v in vars(args).items() if k != "func"}
    workers = max(1, int(os.environ.get("DLL_THREADS", "1")))
    results: dict[Cell, list] = {}
    failed: list[Cell] = []

    def record_failure(cell, exc):
        failed.append(cell)
        (root / cell.relpath).mkdir(parents=True, exist_ok=True)
        (root / cell.relpath / "error.txt").write_text(
            "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
        )
        print(f"difflab: cell {cell.relpath} failed: {exc}", file=sys.stderr)

    if workers == 1:
        for cell in cells:
            try:
                results[cell] = run_cell(cell, args_dict, str(root))
            except Exception as exc:  # noqa: BLE001 - one bad cell must not stop the sweep
                record_failure(cell, exc)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {cell: pool.submit(run_cell, cell, args_dict, str(root)) for cell in cells}
            for cell, fut in futures.items():
                try:
                    results[cell] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    record_failure(cell, exc)
    rows = [results[c] for c in cells if c in results]
    io.write_rows(root / "metrics.csv", io.METRICS_HEADER, rows)
    return EXIT_PARTIAL if failed else EXIT_OK


def _filtered(header, rows, where):
    for col, value in where:
        if col not in header:
            raise UsageError(f"--where column {col!r} not in {header}")
        j = header.index(col)
        rows = [r for r in rows if r[j] == value or _same_number(r[j], value)]
    return rows


def _same_number(a, b):
    try:
        return float(a) == float(b)
    except ValueError:
        return False


def _column(header, rows, name, path):
    if name not in header:
        raise io.FormatError(f"{path}: no column {name!r} in {header}")
    j = header.index(name)
    return np.array([float(r[j]) if r[j] != "" else np.nan for r in rows])


def cmd_plot(args) -> int:
    if args.kind not in ("scatter", "line"):
        raise UsageError(f"unknown plot kind {args.kind!r}; use scatter or line")
    if args.kind == "scatter":
        clouds = {Path(p).stem: io.read_points(p) for p in args.input}
        svg = scatter_svg(clouds, args.title)
    else:
        xs, series, xlabel = None, {}, ""
        for path in args.input:
            header, rows = io.read_table(path)
            rows = _filtered(header, rows, args.where)
            if not rows:
                raise io.FormatError(f"{path} has no data rows to plot")
            xcol = args.x or header[0]
            x = _column(header, rows, xcol, path)
            if xs is None:
                xs, xlabel = x, xcol
            elif len(x) != len(xs) or not np.allclose(x, xs, equal_nan=True):
                raise io.FormatError(f"{path}: x column differs from the first input")
            for ycol in args.y or [h for h in header if h != xcol]:
                label = ycol if len(args.input) == 1 else f"{Path(path).stem}:{ycol}"
                series[label] = _column(header, rows, ycol, path)
        svg = line_svg(xs, series, xlabel=xlabel, title=args.title, logy=args.logy)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "timesteps": cmd_timesteps,
    "scaling": cmd_scaling,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"difflab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.FormatError as exc:
        print(f"difflab: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"difflab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"difflab: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.FormatError, CheckpointError, OSError) as exc:
        print(f"difflab: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
