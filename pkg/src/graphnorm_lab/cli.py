"""Command-line entry point: ``graphnorm-lab <subcommand> [flags]``.

Configuration is a flat ``key=value`` file (``--config``) overridden by
``--set key=value`` and the dedicated flags.  Failures exit nonzero with a
one-line JSON reason on stderr.
"""

import argparse
import concurrent.futures
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import artifacts, linear_testbed, noise, spectral
from .graphs import make_er_graph, make_synthetic_classification_set
from .model import ModelConfig, copy_params, init_params, init_state, train
from .tudataset import parse_tudataset, stratified_folds

log = logging.getLogger("graphnorm_lab")

SUBCOMMANDS = ("spectrum", "verify-props", "linear-testbed", "train", "noise-probe")
CHOICES = {
    "arch": ("gin", "gcn"),
    "norm": ("none", "batch", "layer", "instance", "graph"),
    "readout": ("sum", "mean"),
    "synthetic": ("regular", "er"),
}


@dataclasses.dataclass
class RunConfig:
    subcommand: str = ""
    seed: int = 0
    data_dir: str = ""
    dataset: str = "MUTAG"
    arch: str = "gin"
    norm: str = "graph"
    norms: str = ""          # comma list for a comparison sweep, e.g. "graph,none,instance"
    batch_size: int = 128
    epochs: int = 400
    lr: float = 0.01
    hidden_dim: int = 64
    layers: int = 5
    readout: str = "sum"
    output_dir: str = "out"
    jobs: int = 1
    folds: int = 10
    max_iterations: int = 0  # 0 means no cap
    synthetic: str = "regular"
    synthetic_count: int = 200
    sample_count: int = 0    # 0 means every graph
    trials: int = 20
    m: int = 2000
    n: int = 8
    delta1: float = 0.05
    probe_layer: int = 0
    probe_dim: int = 0
    probe_batch_size: int = 8


class CliError(Exception):
    def __init__(self, reason, **detail):
        super().__init__(reason)
        self.reason = reason
        self.detail = detail


def _fields():
    return {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "subcommand"}


def _coerce(key, raw):
    fields = _fields()
    if key not in fields:
        raise CliError("bad_config_key", key=key, allowed=sorted(fields))
    kind = type(fields[key].default)
    try:
        value = kind(raw)
    except ValueError:
        raise CliError("bad_config_value", key=key, value=raw, expected=kind.__name__) from None
    if key in CHOICES and value not in CHOICES[key]:
        raise CliError("bad_config_value", key=key, value=raw, allowed=list(CHOICES[key]))
    if key == "norms":
        for item in filter(None, value.split(",")):
            if item not in CHOICES["norm"]:
                raise CliError("bad_config_value", key=key, value=item, allowed=list(CHOICES["norm"]))
    return value


def parse_pairs(lines, source):
    out = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError("bad_config_line", source=source, line=lineno, text=line)
        key, raw = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = raw
    return out


def build_config(args):
    values = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise CliError("config_not_found", path=str(path))
        values.update(parse_pairs(path.read_text().splitlines(), str(path)))
    values.update(parse_pairs(args.set or [], "--set"))
    for flag, key in (("seed", "seed"), ("data_dir", "data_dir"), ("out", "output_dir"), ("jobs", "jobs")):
        v = getattr(args, flag)
        if v is not None:
            values[key] = str(v)
    typed = {k: _coerce(k, v) for k, v in values.items()}
    cfg = RunConfig(subcommand=args.subcommand, **typed)
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("output_not_writable", path=str(out), error=str(exc)) from None
    return cfg


def _pool_map(fn, items, jobs):
    """Map in submission order; processes only when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _dataset_path(cfg):
    if not cfg.data_dir:
        return None
    root = Path(cfg.data_dir)
    for d in (root / cfg.dataset, root):
        if (d / f"{cfg.dataset}_A.txt").exists():
            return d
    return None


def load_graphs(cfg):
    """Parsed dataset when present, otherwise the seeded synthetic classification set."""
    path = _dataset_path(cfg)
    if path is not None:
        graphs, meta = parse_tudataset(path, cfg.dataset)
        log.info("loaded %s: %d graphs, %d classes", meta.name, meta.num_graphs, meta.num_classes)
        return graphs, meta.name
    if cfg.data_dir:
        log.warning("dataset %s not found under %s; using synthetic '%s' set", cfg.dataset, cfg.data_dir, cfg.synthetic)
    graphs = make_synthetic_classification_set(cfg.synthetic_count, cfg.synthetic, cfg.seed)
    return graphs, f"synthetic-{cfg.synthetic}"


# spectrum ----------------------------------------------------------------

SPECTRUM_CASES = (("gcn", 0.0), ("gin", 0.0), ("gin", 1.0))


def _join(values):
    return " ".join(repr(float(v)) for v in values)


def survey_graphs(cfg):
    path = _dataset_path(cfg)
    if path is not None:
        return parse_tudataset(path, cfg.dataset)[0]
    rng = np.random.default_rng(cfg.seed)
    return [make_er_graph(int(rng.integers(2, 13)), 0.4, int(rng.integers(2**63 - 1))) for _ in range(50)]


def cmd_spectrum(cfg):
    graphs = survey_graphs(cfg)
    count = cfg.sample_count or None
    rows, cond_q, cond_qn = [], [], []
    failures = 0
    for arch, xi in SPECTRUM_CASES:
        for rep in spectral.dataset_spectrum_survey(graphs, arch, count, cfg.seed, xi):
            ok = rep.interlacing_ok and rep.zero_singular_present
            failures += not ok
            rows.append((rep.graph_id, rep.n, rep.arch, xi, _join(rep.lam), _join(rep.mu),
                         rep.cond_q, rep.cond_qn, ok))
            cond_q.append(math.log10(rep.cond_q))
            cond_qn.append(math.log10(rep.cond_qn))
    out = Path(cfg.output_dir)
    artifacts.write_csv(out / "spectra.csv", ("graph_id", "n", "arch", "xi", "lambda", "mu", "cond_q", "cond_qn",
                                              "interlacing_ok"), rows)
    artifacts.write_svg(out / "spectra.svg", artifacts.scatter_plot(
        cond_q, cond_qn, "condition number before/after shift", "log10 cond(Q)", "log10 cond+(QN)"))
    if failures:
        raise CliError("interlacing_failed", cases=failures)
    return 0


# verify-props ------------------------------------------------------------

REGULAR_TOL = 1e-10
COMPLETE_TOL = 1e-12


def props_rows(seed):
    rows = []
    for n in range(4, 13):
        for r in (2, 3, 4):
            if r >= n or (n * r) % 2:
                continue
            for xi in (0.0, 0.3, 1.0):
                res = spectral.verify_regular_zero(n, r, xi, seed=seed + 1000 * n + r)
                rows.append(("regular", n, r, xi, res, REGULAR_TOL, res <= REGULAR_TOL))
    for n in range(2, 13):
        for xi in (0.0, 0.7, 1.0):
            res = spectral.verify_complete_identity(n, xi)
            rows.append(("complete", n, n - 1, xi, res, COMPLETE_TOL, res <= COMPLETE_TOL))
    return rows


def cmd_verify_props(cfg):
    rows = props_rows(cfg.seed)
    artifacts.write_csv(Path(cfg.output_dir) / "props.csv", ("prop", "n", "r", "xi", "residual", "tol", "ok"), rows)
    bad = [r for r in rows if not r[-1]]
    if bad:
        raise CliError("residual_above_tolerance", cases=len(bad), first=list(bad[0][:4]))
    return 0


# linear-testbed ----------------------------------------------------------

def _one_trial(args):
    seed, m, n, delta1 = args
    trace, _ = linear_testbed.run_testbed(linear_testbed.TestbedConfig(m=m, n=n, delta1=delta1, seed=seed))
    return trace


def cmd_linear_testbed(cfg):
    seeds = linear_testbed.trial_seeds(cfg.seed, cfg.trials)
    traces = _pool_map(_one_trial, [(s, cfg.m, cfg.n, cfg.delta1) for s in seeds], cfg.jobs)
    out = Path(cfg.output_dir)
    artifacts.write_csv(out / "convergence.csv", ("trial", "step", "err_vanilla", "err_shift", "rho1", "rho2"),
                        linear_testbed.csv_rows(traces))
    tr = traces[0]
    t = list(range(tr.err_vanilla.size))
    artifacts.write_svg(out / "convergence.svg", artifacts.line_plot([
        ("vanilla", t, list(tr.err_vanilla)),
        ("shift", t, list(tr.err_shift)),
        ("rho1^t |w*|", t, [tr.rho1**k * tr.wstar_norm_vanilla for k in t], True),
        ("rho2^t |w*|", t, [tr.rho2**k * tr.wstar_norm_shift for k in t], True),
    ], "gradient descent, trial 0", "step", "|w_t - w*|", log_y=True))
    wins = sum(tr.rho2 < tr.rho1 for tr in traces)
    log.info("rho2 < rho1 in %d of %d trials", wins, len(traces))
    if wins < 0.95 * len(traces):
        raise CliError("shift_not_faster", wins=wins, trials=len(traces))
    return 0


# train -------------------------------------------------------------------

def _model_config(cfg, in_dim, classes, norm):
    return ModelConfig(in_dim=in_dim, arch=cfg.arch, layers=cfg.layers, hidden_dim=cfg.hidden_dim,
                       norm=norm, readout=cfg.readout, classes=classes)


def _train_one(args):
    cfg, graphs, norm, fold, train_ids, test_ids = args
    classes = max(2, len({g.label for g in graphs}))
    mc = _model_config(cfg, graphs[0].feature_dim, classes, norm)
    params = init_params(mc, cfg.seed)
    tr = [graphs[i] for i in train_ids]
    te = [graphs[i] for i in test_ids]
    trace = train(params, mc, tr, te or None, epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                  seed=cfg.seed, max_iterations=cfg.max_iterations or None)
    return norm, fold, trace


def cmd_train(cfg):
    graphs, name = load_graphs(cfg)
    norms = [s for s in cfg.norms.split(",") if s] or [cfg.norm]
    if cfg.folds >= 2:
        splits = [(f.fold_index, f.train_ids, f.test_ids)
                  for f in stratified_folds([g.label for g in graphs], cfg.folds, cfg.seed)]
    else:
        splits = [(0, tuple(range(len(graphs))), ())]
    jobs = [(cfg, graphs, norm, fold, tr, te) for norm in norms for fold, tr, te in splits]
    results = _pool_map(_train_one, jobs, cfg.jobs)
    curves, summary = [], []
    series = []
    for norm, fold, trace in results:
        for it, loss, ep, tr_acc, te_acc in trace.csv_rows():
            curves.append((norm, fold, it, loss, ep, tr_acc, te_acc))
        summary.append((name, norm, fold, trace.train_acc[-1] if trace.train_acc else None,
                        trace.test_acc[-1] if trace.test_acc else None))
        if fold == splits[0][0]:
            series.append((norm, list(range(1, len(trace.losses) + 1)), list(trace.losses)))
    out = Path(cfg.output_dir)
    artifacts.write_csv(out / "curves.csv", ("norm", "fold", "iteration", "loss", "epoch", "train_acc", "test_acc"), curves)
    artifacts.write_csv(out / "summary.csv", ("dataset", "norm", "fold", "train_acc", "test_acc"), summary)
    artifacts.write_svg(out / "curves.svg", artifacts.line_plot(
        series, f"training loss on {name}, fold {splits[0][0]}", "iteration", "loss", log_y=True))
    return 0


# noise-probe -------------------------------------------------------------

def cmd_noise_probe(cfg):
    path = _dataset_path(cfg)
    if path is not None:
        graphs = parse_tudataset(path, cfg.dataset)[0]
    else:
        graphs = noise.mixed_size_dataset(cfg.synthetic_count, cfg.seed)
    classes = max(2, len({g.label for g in graphs}))
    mc = _model_config(cfg, graphs[0].feature_dim, classes, "batch")
    if not 0 <= cfg.probe_layer < mc.layers:
        raise CliError("bad_config_value", key="probe_layer", value=cfg.probe_layer, allowed=f"0..{mc.layers - 1}")
    if not 0 <= cfg.probe_dim < mc.hidden_dim:
        raise CliError("bad_config_value", key="probe_dim", value=cfg.probe_dim, allowed=f"0..{mc.hidden_dim - 1}")
    params = init_params(mc, cfg.seed)
    checkpoints = []
    train(params, mc, graphs, epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, seed=cfg.seed,
          state=init_state(mc), eval_every_epoch=False,
          on_epoch_end=lambda ep, p, _s: checkpoints.append((ep, copy_params(p), mc)))
    records = noise.probe(checkpoints, graphs, cfg.probe_batch_size, cfg.probe_layer, cfg.probe_dim, cfg.seed)
    out = Path(cfg.output_dir)
    artifacts.write_csv(out / "noise.csv", noise.CSV_HEADER, [r.row() for r in records])
    epochs = [r.epoch for r in records]
    artifacts.write_svg(out / "noise.svg", artifacts.band_plot(
        epochs, [r.batch_mean_min for r in records], [r.batch_mean_max for r in records],
        [r.dataset_mean for r in records],
        f"batch mean at layer {cfg.probe_layer}, dim {cfg.probe_dim}", "epoch", "mean", "dataset mean"))
    return 0


COMMANDS = {
    "spectrum": cmd_spectrum,
    "verify-props": cmd_verify_props,
    "linear-testbed": cmd_linear_testbed,
    "train": cmd_train,
    "noise-probe": cmd_noise_probe,
}


def make_parser():
    p = argparse.ArgumentParser(prog="graphnorm-lab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--seed", type=int)
    p.add_argument("--data-dir", dest="data_dir", metavar="PATH")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--jobs", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(reason, code, **detail):
    print(json.dumps({"reason": reason, **detail}, default=str, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[cfg.subcommand](cfg)
    except CliError as exc:
        code = 2 if exc.reason.startswith(("bad_config", "config_", "output_")) else 1
        return _fail(exc.reason, code, **exc.detail)
    except Exception as exc:  # any other failure still gets a machine-readable line
        log.debug("unhandled", exc_info=True)
        return _fail(type(exc).__name__, 1, message=str(exc))


if __name__ == "__main__":
    sys.exit(main())
