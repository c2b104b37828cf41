"""Command-line interface: ``semtree {train,cart,eval,ablate,export,gen}``.

Exit status is 0 on success, 2 when the configuration or input data is
invalid (nothing is computed), and 1 when a run fails part-way. Output files
are written atomically, so a failed run never leaves a partial file behind.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import ablation, data as datamod
from .cart import AxisTree, fit_cart
from .grad import RegressorBank
from .metrics import accuracy, classification_summary, regression_summary, rmse
from .semnet import SemNet
from .train import TrainPlan, parse_schedule, train_classification, train_regression, train_regression_ste
from .tree import ObliqueTree, TreeFormatError, TreeTopology, atomic_write_text, dumps, load_tree, save_tree


class ConfigError(Exception):
    """Bad flags or inputs, detected before any training starts."""


def _check_out_path(path, flag):
    if path is None:
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ConfigError(f"{flag}: directory {parent} does not exist")


def _load_dataset(args):
    try:
        return datamod.load_csv(args.data, args.label, args.task, args.test_fraction, args.seed)
    except datamod.DataError as exc:
        raise ConfigError(str(exc)) from exc


def _add_data_flags(p, task_required=True):
    p.add_argument("--task", choices=("classify", "regress"), required=task_required)
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--label", required=True, help="name of the target column")
    p.add_argument("--seed", type=int, default=0, help="seed for the split, init and batching")
    p.add_argument("--test-fraction", type=float, default=0.2)


def _plan_from_args(args):
    try:
        schedule = parse_schedule(args.k_schedule) if args.k_schedule else None
        snaps = tuple(int(e) for e in args.snapshot_epochs.split(",") if e.strip()) if args.snapshot_epochs else ()
        return TrainPlan(
            epochs=args.epochs, lr=args.lr, batch_size=args.batch, optimizer=args.optimizer,
            schedule=schedule, tau=args.temp, finetune_at=args.finetune_at, seed=args.seed,
            weight_decay=args.weight_decay, leaf_fit=args.leaf_fit, snapshot_epochs=snaps,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_train(args):
    if args.height < 0:
        raise ConfigError("--height must be >= 0")
    if args.task == "classify" and args.selector != "topk":
        raise ConfigError("--selector only applies to regression")
    plan = _plan_from_args(args)
    for path, flag in ((args.out, "--out"), (args.report, "--report"), (args.epochs_csv, "--epochs-csv")):
        _check_out_path(path, flag)
    data = _load_dataset(args)
    if args.task == "classify" and data.n_classes < 2:
        raise ConfigError("classification needs at least two classes in the data")

    topo = TreeTopology.complete(args.height)
    rng = np.random.default_rng(args.seed)
    if args.task == "classify":
        if topo.n < data.n_classes:
            raise ConfigError(f"height {args.height} has {topo.n} leaves for {data.n_classes} classes")
        net = SemNet.init_random(topo, data.d, rng, data.n_classes)
        tree, report = train_classification(net, data, plan)
    else:
        net = SemNet.init_random(topo, data.d, rng)
        bank = RegressorBank.zeros(topo.n, data.d)
        if args.selector == "ste":
            tree, report = train_regression_ste(net, bank, data, plan)
        else:
            tree, report = train_regression(net, bank, data, plan, reg1=args.selector == "topk-reg1")

    save_tree(tree, args.out)
    doc = {"task": args.task, "height": args.height, "selector": args.selector,
           "n_train": int(data.train_idx.size), "n_test": int(data.test_idx.size)}
    doc.update(report.to_dict(include_timing=args.timing))
    if args.report:
        atomic_write_text(args.report, dumps(doc))
    if args.epochs_csv:
        atomic_write_text(args.epochs_csv, report.epochs_csv())
    print(json.dumps(report.final, sort_keys=True))
    return 0


def cmd_cart(args):
    if args.max_depth < 0 or args.min_leaf < 1:
        raise ConfigError("--max-depth must be >= 0 and --min-leaf >= 1")
    for path, flag in ((args.out, "--out"), (args.report, "--report")):
        _check_out_path(path, flag)
    data = _load_dataset(args)
    tree = fit_cart(data, args.max_depth, args.min_leaf)
    summary = (classification_summary if args.task == "classify" else regression_summary)(tree, data)
    atomic_write_text(args.out, dumps(tree.to_dict()))
    if args.report:
        atomic_write_text(args.report, dumps({"task": args.task, "max_depth": args.max_depth,
                                              "min_leaf": args.min_leaf, "final": summary}))
    print(json.dumps(summary, sort_keys=True))
    return 0


def _eval_arrays(tree, X_raw, y_raw):
    """Apply the tree's stored standardization to raw features and targets."""
    pre = tree.preprocessing
    X = X_raw
    if "feature_means" in pre:
        X = datamod.standardize(X_raw, np.asarray(pre["feature_means"]), np.asarray(pre["feature_stds"]))
    if tree.task == "classify":
        y = datamod.labels_as_int(y_raw)
        if "classes" in pre:
            classes = np.asarray(pre["classes"])
            pos = np.searchsorted(classes, y)
            pos = np.minimum(pos, classes.size - 1)
            unknown = classes[pos] != y
            if unknown.any():
                raise ConfigError(f"labels {sorted(set(y[unknown].tolist()))} were not seen in training")
            y = pos.astype(np.int64)
        return X, y
    y = y_raw
    if "target_mean" in pre:
        y = (y_raw - pre["target_mean"]) / pre["target_std"]
    return X, y


def cmd_eval(args):
    try:
        tree = load_tree(args.model)
        X_raw, y_raw, _ = datamod.read_csv(args.data, args.label)
    except (TreeFormatError, datamod.DataError) as exc:
        raise ConfigError(str(exc)) from exc
    d = tree.d if isinstance(tree, ObliqueTree) else None
    if d is not None and X_raw.shape[1] != d:
        raise ConfigError(f"model expects {d} features, data has {X_raw.shape[1]}")
    try:
        train_idx, test_idx = datamod.split_indices(X_raw.shape[0], args.test_fraction, args.seed)
    except datamod.DataError as exc:
        raise ConfigError(str(exc)) from exc
    idx = {"train": train_idx, "test": test_idx, "all": np.arange(X_raw.shape[0])}[args.split]
    X, y = _eval_arrays(tree, X_raw, y_raw)
    X, y = X[idx], y[idx]
    if y.size == 0:
        raise ConfigError(f"the {args.split} split is empty")
    if tree.task == "classify":
        out = {f"{args.split}_accuracy": accuracy(tree, X, y)}
    else:
        out = {f"{args.split}_rmse": rmse(tree, X, y)}
        if "target_std" in tree.preprocessing:
            out[f"{args.split}_rmse_raw"] = rmse(tree, X, y, tree.preprocessing["target_std"])
    text = json.dumps(out, sort_keys=True)
    if args.out:
        _check_out_path(args.out, "--out")
        atomic_write_text(args.out, text + "\n")
    print(text)
    return 0


def _parse_seeds(spec):
    """``"0-9"`` or ``"1,4,7"``."""
    try:
        if "-" in spec:
            lo, hi = spec.split("-", 1)
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(s) for s in spec.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad seed list {spec!r}") from exc
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def cmd_ablate(args):
    seeds = _parse_seeds(args.seeds)
    if not os.path.isdir(args.out_dir):
        raise ConfigError(f"--out-dir {args.out_dir} is not a directory")
    if args.study == "root":
        rows = ["seed,ste_distance,topk_distance"]
        for seed in seeds:
            rep = ablation.ablation_root_recovery(seed, epochs=args.epochs, lr=args.lr)
            for name, run in rep.runs.items():
                atomic_write_text(os.path.join(args.out_dir, f"root_seed{seed}_{name}.csv"), run.to_csv())
            atomic_write_text(os.path.join(args.out_dir, f"root_seed{seed}.json"), dumps(rep.to_dict()))
            rows.append(f"{seed},{rep.distance('ste')!r},{rep.distance('topk')!r}")
        atomic_write_text(os.path.join(args.out_dir, "root_summary.csv"), "\n".join(rows) + "\n")
    else:
        rows = ["seed,method,used_leaves,test_rmse"]
        for seed in seeds:
            res = ablation.utilization_study(seed, epochs=args.epochs)
            for name in ("topk", "topk_reg1", "ste"):
                rows.append(f"{seed},{name},{res[name]['used_leaves']},{res[name]['test_rmse']!r}")
            atomic_write_text(os.path.join(args.out_dir, f"imbalance_seed{seed}.json"), dumps(res))
        atomic_write_text(os.path.join(args.out_dir, "imbalance_summary.csv"), "\n".join(rows) + "\n")
    print("\n".join(rows))
    return 0


def cmd_export(args):
    try:
        tree = load_tree(args.model)
    except TreeFormatError as exc:
        raise ConfigError(str(exc)) from exc
    if args.format == "dot":
        if isinstance(tree, AxisTree):
            raise ConfigError("DOT export is available for oblique trees only")
        text = tree.to_dot()
    else:
        text = dumps(tree.to_dict())
    if args.out:
        _check_out_path(args.out, "--out")
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen(args):
    _check_out_path(args.out, "--out")
    _check_out_path(args.teacher_out, "--teacher-out")
    if args.teacher_out and args.kind != "teacher":
        raise ConfigError("--teacher-out only applies to the teacher generator")
    if args.kind == "teacher":
        teacher, ds = datamod.gen_teacher(args.seed, height=args.height, n_samples=args.samples or 30000)
        if args.teacher_out:
            save_tree(teacher, args.teacher_out)
    elif args.kind == "imbalance":
        ds = datamod.gen_imbalance(args.seed, height=args.height, n_samples=args.samples or 8000)
    elif args.kind == "blobs":
        ds = datamod.gen_blobs(args.seed, n_samples=args.samples or 400)
    else:
        ds = datamod.gen_xor(args.seed, n_samples=args.samples or 800)
    datamod.write_csv(args.out, ds.raw_X(), ds.raw_y(), ds.feature_names, "y")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="semtree", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train an oblique tree")
    _add_data_flags(t)
    t.add_argument("--height", type=int, required=True)
    t.add_argument("--selector", choices=("topk", "ste", "topk-reg1"), default="topk")
    t.add_argument("--k-schedule", help='k per epoch range, e.g. "4:0,2:50,1:80"')
    t.add_argument("--temp", type=float, default=0.5, help="top-k softmax temperature")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--finetune-at", type=int, help="epoch where leaf fitting switches to routed samples")
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--batch", type=int, default=128)
    t.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    t.add_argument("--weight-decay", type=float, default=0.0)
    t.add_argument("--leaf-fit", choices=("gradient", "ridge"), default="gradient")
    t.add_argument("--snapshot-epochs", help="comma-separated epochs for leaf histograms")
    t.add_argument("--out", required=True, help="tree file to write")
    t.add_argument("--report", help="JSON training report to write")
    t.add_argument("--epochs-csv", help="per-epoch loss CSV to write")
    t.add_argument("--timing", action="store_true", help="include wall-clock time in the report")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("cart", help="fit the axis-aligned CART baseline")
    _add_data_flags(c)
    c.add_argument("--max-depth", type=int, default=10)
    c.add_argument("--min-leaf", type=int, default=5)
    c.add_argument("--out", required=True)
    c.add_argument("--report")
    c.set_defaults(func=cmd_cart)

    e = sub.add_parser("eval", help="score a saved tree on a CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--label", required=True)
    e.add_argument("--split", choices=("train", "test", "all"), default="test")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--test-fraction", type=float, default=0.2)
    e.add_argument("--out", help="also write the metrics JSON here")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="root-recovery or leaf-utilization study")
    a.add_argument("study", choices=("root", "imbalance"))
    a.add_argument("--seeds", default="0")
    a.add_argument("--epochs", type=int)
    a.add_argument("--lr", type=float, default=0.01, help="root study only")
    a.add_argument("--out-dir", required=True)
    a.set_defaults(func=cmd_ablate)

    x = sub.add_parser("export", help="write a tree as DOT or canonical JSON")
    x.add_argument("--model", required=True)
    x.add_argument("--format", choices=("dot", "json"), default="dot")
    x.add_argument("--out")
    x.set_defaults(func=cmd_export)

    g = sub.add_parser("gen", help="write a synthetic dataset as CSV")
    g.add_argument("kind", choices=("teacher", "imbalance", "blobs", "xor"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--height", type=int, default=5)
    g.add_argument("--samples", type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--teacher-out", help="teacher generator only: also save the teacher tree")
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "ablate" and args.epochs is None:
        args.epochs = 10 if args.study == "root" else 100
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"semtree: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
        print(f"semtree: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
