"""Command-line front end: synthesize data, train, evaluate, predict curves,
and export attention maps. All outputs are plain CSV or JSON and are
byte-identical under a fixed seed.
"""

import argparse
import json
import sys

import numpy as np

from . import data as D
from . import training as T
from .evaluation import CensoringEstimate
from .model import attention_payload, load_checkpoint, save_checkpoint


def _parse_floats(text):
    return [float(x) for x in text.split(",") if x.strip() != ""]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="survformer",
        description="Discrete-time survival analysis with an attention encoder over tabular covariates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic competing-risks dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--events", type=int, default=2)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--censoring", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synthetic.csv")

    p = sub.add_parser("train", help="fit a model on a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="JSON file of training settings")
    p.add_argument("--checkpoint", default="model.json")
    p.add_argument("--out", default=None, help="history JSON (default: <checkpoint>.history.json)")
    p.add_argument("--duration-col", default="duration")
    p.add_argument("--event-col", default="event")
    p.add_argument("--numerical", default=None, help="comma-separated numerical columns (default: inferred)")
    p.add_argument("--categorical", default=None, help="comma-separated categorical columns (default: inferred)")
    p.add_argument("--fractions", default="0.6,0.1,0.3", help="train,validation,test fractions")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("eval", help="report concordance on a data fold")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default="metrics.json")
    p.add_argument("--quantiles", default="0.25,0.5,0.75")
    p.add_argument("--fold", choices=["test", "validation", "train", "all"], default="test")

    p = sub.add_parser("predict", help="write survival curves for records")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--times", required=True, help="comma-separated query times")
    p.add_argument("--out", default="curves.csv")

    p = sub.add_parser("attention", help="export attention maps for one record")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--row", type=int, default=0)
    p.add_argument("--out", default="attention.json")

    return parser


def _infer_columns(rows, duration_col, event_col, numerical, categorical):
    if numerical is not None or categorical is not None:
        nums = [c for c in (numerical or "").split(",") if c]
        cats = [c for c in (categorical or "").split(",") if c]
        return D.ColumnSpec(nums, cats, duration_col, event_col)
    header = list(rows[0].keys())
    nums, cats = [], []
    for name in header:
        if name in (duration_col, event_col):
            continue
        values = [r[name] for r in rows if r[name] != D.MISSING]
        try:
            for v in values:
                float(v)
            nums.append(name)
        except ValueError:
            cats.append(name)
    return D.ColumnSpec(nums, cats, duration_col, event_col)


def _cmd_synth(args):
    spec = D.default_synthetic_spec(
        args.n, dim=args.dim, n_events=args.events, censoring_rate=args.censoring, seed=args.seed
    )
    records, propensities = D.synthesize(spec)
    D.save_records_csv(args.out, records)
    D.save_propensities_csv(D.sidecar_path(args.out), propensities)
    print(f"wrote {args.out} and {D.sidecar_path(args.out)} ({args.n} records)")
    return 0


def _cmd_train(args):
    config = T.TrainConfig.from_json(args.config) if args.config else T.TrainConfig()
    if args.seed is not None:
        config.seed = args.seed
    fractions = _parse_floats(args.fractions)
    rows = D.read_raw_csv(
        args.data, D.ColumnSpec([], [], args.duration_col, args.event_col)
    )
    columns = _infer_columns(rows, args.duration_col, args.event_col, args.numerical, args.categorical)
    train_rows, val_rows, _ = D.split(rows, fractions, config.seed)
    schema = D.fit_schema(train_rows, columns)
    train_records = D.transform_rows(schema, train_rows, columns)
    val_records = D.transform_rows(schema, val_rows, columns)
    grid = D.build_time_grid(
        [r.duration for r in train_records], config.time_bins, config.grid_scheme
    )
    model, history, propensity_model = T.train(config, train_records, val_records, schema, grid)
    censoring = T.fit_censoring(train_records)
    extra = {
        "columns": {
            "numerical": columns.numerical,
            "categorical": columns.categorical,
            "duration": columns.duration,
            "event": columns.event,
        },
        "split": {"fractions": fractions, "seed": config.seed},
        "censoring": censoring.to_dict(),
        "propensity": propensity_model.to_dict() if propensity_model else None,
        "train_config": json.loads(json.dumps(config.__dict__)),
    }
    save_checkpoint(args.checkpoint, model, extra)
    history_path = args.out or f"{args.checkpoint}.history.json"
    with open(history_path, "w", encoding="utf-8") as fh:
        json.dump(history.to_dict(), fh, indent=2)
    best = history.epochs[history.best_epoch]
    print(
        f"trained {len(history.epochs)} epochs; best epoch {history.best_epoch} "
        f"(validation loss {best.validation_loss:.6f}); wrote {args.checkpoint}"
    )
    return 0


def _load_fold(args, extra, fold):
    cols = extra["columns"]
    columns = D.ColumnSpec(cols["numerical"], cols["categorical"], cols["duration"], cols["event"])
    rows = D.read_raw_csv(args.data, columns)
    if fold == "all":
        return columns, rows
    fractions = extra["split"]["fractions"]
    seed = extra["split"]["seed"]
    train_rows, val_rows, test_rows = D.split(rows, fractions, seed)
    return columns, {"train": train_rows, "validation": val_rows, "test": test_rows}[fold]


def _cmd_eval(args):
    model, extra = load_checkpoint(args.checkpoint)
    columns, rows = _load_fold(args, extra, args.fold)
    records = D.transform_rows(model.schema, rows, columns)
    censoring = CensoringEstimate.from_dict(extra["censoring"])
    quantiles = _parse_floats(args.quantiles)
    report = T.evaluate(model, records, censoring, quantiles)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    for block in report["events"]:
        for h in block["horizons"]:
            print(
                f"event {block['event']} quantile {h['quantile']:.2f} "
                f"(t={h['time']:.4g}): ctd={h['ctd']:.4f} over {h['pairs']} pairs"
            )
    print(f"wrote {args.out}")
    return 0


def _cmd_predict(args):
    model, extra = load_checkpoint(args.checkpoint)
    cols = extra["columns"]
    columns = D.ColumnSpec(cols["numerical"], cols["categorical"], cols["duration"], cols["event"])
    rows = D.read_raw_csv(
        args.data, D.ColumnSpec(cols["numerical"], cols["categorical"], None, None)
    )
    records = D.transform_rows(model.schema, rows, columns, require_labels=False)
    times = np.asarray(_parse_floats(args.times))
    curves = T.predict(model, records, times)  # (n, K, T)
    n, K, nt = curves.shape
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        header = ["record", "time"] + [f"survival_event_{k + 1}" for k in range(K)]
        fh.write(",".join(header) + "\n")
        for i in range(n):
            for ti in range(nt):
                values = [repr(float(curves[i, k, ti])) for k in range(K)]
                fh.write(",".join([str(i), repr(float(times[ti]))] + values) + "\n")
    print(f"wrote {args.out} ({n} records x {nt} times x {K} events)")
    return 0


def _cmd_attention(args):
    model, extra = load_checkpoint(args.checkpoint)
    cols = extra["columns"]
    columns = D.ColumnSpec(cols["numerical"], cols["categorical"], cols["duration"], cols["event"])
    rows = D.read_raw_csv(
        args.data, D.ColumnSpec(cols["numerical"], cols["categorical"], None, None)
    )
    if not 0 <= args.row < len(rows):
        raise ValueError(f"--row {args.row} out of range for {len(rows)} records")
    records = D.transform_rows(model.schema, [rows[args.row]], columns, require_labels=False)
    maps = model.export_attention(records[0])
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"row": args.row, "maps": attention_payload(maps)}, fh, indent=2)
    print(f"wrote {args.out} ({len(maps)} maps)")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "attention": _cmd_attention,
}


def run(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
