"""Command line entry point.

Exit codes: 0 success, 1 internal/numeric failure, 2 input validation
failure. The LGBG_SEED environment variable overrides the default seed;
explicit flags win over config-file values which win over the environment.
Commands only write under their --out target.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import autograd as ag
from .config import TrainConfig, config_from_dict, load_config, save_config
from .dataset import load_dataset, write_dataset
from .embeddings import EmbeddingTable
from .errors import DimensionError, LgbgError, NumericError, ValidationError
from .graphs import build_local_graph, dump_graph
from .metrics import average_reports
from .model import Model
from .streams import Vocabulary, day_span, parse_event_log, slice_day
from .synth import ScenarioSpec, generate
from .training import evaluate, run_protocol, split_protocol, train

GRADCHECK_TOLERANCE = 1e-4

_CONFIG_FLAGS = [
    ("--seed", int, "seed"),
    ("--lambda", float, "lam"),
    ("--layers", int, "layers"),
    ("--d", int, "d"),
    ("--de", int, "de"),
    ("--dp", int, "dp"),
    ("--span", int, "span"),
    ("--lr", float, "lr"),
    ("--epochs", int, "epochs"),
    ("--batch-size", int, "batch_size"),
    ("--patience", int, "patience"),
    ("--splits", int, "splits"),
    ("--knn-k", int, "knn_k"),
    ("--day-origin", int, "day_origin"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for flag, typ, dest in _CONFIG_FLAGS:
        parser.add_argument(flag, type=typ, dest=dest, default=None)
    parser.add_argument("--linear-layers", action="store_true", default=None,
                        dest="linear_layers")
    parser.add_argument("--no-homo", action="store_false", default=None,
                        dest="use_homogeneous")
    parser.add_argument("--no-hetero", action="store_false", default=None,
                        dest="use_heterogeneous")
    parser.add_argument("--config", default=None, help="JSON config file")


def _effective_config(args) -> TrainConfig:
    base = TrainConfig()
    env_seed = os.environ.get("LGBG_SEED")
    if env_seed is not None:
        base = base.replace(seed=int(env_seed))
    if getattr(args, "config", None):
        base = load_config(args.config, base)
    overrides = {}
    names = [dest for _, _, dest in _CONFIG_FLAGS]
    names += ["linear_layers", "use_homogeneous", "use_heterogeneous"]
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return config_from_dict(overrides, base)


def _table_for(args, vocab: Vocabulary, config: TrainConfig) -> EmbeddingTable:
    if getattr(args, "embeddings", None):
        return EmbeddingTable.from_file(args.embeddings, vocab, config.d, config.seed)
    return EmbeddingTable.fallback(vocab, config.d, config.seed)


def cmd_build_graph(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    config = _effective_config(args)
    parsed = parse_event_log(args.log, vocab)
    table = _table_for(args, vocab, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    days = day_span(parsed.streams, config.day_origin)
    if days == 0:
        print("warning: event log holds no events; nothing to build", file=sys.stderr)
    for d in range(days):
        window = slice_day(parsed.streams, d, config.day_origin)
        dump_graph(build_local_graph(window, vocab, table), out / f"day_{d:05d}.json")
    spans = [list(range(d - config.span + 1, d + 1))
             for d in range(config.span - 1, days)]
    index = {"format": 1, "days": days, "span": config.span, "samples": spans,
             "remapped_locations": parsed.remapped_locations,
             "deduplicated": parsed.deduplicated}
    (out / "graphs.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    return 0


def cmd_train(args) -> int:
    config = _effective_config(args)
    data = load_dataset(args.data)
    config = config.replace(day_origin=data.day_origin)
    table = _table_for(args, data.vocab, config)
    samples = data.samples(config.span, table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(samples, config, table, data.vocab.digest(), dump_dir=out)
    result.model.save(out / "checkpoint.json")
    (out / "history.csv").write_text(result.history_csv(), encoding="utf-8")
    save_config(config, out / "config.json")
    report = evaluate(result.model, samples, task="train-set")
    (out / "train_report.json").write_text(
        json.dumps(report.row() | {"confusion": report.confusion}, indent=2,
                   sort_keys=True) + "\n", encoding="utf-8")
    print(f"trained on {len(samples)} samples; train-set accuracy "
          f"{report.accuracy:.4f}; checkpoint at {out / 'checkpoint.json'}")
    return 0


def cmd_eval(args) -> int:
    config = _effective_config(args)
    data = load_dataset(args.data)
    config = config.replace(day_origin=data.day_origin)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.checkpoint:
        model = Model.load(args.checkpoint, vocab=data.vocab)
        config = config.replace(**{k: getattr(model.config, k)
                                   for k in ("d", "de", "dp", "layers", "span")})
        samples = data.samples(config.span, model.table)
        tasks = split_protocol(len(samples), config.splits, config.seed)
        reports = [evaluate(model, [samples[j] for j in test], task=f"task-{i + 1}")
                   for i, (_, test) in enumerate(tasks)]
        result_reports = reports + [average_reports(reports)]
        csv = "task,n,accuracy,precision,recall,f1\n" + "\n".join(
            "{task},{n},{accuracy!r},{precision!r},{recall!r},{f1!r}".format(**r.row())
            for r in result_reports) + "\n"
        rows = [r.row() | {"confusion": r.confusion} for r in result_reports]
    else:
        table = _table_for(args, data.vocab, config)
        samples = data.samples(config.span, table)
        protocol = run_protocol(samples, config, table, data.vocab.digest())
        csv = protocol.metrics_csv()
        rows = [r.row() | {"confusion": r.confusion}
                for r in protocol.reports + [protocol.average]]
    (out / "metrics.csv").write_text(csv, encoding="utf-8")
    (out / "metrics.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    save_config(config, out / "config.json")
    print(csv, end="")
    return 0


def cmd_synth(args) -> int:
    spec = ScenarioSpec.load(args.spec)
    dataset = generate(spec)
    write_dataset(dataset, args.out)
    n_days = sum(len(s.labels) for s in dataset.subjects)
    print(f"wrote {len(dataset.subjects)} subjects, {n_days} labeled days "
          f"to {args.out}")
    return 0


def cmd_inspect(args) -> int:
    data = load_dataset(args.data)
    model = Model.load(args.checkpoint, vocab=data.vocab)
    try:
        subject, day_text = args.sample.rsplit(":", 1)
        anchor = int(day_text)
    except ValueError:
        raise ValidationError(f"--sample must look like subject:day, got {args.sample!r}")
    samples = data.samples(model.config.span, model.table)
    matches = [s for s in samples if s.subject == subject and s.anchor_day == anchor]
    if not matches:
        raise ValidationError(f"no sample for subject {subject!r} anchor day {anchor}")
    out = model.forward(matches[0])
    doc = {"subject": subject, "anchor_day": anchor, "label": matches[0].label,
           "predicted": out.predicted(),
           "probabilities": [float(p) for p in out.probs.data]}
    doc.update(out.attention_export())
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    print(f"wrote attention export to {args.out}")
    return 0


def _gradcheck_setup(seed: int):
    """Small but full-coverage model plus a 2-sample batch for checking."""
    from .graphs import build_samples
    from .training import total_loss

    config = TrainConfig(d=8, de=6, dp=10, layers=2, span=3, seed=seed)
    dataset = generate(ScenarioSpec(mechanism="combined", subjects=2, days=4,
                                    seed=seed))
    table = EmbeddingTable.fallback(dataset.vocab, config.d, config.seed)
    samples = []
    for rec in dataset.subjects:
        samples += build_samples(rec.streams, rec.labels, config.span,
                                 dataset.vocab, table, subject=rec.subject)
    samples = samples[:2]
    model = Model(config, table, dataset.vocab.digest())

    def loss_fn():
        outputs = [model.forward(s) for s in samples]
        return total_loss(outputs, [s.label for s in samples], config.lam)

    return model, loss_fn


def cmd_gradcheck(args) -> int:
    model, loss_fn = _gradcheck_setup(args.seed)
    named = model.named_parameters()
    corrupt_target = next(iter(named.values())) if args.corrupt else None

    def f():
        loss = loss_fn()
        tape = ag.active_tape()
        if corrupt_target is not None and tape is not None:
            tape.record(lambda: np.add(corrupt_target.grad, 0.05,
                                       out=corrupt_target.grad))
        return loss

    errors = ag.finite_diff_errors(f, list(named.values()), eps=1e-5,
                                   coords_per_param=4, seed=args.seed)
    worst = 0.0
    for name, err in zip(named, errors):
        print(f"{name:40s} {err:.3e}")
        worst = max(worst, err)
    ok = worst < GRADCHECK_TOLERANCE
    print(f"max relative error {worst:.3e} "
          f"({'PASS' if ok else 'FAIL'} at {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgbg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="dump per-day context graphs")
    p.add_argument("--log", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", default=None)
    _add_config_flags(p)
    p.set_defaults(run=cmd_build_graph)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", default=None)
    _add_config_flags(p)
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("eval", help="k-split protocol (or frozen checkpoint eval)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--embeddings", default=None)
    _add_config_flags(p)
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_synth)

    p = sub.add_parser("inspect", help="export attention weights for one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", required=True, help="subject:anchor_day")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_inspect)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int,
                   default=int(os.environ.get("LGBG_SEED", "0")))
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(run=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (NumericError, DimensionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (LgbgError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
