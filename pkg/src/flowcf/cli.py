"""Command-line interface.

Subcommands cover the full workflow: ``datasets`` writes a synthetic
CSV, ``ingest`` infers and saves a schema, ``fit-classifier`` persists a
classifier-only bundle, ``train`` produces a full bundle from an
experiment config, ``generate`` and ``evaluate`` run a trained bundle
over input rows, and ``serve`` starts the HTTP service.

Precedence note: values in a ``--config`` file override command-line
flags (flags act as defaults for keys the file omits). Every command
takes ``--seed`` where randomness is involved, and identical inputs plus
an identical seed reproduce identical outputs.

Exit codes: 0 success, 2 missing files or bad usage, 1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .bundle import ModelBundle
from .classifiers import fit_classifier, label_dataset, LabeledDataset
from .config import ExperimentConfig, load_config_file
from .datasets import DATASET_NAMES, make_dataset
from .encoding import encode, encoded_dim
from .errors import FlowcfError, MissingInputError
from .generator import generate_counterfactuals
from .metrics import InstanceEval, compute_report, eps_sparsity_per_cf, sparsity_cat_per_cf, sparsity_num_per_cf
from .schema import TableSchema, ingest_csv, ingest_labeled_csv, read_instances, write_csv
from .training import TrainConfig, train, train_density


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowcf",
        description="Counterfactual explanations from a conditional masked flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datasets", help="write a built-in synthetic dataset as CSV")
    p.add_argument("--name", choices=DATASET_NAMES, required=True)
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_datasets)

    p = sub.add_parser("ingest", help="infer a schema from a CSV and summarize it")
    p.add_argument("--data", required=True, help="input CSV path")
    p.add_argument("--label-column", default=None)
    p.add_argument("--schema", default=None, help="declared schema JSON to validate against")
    p.add_argument("--schema-out", default=None, help="where to write the schema JSON")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit-classifier", help="fit a classifier and save a bundle")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="label")
    p.add_argument("--kind", default="mlp-2-layer", choices=["logistic-linear", "mlp-2-layer"])
    p.add_argument("--hidden", default="64,64", help="MLP hidden widths, comma-separated")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="bundle output directory")
    p.set_defaults(func=cmd_fit_classifier)

    p = sub.add_parser("train", help="train a counterfactual flow bundle")
    p.add_argument("--config", default=None, help="JSON/TOML config; file values override flags")
    p.add_argument("--data", default=None)
    p.add_argument("--label-column", default="label")
    p.add_argument("--out", default=None, help="bundle output directory")
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--batch-instances", type=int, default=128)
    p.add_argument("--k-neighbors", type=int, default=16)
    p.add_argument("--p-set", default="0.01,0.25,0.5,1.0,2.0", help="comma-separated exponents")
    p.add_argument(
        "--mask",
        action="append",
        default=[],
        help="feature-name list to train as an actionability mask, e.g. "
        "'capital-gain,capital-loss'; repeatable; the empty mask is always included",
    )
    p.add_argument("--classifier", default="mlp-2-layer",
                   choices=["logistic-linear", "mlp-2-layer", "none"])
    p.add_argument("--no-density", action="store_true", help="skip the marginal density model")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate counterfactuals for input rows")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True, help="CSV of rows to explain")
    p.add_argument("--n", type=int, default=10, help="counterfactuals per row")
    p.add_argument("--p", type=float, default=2.0, help="sparsity exponent")
    p.add_argument("--mask", default="", help="comma-separated feature names to hold fixed")
    p.add_argument("--target-class", default="flip", help='class index or "flip"')
    p.add_argument("--rank-by-score", action="store_true")
    p.add_argument("--top", type=int, default=None, help="keep only the best-scoring K per row")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="metric report over a test CSV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--train-data", default=None,
                   help="CSV used as the LOF reference sample (default: the input rows)")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--mask", default="")
    p.add_argument("--target-class", default="flip")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", dest="json_out", default=None, help="write the report as JSON")
    p.add_argument("--per-instance-csv", default=None, help="write per-instance rows as CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="serve a bundle over HTTP")
    p.add_argument("--bundle", default=os.environ.get("FLOWCF_BUNDLE"),
                   help="bundle directory (or env FLOWCF_BUNDLE)")
    p.add_argument("--host", default=os.environ.get("FLOWCF_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(os.environ.get("FLOWCF_PORT", "8000")))
    p.add_argument("--cors-origin", action="append", default=[],
                   help="allowed CORS origin; repeatable; use '*' for any")
    p.add_argument("--ui-dir", default=None, help="static directory to mount at /ui")
    p.set_defaults(func=cmd_serve)

    return parser


# -- commands ----------------------------------------------------------------


def cmd_datasets(args) -> int:
    schema, instances, labels = make_dataset(args.name, n=args.rows, seed=args.seed)
    write_csv(args.out, schema, instances, labels=labels)
    print(f"wrote {len(instances)} rows to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    hint = TableSchema.load(args.schema) if args.schema else None
    if args.label_column:
        schema, instances, labels = ingest_labeled_csv(
            args.data, args.label_column, schema_hint=hint
        )
        counts = np.bincount(labels, minlength=schema.class_count)
    else:
        schema, instances = ingest_csv(args.data, schema_hint=hint)
        counts = None

    print(f"rows      {len(instances)}")
    print(f"features  {len(schema.features)} (encoded dim {encoded_dim(schema)})")
    for spec in schema.features:
        if spec.is_continuous:
            s = schema.stats(spec.name)
            print(
                f"  {spec.name:<20} continuous   mean {s.mean:.4g}  stddev {s.stddev:.4g}"
                f"  range [{s.minimum:.4g}, {s.maximum:.4g}]"
            )
        else:
            print(f"  {spec.name:<20} categorical  {len(spec.categories)} categories")
    if counts is not None:
        names = schema.class_labels or [str(i) for i in range(schema.class_count)]
        dist = ", ".join(f"{n}={c}" for n, c in zip(names, counts))
        print(f"classes   {schema.class_count} ({dist})")
    if args.schema_out:
        schema.save(args.schema_out)
        print(f"schema written to {args.schema_out}")
    return 0


def _parse_hidden(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def cmd_fit_classifier(args) -> int:
    schema, instances, labels = ingest_labeled_csv(args.data, args.label_column)
    kwargs = dict(epochs=args.epochs, learning_rate=args.learning_rate, seed=args.seed)
    if args.kind == "mlp-2-layer":
        kwargs["hidden"] = _parse_hidden(args.hidden)
    clf = fit_classifier(schema, instances, labels, kind=args.kind, **kwargs)
    bundle = ModelBundle(schema=schema, classifier=clf)
    bundle.save(args.out)
    print(f"training accuracy  {clf.training_accuracy_:.4f}")
    print(f"converged          {clf.converged_}")
    print(f"bundle written to  {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = ExperimentConfig(
        data=args.data,
        label_column=args.label_column,
        out=args.out,
        steps=args.steps,
        batch_instances=args.batch_instances,
        k_neighbors=args.k_neighbors,
        p_set=tuple(float(v) for v in args.p_set.split(",") if v.strip()),
        masks=_normalize_cli_masks(args.mask),
        seed=args.seed,
    )
    cfg.classifier["kind"] = args.classifier
    if args.no_density:
        cfg.density["train"] = False
    if args.config:
        cfg.apply(load_config_file(args.config))  # file overrides flags
    cfg.validate()

    schema, instances, labels = ingest_labeled_csv(cfg.data, cfg.label_column)
    print(f"ingested {len(instances)} rows, {len(schema.features)} features")

    kind = cfg.classifier["kind"]
    clf = None
    if cfg.classifier.get("bundle"):
        donor = ModelBundle.load(cfg.classifier["bundle"])
        clf = donor.classifier
        if clf is None:
            raise FlowcfError(
                f"bundle {cfg.classifier['bundle']} has no classifier to reuse"
            )
        if clf.dim_ != encoded_dim(schema):
            raise FlowcfError(
                f"reused classifier expects {clf.dim_} encoded dims, data has "
                f"{encoded_dim(schema)}"
            )
        print(f"reusing classifier from {cfg.classifier['bundle']}")
    elif kind != "none":
        kwargs = dict(
            epochs=int(cfg.classifier.get("epochs", 500)),
            learning_rate=float(cfg.classifier.get("learning_rate", 1e-2)),
            seed=cfg.seed,
        )
        if kind == "mlp-2-layer":
            kwargs["hidden"] = tuple(cfg.classifier.get("hidden", (64, 64)))
        clf = fit_classifier(schema, instances, labels, kind=kind, **kwargs)
        print(f"classifier training accuracy {clf.training_accuracy_:.4f}")

    train_config = TrainConfig(
        steps=cfg.steps,
        batch_instances=cfg.batch_instances,
        k_neighbors=cfg.k_neighbors,
        p_set=tuple(cfg.p_set),
        masks=tuple(cfg.masks),
        class_prior=cfg.class_prior,
        seed=cfg.seed,
        learning_rate=cfg.learning_rate,
        grad_clip=cfg.grad_clip,
        alpha=cfg.alpha,
        flow_layers=cfg.flow_layers,
        flow_hidden=cfg.flow_hidden,
        dequant=cfg.dequant,
        holdout_fraction=cfg.holdout_fraction,
    )
    if clf is not None:
        # The classifier is the validity oracle; training targets must
        # carry its labels, not the file's.
        data = label_dataset(clf, instances, schema)
    else:
        data = LabeledDataset(schema=schema, instances=instances, labels=np.asarray(labels))

    flow, report = train(data, train_config)
    print(report.summary())

    density_flow = None
    if cfg.density.get("train", True):
        density_flow = train_density(
            data,
            steps=int(cfg.density.get("steps", 1000)),
            hidden=int(cfg.density.get("hidden", 64)),
            n_layers=int(cfg.density.get("layers", 5)),
            seed=cfg.seed,
        )
        print(f"density model trained ({cfg.density.get('steps', 1000)} steps)")

    from .generator import _config_echo

    bundle = ModelBundle(
        schema=schema,
        flow=flow,
        classifier=clf,
        density_flow=density_flow,
        train_config=_config_echo(train_config),
        metric_settings=dict(cfg.metrics),
    )
    bundle.save(cfg.out)
    print(f"bundle written to {cfg.out} (id {bundle.bundle_id})")
    return 0


def _normalize_cli_masks(mask_args: list[str]) -> tuple:
    masks = [()]
    for text in mask_args:
        names = tuple(v.strip() for v in text.split(",") if v.strip())
        if names and names not in masks:
            masks.append(names)
    return tuple(masks)


def _warn_if_untrained_p(bundle: ModelBundle, p: float) -> None:
    trained = bundle.p_set
    if trained and not any(abs(p - t) < 1e-12 for t in trained):
        warnings.warn(
            f"p={p} is outside the trained set {list(trained)}; the "
            f"conditioner extrapolates (best effort)",
            UserWarning,
            stacklevel=2,
        )


def _parse_target(text: str):
    return text if text == "flip" else int(text)


GENERATE_COLUMNS_FIXED = [
    "row",
    "cf",
    "valid",
    "class_prob",
    "score",
    "proximity_num",
    "sparsity_cat",
    "sparsity_num",
    "eps_sparsity_num",
    "changed_features",
]


def cmd_generate(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    schema = bundle.schema
    instances = read_instances(args.input, schema)
    mask = tuple(v.strip() for v in args.mask.split(",") if v.strip())
    _warn_if_untrained_p(bundle, args.p)
    target = _parse_target(args.target_class)

    # Column order is stable and documented: identifiers, feature values,
    # then per-CF annotations.
    header = ["row", "cf", *schema.feature_names, *GENERATE_COLUMNS_FIXED[2:]]
    rows_out = []
    for i, inst in enumerate(instances):
        batch = generate_counterfactuals(
            bundle,
            inst,
            n=args.n,
            p=args.p,
            mask_features=mask,
            target_class=target,
            seed=args.seed + i,
            rank_by_score=args.rank_by_score,
        )
        x_enc = encode(inst, schema)
        s_cat = sparsity_cat_per_cf(x_enc, batch.encoded, schema)
        s_num = sparsity_num_per_cf(x_enc, batch.encoded, schema)
        s_eps = eps_sparsity_per_cf(x_enc, batch.encoded, schema, bundle.metric("eps"))
        order = range(len(batch))
        if args.top is not None:
            if batch.score is None:
                raise FlowcfError(
                    "--top ranks by score and needs a bundle with a classifier "
                    "and a density model"
                )
            order = np.argsort(-batch.score, kind="stable")[: args.top]
        for j in order:
            cf = batch.counterfactuals[j]
            rows_out.append(
                [
                    i,
                    int(j),
                    *[_fmt(v) for v in cf.values],
                    "" if batch.valid is None else int(batch.valid[j]),
                    "" if batch.class_prob is None else f"{batch.class_prob[j]:.6f}",
                    "" if batch.score is None else f"{batch.score[j]:.6f}",
                    f"{batch.proximity[j]:.6f}",
                    f"{s_cat[j]:.6f}",
                    f"{s_num[j]:.6f}",
                    f"{s_eps[j]:.6f}",
                    ";".join(batch.changed[j]),
                ]
            )

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        writer.writerows(rows_out)
    finally:
        if args.out:
            out.close()
            print(f"wrote {len(rows_out)} counterfactuals to {args.out}")
    return 0


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def cmd_evaluate(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    if bundle.classifier is None:
        raise FlowcfError("evaluate needs a bundle with a classifier (validity oracle)")
    schema = bundle.schema
    instances = read_instances(args.input, schema)
    if not instances:
        raise FlowcfError("evaluate needs at least one input row")
    mask = tuple(v.strip() for v in args.mask.split(",") if v.strip())
    _warn_if_untrained_p(bundle, args.p)
    target = _parse_target(args.target_class)

    evals = []
    t0 = time.perf_counter()
    for i, inst in enumerate(instances):
        batch = generate_counterfactuals(
            bundle,
            inst,
            n=args.n,
            p=args.p,
            mask_features=mask,
            target_class=target,
            seed=args.seed + i,
        )
        evals.append(
            InstanceEval(
                x0_enc=encode(inst, schema),
                cf_enc=batch.encoded,
                valid=batch.valid,
                target_prob=batch.class_prob,
            )
        )
    elapsed = time.perf_counter() - t0

    from .encoding import encode_batch

    reference = instances
    if args.train_data:
        reference = read_instances(args.train_data, schema)
    training_encoded = encode_batch(reference, schema)
    report = compute_report(
        evals,
        schema,
        training_encoded,
        eps=float(bundle.metric("eps")),
        k_lof=min(int(bundle.metric("k_lof")), max(1, len(reference) - 1)),
    )
    print(report.render_table())
    per_instance = elapsed / len(instances)
    print(f"{'Generation time':<18}  {per_instance * 1000:8.1f} ms/instance")

    if args.json_out:
        Path(args.json_out).write_text(report.to_json())
        print(f"report written to {args.json_out}")
    if args.per_instance_csv:
        rows = report.per_instance
        with open(args.per_instance_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        print(f"per-instance rows written to {args.per_instance_csv}")
    return 0


def cmd_serve(args) -> int:
    if not args.bundle:
        raise MissingInputError(
            "no bundle given: pass --bundle or set FLOWCF_BUNDLE"
        )
    import uvicorn

    from .service import load_app

    app = load_app(args.bundle, cors_origins=tuple(args.cors_origin), ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FlowcfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
