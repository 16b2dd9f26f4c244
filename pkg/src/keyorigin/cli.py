"""Command-line orchestration of the full attribution workflows.

Every subcommand writes its artifacts into an output directory together
with run_config.json (the resolved configuration and SHA-256 hashes of all
inputs), so any result can be reproduced from the directory alone.
"""

import argparse
import json
import sys
from pathlib import Path

from . import biasgen, classifier, features, gcdpipe, keycore, profiles
from ._ioutil import sha256_file, write_json
from .errors import ConfigError, KeyOriginError

VARIANT_FLAGS = {
    "full": classifier.FULL_BAYES,
    "naive": classifier.NAIVE_BAYES,
    "cross": classifier.CROSS_NAIVE,
}
MODE_FLAGS = {"private": "private_key", "single-prime": "single_prime"}

DEFAULT_BATCH_SIZES = (1, 2, 3, 5, 10, 100)
DEFAULT_TOP_KS = (1, 2, 3)


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {path}") from None


def _read_json(path):
    return json.loads(_read_bytes(path).decode("utf-8"))


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from None


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_config(outdir: Path, args, inputs) -> None:
    resolved = {
        k: v for k, v in sorted(vars(args).items()) if k != "func" and v is not None
    }
    config = {
        "subcommand": args.subcommand,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in resolved.items()},
        "input_hashes": {str(p): sha256_file(p) for p in inputs},
    }
    write_json(outdir / "run_config.json", config)


def _load_vector_rows(path) -> list:
    rows = []
    for line in _read_bytes(path).decode("utf-8").splitlines():
        if line.strip():
            rows.append(features.vector_row_from_json(json.loads(line)))
    return rows


def _write_vector_rows(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key_id, source_id, vector in rows:
            fh.write(
                json.dumps(
                    features.vector_row_to_json(key_id, source_id, vector),
                    separators=(",", ":"),
                )
                + "\n"
            )


def _load_model(path) -> classifier.ClassificationModel:
    return classifier.ClassificationModel.from_json(_read_json(path))


# --- subcommands ------------------------------------------------------------


def cmd_generate(args) -> int:
    profile_list = biasgen.load_profiles(_read_bytes(args.profiles).decode("utf-8"))
    if not profile_list:
        raise ConfigError(f"no profiles in {args.profiles}")
    outdir = _outdir(args)
    if args.shared_batches:
        wanted = args.profile_id or profile_list[0].profile_id
        by_id = {p.profile_id: p for p in profile_list}
        if wanted not in by_id:
            raise ConfigError(f"profile {wanted!r} not in {args.profiles}")
        corpus, ground_truth = biasgen.generate_shared_prime_corpus(
            by_id[wanted],
            n_batches=args.shared_batches,
            batch_size=args.shared_batch_size,
            n_clean=args.clean,
            bits=args.bits,
            seed=args.seed,
        )
        write_json(
            outdir / "ground_truth.json",
            {str(b): format(p, "x") for b, p in ground_truth.items()},
        )
    else:
        corpus = biasgen.generate_corpus(
            profile_list, args.per_source, args.bits, args.seed, workers=args.workers
        )
    keycore.write_jsonl(outdir / "corpus.jsonl", corpus.records)
    _write_run_config(outdir, args, [args.profiles])
    return 0


def _extract_rows(records, mode: str) -> list:
    rows = []
    for record in records:
        if not record.is_private:
            raise ConfigError(f"record {record.key_id!r} has no private part")
        if mode == "private_key":
            rows.append((record.key_id, record.source_id, features.extract_private(record.key)))
        else:
            rows.append(
                (f"{record.key_id}#p", record.source_id, features.extract_single_prime(record.key.p))
            )
            rows.append(
                (f"{record.key_id}#q", record.source_id, features.extract_single_prime(record.key.q))
            )
    return rows


def cmd_extract(args) -> int:
    records = keycore.parse_keys(_read_bytes(args.input), keycore.JSONL, lenient=args.lenient)
    rows = _extract_rows(records, MODE_FLAGS[args.feature_mode])
    outdir = _outdir(args)
    _write_vector_rows(outdir / "vectors.jsonl", rows)
    _write_run_config(outdir, args, [args.input])
    return 0


def _profiles_from_rows(rows) -> list:
    by_source: dict = {}
    for _, source_id, vector in rows:
        if not source_id:
            raise ConfigError("vector rows need source labels for profiling")
        by_source.setdefault(source_id, []).append(vector)
    return [
        profiles.estimate_profile(source_id, vectors)
        for source_id, vectors in sorted(by_source.items())
    ]


def cmd_profile(args) -> int:
    source_profiles = _profiles_from_rows(_load_vector_rows(args.input))
    outdir = _outdir(args)
    write_json(outdir / "profiles.json", profiles.profiles_to_json(source_profiles))
    _write_run_config(outdir, args, [args.input])
    return 0


def cmd_cluster(args) -> int:
    source_profiles = profiles.profiles_from_json(_read_json(args.input))
    dendrogram, grouping = profiles.cluster_sources(source_profiles, args.threshold)
    outdir = _outdir(args)
    write_json(outdir / "dendrogram.json", dendrogram.to_json())
    (outdir / "dendrogram.newick").write_text(dendrogram.to_newick() + "\n", encoding="utf-8")
    write_json(outdir / "grouping.json", grouping.to_json())
    _write_run_config(outdir, args, [args.input])
    return 0


def _group_vectors(rows, grouping: profiles.Grouping) -> dict:
    source_to_group = grouping.source_to_group()
    grouped: dict = {}
    for _, source_id, vector in rows:
        try:
            gid = source_to_group[source_id]
        except KeyError:
            raise ConfigError(f"source {source_id!r} not covered by the grouping") from None
        grouped.setdefault(gid, []).append(vector)
    return grouped


def cmd_train(args) -> int:
    rows = _load_vector_rows(args.vectors)
    grouping = profiles.Grouping.from_json(_read_json(args.grouping))
    grouped = _group_vectors(rows, grouping)
    model = classifier.train(
        grouped,
        variant=VARIANT_FLAGS[args.variant],
        alpha=args.alpha,
        metadata={"corpus_hash": sha256_file(args.vectors), "date": args.date},
    )
    outdir = _outdir(args)
    write_json(outdir / "model.json", model.to_json())
    _write_run_config(outdir, args, [args.vectors, args.grouping])
    return 0


def cmd_classify(args) -> int:
    model = _load_model(args.model)
    rows = _load_vector_rows(args.input)
    outdir = _outdir(args)
    with open(outdir / "classifications.jsonl", "w", encoding="utf-8") as fh:
        if args.batch:
            ranking = classifier.classify_batch(model, [v for _, _, v in rows])
            fh.write(
                json.dumps(
                    {"batch_size": len(rows), "ranking": [[g, p] for g, p in ranking]},
                    separators=(",", ":"),
                )
                + "\n"
            )
        else:
            for key_id, _, vector in rows:
                ranking = classifier.classify_key(model, vector)[: args.top]
                fh.write(
                    json.dumps(
                        {"id": key_id, "ranking": [[g, p] for g, p in ranking]},
                        separators=(",", ":"),
                    )
                    + "\n"
                )
    _write_run_config(outdir, args, [args.model, args.input])
    return 0


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    rows = _load_vector_rows(args.input)
    grouping = profiles.Grouping.from_json(_read_json(args.grouping))
    grouped = _group_vectors(rows, grouping)
    report = classifier.evaluate(
        model, grouped, batch_sizes=args.batch_size, top_ks=args.top_k
    )
    outdir = _outdir(args)
    write_json(outdir / "evaluation.json", report.to_json())
    (outdir / "evaluation.txt").write_text(report.to_text(), encoding="utf-8")
    _write_run_config(outdir, args, [args.model, args.input, args.grouping])
    return 0


def _read_moduli(path, input_format: str) -> list:
    data = _read_bytes(path)
    if input_format == "hex":
        return [int(line, 16) for line in data.decode("utf-8").split() if line.strip()]
    records = keycore.parse_keys(data, keycore.JSONL)
    return [record.key.n for record in records]


def _factor(moduli, args) -> list:
    if args.partition_size:
        return gcdpipe.partitioned_batch_gcd(moduli, args.partition_size, args.overlap)
    if len(moduli) > gcdpipe.AUTO_PARTITION_THRESHOLD:
        return gcdpipe.partitioned_batch_gcd(
            moduli, gcdpipe.AUTO_PARTITION_THRESHOLD, args.overlap
        )
    unique = gcdpipe.dedup_moduli(moduli)
    return gcdpipe.resolve_factors(unique, gcdpipe.batch_gcd(unique))


def _write_batch_outputs(outdir: Path, factored, args, model_path) -> None:
    with open(outdir / "factored.jsonl", "w", encoding="utf-8") as fh:
        for fk in factored:
            fh.write(json.dumps(fk.to_json(), separators=(",", ":")) + "\n")
    batches = gcdpipe.form_batches(factored, min_size=args.min_batch)
    openssl_side, other_side = gcdpipe.split_openssl(batches)
    write_json(
        outdir / "batches.json",
        {
            "openssl": [_batch_summary(b) for b in openssl_side],
            "other": [_batch_summary(b) for b in other_side],
        },
    )
    if model_path:
        model = _load_model(model_path)
        report = gcdpipe.attribute_batches(model, other_side)
        write_json(outdir / "attribution.json", report.to_json())
        (outdir / "attribution.txt").write_text(report.to_text(), encoding="utf-8")


def _batch_summary(batch: gcdpipe.PrimeBatch) -> dict:
    return {
        "shared_prime": format(batch.shared_prime, "x"),
        "members": len(batch.members),
        "unique_primes": len(batch.unique_primes),
        "openssl": batch.openssl,
    }


def cmd_gcd(args) -> int:
    moduli = _read_moduli(args.input, args.input_format)
    factored = _factor(moduli, args)
    outdir = _outdir(args)
    _write_batch_outputs(outdir, factored, args, args.model)
    inputs = [args.input] + ([args.model] if args.model else [])
    _write_run_config(outdir, args, inputs)
    return 0


def cmd_attribute(args) -> int:
    factored = [
        gcdpipe.FactoredKey.from_json(json.loads(line))
        for line in _read_bytes(args.factored).decode("utf-8").splitlines()
        if line.strip()
    ]
    outdir = _outdir(args)
    _write_batch_outputs(outdir, factored, args, args.model)
    _write_run_config(outdir, args, [args.factored, args.model])
    return 0


def run_pipeline(
    corpus_path,
    output_dir,
    holdout: int = 1000,
    threshold: float = profiles.DEFAULT_THRESHOLD,
    variant: str = classifier.FULL_BAYES,
    alpha: float = classifier.DEFAULT_ALPHA,
    batch_sizes=DEFAULT_BATCH_SIZES,
    top_ks=DEFAULT_TOP_KS,
    feature_mode: str = "private_key",
    date=None,
) -> dict:
    """extract -> profile -> cluster -> train -> evaluate, in one pass.

    A fixed number of keys per source is held out for testing before any
    clustering or training sees them. Returns the artifact paths.
    """
    records = keycore.read_jsonl(corpus_path)
    by_source: dict = {}
    for record in records:
        if not record.source_id:
            raise ConfigError(f"record {record.key_id!r} has no source label")
        by_source.setdefault(record.source_id, []).append(record)
    if not by_source:
        raise ConfigError("corpus is empty")
    smallest = min(len(v) for v in by_source.values())
    if holdout >= smallest:
        raise ConfigError(
            f"holdout {holdout} >= smallest source size {smallest}; nothing to train on"
        )

    train_rows: list = []
    test_rows: list = []
    for source_id in sorted(by_source):
        records = by_source[source_id]
        split = len(records) - holdout
        train_rows.extend(_extract_rows(records[:split], feature_mode))
        test_rows.extend(_extract_rows(records[split:], feature_mode))

    source_profiles = _profiles_from_rows(train_rows)
    dendrogram, grouping = profiles.cluster_sources(source_profiles, threshold)
    model = classifier.train(
        _group_vectors(train_rows, grouping),
        variant=variant,
        alpha=alpha,
        metadata={"corpus_hash": sha256_file(corpus_path), "date": date},
    )
    report = classifier.evaluate(
        model, _group_vectors(test_rows, grouping), batch_sizes=batch_sizes, top_ks=top_ks
    )

    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    artifacts = {
        "dendrogram.json": dendrogram.to_json(),
        "grouping.json": grouping.to_json(),
        "model.json": model.to_json(),
        "evaluation.json": report.to_json(),
    }
    for name, obj in artifacts.items():
        write_json(outdir / name, obj)
    (outdir / "dendrogram.newick").write_text(dendrogram.to_newick() + "\n", encoding="utf-8")
    (outdir / "evaluation.txt").write_text(report.to_text(), encoding="utf-8")
    return {name: str(outdir / name) for name in artifacts}


def cmd_pipeline(args) -> int:
    run_pipeline(
        args.input,
        args.output,
        holdout=args.holdout,
        threshold=args.threshold,
        variant=VARIANT_FLAGS[args.variant],
        alpha=args.alpha,
        batch_sizes=args.batch_size,
        top_ks=args.top_k,
        feature_mode=MODE_FLAGS[args.feature_mode],
        date=args.date,
    )
    _write_run_config(_outdir(args), args, [args.input])
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keyorigin",
        description="Attribute RSA keys to their originating cryptographic library.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--output", required=True, help="output directory")
        return p

    p = add("generate", cmd_generate, "generate a synthetic biased corpus")
    p.add_argument("--profiles", required=True, help="YAML profile config")
    p.add_argument("--per-source", type=int, default=1000)
    p.add_argument("--bits", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--shared-batches", type=int, default=0,
                   help="emit a shared-prime scan corpus with this many batches")
    p.add_argument("--shared-batch-size", type=int, default=2)
    p.add_argument("--clean", type=int, default=0, help="clean moduli in shared mode")
    p.add_argument("--profile-id", help="profile to use in shared mode")

    p = add("extract", cmd_extract, "extract feature vectors from keys")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--feature-mode", choices=sorted(MODE_FLAGS), default="private")
    p.add_argument("--lenient", action="store_true", help="skip malformed records")

    p = add("profile", cmd_profile, "estimate per-source feature distributions")
    p.add_argument("--input", required=True, help="vectors JSONL")

    p = add("cluster", cmd_cluster, "cluster sources into groups")
    p.add_argument("--input", required=True, help="profiles JSON")
    p.add_argument("--threshold", type=float, default=profiles.DEFAULT_THRESHOLD)

    p = add("train", cmd_train, "train a Bayes-family model")
    p.add_argument("--vectors", required=True)
    p.add_argument("--grouping", required=True)
    p.add_argument("--variant", choices=sorted(VARIANT_FLAGS), default="full")
    p.add_argument("--alpha", type=float, default=classifier.DEFAULT_ALPHA)
    p.add_argument("--date", help="optional training date recorded in metadata")

    p = add("classify", cmd_classify, "classify vectors with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="vectors JSONL")
    p.add_argument("--batch", action="store_true", help="treat all input as one batch")
    p.add_argument("--top", type=int, default=3)

    p = add("evaluate", cmd_evaluate, "score a model on labeled vectors")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="vectors JSONL")
    p.add_argument("--grouping", required=True)
    p.add_argument("--batch-size", type=_int_list, default=DEFAULT_BATCH_SIZES)
    p.add_argument("--top-k", type=_int_list, default=DEFAULT_TOP_KS)

    p = add("gcd", cmd_gcd, "batch-GCD factorization and batch attribution")
    p.add_argument("--input", required=True, help="moduli (JSONL keys or hex lines)")
    p.add_argument("--input-format", choices=("jsonl", "hex"), default="jsonl")
    p.add_argument("--model", help="single-prime model JSON for attribution")
    p.add_argument("--min-batch", type=int, default=gcdpipe.DEFAULT_MIN_BATCH)
    p.add_argument("--partition-size", type=int)
    p.add_argument("--overlap", type=float, default=0.5)

    p = add("attribute", cmd_attribute, "attribute already-factored keys")
    p.add_argument("--factored", required=True, help="factored JSONL from gcd")
    p.add_argument("--model", required=True)
    p.add_argument("--min-batch", type=int, default=gcdpipe.DEFAULT_MIN_BATCH)

    p = add("pipeline", cmd_pipeline, "extract, profile, cluster, train, evaluate")
    p.add_argument("--input", required=True, help="labeled corpus JSONL")
    p.add_argument("--holdout", type=int, default=1000, help="test keys per source")
    p.add_argument("--threshold", type=float, default=profiles.DEFAULT_THRESHOLD)
    p.add_argument("--variant", choices=sorted(VARIANT_FLAGS), default="full")
    p.add_argument("--alpha", type=float, default=classifier.DEFAULT_ALPHA)
    p.add_argument("--batch-size", type=_int_list, default=DEFAULT_BATCH_SIZES)
    p.add_argument("--top-k", type=_int_list, default=DEFAULT_TOP_KS)
    p.add_argument("--feature-mode", choices=sorted(MODE_FLAGS), default="private")
    p.add_argument("--date", help="optional training date recorded in metadata")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    except (KeyOriginError, OSError, ValueError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
