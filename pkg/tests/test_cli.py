import json
import subprocess
import sys

import pytest

from keyorigin import biasgen, cli, keycore
from keyorigin._ioutil import sha256_file

PROFILES_YAML = """\
---
profile_id: fixed-high
msb_policy: {kind: fixed_pattern, value: 29}
avoid_threshold: 5
---
profile_id: blum-low
msb_policy: {kind: fixed_pattern, value: 24}
blum: true
ordering: p_greater
"""


@pytest.fixture
def profiles_file(tmp_path):
    path = tmp_path / "profiles.yaml"
    path.write_text(PROFILES_YAML)
    return path


@pytest.fixture
def corpus_dir(tmp_path, profiles_file):
    out = tmp_path / "corpus"
    rc = cli.main(
        [
            "generate",
            "--profiles", str(profiles_file),
            "--per-source", "60",
            "--bits", "64",
            "--seed", "7",
            "--output", str(out),
        ]
    )
    assert rc == 0
    return out


def test_generate_outputs_and_determinism(tmp_path, profiles_file, corpus_dir):
    corpus = corpus_dir / "corpus.jsonl"
    assert corpus.exists()
    config = json.loads((corpus_dir / "run_config.json").read_text())
    assert config["subcommand"] == "generate"
    assert str(profiles_file) in config["input_hashes"]

    again = tmp_path / "again"
    rc = cli.main(
        [
            "generate",
            "--profiles", str(profiles_file),
            "--per-source", "60",
            "--bits", "64",
            "--seed", "7",
            "--output", str(again),
        ]
    )
    assert rc == 0
    assert sha256_file(corpus) == sha256_file(again / "corpus.jsonl")


def test_generate_missing_profiles_exit_2(tmp_path):
    rc = cli.main(
        [
            "generate",
            "--profiles", str(tmp_path / "nope.yaml"),
            "--output", str(tmp_path / "out"),
        ]
    )
    assert rc == 2


def _run_stage(args):
    rc = cli.main(args)
    assert rc == 0


def test_stagewise_workflow(tmp_path, corpus_dir):
    corpus = corpus_dir / "corpus.jsonl"
    vecdir = tmp_path / "vectors"
    _run_stage(["extract", "--input", str(corpus), "--output", str(vecdir)])
    vectors = vecdir / "vectors.jsonl"
    lines = vectors.read_text().splitlines()
    assert len(lines) == 120
    assert {"p5", "q5", "blum", "mod", "roca"} <= set(json.loads(lines[0]))

    profdir = tmp_path / "profiles"
    _run_stage(["profile", "--input", str(vectors), "--output", str(profdir)])
    profjson = json.loads((profdir / "profiles.json").read_text())
    assert {p["source_id"] for p in profjson["profiles"]} == {"fixed-high", "blum-low"}

    clusdir = tmp_path / "clusters"
    _run_stage(
        ["cluster", "--input", str(profdir / "profiles.json"),
         "--threshold", "0.3", "--output", str(clusdir)]
    )
    grouping = json.loads((clusdir / "grouping.json").read_text())
    assert len(grouping["groups"]) == 2
    assert (clusdir / "dendrogram.newick").read_text().strip().endswith(";")

    modeldir = tmp_path / "model"
    _run_stage(
        ["train", "--vectors", str(vectors), "--grouping", str(clusdir / "grouping.json"),
         "--variant", "full", "--output", str(modeldir)]
    )
    model = json.loads((modeldir / "model.json").read_text())
    assert model["variant"] == "full_bayes"
    assert model["metadata"]["corpus_hash"] == sha256_file(vectors)
    assert model["metadata"]["date"] is None

    classdir = tmp_path / "classified"
    _run_stage(
        ["classify", "--model", str(modeldir / "model.json"),
         "--input", str(vectors), "--output", str(classdir)]
    )
    rows = [json.loads(l) for l in (classdir / "classifications.jsonl").read_text().splitlines()]
    assert len(rows) == 120
    assert all("ranking" in r for r in rows)

    batchdir = tmp_path / "batch"
    _run_stage(
        ["classify", "--model", str(modeldir / "model.json"),
         "--input", str(vectors), "--batch", "--output", str(batchdir)]
    )
    [row] = [json.loads(l) for l in (batchdir / "classifications.jsonl").read_text().splitlines()]
    assert row["batch_size"] == 120

    evaldir = tmp_path / "eval"
    _run_stage(
        ["evaluate", "--model", str(modeldir / "model.json"), "--input", str(vectors),
         "--grouping", str(clusdir / "grouping.json"),
         "--batch-size", "1,2,5", "--top-k", "1,2", "--output", str(evaldir)]
    )
    report = json.loads((evaldir / "evaluation.json").read_text())
    assert report["batch_sizes"] == [1, 2, 5]
    assert (evaldir / "evaluation.txt").read_text().startswith("group")


def test_extract_single_prime_mode(tmp_path, corpus_dir):
    vecdir = tmp_path / "sp"
    _run_stage(
        ["extract", "--input", str(corpus_dir / "corpus.jsonl"),
         "--feature-mode", "single-prime", "--output", str(vecdir)]
    )
    lines = (vecdir / "vectors.jsonl").read_text().splitlines()
    assert len(lines) == 240
    assert {"p5", "lsb2", "mod", "roca"} <= set(json.loads(lines[0]))


def test_pipeline_end_to_end(tmp_path, corpus_dir):
    out = tmp_path / "pipe"
    rc = cli.main(
        ["pipeline", "--input", str(corpus_dir / "corpus.jsonl"),
         "--holdout", "20", "--threshold", "0.3",
         "--batch-size", "1,2,5", "--top-k", "1,2", "--output", str(out)]
    )
    assert rc == 0
    for name in (
        "dendrogram.json", "dendrogram.newick", "grouping.json",
        "model.json", "evaluation.json", "evaluation.txt", "run_config.json",
    ):
        assert (out / name).exists(), name
    report = json.loads((out / "evaluation.json").read_text())
    assert report["average_accuracy"]["1"]["1"] > 0.9  # clearly separable toy profiles


def test_pipeline_holdout_too_large_exit_2(tmp_path, corpus_dir):
    rc = cli.main(
        ["pipeline", "--input", str(corpus_dir / "corpus.jsonl"),
         "--holdout", "60", "--output", str(tmp_path / "x")]
    )
    assert rc == 2


def test_pipeline_deterministic_outputs(tmp_path, corpus_dir):
    args = lambda out: [
        "pipeline", "--input", str(corpus_dir / "corpus.jsonl"),
        "--holdout", "10", "--threshold", "0.3",
        "--batch-size", "1,2", "--top-k", "1", "--output", str(out),
    ]
    assert cli.main(args(tmp_path / "p1")) == 0
    assert cli.main(args(tmp_path / "p2")) == 0
    for name in ("model.json", "evaluation.json", "grouping.json", "dendrogram.json"):
        assert sha256_file(tmp_path / "p1" / name) == sha256_file(tmp_path / "p2" / name)


def _write_scan(tmp_path, profile, n_batches, batch_size, n_clean, seed):
    corpus, truth = biasgen.generate_shared_prime_corpus(
        profile, n_batches=n_batches, batch_size=batch_size,
        n_clean=n_clean, bits=64, seed=seed,
    )
    path = tmp_path / "scan.jsonl"
    keycore.write_jsonl(path, corpus.records)
    return path, truth


def test_gcd_subcommand(tmp_path, corpus_dir):
    profile = biasgen.BiasProfile(profile_id="fixed-high", avoid_threshold=5)
    scan, truth = _write_scan(tmp_path, profile, n_batches=2, batch_size=10, n_clean=5, seed=3)

    # train a single-prime model from the corpus first
    vecdir = tmp_path / "spvec"
    _run_stage(["extract", "--input", str(corpus_dir / "corpus.jsonl"),
                "--feature-mode", "single-prime", "--output", str(vecdir)])
    profdir = tmp_path / "spprof"
    _run_stage(["profile", "--input", str(vecdir / "vectors.jsonl"), "--output", str(profdir)])
    clusdir = tmp_path / "spclus"
    _run_stage(["cluster", "--input", str(profdir / "profiles.json"),
                "--threshold", "0.3", "--output", str(clusdir)])
    modeldir = tmp_path / "spmodel"
    _run_stage(["train", "--vectors", str(vecdir / "vectors.jsonl"),
                "--grouping", str(clusdir / "grouping.json"), "--output", str(modeldir)])

    out = tmp_path / "gcd"
    rc = cli.main(
        ["gcd", "--input", str(scan), "--model", str(modeldir / "model.json"),
         "--min-batch", "10", "--output", str(out)]
    )
    assert rc == 0
    factored = [json.loads(l) for l in (out / "factored.jsonl").read_text().splitlines()]
    recovered = {int(f["p"], 16) for f in factored}
    assert set(truth.values()) <= recovered
    batches = json.loads((out / "batches.json").read_text())
    assert len(batches["openssl"]) + len(batches["other"]) == 2
    assert (out / "attribution.json").exists()
    assert "# batches" in (out / "attribution.txt").read_text()


def test_gcd_hex_input_and_min_batch_filter(tmp_path):
    profile = biasgen.BiasProfile(profile_id="p")
    corpus, truth = biasgen.generate_shared_prime_corpus(
        profile, n_batches=1, batch_size=4, n_clean=3, bits=64, seed=5
    )
    hexfile = tmp_path / "moduli.hex"
    hexfile.write_text("\n".join(format(r.key.n, "x") for r in corpus.records) + "\n")
    out = tmp_path / "gcdhex"
    rc = cli.main(
        ["gcd", "--input", str(hexfile), "--input-format", "hex",
         "--min-batch", "10", "--output", str(out)]
    )
    assert rc == 0
    factored = (out / "factored.jsonl").read_text().splitlines()
    assert len(factored) == 4
    batches = json.loads((out / "batches.json").read_text())
    assert batches == {"openssl": [], "other": []}  # batch of 4 < min 10


def test_attribute_subcommand(tmp_path, corpus_dir):
    profile = biasgen.BiasProfile(profile_id="fixed-high", avoid_threshold=5)
    scan, _ = _write_scan(tmp_path, profile, n_batches=1, batch_size=10, n_clean=0, seed=9)
    gcd_out = tmp_path / "g"
    assert cli.main(["gcd", "--input", str(scan), "--output", str(gcd_out)]) == 0

    vecdir = tmp_path / "v"
    _run_stage(["extract", "--input", str(corpus_dir / "corpus.jsonl"),
                "--feature-mode", "single-prime", "--output", str(vecdir)])
    profdir = tmp_path / "pr"
    _run_stage(["profile", "--input", str(vecdir / "vectors.jsonl"), "--output", str(profdir)])
    clusdir = tmp_path / "cl"
    _run_stage(["cluster", "--input", str(profdir / "profiles.json"),
                "--threshold", "0.3", "--output", str(clusdir)])
    modeldir = tmp_path / "mo"
    _run_stage(["train", "--vectors", str(vecdir / "vectors.jsonl"),
                "--grouping", str(clusdir / "grouping.json"), "--output", str(modeldir)])

    out = tmp_path / "attr"
    rc = cli.main(
        ["attribute", "--factored", str(gcd_out / "factored.jsonl"),
         "--model", str(modeldir / "model.json"), "--output", str(out)]
    )
    assert rc == 0
    report = json.loads((out / "attribution.json").read_text())
    assert len(report["rows"]) == 1
    assert report["rows"][0]["members"] == 10
    assert report["rows"][0]["primes"] == 11


def test_runtime_error_exit_1(tmp_path, corpus_dir):
    # evaluating against a grouping that lacks one source -> runtime failure
    vecdir = tmp_path / "v"
    _run_stage(["extract", "--input", str(corpus_dir / "corpus.jsonl"), "--output", str(vecdir)])
    grouping = tmp_path / "grouping.json"
    grouping.write_text(json.dumps({"threshold": 0.1, "groups": {"0": ["fixed-high"]}}))
    modeldir = tmp_path / "m"
    rc = cli.main(
        ["train", "--vectors", str(vecdir / "vectors.jsonl"),
         "--grouping", str(grouping), "--output", str(modeldir)]
    )
    assert rc == 2  # blum-low not covered by the grouping


def test_module_entrypoint_help():
    proc = subprocess.run(
        [sys.executable, "-m", "keyorigin", "--help"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    for sub in ("generate", "extract", "profile", "cluster", "train",
                "classify", "evaluate", "gcd", "attribute", "pipeline"):
        assert sub in proc.stdout
