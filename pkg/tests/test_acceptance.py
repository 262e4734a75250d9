"""The thirteen acceptance criteria, each at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line (shown in the terminal summary)
before asserting, so a failing criterion still reports its measured value.
"""

import math
import shutil
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from sklearn.tree import DecisionTreeClassifier

from conftest import ACCEPTANCE_LINES
from dyadnet.cli import main
from dyadnet.data import BinaryLabel, Dataset, Experiment, RelationshipLabel, merge_to_binary, split_dataset
from dyadnet.evaluation import confusion, load_percent_fixture, merge_confusion
from dyadnet.features import FEATURE_NAMES, dataset_vectors, experiment_to_sequence, experiment_to_vector
from dyadnet.gradcheck import CHECKS, run_gradient_checks
from dyadnet.models import REGISTRY, build, parameter_count, registry_lookup
from dyadnet.synthgen import REFERENCE_COUNTS, default_profiles, generate
from dyadnet.training import (
    TrainConfig,
    evaluate,
    fit_inputs_standardizer,
    fit_network,
    prepare_inputs,
    target_indices,
    train,
)

R = RelationshipLabel
GOLDEN = Path(__file__).parent / "golden"
FIXTURES = Path(__file__).parents[1] / "src" / "dyadnet" / "fixtures"
DESK_LR = 0.01


def verdict(number, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  #{number} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def separable_400():
    return generate(default_profiles("separable"), {lab: 100 for lab in R}, seed=3)


def test_01_gradient_correctness():
    start = time.perf_counter()
    results = run_gradient_checks(trials=20, seed=0, tolerance=1e-5)
    elapsed = time.perf_counter() - start
    worst = max(r.max_error for r in results)
    ok = (all(r.passed for r in results) and {r.name for r in results} == set(CHECKS)
          and all(r.trials >= 20 for r in results) and elapsed < 30)
    verdict(1, "gradient correctness", ok,
            f"{len(results)} checks x 20 configs, worst rel err {worst:.2e} < 1e-5, {elapsed:.1f}s < 30s")


def test_02_registry_fidelity(capsys):
    assert main(["models", "list"]) == 0
    out = capsys.readouterr().out
    golden = (GOLDEN / "models_list.txt").read_text()
    rows = out.splitlines()[2:]
    verdict(2, "registry fidelity", out == golden and len(rows) == 11,
            f"{len(rows)} rows, golden match={out == golden}")


def closed_form(spec):
    sizes = [spec.input_size, *spec.hidden_sizes, spec.output_size]
    total = 0
    for k, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        if k == 0 and spec.first_hidden_is_lstm:
            total += 4 * n_out * (n_in + n_out + 1)
        else:
            total += n_out * n_in + n_out
    return total


def test_03_shape_arithmetic():
    mismatched = [name for name, spec in REGISTRY.items() if parameter_count(spec) != closed_form(spec)]
    rn21 = parameter_count(registry_lookup("RN2-1"))
    rnr21_lstm = 4 * 25 * (16 + 25 + 1)
    small = [build(registry_lookup(n), 0) for n in ("RN2-1", "RNR2-1", "RNR2-4")]
    built_ok = all(net.n_parameters == parameter_count(net.spec) for net in small)
    # 16*25+25 + 25*12+12 + 12*4+4 = 789; the quoted 777 does not fit this architecture
    ok = not mismatched and built_ok and rn21 == 789 and rnr21_lstm == 4200
    verdict(3, "shape arithmetic", ok,
            f"11/11 closed-form matches, RN2-1={rn21} (quoted 777 is arithmetically 789), RNR2-1 LSTM={rnr21_lstm}")


def test_04_split_reproduction():
    ds = generate(default_profiles("separable"), REFERENCE_COUNTS, seed=0)
    sizes = {(len(a), len(b)) for a, b in (split_dataset(ds, 0.9, s) for s in range(10))}
    verdict(4, "split reproduction", len(ds) == 867 and sizes == {(780, 87)}, f"867 -> {sorted(sizes)}")


def test_05_binary_merge():
    ds = generate(default_profiles("separable"), REFERENCE_COUNTS, seed=0)
    by_map = {lab: 0 for lab in BinaryLabel}
    for lab, n in REFERENCE_COUNTS.items():
        by_map[merge_to_binary(lab)] += n
    got = ds.binary_counts()
    ok = got == by_map == {BinaryLabel.ACQUAINTANCES: 267, BinaryLabel.INTIMATE: 600}
    verdict(5, "binary merge", ok, f"{got[BinaryLabel.ACQUAINTANCES]} acquaintances / {got[BinaryLabel.INTIMATE]} intimate")


# the two LSTM-1500+ registry models are skipped here for memory and time
LOSS_MODELS = [n for n in REGISTRY if n not in ("RNR2-2", "RNR2-3")]


def test_06_loss_sanity(small_separable):
    worst_rel, worst_zero = 0.0, 0.0
    for name in LOSS_MODELS:
        spec = registry_lookup(name)
        rec = spec.first_hidden_is_lstm
        std = fit_inputs_standardizer(small_separable, rec)
        X = prepare_inputs(small_separable, rec, std)
        y = target_indices(small_separable, spec.output_size)
        ln_c = math.log(spec.output_size)
        for zero in (False, True):
            net = build(spec, 0, zero_output=zero)
            P = net.predict_proba(X)
            loss = -float(np.mean(np.log(P[np.arange(len(y)), y])))
            if zero:
                worst_zero = max(worst_zero, abs(loss - ln_c))
            else:
                worst_rel = max(worst_rel, abs(loss - ln_c) / ln_c)
    ok = worst_rel <= 0.05 and worst_zero < 1e-9
    verdict(6, "loss sanity", ok,
            f"{len(LOSS_MODELS)} models, worst |L-lnC|/lnC={worst_rel:.3%} (<=5%), zero-output err {worst_zero:.1e} (<1e-9)")


def random_experiment(rng, k):
    n = int(rng.integers(1, 61))
    rows = np.empty((n, 13))
    rows[:, 0] = np.cumsum(rng.uniform(0.05, 1.0, n)) + rng.uniform(0, 100)
    rows[:, 1:11] = rng.normal(scale=rng.uniform(0.1, 50.0), size=(n, 10))
    rows[:, 11:13] = rng.uniform(0.0, 3.0, size=(n, 2))
    return Experiment(f"r{k}", rows, R(int(rng.integers(4))))


def oracle_vector(rows):
    """Plain-Python per-reading statistics, then exact rational per-column means."""
    per_step = []
    for r in rows.tolist():
        t, p1, p2, v1, v2, vt1, vt2 = r[0], r[1:4], r[4:7], r[7:9], r[9:11], r[11], r[12]
        dist = math.sqrt(sum((b - a) ** 2 for a, b in zip(p1, p2)))
        per_step.append([t, *p1, *p2, *v1, *v2, vt1, vt2, dist, abs(vt1 - vt2), (vt1 + vt2) / 2])
    means = [float(sum(map(Fraction, col)) / len(per_step)) for col in zip(*per_step)]
    means[0] = rows[-1, 0] - rows[0, 0]
    return per_step, means


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(b), 1e-300)
    return float(np.max(np.where(a == b, 0.0, np.abs(a - b) / scale)))


def test_07_feature_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(1000):
        e = random_experiment(rng, k)
        steps, means = oracle_vector(e.readings)
        worst = max(worst, rel_err(experiment_to_sequence(e), steps), rel_err(experiment_to_vector(e), means))
    ok = worst < 1e-12 and len(FEATURE_NAMES) == 16
    verdict(7, "feature oracle", ok, f"1000 random experiments, worst rel err {worst:.2e} < 1e-12")


def test_08_confusion_oracle():
    rng = np.random.default_rng(8)
    tallies_ok = merge_ok = True
    worst_row = 0.0
    for trial in range(300):
        n = int(rng.integers(0, 120))
        preds = [(f"e{i}", R(int(rng.integers(4))), R(int(rng.integers(4)))) for i in range(n)]
        brute = {}
        for _, t, p in preds:
            brute[(t, p)] = brute.get((t, p), 0) + 1
        cm = confusion(preds)
        tallies_ok &= all(cm.counts[i, j] == brute.get((i, j), 0) for i in R for j in R)
        direct = confusion([(merge_to_binary(t), merge_to_binary(p)) for _, t, p in preds], BinaryLabel)
        merge_ok &= merge_confusion(cm) == direct
        for row, s in zip(cm.rounded_percentages(), cm.support):
            if s:
                worst_row = max(worst_row, abs(math.fsum(float(v) for v in row) - 100.0))
    for path in sorted(FIXTURES.glob("*.tsv")):
        for row in load_percent_fixture(path)[1]:
            worst_row = max(worst_row, abs(math.fsum(row) - 100.0))
    ok = tallies_ok and merge_ok and worst_row <= 0.5
    verdict(8, "confusion oracle", ok,
            f"300 random tallies exact={tallies_ok}, merge commutes={merge_ok}, worst row sum dev {worst_row:.2f} <= 0.5")


def test_09_end_to_end_separable(separable_400):
    start = time.perf_counter()
    train_ds, test_ds = split_dataset(separable_400, 0.9, 3)
    cols = [FEATURE_NAMES.index("dist"), FEATURE_NAMES.index("vel_tot")]
    tree = DecisionTreeClassifier(max_depth=2, random_state=0)
    tree.fit(dataset_vectors(train_ds)[:, cols], target_indices(train_ds, 4))
    oracle = 100.0 * tree.score(dataset_vectors(test_ds)[:, cols], target_indices(test_ds, 4))
    spec = registry_lookup("RN2-1").replace(hidden_sizes=(25, 12), epochs=300, learning_rate=DESK_LR)
    _, report = train(spec, separable_400, TrainConfig.for_spec(spec, seed=3))
    elapsed = time.perf_counter() - start
    ok = oracle >= 90 and report.test_accuracy >= 90 and elapsed < 300
    verdict(9, "end-to-end separable", ok,
            f"tree oracle {oracle:.1f}% >= 90, RN2-1 25-12/300 ep (lr {DESK_LR}) test "
            f"{report.test_accuracy:.1f}% >= 90, {elapsed:.0f}s < 300s")


def test_10_memorization():
    start = time.perf_counter()
    ds = generate(default_profiles("overlapping"), {lab: 8 for lab in R}, seed=10)
    labels = np.random.default_rng(10).integers(4, size=len(ds))
    ds = Dataset(tuple(e.with_label(R(int(y))) for e, y in zip(ds, labels)))
    spec = registry_lookup("RN2-3").replace(hidden_sizes=(64, 32), epochs=2000, learning_rate=DESK_LR)
    cfg = TrainConfig.for_spec(spec, seed=10)
    net = build(spec, 10)
    std = fit_inputs_standardizer(ds, False)
    fit_network(net, prepare_inputs(ds, False, std), target_indices(ds, 4), cfg,
                cfg.l2_lambda, np.random.default_rng([10, 2]))
    acc, _ = evaluate(net, ds, std)
    elapsed = time.perf_counter() - start
    ok = len(ds) == 32 and acc >= 99 and elapsed < 300
    verdict(10, "memorization", ok,
            f"64-32/2000 ep (lr {DESK_LR}, L2 on) on 32 random-label examples: train {acc:.1f}% >= 99, {elapsed:.0f}s < 300s")


def test_11_sequence_path(separable_400):
    start = time.perf_counter()
    lengths = [len(e) for e in separable_400]
    spec = registry_lookup("RNR2-1").replace(hidden_sizes=(25, 12), epochs=100, learning_rate=DESK_LR)
    _, report = train(spec, separable_400, TrainConfig.for_spec(spec, seed=3))
    elapsed = time.perf_counter() - start
    ok = min(lengths) == 5 and max(lengths) == 60 and report.test_accuracy >= 85 and elapsed < 600
    verdict(11, "sequence path", ok,
            f"lengths {min(lengths)}-{max(lengths)}, RNR2-1 LSTM25+12/100 ep (lr {DESK_LR}) test "
            f"{report.test_accuracy:.1f}% >= 85, {elapsed:.0f}s < 600s")


def test_12_determinism(tmp_path, capsys):
    data = tmp_path / "d.csv"
    assert main(["gen-data", "--counts", "colleagues=8,couple=8,family=8,friendship=8",
                 "--seed", "12", "--out", str(data)]) == 0
    runs = {
        "dense+dropout": ["--model", "RN2-5", "--hidden", "12-8", "--epochs", "6"],
        "lstm": ["--model", "RNR2-1", "--hidden", "6-4", "--epochs", "3"],
    }
    files = ("model.dyadnn", "model.std", "train_log.tsv", "predictions_train.tsv", "predictions_test.tsv", "report.txt")
    differing = []
    for tag, extra in runs.items():
        out = tmp_path / tag
        argv = ["train", "--data", str(data), "--seed", "5", "--learning-rate", "0.01",
                "--out-dir", str(out), *extra]
        snapshots = []
        for _ in range(2):
            assert main(argv) == 0
            assert main(["report", "--predictions", str(out / "predictions_test.tsv"),
                         "--out", str(out / "report.txt")]) == 0
            snapshots.append({f: (out / f).read_bytes() for f in files})
            shutil.rmtree(out)
        differing += [f"{tag}/{f}" for f in files if snapshots[0][f] != snapshots[1][f]]
    capsys.readouterr()
    verdict(12, "determinism", not differing,
            f"{len(runs)} configs x {len(files)} artifacts byte-identical" if not differing else f"differ: {differing}")


def test_13_leakage_guard(small_separable):
    changed = []
    for recurrent in (False, True):
        spec = registry_lookup("RNR2-1" if recurrent else "RN2-5").replace(
            hidden_sizes=(6, 4), epochs=5, learning_rate=DESK_LR)
        cfg = TrainConfig.for_spec(spec, seed=13, batch_size=5)
        test_ids = set(split_dataset(small_separable, cfg.train_fraction, cfg.seed)[1].ids)
        flipped = Dataset(tuple(e.with_label(R((e.label + 1) % 4)) if e.id in test_ids else e
                                for e in small_separable))
        a, _ = train(spec, small_separable, cfg)
        b, _ = train(spec, flipped, cfg)
        if not all(p.tobytes() == q.tobytes() for p, q in zip(a.params, b.params)):
            changed.append(spec.name)
    verdict(13, "leakage guard", not changed,
            "dense+dropout and LSTM parameters bit-identical under test-label perturbation"
            if not changed else f"changed: {changed}")
