"""Exit criteria for the train -> merge -> evaluate pipeline at desk scale.

Each test carries ``@pytest.mark.acceptance(n, title)``; the conftest hook
prints one PASS/FAIL line per criterion at the end of the run.
"""

import csv
import json
import time

import numpy as np
import pytest

from mega_merge.cli import main
from mega_merge.ga import GaConfig, GaStreams, Individual, blend, evaluate, mutate, run_mega, step_generation
from mega_merge.genome import (
    Genome,
    ShapeManifest,
    decode_checkpoint,
    encode_checkpoint,
    flatten,
    load_checkpoint,
    save_checkpoint,
    unflatten,
)
from mega_merge.nn import ModelSpec, loss_and_gradient
from mega_merge.rng import stream
from oracles import (
    alpha_grid_best,
    finite_difference_grad,
    hand_step,
    kink_free_inputs,
    max_relative_error,
)

# two_moons, n=1000, 90/10 split, 2-16-16-2, lr 0.01, batch 256, 50 epochs
DATA = ["--dataset", "two_moons", "--n-samples", "1000", "--noise", "0.15", "--val-fraction", "0.1"]
MODEL = ["--hidden-widths", "16,16"]


def note(request, text):
    request.node.user_properties.append(("note", text))


@pytest.fixture(scope="module")
def pair_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("pair")
    start = time.perf_counter()
    for seed in (56, 57):
        assert main(["train", *DATA, *MODEL, "--seed", str(seed), "--out", str(d / f"model_{seed}.ckpt")]) == 0
    assert main(["merge", str(d / "model_56.ckpt"), str(d / "model_57.ckpt"), *DATA,
                 "--out", str(d / "merged.ckpt")]) == 0
    elapsed = time.perf_counter() - start
    report = json.loads((d / "merged.report.json").read_text())
    with open(d / "merged.history.csv") as fh:
        history = list(csv.DictReader(fh))
    return {"dir": d, "report": report, "history": history, "elapsed": elapsed}


@pytest.mark.acceptance(1, "dominance: merged val acc >= max(parents), two_moons, seeds 56/57")
def test_pair_dominance(pair_run, request):
    report = pair_run["report"]
    parents = [leaf["val_accuracy"] for leaf in report["leaves"]]
    merged = report["final_val_accuracy"]
    note(request, f"parents {parents[0]:.4f}/{parents[1]:.4f}, merged {merged:.4f}, "
                  f"{pair_run['elapsed']:.1f}s")
    assert len(parents) == 2
    assert merged >= max(parents)
    assert pair_run["elapsed"] < 60


@pytest.mark.acceptance(2, "monotone best-fitness history over 20 generations")
def test_pair_history_monotone(pair_run, request):
    bests = [float(r["best_fitness"]) for r in pair_run["history"]]
    note(request, f"{bests[0]:.4f} -> {bests[-1]:.4f}")
    assert [int(r["generation"]) for r in pair_run["history"]] == list(range(1, 21))
    assert all(a <= b for a, b in zip(bests, bests[1:]))


@pytest.mark.acceptance(3, "hierarchical merge of 8 parents (seeds 44-51): 7 nodes, final >= max leaf")
def test_tree_of_eight(tmp_path, request):
    start = time.perf_counter()
    paths = []
    for seed in range(44, 52):
        p = tmp_path / f"model_{seed}.ckpt"
        assert main(["train", *DATA, *MODEL, "--seed", str(seed), "--out", str(p)]) == 0
        paths.append(str(p))
    assert main(["merge-tree", *paths, *DATA, "--out", str(tmp_path / "tree.ckpt")]) == 0
    elapsed = time.perf_counter() - start
    report = json.loads((tmp_path / "tree.report.json").read_text())
    leaves = [leaf["val_accuracy"] for leaf in report["leaves"]]
    note(request, f"best leaf {max(leaves):.4f}, final {report['final_val_accuracy']:.4f}, {elapsed:.1f}s")
    assert len(report["nodes"]) == 7
    assert sorted((n["level"], n["pair_index"]) for n in report["nodes"]) == [
        (1, 0), (1, 1), (1, 2), (1, 3), (2, 0), (2, 1), (3, 0)]
    assert report["final_val_accuracy"] >= max(leaves)
    assert elapsed < 300


@pytest.mark.acceptance(4, "one-generation hand-simulated oracle, N=3 K=2 t=2, bitwise")
def test_hand_trace_oracle():
    manifest = ShapeManifest(((1, 1),))
    values = [[0.2, -1.0], [1.5, 0.5], [-0.7, 2.25]]

    def fn(g):
        return -float((g.values[0] - 0.4) ** 2 + (g.values[1] - 0.1) ** 2)

    seed = 20240601
    cfg = GaConfig(population_size=3, parents_per_generation=2, tournament_size=2,
                   mutation_rate=0.0, seed=seed)
    pop = [Individual(Genome(v, manifest)) for v in values]
    evaluate(pop, fn)
    new, _ = step_generation(pop, cfg, fn, GaStreams(seed))
    expected = hand_step(values, lambda v: fn(Genome(v, manifest)), seed, 2, 2)
    got = np.array([ind.genome.values for ind in new])
    assert got.tobytes() == np.array(expected, dtype=np.float64).tobytes()


@pytest.mark.acceptance(5, "alpha-grid oracle: F(best) >= 101-point grid optimum - 1e-3")
def test_alpha_grid_oracle(request):
    # fixed panel: 12-value parents ~ N(0, 1), target at alpha = 0.373, default GA settings
    manifest = ShapeManifest(((1, 6),))
    shortfalls = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        a, b = Genome(rng.normal(size=12), manifest), Genome(rng.normal(size=12), manifest)
        target = blend(a, b, 0.373).values

        def fn(g):
            return -float(np.sum((g.values - target) ** 2))

        fit = run_mega(a, b, GaConfig(seed=seed), fn).fitness
        grid = alpha_grid_best(a, b, fn)
        if fit < grid - 1e-3:
            shortfalls.append((seed, round(grid - fit, 4)))
    note(request, f"{20 - len(shortfalls)}/20 seeds within tolerance; short: {shortfalls}")
    assert not shortfalls


@pytest.mark.acceptance(6, "mutation statistics, 1e6 coordinates, p=0.02, sigma=0.01")
def test_mutation_statistics(request):
    n = 1_000_000
    g = Genome(np.zeros(n), ShapeManifest(((1, n // 2),)))
    assert len(g) == n
    out = mutate(g, 0.02, 0.01, stream(31337, "mutation")).values
    hit = out != 0
    frac = hit.mean()
    std = out[hit].std()
    note(request, f"fraction {frac:.5f}, std {std:.6f}")
    assert 0.0185 <= frac <= 0.0215
    assert abs(std - 0.01) <= 0.05 * 0.01


@pytest.mark.acceptance(7, "analytic gradient vs central differences, 20 seeds, <=200 params, 1e-4 rel")
def test_gradient_check(request):
    spec = ModelSpec((3, 8, 6, 3))
    assert spec.parameter_count() <= 200
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params = [(rng.normal(0, 0.7, size=(r, c)), rng.normal(0, 0.2, size=c)) for r, c in spec.layer_shapes]
        X = kink_free_inputs(params, rng, 8, 3)
        y = rng.integers(0, 3, size=8)
        _, grads = loss_and_gradient(params, spec, X, y)
        worst = max(worst, max_relative_error(grads, finite_difference_grad(params, spec, X, y, h=1e-4)))
    note(request, f"worst relative error {worst:.2e}")
    assert worst < 1e-4


@pytest.mark.acceptance(8, "every CLI command is byte-identical under a fixed master seed")
def test_cli_determinism(tmp_path_factory, capsys):
    fast = ["--dataset", "two_moons", "--n-samples", "400", "--epochs", "10", "--test-fraction", "0.1"]
    ga = ["--population-size", "10", "--generations", "6"]

    def run_all(d):
        ck = [str(d / f"m{s}.ckpt") for s in (1, 2, 3, 4)]
        for s, p in zip((1, 2, 3, 4), ck):
            assert main(["train", *fast, "--seed", str(s), "--out", p]) == 0
        assert main(["merge", ck[0], ck[1], *fast, *ga, "--seed", "9", "--out", str(d / "pair.ckpt")]) == 0
        assert main(["merge-tree", *ck, *fast, *ga, "--seed", "9", "--out", str(d / "tree.ckpt")]) == 0
        assert main(["average", *ck, *fast, "--out", str(d / "avg.ckpt")]) == 0
        assert main(["eval", str(d / "tree.ckpt"), *fast, "--partition", "test"]) == 0
        assert main(["report", str(d / "tree.report.json")]) == 0
        return capsys.readouterr().out.replace(str(d), "<dir>")

    a = tmp_path_factory.mktemp("run_a")
    b = tmp_path_factory.mktemp("run_b")
    capsys.readouterr()
    out_a = run_all(a)
    out_b = run_all(b)
    assert out_a == out_b and out_a
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    assert {"pair.history.csv", "pair.report.json", "tree.report.json", "avg.report.json",
            "m1.metrics.json"} <= set(files)
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


@pytest.mark.acceptance(9, "1000 random genomes round-trip flatten/unflatten and checkpoint, bitwise")
def test_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    for i in range(1000):
        widths = rng.integers(1, 9, size=rng.integers(2, 5))
        layered = [
            (rng.normal(size=(widths[k], widths[k + 1])).astype(np.float32).astype(np.float64),
             rng.normal(size=widths[k + 1]).astype(np.float32).astype(np.float64))
            for k in range(len(widths) - 1)
        ]
        g = flatten(layered)
        for (w, b), (w2, b2) in zip(layered, unflatten(g)):
            assert w.tobytes() == w2.tobytes() and b.tobytes() == b2.tobytes()
        if i % 10 == 0:
            path = tmp_path / "g.ckpt"
            save_checkpoint(g, path)
            back = load_checkpoint(path)
        else:
            back = decode_checkpoint(encode_checkpoint(g))
        assert back.manifest == g.manifest
        assert back.values.tobytes() == g.values.tobytes()


@pytest.mark.acceptance(10, "baseline contrast: MeGA val acc >= weight-average val acc")
def test_weight_average_contrast(pair_run, request):
    report = pair_run["report"]
    avg = report["weight_average_val_accuracy"]
    note(request, f"weight average {avg:.4f} vs merged {report['final_val_accuracy']:.4f}")
    assert avg is not None
    assert report["final_val_accuracy"] >= avg
