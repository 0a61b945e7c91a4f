"""Pairwise-tree reduction of 2^k genomes and the weight-averaging baseline.

Level 1 merges leaves (0, 1), (2, 3), ...; each following level merges the
previous level's results in the same adjacent fashion until one genome is
left.  Every node runs its own GA with a seed derived from the master seed
and the node's ``(level, pair_index)`` position, so siblings can run in any
order, or at once, without changing the outcome.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, IncompatibleGenomesError, MergeNodeError
from .ga import FitnessFn, GaConfig, GenerationRecord, resolve_workers, run_mega
from .genome import Genome, compatible
from .rng import derive_seed, stream


def _is_power_of_two(n):
    return n >= 2 and n & (n - 1) == 0


def node_seed(master_seed, level, index):
    return derive_seed(master_seed, level, index)


@dataclass(frozen=True)
class MergePlan:
    leaves: Tuple[Genome, ...]
    names: Tuple[str, ...]
    cfg: GaConfig
    node_cfgs: Dict[Tuple[int, int], GaConfig] = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return len(self.leaves).bit_length() - 1

    @property
    def n_nodes(self) -> int:
        return len(self.leaves) - 1

    def levels(self):
        """``[(level, n_pairs), ...]`` from the leaves up."""
        out = []
        width = len(self.leaves)
        level = 1
        while width > 1:
            width //= 2
            out.append((level, width))
            level += 1
        return out

    def config_for(self, level, index) -> GaConfig:
        """Node config: an override if given, else the shared one; seed always positional."""
        base = self.node_cfgs.get((level, index), self.cfg)
        return replace(base, seed=node_seed(self.cfg.seed, level, index))


def build_merge_plan(checkpoints: Sequence[Genome], cfg: GaConfig, names=None,
                     pairing="adjacent", node_cfgs=None) -> MergePlan:
    """Validate leaves and fix the pairing order.

    ``pairing`` is ``"adjacent"`` or ``"shuffled:<seed>"``; the latter
    permutes the leaves with a seeded shuffle before adjacent pairing.
    """
    leaves = list(checkpoints)
    names = list(names) if names is not None else [f"model{i + 1}" for i in range(len(leaves))]
    if len(names) != len(leaves):
        raise ConfigError("one name per checkpoint is required")
    if not _is_power_of_two(len(leaves)):
        raise ConfigError(
            f"tree merging needs a power-of-two number of models (2, 4, 8, ...), got {len(leaves)}; "
            "drop or add models to reach one"
        )
    for i in range(1, len(leaves)):
        if not compatible(leaves[0], leaves[i]):
            raise IncompatibleGenomesError(
                f"{names[0]} and {names[i]} have different architectures: "
                f"[{leaves[0].manifest}] vs [{leaves[i].manifest}]"
            )
    if pairing != "adjacent":
        kind, _, seed = pairing.partition(":")
        if kind != "shuffled" or not seed.isdigit():
            raise ConfigError(f"pairing must be 'adjacent' or 'shuffled:<seed>', got {pairing!r}")
        perm = stream(int(seed), "pairing").permutation(len(leaves))
        leaves = [leaves[i] for i in perm]
        names = [names[i] for i in perm]
    return MergePlan(tuple(leaves), tuple(names), cfg, dict(node_cfgs or {}))


@dataclass
class NodeReport:
    level: int
    pair_index: int
    inputs: List[str]
    seed: int
    merged_val_accuracy: float
    history: List[GenerationRecord]
    wall_time_s: float = 0.0


@dataclass
class LeafReport:
    name: str
    val_accuracy: float
    test_accuracy: Optional[float] = None


@dataclass
class MergeReport:
    leaves: List[LeafReport]
    nodes: List[NodeReport]
    final_val_accuracy: float
    final_test_accuracy: Optional[float] = None
    baseline_mean_val_accuracy: float = 0.0
    weight_average_val_accuracy: Optional[float] = None
    weight_average_test_accuracy: Optional[float] = None

    def to_dict(self, timings=False):
        d = asdict(self)
        for node in d["nodes"]:
            node["history"] = [
                {k: r[k] for k in ("generation", "best_fitness", "mean_fitness")}
                for r in node["history"]
            ]
            if not timings:
                del node["wall_time_s"]
        return d

    def to_json(self, timings=False) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        return format_table(self.to_dict(timings=True))


def _aligned(rows, right=()):
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = [
        "  ".join(cell.rjust(w) if c in right else cell.ljust(w)
                  for c, (cell, w) in enumerate(zip(r, widths))).rstrip()
        for r in rows
    ]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return lines


def format_table(report: dict) -> str:
    """Model id | baseline accuracy | merged accuracy, one row per leaf."""
    use_test = report.get("final_test_accuracy") is not None
    col = "test" if use_test else "val"
    rows = [("Model", f"Baseline {col} acc.", f"Merged {col} acc.")]
    merged = report[f"final_{col}_accuracy"]
    for i, leaf in enumerate(report["leaves"]):
        rows.append((leaf["name"], f"{leaf[f'{col}_accuracy']:.4f}", f"{merged:.4f}" if i == 0 else ""))
    avg = report.get(f"weight_average_{col}_accuracy")
    if avg is not None:
        rows.append(("Weight Average", "", f"{avg:.4f}"))
    lines = _aligned(rows)
    if report.get("nodes"):
        timed = any(nd.get("wall_time_s") is not None for nd in report["nodes"])
        node_rows = [("level", "pair", "inputs", "merged val acc.") + (("time (s)",) if timed else ())]
        for nd in report["nodes"]:
            row = (str(nd["level"]), str(nd["pair_index"]), "+".join(nd["inputs"]),
                   f"{nd['merged_val_accuracy']:.4f}")
            if timed:
                t = nd.get("wall_time_s")
                row += (f"{t:.2f}" if t is not None else "",)
            node_rows.append(row)
        lines += [""] + _aligned(node_rows, right=(0, 1))
    return "\n".join(lines) + "\n"


def weight_average(checkpoints: Sequence[Genome]) -> Genome:
    genomes = list(checkpoints)
    if not genomes:
        raise ValueError("need at least one genome to average")
    for g in genomes[1:]:
        if not compatible(genomes[0], g):
            raise IncompatibleGenomesError(
                f"cannot average [{genomes[0].manifest}] with [{g.manifest}]"
            )
    if len(genomes) == 1:
        return genomes[0]
    base = genomes[0].values
    # offsets from the first genome keep the mean of identical genomes exact
    offsets = np.stack([g.values - base for g in genomes])
    return Genome(base + offsets.mean(axis=0), genomes[0].manifest)


def execute_merge_plan(plan: MergePlan, fitness_fn: FitnessFn,
                       test_fn: Optional[Callable[[Genome], float]] = None,
                       workers=1, node_workers=1):
    """Run every node bottom-up; return ``(final_genome, MergeReport)``.

    ``workers`` bounds parallel fitness calls inside a node, ``node_workers``
    bounds sibling nodes run at once.  Neither changes the result.
    """
    workers = resolve_workers(workers)
    current = list(plan.leaves)
    labels = list(plan.names)
    collected: Dict[Tuple[int, int], NodeReport] = {}

    def run_node(level, index, a, b, inputs):
        cfg = plan.config_for(level, index)
        start = time.perf_counter()
        try:
            res = run_mega(a, b, cfg, fitness_fn, workers=workers)
        except Exception as exc:
            raise MergeNodeError(level, index, exc) from exc
        elapsed = time.perf_counter() - start
        report = NodeReport(level, index, inputs, cfg.seed, res.fitness, res.history, elapsed)
        return res.genome, report

    for level, n_pairs in plan.levels():
        jobs = [
            (level, i, current[2 * i], current[2 * i + 1], [labels[2 * i], labels[2 * i + 1]])
            for i in range(n_pairs)
        ]
        if node_workers > 1 and n_pairs > 1:
            with ThreadPoolExecutor(max_workers=min(node_workers, n_pairs)) as pool:
                results = list(pool.map(lambda job: run_node(*job), jobs))
        else:
            results = [run_node(*job) for job in jobs]
        current = []
        for genome, rep in results:
            collected[(rep.level, rep.pair_index)] = rep
            current.append(genome)
        labels = [f"L{level}.{i}" for i in range(n_pairs)]

    final = current[0]
    leaf_reports = [
        LeafReport(name, fitness_fn(g), test_fn(g) if test_fn else None)
        for name, g in zip(plan.names, plan.leaves)
    ]
    avg = weight_average(plan.leaves)
    report = MergeReport(
        leaves=leaf_reports,
        nodes=[collected[key] for key in sorted(collected)],
        final_val_accuracy=float(fitness_fn(final)),
        final_test_accuracy=test_fn(final) if test_fn else None,
        baseline_mean_val_accuracy=float(np.mean([lr.val_accuracy for lr in leaf_reports])),
        weight_average_val_accuracy=float(fitness_fn(avg)),
        weight_average_test_accuracy=test_fn(avg) if test_fn else None,
    )
    return final, report
