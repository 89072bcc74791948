"""Makespan-minimizing task distribution across identical nodes.

Longest-Processing-Time-first greedy scheduling under a chosen cost
estimator, an exhaustive optimal oracle for small instances, and the
ground-truth / learned / uniform estimator comparison. Reported loads always
use ground-truth times, regardless of which estimates drove the schedule.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyTaskSet, InstanceTooLarge

ESTIMATORS = ("gt", "model", "uniform")


@dataclass
class Task:
    task_id: str
    volume_id: str = ""
    pose: dict | None = None
    kappa: list | None = None
    img: tuple | None = None

    def to_json(self) -> dict:
        out = {"task_id": self.task_id, "volume_id": self.volume_id}
        if self.pose is not None:
            out["pose"] = self.pose
        if self.kappa is not None:
            out["kappa"] = list(self.kappa)
        if self.img is not None:
            out["img"] = list(self.img)
        return out


@dataclass
class TaskSet:
    tasks: list[Task]
    est_time: np.ndarray
    gt_time: np.ndarray

    def __post_init__(self):
        self.est_time = np.asarray(self.est_time, dtype=np.float64)
        self.gt_time = np.asarray(self.gt_time, dtype=np.float64)
        n = len(self.tasks)
        if self.est_time.shape != (n,) or self.gt_time.shape != (n,):
            raise ValueError("est_time/gt_time must have one entry per task")
        if n and (self.est_time.min() <= 0 or self.gt_time.min() <= 0):
            raise ValueError("task times must be positive")

    def __len__(self):
        return len(self.tasks)

    def save(self, path) -> None:
        doc = {
            "tasks": [t.to_json() for t in self.tasks],
            "est_time": self.est_time.tolist(),
            "gt_time": self.gt_time.tolist(),
        }
        Path(path).write_text(json.dumps(doc, indent=2))

    @classmethod
    def load(cls, path) -> "TaskSet":
        doc = json.loads(Path(path).read_text())
        tasks = [
            Task(
                task_id=t["task_id"],
                volume_id=t.get("volume_id", ""),
                pose=t.get("pose"),
                kappa=t.get("kappa"),
                img=tuple(t["img"]) if "img" in t else None,
            )
            for t in doc["tasks"]
        ]
        return cls(tasks, np.array(doc["est_time"]), np.array(doc["gt_time"]))


@dataclass
class Assignment:
    node_of: np.ndarray  # task index -> node index
    loads: np.ndarray  # per-node sum of gt_time

    @property
    def makespan(self) -> float:
        return float(self.loads.max())

    @property
    def n_nodes(self) -> int:
        return len(self.loads)


def lpt_schedule(taskset: TaskSet, est: str, n_nodes: int, seed: int = 0) -> Assignment:
    """Greedy LPT under the chosen estimator; ties go to the lowest node index.

    gt      schedule by ground-truth times
    model   schedule by est_time (learned predictions)
    uniform equal estimates, tasks taken in a seeded random order
    """
    if len(taskset) == 0:
        raise EmptyTaskSet("no tasks to schedule")
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if est not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    n = len(taskset)
    if est == "uniform":
        order = np.random.default_rng(seed).permutation(n)
        est_times = np.ones(n)
    else:
        est_times = taskset.gt_time if est == "gt" else taskset.est_time
        # stable sort keeps equal-estimate tasks in input order
        order = np.argsort(-est_times, kind="stable")
    node_of = np.zeros(n, dtype=np.int64)
    est_loads = np.zeros(n_nodes)
    gt_loads = np.zeros(n_nodes)
    for i in order:
        node = int(np.argmin(est_loads))  # argmin takes the lowest index on ties
        node_of[i] = node
        est_loads[node] += est_times[i]
        gt_loads[node] += taskset.gt_time[i]
    return Assignment(node_of, gt_loads)


def brute_force_optimal(times, n_nodes: int, limit: float = 1e7) -> float:
    """Minimal makespan by exhaustive assignment with node-symmetry pruning."""
    times = np.asarray(times, dtype=np.float64)
    n = times.size
    if n == 0:
        raise EmptyTaskSet("no tasks")
    if n_nodes**n > limit:
        raise InstanceTooLarge(f"{n_nodes}^{n} assignments exceed limit {limit:g}")
    # descending order makes the bound prune early
    order = np.argsort(-times)
    sorted_times = times[order]
    best = float(np.sum(times))  # one-node upper bound
    loads = np.zeros(n_nodes)

    def rec(i: int, used: int):
        nonlocal best
        if i == n:
            best = min(best, loads.max())
            return
        t = sorted_times[i]
        # symmetric empty nodes are interchangeable: try at most one of them
        cap = min(used + 1, n_nodes)
        for node in range(cap):
            if loads[node] + t >= best:
                continue
            loads[node] += t
            rec(i + 1, max(used, node + 1))
            loads[node] -= t
    rec(0, 0)
    return best


def graham_bound(n_nodes: int) -> float:
    """LPT's tight worst-case ratio against the optimum."""
    return 4.0 / 3.0 - 1.0 / (3.0 * n_nodes)


def compare_estimators(taskset: TaskSet, node_counts, seed: int = 0) -> dict:
    """LPT under gt/model/uniform estimates for each node count.

    Loads and makespans are normalized by the gt-estimator makespan so the gt
    curve sits at 1.0 (the reference schedule).
    """
    report = {"node_counts": list(node_counts), "results": []}
    for n_nodes in node_counts:
        entry = {"n_nodes": int(n_nodes), "estimators": {}}
        gt_assign = lpt_schedule(taskset, "gt", n_nodes, seed)
        ref = gt_assign.makespan
        for est in ESTIMATORS:
            assign = gt_assign if est == "gt" else lpt_schedule(taskset, est, n_nodes, seed)
            entry["estimators"][est] = {
                "loads": (assign.loads / ref).tolist(),
                "max_load": assign.makespan / ref,
                "overhead": assign.makespan / ref - 1.0,
                "task_counts": np.bincount(assign.node_of, minlength=n_nodes).tolist(),
            }
        report["results"].append(entry)
    return report
