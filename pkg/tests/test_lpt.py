import numpy as np
import pytest

from rendertime.errors import EmptyTaskSet, InstanceTooLarge
from rendertime.lpt import Assignment, Task, TaskSet, brute_force_optimal, compare_estimators, graham_bound, lpt_schedule


def make_taskset(times, est=None):
    times = np.asarray(times, dtype=float)
    est = times if est is None else np.asarray(est, dtype=float)
    tasks = [Task(task_id=f"t{i}") for i in range(len(times))]
    return TaskSet(tasks, est, times)


class TestLptSchedule:
    def test_single_node_sums_everything(self):
        ts = make_taskset([5.0, 4.0, 3.0])
        a = lpt_schedule(ts, "gt", 1)
        assert a.makespan == pytest.approx(12.0)
        assert np.all(a.node_of == 0)

    def test_hand_traced_greedy(self):
        # LPT on {5,4,3,3,3} with 2 nodes: 5->n0, 4->n1, 3->n1(7), 3->n0(8), 3->n1(10)
        ts = make_taskset([5.0, 4.0, 3.0, 3.0, 3.0])
        a = lpt_schedule(ts, "gt", 2)
        assert sorted(a.loads.tolist()) == [8.0, 10.0]
        assert a.makespan == pytest.approx(10.0)

    def test_equal_tasks_spread_one_per_node(self):
        ts = make_taskset([2.0] * 6)
        a = lpt_schedule(ts, "gt", 6)
        assert np.all(a.loads == 2.0)
        assert sorted(a.node_of.tolist()) == list(range(6))

    def test_partition_property(self):
        rng = np.random.default_rng(0)
        ts = make_taskset(rng.uniform(1, 10, 37))
        a = lpt_schedule(ts, "gt", 5)
        counts = np.bincount(a.node_of, minlength=5)
        assert counts.sum() == 37
        for node in range(5):
            assert a.loads[node] == pytest.approx(ts.gt_time[a.node_of == node].sum())

    def test_uniform_estimator_balances_counts(self):
        rng = np.random.default_rng(1)
        ts = make_taskset(rng.uniform(1, 100, 41))
        a = lpt_schedule(ts, "uniform", 8, seed=3)
        counts = np.bincount(a.node_of, minlength=8)
        assert counts.max() - counts.min() <= 1

    def test_loads_reported_with_gt_even_under_model(self):
        gt = [10.0, 1.0]
        est = [1.0, 10.0]  # wildly wrong model
        ts = make_taskset(gt, est)
        a = lpt_schedule(ts, "model", 2)
        assert sorted(a.loads.tolist()) == sorted(gt)

    def test_empty_rejected(self):
        with pytest.raises(EmptyTaskSet):
            lpt_schedule(TaskSet([], np.array([]), np.array([])), "gt", 2)


class TestBruteForce:
    def test_reference_instance(self):
        assert brute_force_optimal([5.0, 4.0, 3.0, 3.0, 3.0], 2) == pytest.approx(9.0)

    def test_single_task(self):
        assert brute_force_optimal([7.5], 3) == pytest.approx(7.5)

    def test_equal_tasks_on_k_nodes(self):
        assert brute_force_optimal([4.0] * 3, 3) == pytest.approx(4.0)

    def test_instance_too_large(self):
        with pytest.raises(InstanceTooLarge):
            brute_force_optimal(np.ones(30), 4)

    def test_graham_bound_on_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            n_tasks = int(rng.integers(1, 10))
            n_nodes = int(rng.integers(2, 4))
            times = rng.uniform(1.0, 20.0, n_tasks)
            ts = make_taskset(times)
            lpt_m = lpt_schedule(ts, "gt", n_nodes).makespan
            opt = brute_force_optimal(times, n_nodes)
            assert lpt_m <= graham_bound(n_nodes) * opt + 1e-9
            assert lpt_m >= opt - 1e-9


class TestCompare:
    def test_oracle_model_zero_overhead(self):
        rng = np.random.default_rng(0)
        gt = rng.uniform(1, 50, 64)
        ts = make_taskset(gt, est=gt)
        report = compare_estimators(ts, [4, 8])
        for entry in report["results"]:
            assert entry["estimators"]["model"]["overhead"] == pytest.approx(0.0)
            assert entry["estimators"]["gt"]["max_load"] == pytest.approx(1.0)

    def test_uniform_worse_than_good_model_on_heterogeneous(self):
        rng = np.random.default_rng(1)
        gt = np.concatenate([rng.uniform(1, 5, 60), rng.uniform(50, 100, 4)])
        est = gt * rng.uniform(0.97, 1.03, gt.size)  # 3% noisy model
        ts = make_taskset(gt, est)
        report = compare_estimators(ts, [8])
        ests = report["results"][0]["estimators"]
        assert ests["uniform"]["overhead"] > ests["model"]["overhead"]

    def test_task_manifest_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        gt = rng.uniform(1, 9, 6)
        ts = make_taskset(gt)
        ts.tasks[0].pose = {"rx": 10.0, "ry": 0.0, "dz": 2.0}
        ts.tasks[0].img = (128, 128)
        path = tmp_path / "tasks.json"
        ts.save(path)
        back = TaskSet.load(path)
        assert np.allclose(back.gt_time, ts.gt_time)
        assert back.tasks[0].img == (128, 128)
        assert len(back) == 6

    def test_paper_scale_manifest(self):
        # 6 time steps x 64 poses = 384 tasks in one set
        rng = np.random.default_rng(3)
        ts = make_taskset(rng.uniform(1, 10, 384))
        a = lpt_schedule(ts, "gt", 32)
        assert np.bincount(a.node_of, minlength=32).sum() == 384
