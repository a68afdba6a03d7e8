import json
import math
import os
import unittest
from tempfile import TemporaryDirectory
from types import SimpleNamespace

import numpy as np

from endonav.agents import (
    PlannerConfig,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    WorldModelAgent,
    WorldModelConfig,
)
from endonav.env import EnvConfig, TaskId
from endonav.harness import (
    EpisodeRecord,
    EvalMetrics,
    aggregate,
    collect,
    evaluate,
    format_table,
    path_ratio,
    read_records,
)
from endonav.harness.evaluation import episode_plan

from ._shared import skipParallel, y_tree


class ScriptedAgent:
    """
    Repeats one normalized action whatever it observes.
    """

    def __init__(self, action, history=2):
        self.action = np.array(action, dtype=float)
        self.config = SimpleNamespace(history=history)
        self.windows = []

    def act(self, history, rng, *, deterministic=False, memory=None):
        self.windows.append(len(history))
        return self.action.copy()


def _record(episode, success, time=float("nan"), ratio=1.0, task="A1"):
    return EpisodeRecord(episode, task, "y", 0, success, 10, time, 100.0, 0.0, ratio)


class TestMetrics(unittest.TestCase):
    def test_path_ratio(self):
        self.assertEqual(1.0, path_ratio(True, 50.0, 100.0))
        self.assertAlmostEqual(0.75, path_ratio(False, 30.0, 120.0))
        self.assertEqual(0.0, path_ratio(False, 150.0, 100.0))
        self.assertEqual(0.0, path_ratio(False, 0.0, 0.0))

    def test_aggregate(self):
        records = [_record(0, True, 1.0), _record(1, True, 3.0)]
        records.append(_record(2, False, ratio=0.5))
        agg = aggregate(records)
        self.assertEqual(3, agg.episodes)
        self.assertAlmostEqual(200 / 3, agg.success_rate)
        self.assertAlmostEqual(100 * np.std([1, 1, 0]), agg.sr_std)
        self.assertAlmostEqual(2.0, agg.proc_time_mean)
        self.assertAlmostEqual(1.0, agg.proc_time_std)
        self.assertAlmostEqual(250 / 3, agg.path_ratio_mean)

    def test_aggregate_without_successes(self):
        agg = aggregate([_record(0, False, ratio=0.2)])
        self.assertEqual(0.0, agg.success_rate)
        self.assertTrue(math.isnan(agg.proc_time_mean))
        self.assertAlmostEqual(20.0, agg.path_ratio_mean)

    def test_empty(self):
        agg = aggregate([])
        self.assertEqual(0, agg.episodes)
        self.assertTrue(math.isnan(agg.success_rate))

    def test_per_task(self):
        metrics = EvalMetrics([_record(0, True, 1.0), _record(1, False, task="A2L")])
        self.assertEqual(["A1", "A2L"], list(metrics.per_task()))
        self.assertEqual(50.0, metrics.overall.success_rate)
        table = format_table(metrics)
        self.assertEqual(4, len(table.splitlines()))
        self.assertIn("all", table.splitlines()[-1])

    def test_records_file(self):
        records = [_record(0, True, 1.35), _record(1, True, 0.27, task="A3R")]
        with TemporaryDirectory() as d:
            path = os.path.join(d, "evaluations", "step_10.csv")
            EvalMetrics(records).write(path)
            self.assertEqual(records, read_records(path))


class TestEpisodePlan(unittest.TestCase):
    def test_round_robin(self):
        trees = [("a", None), ("b", None)]
        plan = episode_plan([TaskId.A1, TaskId.A2L], trees, 5)
        expected = [
            (0, TaskId.A1, "a"),
            (1, TaskId.A2L, "a"),
            (2, TaskId.A1, "b"),
            (3, TaskId.A2L, "b"),
            (4, TaskId.A1, "a"),
        ]
        self.assertEqual(expected, [(i, task, tree[0]) for i, task, tree in plan])


@skipParallel
class TestEvaluate(unittest.TestCase):
    def setUp(self):
        self.trees = [("y", y_tree()), ("y2", y_tree())]

    def test_forward_reaches_aorta(self):
        agent = ScriptedAgent([0.0, 1.0])
        metrics = evaluate(agent, [TaskId.A1], self.trees, 4, seed=3)
        self.assertEqual([0, 1, 2, 3], [r.episode for r in metrics.records])
        self.assertEqual(["y", "y2", "y", "y2"], [r.tree for r in metrics.records])
        for record in metrics.records:
            self.assertTrue(record.success)
            self.assertEqual(1.0, record.path_ratio)
            self.assertAlmostEqual(record.steps * 0.135, record.procedure_time)
            self.assertEqual(3, record.seed)
        self.assertEqual(100.0, metrics.overall.success_rate)
        self.assertLessEqual(max(agent.windows), 2)

    def test_idle_agent_times_out(self):
        agent = ScriptedAgent([0.0, 0.0])
        config = EnvConfig(max_steps=5)
        metrics = evaluate(agent, [TaskId.A1], self.trees, 2, env_config=config)
        for record in metrics.records:
            self.assertFalse(record.success)
            self.assertEqual(5, record.steps)
            self.assertTrue(math.isnan(record.procedure_time))
            self.assertAlmostEqual(record.initial_pathlength, record.remaining_pathlength)
            self.assertAlmostEqual(0.0, record.path_ratio)

    def test_deterministic(self):
        agent = ScriptedAgent([0.0, 1.0])
        a = evaluate(agent, [TaskId.A1], self.trees, 3, seed=1)
        b = evaluate(agent, [TaskId.A1], self.trees, 3, seed=1, workers=3)
        self.assertEqual(a.records, b.records)
        c = evaluate(agent, [TaskId.A1], self.trees, 3, seed=2)
        self.assertNotEqual(
            [r.initial_pathlength for r in a.records],
            [r.initial_pathlength for r in c.records],
        )

    def test_leaves_parameters_untouched(self):
        planner = PlannerConfig(horizon=2, samples=8, prior_samples=2, elites=2)
        agents = (
            SacAgent(SacConfig(history=2, embed_size=4, hidden=(6,)), seed=0),
            WorldModelAgent(
                WorldModelConfig(
                    history=2, embed_size=4, latent_size=3, hidden=6, planner=planner
                ),
                seed=0,
            ),
        )
        for agent in agents:
            with self.subTest(agent=type(agent).__name__):
                before = agent.checksum()
                evaluate(agent, [TaskId.A1, TaskId.A2L], self.trees, 2, seed=4)
                self.assertEqual(before, agent.checksum())


@skipParallel
class TestCollect(unittest.TestCase):
    def test_trajectory_log(self):
        agent = ScriptedAgent([0.0, 1.0])
        trees = [("y", y_tree())]
        with TemporaryDirectory() as d:
            path = collect(agent, TaskId.A1, 2, os.path.join(d, "A1.jsonl"), trees=trees)
            with open(path) as f:
                records = [json.loads(line) for line in f]
            buffer = ReplayBuffer(1000)
            self.assertEqual(len(records), buffer.prefill([path]))
        self.assertEqual({0, 1}, {r["episode"] for r in records})
        for episode in (0, 1):
            steps = [r for r in records if r["episode"] == episode]
            self.assertEqual(list(range(len(steps))), [r["t"] for r in steps])
            self.assertTrue(steps[-1]["terminated"])
            self.assertFalse(any(r["terminated"] for r in steps[:-1]))
            self.assertEqual([0.0, 1.0], steps[0]["action"])
        self.assertEqual({"A1"}, {r["task"] for r in records})
