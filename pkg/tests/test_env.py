import json
import os
import unittest
from tempfile import TemporaryDirectory

import numpy as np
import scipy.stats

from endonav.device import DeviceAction
from endonav.env import (
    OBS_SIZE,
    EnvConfig,
    NavigationEnv,
    TaskId,
    TaskInstance,
    TrajectoryWriter,
    compute_reward,
    is_target_reached,
    normalize_points,
    parse_tasks,
    sample_task,
)
from endonav.exceptions import EpisodeFinishedError, TaskError
from endonav.geometry import path_length

from ._shared import y_tree


def _instance(target, radius=4.0, start=(0.0, 20.0)):
    tree = y_tree()
    start, target = np.array(start), np.array(target)
    initial = path_length(tree, start, target)
    return TaskInstance(TaskId.A1, start, target, initial, "y", radius)


class TestTasks(unittest.TestCase):
    def test_parse(self):
        self.assertEqual(list(TaskId), parse_tasks("all"))
        self.assertEqual([TaskId.A1, TaskId.A2L], parse_tasks("a1, A2L"))
        self.assertEqual([TaskId.A3R], parse_tasks(["A3R"]))
        self.assertEqual("A2R", str(TaskId.A2R))
        with self.assertRaises(TaskError):
            parse_tasks("A4")
        with self.assertRaises(TaskError):
            parse_tasks("")

    def test_sample_a1(self):
        tree = y_tree()
        for seed in range(10):
            instance = sample_task(TaskId.A1, tree, np.random.default_rng(seed))
            self.assertEqual(0, instance.start[0])
            self.assertTrue(0 <= instance.start[1] <= 40)
            self.assertTrue(115 <= instance.target[1] <= 140)
            self.assertEqual(8.0, instance.target_radius)
            self.assertAlmostEqual(
                instance.target[1] - instance.start[1], instance.initial_pathlength
            )

    def test_sample_carotid_tasks(self):
        tree = y_tree()
        rng = np.random.default_rng(2)
        a2l = sample_task("A2L", tree, rng)
        self.assertTrue(115 <= a2l.start[1] <= 140)
        self.assertLessEqual(a2l.target[0], 0)
        self.assertEqual(3.5, a2l.target_radius)
        a3r = sample_task("a3r", tree, rng, tree_id="seven")
        self.assertEqual(20, a3r.target[0])
        self.assertGreaterEqual(a3r.start[0], 0)
        self.assertEqual("seven", a3r.tree_id)

    def test_sample_deterministic(self):
        tree = y_tree()
        a = sample_task("A2R", tree, np.random.default_rng(9))
        b = sample_task("A2R", tree, np.random.default_rng(9))
        self.assertEqual(a, b)

    def test_segment_windows(self):
        tree = y_tree()
        rng = np.random.default_rng(4)
        a1 = [sample_task(TaskId.A1, tree, rng) for _ in range(200)]
        a2 = [sample_task(TaskId.A2L, tree, rng) for _ in range(200)]
        a3 = [sample_task(TaskId.A3L, tree, rng) for _ in range(200)]
        # Distal quarter of the descending aorta, whole carotid segments.
        self.assertTrue(all(115 <= i.target[1] <= 140 for i in a1))
        self.assertTrue(all(115 <= i.start[1] <= 140 for i in a2))
        self.assertLess(min(i.start[1] for i in a1), 5)
        self.assertLess(min(i.start[1] for i in a3), 145)
        self.assertGreater(max(i.start[1] for i in a3), 175)

    def test_target_uniform_over_arc(self):
        tree = y_tree()
        rng = np.random.default_rng(11)
        arcs = [sample_task(TaskId.A3R, tree, rng).target[1] - 180 for _ in range(1000)]
        result = scipy.stats.kstest(np.array(arcs) / 40, "uniform")
        self.assertLess(result.statistic, 0.05)

    def test_start_outside_success_radius(self):
        tree = y_tree()
        rng = np.random.default_rng(0)
        for _ in range(300):
            i = sample_task(TaskId.A3R, tree, rng)
            self.assertFalse(is_target_reached(i.start, i.target, i.target_radius))

    def test_unreachable_windows(self):
        tree = y_tree()
        config = EnvConfig(target_threshold=1000.0)
        with self.assertRaises(TaskError):
            sample_task(TaskId.A3L, tree, np.random.default_rng(0), config=config)


class TestRewards(unittest.TestCase):
    def test_reached(self):
        self.assertTrue(is_target_reached((0, 0), (0, 4), 2))
        self.assertFalse(is_target_reached((0, 0), (0, 4.01), 2))

    def test_reward(self):
        self.assertAlmostEqual(-0.00015 + 0.001 * 3, compute_reward(-3, False))
        self.assertAlmostEqual(1 - 0.00015, compute_reward(0, True))
        reward = compute_reward(5, False, step_penalty=0.0, pathlength_weight=0.1)
        self.assertAlmostEqual(-0.5, reward)

    def test_normalize(self):
        tree = y_tree()
        lo, hi = tree.bounding_box
        self.assertTrue(np.allclose([[-1, -1], [1, 1]], normalize_points(tree, [lo, hi])))


class TestEnv(unittest.TestCase):
    def setUp(self):
        self.env = NavigationEnv(y_tree())

    def test_reset(self):
        obs = self.env.reset(_instance((0, 130)))
        self.assertEqual((OBS_SIZE,), obs.shape)
        self.assertTrue(np.array_equal(obs[:6], obs[6:12]))
        self.assertTrue(np.array_equal([0, 0], obs[-2:]))
        target = normalize_points(self.env.tree, (0, 130))
        self.assertTrue(np.allclose(target, obs[12:14]))
        self.assertAlmostEqual(110, self.env.pathlength)

    def test_step_towards_target(self):
        obs = self.env.reset(_instance((0, 130)))
        result = self.env.step(DeviceAction(0, 40))
        self.assertLess(result.info["delta_pathlength"], 0)
        self.assertGreater(result.reward, 0)
        self.assertFalse(result.done)
        self.assertTrue(np.array_equal(obs[:6], result.observation[6:12]))
        self.assertTrue(np.allclose([0, 1], result.observation[-2:]))

    def test_terminates_on_target(self):
        self.env.reset(_instance((0, 25)))
        result = self.env.step(DeviceAction(0, 0))
        self.assertTrue(result.reached)
        self.assertTrue(result.terminated)
        self.assertFalse(result.truncated)
        self.assertGreater(result.reward, 0.99)
        with self.assertRaises(EpisodeFinishedError):
            self.env.step(DeviceAction(0, 0))

    def test_truncates(self):
        env = NavigationEnv(y_tree(), EnvConfig(max_steps=3))
        env.reset(_instance((0, 130)))
        results = [env.step(DeviceAction(0, 0)) for _ in range(3)]
        self.assertEqual([False, False, True], [r.truncated for r in results])
        self.assertFalse(any(r.terminated for r in results))
        self.assertEqual(3, env.step_index)

    def test_reset_reuses_env(self):
        env = NavigationEnv(y_tree(), EnvConfig(max_steps=1))
        env.reset(_instance((0, 130)))
        env.step(DeviceAction(0, 0))
        self.assertTrue(env.done)
        env.reset(_instance((0, 130)))
        self.assertFalse(env.done)
        self.assertEqual(0, env.step_index)

    def test_device_config_from_dict(self):
        config = EnvConfig(device={"dt": 0.2})
        self.assertEqual(0.2, config.device.dt)

    def test_rewards_telescope(self):
        rng = np.random.default_rng(5)
        for target, reaches in (((0, 130), False), ((0, 60), True)):
            env = NavigationEnv(y_tree())
            env.reset(_instance(target))
            initial, total, steps, result = env.pathlength, 0.0, 0, None
            while not env.done and steps < 30:
                translation = 40 if reaches else rng.uniform(-40, 40)
                result = env.step(DeviceAction(rng.uniform(-30, 30), translation))
                total += result.reward
                steps += 1
            expected = -(env.pathlength - initial) * 0.001 - steps * 0.00015
            self.assertEqual(reaches, result.reached)
            self.assertAlmostEqual(expected + reaches, total, places=9)


class TestTrajectoryWriter(unittest.TestCase):
    def test_records(self):
        env = NavigationEnv(y_tree())
        instance = _instance((0, 130))
        obs = env.reset(instance)
        action = DeviceAction(0, 40)
        result = env.step(action)
        with TemporaryDirectory() as d:
            path = os.path.join(d, "logs", "A1.jsonl")
            with TrajectoryWriter(path) as writer:
                writer.write(3, instance, 0, obs, action.normalized(), result)
            with open(path) as f:
                lines = f.read().splitlines()
        self.assertEqual(1, len(lines))
        record = json.loads(lines[0])
        self.assertEqual(3, record["episode"])
        self.assertEqual("A1", record["task"])
        self.assertEqual("y", record["tree"])
        self.assertEqual([0.0, 1.0], record["action"])
        self.assertEqual(OBS_SIZE, len(record["next_obs"]))
        self.assertFalse(record["terminated"])
