import dataclasses
import unittest

import numpy as np

from endonav.anatomy import AnatomyParams, generate_synthetic_tree
from endonav.device import (
    DeviceAction,
    DeviceConfig,
    body_violations,
    local_direction,
    reset_device,
    step_device,
    tip_tracking,
)
from endonav.env import TaskId, sample_task
from endonav.exceptions import OutsideLumenError, TimeStepError
from endonav.geometry import nearest_lumen_point

from ._shared import y_tree


class TestAction(unittest.TestCase):
    def test_clip(self):
        action = DeviceAction(500, -100)
        self.assertEqual(180, action.rotation_rate)
        self.assertEqual(-40, action.translation_rate)

    def test_normalized(self):
        action = DeviceAction.from_normalized([2, -0.5])
        self.assertEqual((180, -20), (action.rotation_rate, action.translation_rate))
        self.assertTrue(np.allclose([1, -0.5], action.normalized()))


class TestReset(unittest.TestCase):
    def setUp(self):
        self.tree = y_tree()

    def test_body(self):
        state = reset_device(self.tree, (0, 20))
        self.assertTrue(np.allclose([0, 20], state.tip))
        self.assertAlmostEqual(np.pi / 2, state.tip_heading)
        self.assertAlmostEqual(4.0, state.inserted_length)
        self.assertTrue(np.allclose([[0, 20], [0, 18], [0, 16]], tip_tracking(state)))

    def test_outside(self):
        with self.assertRaises(OutsideLumenError):
            reset_device(self.tree, (30, 20))


class TestStep(unittest.TestCase):
    def setUp(self):
        self.tree = y_tree()
        self.config = DeviceConfig()
        self.state = reset_device(self.tree, (0, 20), self.config)

    def step(self, state, rotation, translation):
        action = DeviceAction(rotation, translation)
        return step_device(state, action, self.config.dt, self.tree, self.config)

    def test_advance(self):
        state = self.step(self.state, 0, 40)
        self.assertTrue(np.allclose([0, 20 + 40 * self.config.dt], state.tip))
        self.assertAlmostEqual(4 + 40 * self.config.dt, state.inserted_length)

    def test_retract(self):
        state = self.step(self.step(self.state, 0, 40), 0, -40)
        self.assertTrue(np.allclose([0, 20], state.tip))
        self.assertAlmostEqual(4.0, state.inserted_length)

    def test_retract_past_insertion(self):
        state = self.state
        for _ in range(5):
            state = self.step(state, 0, -40)
        self.assertEqual(0.0, state.inserted_length)
        self.assertTrue(np.allclose([0, 16], state.tip))

    def test_rotate(self):
        state = self.step(self.state, 180, 0)
        self.assertTrue(np.array_equal(self.state.tip, state.tip))
        self.assertAlmostEqual(
            self.state.tip_heading + np.radians(180 * self.config.dt), state.tip_heading
        )

    def test_slides_along_wall(self):
        sideways = dataclasses.replace(self.state, tip_heading=0.0)
        state = sideways
        for _ in range(4):
            state = self.step(state, 0, 40)
        self.assertEqual(0, body_violations(self.tree, state))
        self.assertGreater(state.tip[1], 20, "Sliding should make progress up the vessel")

    def test_stays_in_lumen(self):
        rng = np.random.default_rng(0)
        state = self.state
        for _ in range(150):
            state = self.step(state, rng.uniform(-180, 180), rng.uniform(0, 40))
            self.assertEqual(0, body_violations(self.tree, state))

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        actions = rng.uniform([-180, -40], [180, 40], size=(30, 2))
        a, b = self.state, self.state
        for rotation, translation in actions:
            a = self.step(a, rotation, translation)
            b = self.step(b, rotation, translation)
        self.assertEqual(a, b)

    def test_time_step(self):
        with self.assertRaises(TimeStepError):
            step_device(self.state, DeviceAction(0, 10), 0.0, self.tree)


class TestJunction(unittest.TestCase):
    def test_heading_picks_child(self):
        tree = y_tree()
        left = local_direction(tree, np.array([0.0, 140.0]), np.radians(120))
        right = local_direction(tree, np.array([0.0, 140.0]), np.radians(60))
        self.assertTrue(np.allclose(np.array([-20, 40]) / np.hypot(20, 40), left))
        self.assertTrue(np.allclose(np.array([20, 40]) / np.hypot(20, 40), right))

    def test_reverse_along_parent(self):
        tree = y_tree()
        down = local_direction(tree, np.array([0.0, 140.0]), -np.pi / 2)
        self.assertTrue(np.allclose([0, -1], down))

    def test_tangent_between_junctions(self):
        tree = y_tree()
        up = local_direction(tree, np.array([0.0, 90.0]), np.radians(80))
        down = local_direction(tree, np.array([0.0, 90.0]), np.radians(-100))
        self.assertTrue(np.allclose([0, 1], up))
        self.assertTrue(np.allclose([0, -1], down))


class TestJunctionSteering(unittest.TestCase):
    def test_heading_follows_child(self):
        tree = y_tree()
        config = DeviceConfig()
        state = reset_device(tree, (0, 136), config)
        state = dataclasses.replace(state, tip_heading=np.radians(70))
        for _ in range(3):
            state = step_device(state, DeviceAction(0, 40), config.dt, tree, config)
        self.assertAlmostEqual(np.arctan2(40, 20), state.tip_heading, delta=0.01)
        self.assertEqual(3, nearest_lumen_point(tree, state.tip).branch)
        self.assertEqual(0, body_violations(tree, state))


def _synthetic_trees(seeds):
    return [generate_synthetic_tree(AnatomyParams(), seed) for seed in seeds]


def _roll(tree, start, actions, config, heading=None):
    state = reset_device(tree, start, config)
    if heading is not None:
        state = dataclasses.replace(state, tip_heading=heading)
    for rotation, translation in actions:
        action = DeviceAction(rotation, translation)
        state = step_device(state, action, config.dt, tree, config)
    return state


class TestContainment(unittest.TestCase):
    def test_random_actions(self):
        config = DeviceConfig()
        rng = np.random.default_rng(7)
        for seed, tree in enumerate(_synthetic_trees(range(3))):
            for task in TaskId:
                with self.subTest(seed=seed, task=task.value):
                    instance = sample_task(task, tree, rng)
                    state = reset_device(tree, instance.start, config)
                    for rotation, translation in rng.uniform(
                        [-180, -40], [180, 40], size=(60, 2)
                    ):
                        action = DeviceAction(rotation, translation)
                        state = step_device(state, action, config.dt, tree, config)
                        self.assertEqual(0, body_violations(tree, state, 1e-6))

    def test_retract_around_bend(self):
        tree = y_tree()
        config = DeviceConfig()
        state = _roll(tree, (0, 130), [(0, 40)] * 6, config, np.radians(63))
        for _ in range(8):
            state = step_device(state, DeviceAction(0, -17), config.dt, tree, config)
            self.assertEqual(0, body_violations(tree, state, 1e-6))


class TestRefinement(unittest.TestCase):
    def assertRefines(self, tree, start, actions, heading=None):
        coarse = _roll(tree, start, actions, DeviceConfig(substep=0.5), heading)
        fine = _roll(tree, start, actions, DeviceConfig(substep=0.25), heading)
        self.assertLess(np.linalg.norm(coarse.tip - fine.tip), 0.1)

    def test_wall_slide(self):
        self.assertRefines(y_tree(), (0, 20), [(0, 40)] * 4, heading=0.0)

    def test_junction(self):
        self.assertRefines(y_tree(), (0, 136), [(0, 40)] * 3, heading=np.radians(70))

    def test_descending_aorta(self):
        rng = np.random.default_rng(0)
        for seed, tree in enumerate(_synthetic_trees(range(5))):
            with self.subTest(seed=seed):
                start = sample_task(TaskId.A1, tree, rng).start
                self.assertRefines(tree, start, [(0, 40)] * 20)
