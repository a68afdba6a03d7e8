"""
Multi-task autonomous endovascular navigation

  ~ Steers a guidewire from the groin to the carotids!

A centerline vessel simulator with a kinematic guidewire, the five navigation tasks of
the first thrombectomy phase, a soft actor-critic baseline and a latent world model
planned with the cross-entropy method, plus the train, collect, evaluate and compare
pipeline around them.
"""

__version__ = "0.1.0"

from .agents import load_agent, make_agent
from .anatomy import AnatomyParams, generate_cohort, generate_synthetic_tree
from .config import RunConfig, resolve_config
from .device import DeviceAction, DeviceConfig, reset_device, step_device, tip_tracking
from .env import EnvConfig, NavigationEnv, TaskId, sample_task
from .exceptions import *
from .geometry import (
    VesselTree,
    augment_scale,
    join_and_scale,
    load_tree,
    nearest_lumen_point,
    path_length,
    save_tree,
    tortuosity,
)
from .harness import collect, evaluate, paired_t_test, summarize, train
