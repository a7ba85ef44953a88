"""Measurement-driven entanglement engineering on a central-spin system.

Exact density-matrix simulation of one controllable spin coupled to a
small bath, an episodic environment whose actions are projective
measurements of the central spin, a from-scratch deep Q-learning agent
that searches for measurement sequences preparing entangled bath states,
and tooling to replay, enumerate, and analyze those sequences.
"""

__version__ = "0.1.0"

from . import agent, cli, config, env, errors, linalg, model, network, sequences
from .env import EnvConfig, QSEEnv
from .model import ModelParams

__all__ = [
    "__version__",
    "agent",
    "cli",
    "config",
    "env",
    "errors",
    "linalg",
    "model",
    "network",
    "sequences",
    "EnvConfig",
    "QSEEnv",
    "ModelParams",
]
