from .agents import (AGENTS, EPISODE_LIMIT, GOAL_EPS, POINT_MASS, UNICYCLE,
                     AgentSpec, EnvState, goal_reached, observe_internal,
                     reset, run_policy, step)
from .fixtures import FIXTURE_NAMES, fixture_text, load_fixture
from .generate import (MazeGenerationError, generate_random_maze, load_suite,
                       suite_digest, write_suite)
from .grid import (BLOCK_SIZE, MazeParseError, MazeTask, OccupancyGrid,
                   block_center, dump_maze, load_maze, mirror, proj, proj_inv,
                   reachable, render_topdown, swap)

__all__ = [
    "AGENTS", "EPISODE_LIMIT", "GOAL_EPS", "POINT_MASS", "UNICYCLE",
    "AgentSpec", "EnvState", "goal_reached", "observe_internal", "reset",
    "run_policy", "step", "FIXTURE_NAMES", "fixture_text", "load_fixture",
    "MazeGenerationError", "generate_random_maze", "load_suite",
    "suite_digest", "write_suite", "BLOCK_SIZE", "MazeParseError", "MazeTask",
    "OccupancyGrid", "block_center", "dump_maze", "load_maze", "mirror",
    "proj", "proj_inv", "reachable", "render_topdown", "swap",
]
