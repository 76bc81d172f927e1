"""Procedural maze generation and random-maze suite files."""
import hashlib
from pathlib import Path

import numpy as np

from .grid import (MazeParseError, MazeTask, OccupancyGrid, block_center,
                   dump_maze, load_maze, reachable)

MAX_REJECTIONS = 1000


class MazeGenerationError(RuntimeError):
    pass


def generate_random_maze(rng, width, height, p_empty=0.7, min_dist=5,
                         block_size=4.0, name="random"):
    """Random maze: interior cells free with probability p_empty, walled border.

    Start and goal are sampled uniformly over free cells at Euclidean block
    distance >= min_dist; candidates with adjacent or unreachable start/goal
    are discarded and the whole maze is resampled.
    """
    if width < 5 or height < 5:
        raise ValueError("maze must be at least 5x5 blocks")
    for _ in range(MAX_REJECTIONS):
        cells = np.zeros((height, width), dtype=np.uint8)
        interior = (rng.random(size=(height - 2, width - 2)) < p_empty)
        cells[1:-1, 1:-1] = interior
        free = np.argwhere(cells == 1)
        if len(free) < 2:
            continue
        start_px = tuple(free[rng.integers(len(free))])
        goal_px = tuple(free[rng.integers(len(free))])
        dr, dc = start_px[0] - goal_px[0], start_px[1] - goal_px[1]
        if np.hypot(dr, dc) < min_dist or max(abs(dr), abs(dc)) <= 1:
            continue
        try:
            grid = OccupancyGrid(cells, block_size)
        except MazeParseError:
            continue
        if not reachable(grid, start_px, goal_px):
            continue
        return MazeTask(grid, block_center(*start_px, block_size),
                        block_center(*goal_px, block_size), name=name)
    raise MazeGenerationError(
        f"no valid {width}x{height} maze after {MAX_REJECTIONS} attempts")


def write_suite(out_dir, seed, count, width, height, p_empty=0.7, min_dist=5):
    """Write numbered .maze files plus a manifest listing per-maze seeds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).spawn(count)
    lines = [f"seed={seed}", f"count={count}", f"size={width}x{height}"]
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        task = generate_random_maze(rng, width, height, p_empty=p_empty,
                                    min_dist=min_dist, name=f"random-{i:03d}")
        (out / f"{i:03d}.maze").write_text(dump_maze(task))
        lines.append(f"maze {i:03d} entropy={ss.entropy} spawn_key={ss.spawn_key}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    return out


def load_suite(suite_dir):
    """Tasks from a suite directory, ordered by file name."""
    out = Path(suite_dir)
    if not (out / "manifest.txt").exists():
        raise FileNotFoundError(f"no manifest.txt in {suite_dir}")
    tasks = []
    for path in sorted(out.glob("*.maze")):
        tasks.append(load_maze(path.read_text(), name=path.stem))
    if not tasks:
        raise FileNotFoundError(f"no .maze files in {suite_dir}")
    return tasks


def suite_digest(suite_dir):
    """Stable digest of all suite file bytes, for reproducibility checks."""
    h = hashlib.sha256()
    for path in sorted(Path(suite_dir).iterdir()):
        if path.suffix == ".maze" or path.name == "manifest.txt":
            h.update(path.name.encode())
            h.update(path.read_bytes())
    return h.hexdigest()
