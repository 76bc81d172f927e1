"""Occupancy grids, maze tasks, and the world/pixel projection.

Grid cells are 0 for walls and 1 for free space, row-major with row 0 at the
top of the ASCII layout. World coordinates put x along columns and y along
rows, so world (x, y) lives in cell (row, col) = (floor(y/block), floor(x/block)).
"""
from dataclasses import dataclass

import numpy as np

BLOCK_SIZE = 4.0


class MazeParseError(ValueError):
    pass


@dataclass(frozen=True)
class OccupancyGrid:
    cells: np.ndarray  # (height, width) uint8, wall=0 free=1
    block_size: float = BLOCK_SIZE

    @property
    def height(self):
        return self.cells.shape[0]

    @property
    def width(self):
        return self.cells.shape[1]

    def __post_init__(self):
        c = self.cells
        if c.ndim != 2 or not np.isin(c, (0, 1)).all():
            raise MazeParseError("grid cells must be a 2D 0/1 array")
        border = np.concatenate([c[0], c[-1], c[:, 0], c[:, -1]])
        if border.any():
            raise MazeParseError("grid border must be entirely wall")
        if not c.any():
            raise MazeParseError("grid needs at least one free cell")

    def is_free_world(self, pos):
        x, y = float(pos[0]), float(pos[1])
        if not (0.0 <= x < self.width * self.block_size
                and 0.0 <= y < self.height * self.block_size):
            return False
        row, col = int(y // self.block_size), int(x // self.block_size)
        return bool(self.cells[row, col])


@dataclass(frozen=True)
class MazeTask:
    grid: OccupancyGrid
    start: tuple  # world (x, y)
    goal: tuple
    name: str = "maze"

    def __post_init__(self):
        for label, pos in (("start", self.start), ("goal", self.goal)):
            if not self.grid.is_free_world(pos):
                raise MazeParseError(f"{label} {pos} is not inside a free cell")
        if not reachable(self.grid, proj(self.start, self.grid), proj(self.goal, self.grid)):
            raise MazeParseError("goal is not reachable from start")


def proj(world_pos, grid):
    """World (x, y) -> pixel (row, col)."""
    x, y = float(world_pos[0]), float(world_pos[1])
    if not (0.0 <= x < grid.width * grid.block_size
            and 0.0 <= y < grid.height * grid.block_size):
        raise ValueError(f"position {world_pos} outside grid bounds")
    return int(y // grid.block_size), int(x // grid.block_size)


def proj_inv(pixel, grid):
    """Pixel (row, col) -> world (x, y) at the block center."""
    row, col = int(pixel[0]), int(pixel[1])
    if not (0 <= row < grid.height and 0 <= col < grid.width):
        raise ValueError(f"pixel {pixel} outside grid")
    b = grid.block_size
    return ((col + 0.5) * b, (row + 0.5) * b)


def block_center(row, col, block_size=BLOCK_SIZE):
    return ((col + 0.5) * block_size, (row + 0.5) * block_size)


def reachable(grid, start_px, goal_px):
    """4-neighborhood BFS over free cells."""
    if not grid.cells[start_px] or not grid.cells[goal_px]:
        return False
    seen = np.zeros_like(grid.cells, dtype=bool)
    seen[start_px] = True
    frontier = [start_px]
    while frontier:
        nxt = []
        for r, c in frontier:
            if (r, c) == tuple(goal_px):
                return True
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < grid.height and 0 <= cc < grid.width \
                        and grid.cells[rr, cc] and not seen[rr, cc]:
                    seen[rr, cc] = True
                    nxt.append((rr, cc))
        frontier = nxt
    return False


def render_topdown(grid):
    """One float64 pixel per block: 0 wall, 1 corridor."""
    return grid.cells.astype(np.float64)


def load_maze(text, name="maze", block_size=BLOCK_SIZE):
    """Parse the ASCII format: '#' wall, '.' free, one 'S' and one 'G'; ';' comments."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.startswith(";"):
            continue
        if raw.strip() == "":
            continue
        lines.append((lineno, raw))
    if not lines:
        raise MazeParseError("empty maze text")
    width = len(lines[0][1])
    cells = np.zeros((len(lines), width), dtype=np.uint8)
    start_px = goal_px = None
    for i, (lineno, line) in enumerate(lines):
        if len(line) != width:
            raise MazeParseError(f"line {lineno}: length {len(line)} != {width}")
        for j, ch in enumerate(line):
            if ch == "#":
                continue
            if ch in ".SG":
                cells[i, j] = 1
                if ch == "S":
                    if start_px is not None:
                        raise MazeParseError(f"line {lineno}, column {j + 1}: duplicate 'S'")
                    start_px = (i, j)
                elif ch == "G":
                    if goal_px is not None:
                        raise MazeParseError(f"line {lineno}, column {j + 1}: duplicate 'G'")
                    goal_px = (i, j)
            else:
                raise MazeParseError(f"line {lineno}, column {j + 1}: bad character {ch!r}")
    if start_px is None:
        raise MazeParseError("no start 'S' in maze")
    if goal_px is None:
        raise MazeParseError("no goal 'G' in maze")
    grid = OccupancyGrid(cells, block_size)
    return MazeTask(grid, block_center(*start_px, block_size),
                    block_center(*goal_px, block_size), name=name)


def dump_maze(task):
    """Inverse of load_maze (start/goal snapped to their blocks)."""
    grid = task.grid
    rows = []
    spx, gpx = proj(task.start, grid), proj(task.goal, grid)
    for i in range(grid.height):
        row = []
        for j in range(grid.width):
            if (i, j) == spx:
                row.append("S")
            elif (i, j) == gpx:
                row.append("G")
            else:
                row.append(".#"[1 - int(grid.cells[i, j])])
        rows.append("".join(row))
    return "\n".join(rows) + "\n"


def mirror(task):
    """Flip grid, start, and goal left-right about the vertical center line."""
    grid = task.grid
    flipped = OccupancyGrid(np.ascontiguousarray(grid.cells[:, ::-1]), grid.block_size)
    span = grid.width * grid.block_size

    def flip(pos):
        return (span - pos[0], pos[1])

    return MazeTask(flipped, flip(task.start), flip(task.goal), name=task.name)


def swap(task):
    return MazeTask(task.grid, task.goal, task.start, name=task.name)
