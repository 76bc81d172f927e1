"""Append-only metrics rows with a fixed CSV schema."""
import csv
import io
from dataclasses import dataclass

COLUMNS = ["episode", "phase", "task", "success_rate", "planner_loss",
           "critic_loss", "actor_obj", "seconds"]
PHASES = ("train", "eval")


@dataclass(frozen=True)
class MetricsRow:
    episode: int
    phase: str
    task: str
    success_rate: float
    planner_loss: float
    critic_loss: float
    actor_obj: float
    seconds: float

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}")


def _num(x):
    if x != x:  # nan
        return "nan"
    return format(float(x), ".10g")


def format_row(row):
    return [str(row.episode), row.phase, row.task,
            format(row.success_rate, ".4f"), _num(row.planner_loss),
            _num(row.critic_loss), _num(row.actor_obj),
            format(row.seconds, ".1f")]


class MetricsWriter:
    """Streams rows to a CSV file; the header goes out immediately."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(COLUMNS)
        self._fh.flush()

    def write(self, row):
        self._writer.writerow(format_row(row))
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow(format_row(row))
    return buf.getvalue()


def parse_metrics(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != COLUMNS:
        raise ValueError(f"bad metrics header {header!r}")
    out = []
    for rec in reader:
        if not rec:
            continue
        out.append(MetricsRow(int(rec[0]), rec[1], rec[2], float(rec[3]),
                              float(rec[4]), float(rec[5]), float(rec[6]),
                              float(rec[7])))
    return out
