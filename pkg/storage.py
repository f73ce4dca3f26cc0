import csv
import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from config import settings
from errors import ConfigError
from integrator import TrajectorySet
from metrics import CurvePoint

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["step", "t", "mean_w1", "stderr", "n_paths"]
TRAJECTORY_MAGIC = b"MKVTRAJ1"
# d, N, n_steps, dt, seed
TRAJECTORY_HEADER = struct.Struct("<8sqqqdQ")


def curve_filename(value: float) -> str:
    return f"curve_{value:g}.csv"


class ResultStorage:
    """Writes and reads experiment artifacts under one output directory"""

    def __init__(self, output_dir: Optional[str] = None):
        """
        Initialize result storage
        Args:
            output_dir: Directory for curves, reports and figures
        """
        self.output_dir = Path(output_dir or settings.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def path(self, filename: str) -> Path:
        return self.output_dir / filename

    def save_curve(self, curve: Sequence[CurvePoint], filename: str) -> Path:
        """
        Save a mean W1 curve as CSV
        Args:
            curve: Curve points in checkpoint order
            filename: File name inside the output directory
        Returns:
            Path to the written file
        """
        filepath = self.path(filename)
        with open(filepath, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CURVE_COLUMNS)
            for p in curve:
                # repr keeps every float exact on reload
                writer.writerow([p.step, repr(p.t), repr(p.mean_w1), repr(p.stderr), p.n_paths])
        logger.info(f"Wrote {filepath}")
        return filepath

    def load_curve(self, filepath: Union[str, Path]) -> List[CurvePoint]:
        """
        Load a curve written by save_curve
        Args:
            filepath: CSV path
        Returns:
            List of CurvePoint
        """
        with open(filepath, "r", newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames[:4] != CURVE_COLUMNS[:4]:
                raise ConfigError(f"{filepath} is not a curve file (columns {reader.fieldnames})")
            return [CurvePoint(int(row["step"]), float(row["t"]), float(row["mean_w1"]),
                               float(row["stderr"]), int(row.get("n_paths") or 0)) for row in reader]

    def save_table(self, columns: Dict[str, Sequence], filename: str) -> Path:
        """Column-oriented CSV; integer columns stay integers"""
        names = list(columns)
        lengths = {len(columns[n]) for n in names}
        if len(lengths) != 1:
            raise ConfigError(f"columns of {filename} differ in length")
        filepath = self.path(filename)
        with open(filepath, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(names)
            for row in zip(*(columns[n] for n in names)):
                writer.writerow([v if isinstance(v, (int, np.integer)) else repr(float(v)) for v in row])
        logger.info(f"Wrote {filepath}")
        return filepath

    def save_report(self, report: Dict, filename: str = "report.json") -> Path:
        filepath = self.path(filename)
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True, allow_nan=True)
            f.write("\n")
        logger.info(f"Wrote {filepath}")
        return filepath

    def load_report(self, filename: str = "report.json") -> Dict:
        with open(self.path(filename), "r", encoding="utf-8") as f:
            return json.load(f)

    def save_trajectories_binary(self, traj: TrajectorySet, filename: str) -> Path:
        """
        Binary export: header (magic, d, N, n_steps, dt, seed) then little-endian float64 states
        Args:
            traj: Trajectories
            filename: File name inside the output directory
        Returns:
            Path to the written file
        """
        filepath = self.path(filename)
        header = TRAJECTORY_HEADER.pack(TRAJECTORY_MAGIC, traj.dimension, traj.n_paths, traj.n_steps,
                                        traj.dt, traj.seed & ((1 << 64) - 1))
        with open(filepath, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(traj.states, dtype="<f8").tobytes())
        logger.info(f"Wrote {filepath}")
        return filepath

    def load_trajectories_binary(self, filepath: Union[str, Path]) -> TrajectorySet:
        data = Path(filepath).read_bytes()
        if len(data) < TRAJECTORY_HEADER.size:
            raise ConfigError(f"{filepath} is too short for a trajectory file")
        magic, d, n_paths, n_steps, dt, seed = TRAJECTORY_HEADER.unpack_from(data)
        if magic != TRAJECTORY_MAGIC:
            raise ConfigError(f"{filepath} is not a trajectory file")
        states = np.frombuffer(data, dtype="<f8", offset=TRAJECTORY_HEADER.size)
        expected = n_paths * (n_steps + 1) * d
        if states.size != expected:
            raise ConfigError(f"{filepath} holds {states.size} values, header promises {expected}")
        states = states.astype(np.float64).reshape(n_paths, n_steps + 1, d)
        return TrajectorySet(times=np.arange(n_steps + 1) * dt, states=states, seed=int(seed),
                             stream_ids=np.arange(n_paths))

    def save_trajectories_csv(self, traj: TrajectorySet, filename: str) -> Path:
        """CSV export with columns path, step, t, x1..xd"""
        filepath = self.path(filename)
        with open(filepath, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["path", "step", "t"] + [f"x{i + 1}" for i in range(traj.dimension)])
            for p in range(traj.n_paths):
                for k in range(traj.n_steps + 1):
                    writer.writerow([p, k, repr(float(traj.times[k]))]
                                    + [repr(float(v)) for v in traj.states[p, k]])
        logger.info(f"Wrote {filepath}")
        return filepath

    def load_trajectories_csv(self, filepath: Union[str, Path], seed: int = 0) -> TrajectorySet:
        with open(filepath, "r", newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader]
        if header[:3] != ["path", "step", "t"] or not rows:
            raise ConfigError(f"{filepath} is not a trajectory CSV")
        table = np.asarray(rows)
        n_paths = int(table[:, 0].max()) + 1
        n_steps = int(table[:, 1].max())
        d = len(header) - 3
        states = table[:, 3:].reshape(n_paths, n_steps + 1, d)
        return TrajectorySet(times=table[: n_steps + 1, 2].copy(), states=states, seed=seed,
                             stream_ids=np.arange(n_paths))
