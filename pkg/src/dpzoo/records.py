"""Metrics CSV and binary checkpoints."""

import io
import math
import struct
from dataclasses import astuple, dataclass

import numpy as np

METRICS_HEADER = ("stage", "iteration", "loss", "beta", "eta", "sigma", "clip_fraction",
                  "grad_norm_estimate", "epsilon_spent_estimate")

MAGIC = b"DPZOCKPT"


@dataclass(frozen=True)
class MetricsRow:
    stage: int
    iteration: int
    loss: float
    beta: float
    eta: float
    sigma: float
    clip_fraction: float
    grad_norm_estimate: float
    epsilon_spent_estimate: float


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


class MetricsLog:
    """Append-only per-step metrics; serialises to a fixed-schema CSV."""

    def __init__(self):
        self.rows = []

    def append(self, row):
        if not 0.0 <= row.clip_fraction <= 1.0:
            raise ValueError(f"clip_fraction {row.clip_fraction} outside [0, 1]")
        if self.rows and row.epsilon_spent_estimate < self.rows[-1].epsilon_spent_estimate:
            raise ValueError("epsilon_spent_estimate must be non-decreasing")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(METRICS_HEADER) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(v) for v in astuple(row)) + "\n")
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path):
        log = cls()
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split(",")
            if tuple(header) != METRICS_HEADER:
                raise ValueError(f"{path}: unexpected metrics header {header}")
            for line in fh:
                f = line.rstrip("\n").split(",")
                log.rows.append(MetricsRow(int(f[0]), int(f[1]), *(float(v) for v in f[2:])))
        return log


@dataclass(eq=False)
class Checkpoint:
    theta: np.ndarray
    mask: np.ndarray
    importance_diag: np.ndarray

    @property
    def dim(self):
        return self.theta.shape[0]

    def to_bytes(self):
        d = self.theta.shape[0]
        if self.mask.shape != (d,) or self.importance_diag.shape != (d,):
            raise ValueError("checkpoint arrays must share one length")
        return b"".join([
            MAGIC,
            struct.pack("<Q", d),
            np.asarray(self.theta, dtype="<f8").tobytes(),
            np.asarray(self.mask, dtype=bool).astype(np.uint8).tobytes(),
            np.asarray(self.importance_diag, dtype="<f8").tobytes(),
        ])

    @classmethod
    def from_bytes(cls, blob):
        if blob[:8] != MAGIC:
            raise ValueError("not a checkpoint: bad magic bytes")
        (d,) = struct.unpack_from("<Q", blob, 8)
        expected = 16 + 8 * d + d + 8 * d
        if len(blob) != expected:
            raise ValueError(f"checkpoint length {len(blob)} != expected {expected}")
        pos = 16
        theta = np.frombuffer(blob, dtype="<f8", count=d, offset=pos).astype(np.float64)
        pos += 8 * d
        raw_mask = np.frombuffer(blob, dtype=np.uint8, count=d, offset=pos)
        if np.any(raw_mask > 1):
            raise ValueError("mask bytes must be 0 or 1")
        pos += d
        diag = np.frombuffer(blob, dtype="<f8", count=d, offset=pos).astype(np.float64)
        return cls(theta, raw_mask.astype(bool), diag)

    def write(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
