"""Boundary calibration and the online Faulty / Fault-Free decision."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InsufficientCalibration, InvalidConfig, InvalidFingerprint

MIN_CALIBRATION = 20
DEFAULT_Q_LOW = 0.025
DEFAULT_Q_HIGH = 0.975
DEFAULT_Z = 2.0


class Status(str, enum.Enum):
    FAULTY = "Faulty"
    FAULT_FREE = "FaultFree"


@dataclass(frozen=True)
class Verdict:
    status: Status
    fingerprint: float


@dataclass(frozen=True)
class FingerprintBoundary:
    l: float
    h: float
    q_low: float = DEFAULT_Q_LOW
    q_high: float = DEFAULT_Q_HIGH
    z_threshold: float = DEFAULT_Z
    n_calibration: int = 0

    def __post_init__(self):
        if not self.l <= self.h:
            raise InvalidConfig(f"boundary needs l <= h, got ({self.l}, {self.h})")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FingerprintBoundary":
        keys = {"l", "h", "q_low", "q_high", "z_threshold", "n_calibration"}
        if set(d) != keys:
            raise InvalidConfig(f"boundary fields must be exactly {sorted(keys)}")
        return cls(float(d["l"]), float(d["h"]), float(d["q_low"]), float(d["q_high"]),
                   float(d["z_threshold"]), int(d["n_calibration"]))


def zscore_filter(x: np.ndarray, z_threshold: float) -> np.ndarray:
    """Samples with ``|x - mean| / std < z_threshold`` (single pass, population std)."""
    sigma = x.std()
    if sigma == 0 or not np.isfinite(z_threshold):
        return x
    return x[np.abs(x - x.mean()) / sigma < z_threshold]


def calibrate_boundary(fingerprints, q_low: float = DEFAULT_Q_LOW, q_high: float = DEFAULT_Q_HIGH,
                       z_threshold: float = DEFAULT_Z) -> FingerprintBoundary:
    x = np.asarray(fingerprints, dtype=np.float64).ravel()
    if len(x) < MIN_CALIBRATION:
        raise InsufficientCalibration(f"need at least {MIN_CALIBRATION} fingerprints, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise InsufficientCalibration("calibration fingerprints must be finite")
    if not 0 < q_low < q_high < 1:
        raise InvalidConfig(f"quantile levels must satisfy 0 < q_low < q_high < 1, got ({q_low}, {q_high})")
    if not z_threshold > 0:
        raise InvalidConfig("z_threshold must be positive")
    # sorting first makes mean/std (and so the filter) independent of input order
    x = np.sort(x)
    kept = zscore_filter(x, z_threshold)
    l, h = np.quantile(kept, [q_low, q_high], method="linear")
    return FingerprintBoundary(float(l), float(h), q_low, q_high, float(z_threshold), len(x))


def adjust_boundary(b: FingerprintBoundary, new_q_low: float, new_q_high: float, fingerprints) -> FingerprintBoundary:
    """Recalibrate at new quantile levels, keeping the Z-score threshold of ``b``."""
    return calibrate_boundary(fingerprints, new_q_low, new_q_high, b.z_threshold)


def classify(F: float, b: FingerprintBoundary) -> Verdict:
    F = float(F)
    if np.isnan(F):
        raise InvalidFingerprint("fingerprint is NaN")
    faulty = F < b.l or F > b.h
    return Verdict(Status.FAULTY if faulty else Status.FAULT_FREE, F)


def classify_batch(fingerprints: np.ndarray, b: FingerprintBoundary) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized decision.  Returns ``(faulty, invalid)``; NaN counts as faulty and invalid."""
    f = np.asarray(fingerprints, dtype=np.float64)
    invalid = np.isnan(f)
    with np.errstate(invalid="ignore"):
        faulty = (f < b.l) | (f > b.h) | invalid
    return faulty, invalid
