"""Linear-fit residual of TCP timestamp values against arrival time."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class TcpTsSample:
    t: float
    v: int


def tcpts_lls_error(samples: Sequence[TcpTsSample]) -> Optional[float]:
    """
    Fit v = a*t + b by ordinary least squares and return the RMS residual.

    Both axes are centred before the fit, so shifting all t or all v by a
    constant leaves the result unchanged.

    Returns:
        Root-mean-square residual, or None with fewer than two samples or when
        every sample shares the same t
    """
    if len(samples) < 2:
        return None

    t = np.array([sample.t for sample in samples], dtype=np.float64)
    v = np.array([sample.v for sample in samples], dtype=np.float64)

    t_centered = t - t.mean()
    v_centered = v - v.mean()
    spread = float(np.dot(t_centered, t_centered))
    if spread == 0.0:
        return None

    slope = float(np.dot(t_centered, v_centered)) / spread
    residuals = v_centered - slope * t_centered
    return float(np.sqrt(np.mean(residuals ** 2)))
