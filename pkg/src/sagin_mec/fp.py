"""Quadratic transform of the sum-of-ratios objective.

With auxiliary weights y, sum D/E equals max_y sum (2 y sqrt(D) - y^2 E); the
inner maximiser is y = sqrt(D) / E. Holding y fixed, every block update only has
to minimise sum y^2 E.
"""
from __future__ import annotations

import numpy as np

from .errors import InfeasibleDecision
from .model import Decision, energies
from .scenario import Scenario


def weights_from_energy(task_bits, e_sum) -> np.ndarray:
    e_sum = np.asarray(e_sum, dtype=float)
    if np.any(~np.isfinite(e_sum)) or np.any(e_sum <= 0):
        raise InfeasibleDecision("total energy must be positive and finite for every task")
    return np.sqrt(np.asarray(task_bits, dtype=float)) / e_sum


def update_weights(s: Scenario, d: Decision) -> np.ndarray:
    """y[m, n] = sqrt(D[m, n]) / E_sum[m, n]."""
    return weights_from_energy(s.task_bits, energies(s, d)[-1])


def surrogate_from_energy(task_bits, e_sum, y) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.sum(2.0 * y * np.sqrt(task_bits) - y ** 2 * np.asarray(e_sum)))


def surrogate_value(s: Scenario, d: Decision, y) -> float:
    """sum over (m, n) of 2 y sqrt(D) - y^2 E_sum."""
    return surrogate_from_energy(s.task_bits, energies(s, d)[-1], y)
