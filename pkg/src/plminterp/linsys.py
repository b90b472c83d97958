"""Log-odds equations and the determined / overdetermined systems built from them.

Inside one locally linear region, ``ln(y_c) - ln(y_c') = D @ x + B`` where
``(D, B)`` are the weight and bias differences between classes ``c`` and ``c'``.
Each (instance, prediction) pair therefore gives one linear equation in the
``d + 1`` unknowns ``(B, D)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

# Relative residual below which the extra equation counts as consistent.
# Neighbouring ReLU regions agree on their shared face, so a sample just past
# it leaves a residual proportional to its distance; 1e-6 let such clouds
# through with O(1) feature errors, 1e-8 still clears float noise at r=2^-19.
EPS_SOLVE = 1e-8
RANK_RTOL = 1e-10
MIN_PROB = 1e-300


class SaturationError(ValueError):
    """A probability is too close to 0 (or 1) to take a usable log-ratio."""


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, msg, cond=np.inf):
        super().__init__(msg)
        self.cond = cond


@dataclass(frozen=True)
class CoreParams:
    D: np.ndarray
    B: float
    cond: float = float("nan")


def make_equation(x, y, c: int, c2: int) -> tuple[np.ndarray, float]:
    """Coefficient row ``[1, x_1, ..., x_d]`` and right-hand side ``ln y_c - ln y_c2``."""
    if c == c2:
        raise ValueError("class pair must be distinct")
    yc, yc2 = float(y[c]), float(y[c2])
    if yc < MIN_PROB or yc2 < MIN_PROB:
        raise SaturationError(f"probabilities y[{c}]={yc!r}, y[{c2}]={yc2!r} are saturated")
    row = np.concatenate(([1.0], np.asarray(x, dtype=np.float64)))
    return row, float(np.log(yc) - np.log(yc2))


def assemble(xs, ys, c: int, c2: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack :func:`make_equation` over paired instances and predictions."""
    rows, rhs = zip(*(make_equation(x, y, c, c2) for x, y in zip(xs, ys)))
    return np.array(rows), np.array(rhs)


def _solve_square(A: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"coefficient matrix must be square, got {A.shape}")
    s = np.linalg.svd(A, compute_uv=False)
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    if s[-1] < RANK_RTOL * s[0]:
        raise SingularSystemError(f"numerically singular system (cond={cond:.3g})", cond)
    return np.linalg.solve(A, rhs), float(cond)


def is_full_rank(A: np.ndarray) -> bool:
    s = np.linalg.svd(A, compute_uv=False)
    return bool(s[-1] >= RANK_RTOL * s[0])


def solve_determined(A: np.ndarray, rhs: np.ndarray) -> CoreParams:
    """Unique solution of the square (d+1)-equation system."""
    A = np.asarray(A, dtype=np.float64)
    sol, cond = _solve_square(A, np.asarray(rhs, dtype=np.float64))
    return CoreParams(D=sol[1:], B=float(sol[0]), cond=cond)


def check_overdetermined(A: np.ndarray, rhs: np.ndarray, eps: float = EPS_SOLVE) -> CoreParams | None:
    """Solve the first d+1 equations and test the last one against the solution.

    Returns the solution when the held-out equation is satisfied to a relative
    residual of ``eps``; otherwise ``None``. A singular leading block is also
    reported as ``None`` so the caller resamples.
    """
    A = np.asarray(A, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = A.shape[1]
    if A.shape[0] != n + 1:
        raise ValueError(f"expected {n + 1} equations for {n} unknowns, got {A.shape[0]}")
    try:
        sol, cond = _solve_square(A[:n], rhs[:n])
    except SingularSystemError as err:
        logger.info("leading block singular, resampling: %s", err)
        return None
    residual = abs(A[n] @ sol - rhs[n])
    if residual > eps * max(1.0, abs(rhs[n])):
        return None
    return CoreParams(D=sol[1:], B=float(sol[0]), cond=cond)
