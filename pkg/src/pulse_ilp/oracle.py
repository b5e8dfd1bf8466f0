"""Exhaustive search over {0,1}^n: the brute-force baseline and ground truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import Instance

__all__ = ["MAX_ORACLE_N", "OracleLimitError", "OracleResult", "exhaustive_solve", "count_solutions"]

MAX_ORACLE_N = 30


class OracleLimitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OracleResult:
    solutions: np.ndarray  # (count, n) int64, in enumeration order
    enumerated: int

    @property
    def count(self) -> int:
        return self.solutions.shape[0]

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=np.int64)
        return bool(np.any(np.all(self.solutions == x, axis=1)))


def _check(inst: Instance) -> None:
    if inst.n > MAX_ORACLE_N:
        raise OracleLimitError(f"exhaustive search refuses n={inst.n} > {MAX_ORACLE_N}")


def _decode(ranks: np.ndarray, n: int) -> np.ndarray:
    codes = ranks ^ (ranks >> 1)
    return (codes[:, None] >> np.arange(n, dtype=np.int64)) & 1


def exhaustive_solve(inst: Instance, limit: int | None = None) -> OracleResult:
    """All binary solutions of ``C x = d``, visited in Gray-code order.

    Consecutive Gray codes differ in one bit, so ``C x`` is updated by a
    single column per candidate.  ``limit`` stops after that many solutions.
    """
    _check(inst)
    count, ranks = kernels.gray_search(inst.c, inst.d, limit or 0)
    enumerated = int(ranks[-1]) + 1 if limit and count >= limit else 1 << inst.n
    return OracleResult(_decode(ranks, inst.n).astype(np.int64), enumerated)


def count_solutions(inst: Instance) -> int:
    _check(inst)
    return kernels.gray_search(inst.c, inst.d)[0]
