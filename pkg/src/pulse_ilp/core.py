"""Problem instances for 0-1 ILP feasibility: ``C x = d`` with ``x`` binary.

Instances are immutable.  Negative coefficients are handled by
:func:`normalize_signs`, which rewrites each affected variable of a row as
``1 - y`` so every coefficient the energy sees is non-negative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InstanceError",
    "DimensionMismatchError",
    "ZeroRowError",
    "ParseError",
    "Instance",
    "SignedInstance",
    "GenSpec",
    "make_instance",
    "normalize_signs",
    "generate_planted",
    "read_instance",
    "write_instance",
    "load_instance",
    "save_instance",
]

# Keeps every row dot product exact in int64 (and in float64 for the kernels).
_MAX_ROW_MAGNITUDE = 2**52


class InstanceError(ValueError):
    """Base class for malformed problem instances."""


class DimensionMismatchError(InstanceError):
    pass


class ZeroRowError(InstanceError):
    pass


class ParseError(InstanceError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    """Integer constraint matrix ``c`` (m x n) and target vector ``d``."""

    c: np.ndarray
    d: np.ndarray

    @property
    def m(self) -> int:
        return self.c.shape[0]

    @property
    def n(self) -> int:
        return self.c.shape[1]

    def is_solution(self, x) -> bool:
        """Exact integer check of ``C x == d`` for a binary vector."""
        x = np.asarray(x)
        if x.shape != (self.n,) or not np.all((x == 0) | (x == 1)):
            return False
        return bool(np.array_equal(self.c @ x.astype(np.int64), self.d))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return np.array_equal(self.c, other.c) and np.array_equal(self.d, other.d)

    def __hash__(self) -> int:
        return hash((self.c.tobytes(), self.d.tobytes(), self.c.shape))

    def __repr__(self) -> str:
        return f"Instance(m={self.m}, n={self.n})"


@dataclass(frozen=True, eq=False)
class SignedInstance:
    """Non-negative view of an :class:`Instance`.

    ``base.c`` holds ``|C|``; ``signs`` is +1 where the original coefficient
    was >= 0 and -1 where the variable was substituted by ``1 - y``.
    """

    original: Instance
    base: Instance
    signs: np.ndarray
    d_adj: np.ndarray
    row_sums: np.ndarray

    @property
    def m(self) -> int:
        return self.original.m

    @property
    def n(self) -> int:
        return self.original.n

    def local_coords(self, x) -> np.ndarray:
        """Per-constraint coordinates ``u``: ``x`` or ``1 - x`` at flipped positions (m x n)."""
        x = np.asarray(x, dtype=np.float64)
        return np.where(self.signs > 0, x[None, :], 1.0 - x[None, :])


@dataclass(frozen=True)
class GenSpec:
    m: int
    n: int
    r: int
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError(f"need m >= 1 and n >= 1, got m={self.m}, n={self.n}")
        if self.r < 1:
            raise ValueError(f"coefficient range r must be >= 1, got {self.r}")


def _as_int_array(a, ndim: int, name: str) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype == object or arr.dtype.kind == "f":
        # accept floats only when they are integral
        try:
            f = np.asarray(a, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise InstanceError(f"{name} must contain integers") from exc
        if not np.all(np.isfinite(f)) or not np.all(f == np.round(f)):
            raise InstanceError(f"{name} must contain integers")
        arr = f.astype(np.int64)
    elif arr.dtype.kind not in "iub":
        raise InstanceError(f"{name} must contain integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if arr.ndim != ndim:
        raise DimensionMismatchError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def make_instance(c, d) -> Instance:
    """Validate and freeze ``(c, d)``.

    Raises :class:`DimensionMismatchError` for shape problems and
    :class:`ZeroRowError` for constraint rows with no non-zero coefficient.
    """
    c = _as_int_array(c, 2, "c")
    d = _as_int_array(d, 1, "d")
    if c.shape[0] == 0 or c.shape[1] == 0:
        raise DimensionMismatchError(f"empty constraint matrix {c.shape}")
    if c.shape[0] != d.shape[0]:
        raise DimensionMismatchError(
            f"c has {c.shape[0]} rows but d has {d.shape[0]} entries"
        )
    mags = np.abs(c).sum(axis=1)
    zero = np.flatnonzero(mags == 0)
    if zero.size:
        raise ZeroRowError(f"constraint row {int(zero[0])} has all-zero coefficients")
    if mags.max() > _MAX_ROW_MAGNITUDE or np.abs(d).max() > _MAX_ROW_MAGNITUDE:
        raise InstanceError("coefficients too large for exact arithmetic")
    return Instance(_frozen(c), _frozen(d))


def normalize_signs(inst: Instance) -> SignedInstance:
    signs = np.where(inst.c < 0, -1, 1).astype(np.int64)
    mag = np.abs(inst.c)
    d_adj = inst.d + np.where(signs < 0, mag, 0).sum(axis=1)
    base = Instance(_frozen(mag), _frozen(d_adj))
    return SignedInstance(
        original=inst,
        base=base,
        signs=_frozen(signs),
        d_adj=_frozen(d_adj),
        row_sums=_frozen(mag.sum(axis=1)),
    )


def generate_planted(spec: GenSpec) -> tuple[Instance, np.ndarray]:
    """Random instance with a known solution.

    Coefficients are i.i.d. uniform on ``{0..r}``; all-zero rows are redrawn.
    The planted vector is uniform on ``{0,1}^n`` and ``d = C x*``.
    """
    rng = np.random.default_rng(spec.seed)
    c = rng.integers(0, spec.r + 1, size=(spec.m, spec.n), dtype=np.int64)
    while True:
        zero = np.flatnonzero(~c.any(axis=1))
        if zero.size == 0:
            break
        c[zero] = rng.integers(0, spec.r + 1, size=(zero.size, spec.n), dtype=np.int64)
    x = rng.integers(0, 2, size=spec.n, dtype=np.int64)
    return make_instance(c, c @ x), _frozen(x)


def write_instance(inst: Instance) -> str:
    lines = [f"{inst.m} {inst.n}"]
    for row, dm in zip(inst.c, inst.d):
        lines.append(" ".join(str(int(v)) for v in row) + f" | {int(dm)}")
    return "\n".join(lines) + "\n"


def _parse_ints(tokens: list[str], lineno: int, line: str, pos: int = 0) -> list[int]:
    out = []
    for tok in tokens:
        col = line.index(tok, pos) + 1
        pos = col - 1 + len(tok)
        try:
            out.append(int(tok))
        except ValueError:
            raise ParseError(f"expected an integer, got {tok!r}", lineno, col) from None
    return out


def read_instance(text: str) -> Instance:
    """Parse the text format: ``M N`` header, then rows ``c_1 .. c_N | d_m``.

    Blank lines and lines starting with ``#`` are ignored.
    """
    body = [
        (i, ln)
        for i, ln in enumerate(text.splitlines(), start=1)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not body:
        raise ParseError("empty instance file", 1)
    lineno, header = body[0]
    dims = _parse_ints(header.split(), lineno, header)
    if len(dims) != 2:
        raise ParseError("header must be 'M N'", lineno)
    m, n = dims
    if m < 1 or n < 1:
        raise ParseError(f"header dimensions must be positive, got {m} {n}", lineno)
    rows = body[1:]
    if len(rows) != m:
        raise DimensionMismatchError(f"header declares {m} constraints, found {len(rows)} rows")
    c, d = [], []
    for lineno, line in rows:
        if line.count("|") != 1:
            raise ParseError("row must contain exactly one '|'", lineno, len(line) + 1)
        lhs, rhs = line.split("|")
        coeffs = _parse_ints(lhs.split(), lineno, line)
        if len(coeffs) != n:
            raise DimensionMismatchError(
                f"line {lineno}: expected {n} coefficients, found {len(coeffs)}"
            )
        target = _parse_ints(rhs.split(), lineno, line, line.index("|"))
        if len(target) != 1:
            raise ParseError("expected a single target after '|'", lineno, line.index("|") + 2)
        c.append(coeffs)
        d.append(target[0])
    return make_instance(np.array(c, dtype=np.int64).reshape(m, n), np.array(d, dtype=np.int64))


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return read_instance(fh.read())


def save_instance(inst: Instance, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_instance(inst))
