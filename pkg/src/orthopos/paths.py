"""Syntactic layer: relative paths as group (or monoid) words.

Three ambient structures are supported:

* sequences  -- words collapse to a single signed integer offset;
* k-ary trees -- words over signed branch letters, freely reduced;
* grids      -- tuples of per-axis integer offsets.

Plain Python values carry the words: ``int`` for sequences, a tuple of
signed letters for trees (``+g`` descends branch g, ``-g`` ascends), and
a tuple of ints for grids.  Absolute positions use the same shapes with
nonnegative components only.  All operations take the ``StructureSpec``
that fixes the interpretation.
"""

from __future__ import annotations

import enum
import operator
import re
from dataclasses import dataclass
from typing import Union

from .errors import (
    InvalidGenerator,
    InversionUnavailable,
    StructureMismatch,
)

PathWord = Union[int, tuple]
AbsolutePosition = Union[int, tuple]


def _as_int(value) -> int:
    """Coerce any integral value (incl. numpy ints) to a Python int."""
    try:
        return operator.index(value)
    except TypeError:
        raise StructureMismatch(f"expected an integer, got {value!r}") from None


class Kind(enum.Enum):
    SEQUENCE = "seq"
    TREE = "tree"
    GRID = "grid"


class Mode(enum.Enum):
    RELATIVE = "relative"
    ABSOLUTE = "absolute"


@dataclass(frozen=True)
class StructureSpec:
    """Declaration of the ambient structure paths live in."""

    kind: Kind
    branching: int = 1
    axes: int = 1
    mode: Mode = Mode.RELATIVE
    period: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.branching < 1:
            raise StructureMismatch("branching factor must be >= 1")
        if self.axes < 1:
            raise StructureMismatch("axis count must be >= 1")
        if self.period is not None:
            if isinstance(self.period, int):
                object.__setattr__(self, "period", (self.period,))
            else:
                object.__setattr__(self, "period", tuple(self.period))
            if self.kind is Kind.TREE:
                raise StructureMismatch("tree generators cannot be periodic")
            expect = self.axes if self.kind is Kind.GRID else 1
            if len(self.period) == 1 and expect > 1:
                object.__setattr__(self, "period", self.period * expect)
            if len(self.period) != expect:
                raise StructureMismatch(
                    f"expected {expect} period entries, got {len(self.period)}"
                )
            if any(n < 1 for n in self.period):
                raise StructureMismatch("periods must be >= 1")

    @classmethod
    def sequence(cls, period: int | None = None,
                 mode: Mode = Mode.RELATIVE) -> "StructureSpec":
        return cls(Kind.SEQUENCE, mode=mode,
                   period=None if period is None else (period,))

    @classmethod
    def tree(cls, branching: int, mode: Mode = Mode.RELATIVE) -> "StructureSpec":
        return cls(Kind.TREE, branching=branching, mode=mode)

    @classmethod
    def grid(cls, axes: int, period=None,
             mode: Mode = Mode.RELATIVE) -> "StructureSpec":
        return cls(Kind.GRID, axes=axes, mode=mode, period=period)

    @property
    def generator_count(self) -> int:
        if self.kind is Kind.TREE:
            return self.branching
        if self.kind is Kind.GRID:
            return self.axes
        return 1


def identity_word(spec: StructureSpec) -> PathWord:
    if spec.kind is Kind.SEQUENCE:
        return 0
    if spec.kind is Kind.TREE:
        return ()
    return (0,) * spec.axes


def _mod(value: int, period: int | None) -> int:
    return value % period if period is not None else value


def _seq_period(spec: StructureSpec) -> int | None:
    return spec.period[0] if spec.period else None


def _check_word(p: PathWord, spec: StructureSpec) -> PathWord:
    if spec.kind is Kind.SEQUENCE:
        if isinstance(p, tuple):
            raise StructureMismatch(f"sequence word must be an int, got {p!r}")
        return _mod(_as_int(p), _seq_period(spec))
    if spec.kind is Kind.TREE:
        if not isinstance(p, (tuple, list)):
            raise StructureMismatch(f"tree word must be a tuple, got {p!r}")
        return reduce_word(p, spec.branching)
    if not isinstance(p, (tuple, list)) or len(p) != spec.axes:
        raise StructureMismatch(
            f"grid word must be a tuple of {spec.axes} ints, got {p!r}"
        )
    periods = spec.period or (None,) * spec.axes
    return tuple(_mod(_as_int(c), n) for c, n in zip(p, periods))


def check_position(pos: AbsolutePosition, spec: StructureSpec) -> AbsolutePosition:
    """Validate a position against the structure; returns it normalized."""
    if spec.kind is Kind.SEQUENCE:
        if isinstance(pos, tuple):
            raise StructureMismatch(f"sequence position must be an int, got {pos!r}")
        value = _as_int(pos)
        if value < 0:
            raise StructureMismatch(f"sequence position must be nonnegative, got {value}")
        return value
    if spec.kind is Kind.TREE:
        if not isinstance(pos, (tuple, list)):
            raise StructureMismatch(f"tree position must be a tuple, got {pos!r}")
        word = tuple(_as_int(letter) for letter in pos)
        for letter in word:
            if not 1 <= letter <= spec.branching:
                raise InvalidGenerator(
                    f"branch letter {letter} outside 1..{spec.branching}"
                )
        return word
    if not isinstance(pos, (tuple, list)) or len(pos) != spec.axes:
        raise StructureMismatch(
            f"grid position must be a tuple of {spec.axes} ints, got {pos!r}"
        )
    coords = tuple(_as_int(c) for c in pos)
    if any(c < 0 for c in coords):
        raise StructureMismatch("grid coordinates must be nonnegative")
    return coords


def reduce_word(letters, branching: int | None = None) -> tuple[int, ...]:
    """Freely reduce a tree word: cancel adjacent inverse letter pairs.

    Idempotent, length-non-increasing, and independent of cancellation
    order (the free-group normal form is unique).
    """
    stack: list[int] = []
    for raw in letters:
        letter = _as_int(raw)
        if letter == 0:
            raise InvalidGenerator("letter 0 is not a generator")
        if branching is not None and abs(letter) > branching:
            raise InvalidGenerator(
                f"letter {letter} outside generators 1..{branching}"
            )
        if stack and stack[-1] == -letter:
            stack.pop()
        else:
            stack.append(letter)
    return tuple(stack)


def compose(p: PathWord, q: PathWord, spec: StructureSpec) -> PathWord:
    """Concatenate two paths; returns the reduced/canonical word."""
    p = _check_word(p, spec)
    q = _check_word(q, spec)
    if spec.kind is Kind.SEQUENCE:
        return _mod(p + q, _seq_period(spec))
    if spec.kind is Kind.TREE:
        return reduce_word(p + q, spec.branching)
    periods = spec.period or (None,) * spec.axes
    return tuple(_mod(a + b, n) for a, b, n in zip(p, q, periods))


def invert(p: PathWord, spec: StructureSpec) -> PathWord:
    """Inverse path: compose(p, invert(p)) is the identity word."""
    if spec.mode is Mode.ABSOLUTE:
        raise InversionUnavailable(
            "absolute positions form a monoid; inversion is undefined"
        )
    p = _check_word(p, spec)
    if spec.kind is Kind.SEQUENCE:
        return _mod(-p, _seq_period(spec))
    if spec.kind is Kind.TREE:
        return tuple(-letter for letter in reversed(p))
    periods = spec.period or (None,) * spec.axes
    return tuple(_mod(-c, n) for c, n in zip(p, periods))


def embed(pos: AbsolutePosition, spec: StructureSpec) -> PathWord:
    """Path from the origin to an absolute position (forward letters only)."""
    pos = check_position(pos, spec)
    if spec.kind is Kind.SEQUENCE:
        return _mod(pos, _seq_period(spec))
    if spec.kind is Kind.TREE:
        return tuple(pos)
    periods = spec.period or (None,) * spec.axes
    return tuple(_mod(c, n) for c, n in zip(pos, periods))


def relative_path(source: AbsolutePosition, target: AbsolutePosition,
                  spec: StructureSpec) -> PathWord:
    """Reduced path from ``source`` to ``target``: back to the origin, then out."""
    return compose(invert(embed(source, spec), spec), embed(target, spec), spec)


def path_length(p: PathWord, spec: StructureSpec) -> int:
    """Step count of the reduced word (circular distance under a period)."""
    p = _check_word(p, spec)
    if spec.kind is Kind.SEQUENCE:
        n = _seq_period(spec)
        return min(p, n - p) if n is not None else abs(p)
    if spec.kind is Kind.TREE:
        return len(p)
    periods = spec.period or (None,) * spec.axes
    total = 0
    for c, n in zip(p, periods):
        total += min(c, n - c) if n is not None else abs(c)
    return total


# Textual notation: sequences as signed integers, tree words as
# space-separated signed letters ("1 2 -1"), grids as comma tuples "(-2,3)".

def format_word(p: PathWord, spec: StructureSpec) -> str:
    p = _check_word(p, spec)
    if spec.kind is Kind.SEQUENCE:
        return str(p)
    if spec.kind is Kind.TREE:
        return " ".join(str(letter) for letter in p)
    return "(" + ",".join(str(c) for c in p) + ")"


def parse_word(text: str, spec: StructureSpec) -> PathWord:
    text = text.strip()
    if spec.kind is Kind.SEQUENCE:
        try:
            return _check_word(int(text), spec)
        except ValueError as exc:
            raise StructureMismatch(f"bad sequence offset {text!r}") from exc
    if spec.kind is Kind.TREE:
        if not text:
            return ()
        try:
            letters = tuple(int(tok) for tok in text.split())
        except ValueError as exc:
            raise StructureMismatch(f"bad tree word {text!r}") from exc
        return _check_word(letters, spec)
    m = re.fullmatch(r"\(([^)]*)\)", text)
    inner = m.group(1) if m else text
    try:
        offsets = tuple(int(tok) for tok in inner.split(","))
    except ValueError as exc:
        raise StructureMismatch(f"bad grid word {text!r}") from exc
    return _check_word(offsets, spec)


def parse_position(text: str, spec: StructureSpec) -> AbsolutePosition:
    text = text.strip()
    if spec.kind is Kind.SEQUENCE:
        try:
            return check_position(int(text), spec)
        except ValueError as exc:
            raise StructureMismatch(f"bad position {text!r}") from exc
    if spec.kind is Kind.TREE:
        if not text:
            return ()
        toks = text.split() if " " in text else list(text)
        try:
            word = tuple(int(tok) for tok in toks)
        except ValueError as exc:
            raise StructureMismatch(f"bad tree position {text!r}") from exc
        return check_position(word, spec)
    m = re.fullmatch(r"\(([^)]*)\)", text)
    inner = m.group(1) if m else text
    try:
        coords = tuple(int(tok) for tok in inner.split(","))
    except ValueError as exc:
        raise StructureMismatch(f"bad grid position {text!r}") from exc
    return check_position(coords, spec)
