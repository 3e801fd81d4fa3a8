"""Discrete pen-move tokenization.

A stroke image becomes a flat sequence of "moves": relative integer
displacements with a pen state (draw or travel), terminated by a special
image-end token. The vocabulary maps moves to dense token ids.
"""

from __future__ import annotations

import enum
import math
from typing import Iterable, NamedTuple

import numpy as np

from .geometry import Polyline, StrokeImage, flatten_path

DEFAULT_MAX_MOVE_LEN = 15
DEFAULT_FLATTEN_ERROR = 1.0


class SpecialMove(enum.Enum):
    IMAGE_END = "image_end"


IMAGE_END = SpecialMove.IMAGE_END


class Move(NamedTuple):
    pen: bool  # True = draw, False = travel
    dx: int
    dy: int


MoveToken = Move | SpecialMove


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(values, dtype=float) + 0.5).astype(np.int64)


# ---------------------------------------------------------------------------
# Image -> moves
# ---------------------------------------------------------------------------

def polyline_to_moves(polyline: Polyline, pen: bool,
                      max_len: int = DEFAULT_MAX_MOVE_LEN) -> list[Move]:
    """Quantize a polyline into integer moves no longer than ``max_len``.

    Segments longer than ``max_len`` are split into equal sub-segments.
    Cumulative waypoints are rounded to the integer grid and moves are
    differences of consecutive rounded positions, so rounding error never
    accumulates. Moves that round to (0, 0) are dropped.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    pts = polyline.points
    prev = _round_half_up(pts[0])
    moves: list[Move] = []
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        length = math.hypot(seg[0], seg[1])
        k = max(1, math.ceil(length / max_len))
        for i in range(1, k + 1):
            waypoint = a + seg * (i / k)
            pos = _round_half_up(waypoint)
            dx = int(pos[0] - prev[0])
            dy = int(pos[1] - prev[1])
            if dx == 0 and dy == 0:
                continue
            # float noise at split boundaries can spill one unit past max_len
            for part in _bound_chebyshev(dx, dy, max_len):
                moves.append(Move(pen, part[0], part[1]))
            prev = pos
    return moves


def _bound_chebyshev(dx: int, dy: int, max_len: int) -> list[tuple[int, int]]:
    if max(abs(dx), abs(dy)) <= max_len:
        return [(dx, dy)]
    half_x, half_y = dx // 2, dy // 2
    first = (half_x, half_y)
    second = (dx - half_x, dy - half_y)
    return [p for p in (first, second) if p != (0, 0)]


def image_to_move_sequence(
    image: StrokeImage,
    flatten_error: float = DEFAULT_FLATTEN_ERROR,
    max_len: int = DEFAULT_MAX_MOVE_LEN,
) -> list[MoveToken]:
    """Flatten and tokenize a whole image, ending with IMAGE_END.

    The pen starts at the canvas origin. Each path contributes pen-up travel
    moves from the current position to its first point, then pen-down moves
    along its flattened polyline. Stroke endings carry no token of their
    own; they are implied by the next pen-state change.
    """
    cursor = np.zeros(2, dtype=np.int64)
    moves: list[MoveToken] = []
    for path in image.paths:
        poly = flatten_path(path, flatten_error)
        travel = Polyline(np.array([cursor.astype(float), poly.points[0]]))
        moves.extend(polyline_to_moves(travel, False, max_len))
        cursor = _round_half_up(poly.points[0])
        moves.extend(polyline_to_moves(poly, True, max_len))
        cursor = _round_half_up(poly.points[-1])
    moves.append(IMAGE_END)
    return moves


# ---------------------------------------------------------------------------
# Moves -> image
# ---------------------------------------------------------------------------

def moves_to_image(moves: Iterable[MoveToken]) -> list[Polyline]:
    """Replay moves turtle-style from the origin into pen-down polylines.

    Pen-up moves only translate the cursor; IMAGE_END stops the replay (a
    missing IMAGE_END simply consumes every move).
    """
    x, y = 0, 0
    polylines: list[Polyline] = []
    current: list[tuple[int, int]] | None = None
    for mv in moves:
        if mv is IMAGE_END:
            break
        if not isinstance(mv, Move):
            raise ValueError(f"unknown token {mv!r} in move sequence")
        if mv.pen:
            if current is None:
                current = [(x, y)]
            x, y = x + mv.dx, y + mv.dy
            current.append((x, y))
        else:
            if current is not None:
                polylines.append(Polyline(np.array(current, dtype=float)))
                current = None
            x, y = x + mv.dx, y + mv.dy
    if current is not None:
        polylines.append(Polyline(np.array(current, dtype=float)))
    return polylines


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

class Vocabulary:
    """Bijection between moves (plus IMAGE_END) and dense token ids.

    Regular moves are sorted by (pen, dx, dy) and numbered from 0;
    IMAGE_END always takes the last id.
    """

    def __init__(self, moves: Iterable[Move], max_move_length: int):
        regular = sorted(set(moves))
        for m in regular:
            if m.dx == 0 and m.dy == 0:
                raise ValueError("(0, 0) is not a valid move")
            if max(abs(m.dx), abs(m.dy)) > max_move_length:
                raise ValueError(f"move {m} exceeds max length {max_move_length}")
        self.max_move_length = int(max_move_length)
        self._moves: list[Move] = regular
        self._ids: dict[Move, int] = {m: i for i, m in enumerate(regular)}

    @property
    def size(self) -> int:
        return len(self._moves) + 1

    @property
    def n_regular(self) -> int:
        return len(self._moves)

    @property
    def image_end_id(self) -> int:
        return len(self._moves)

    def encode_move(self, token: MoveToken) -> int:
        if token is IMAGE_END:
            return self.image_end_id
        try:
            return self._ids[token]
        except (KeyError, TypeError):
            raise KeyError(f"move {token!r} is not in the vocabulary") from None

    def decode_id(self, token_id: int) -> MoveToken:
        if token_id == self.image_end_id:
            return IMAGE_END
        if 0 <= token_id < len(self._moves):
            return self._moves[token_id]
        raise KeyError(f"token id {token_id} out of range (V={self.size})")

    def __contains__(self, token: MoveToken) -> bool:
        return token is IMAGE_END or token in self._ids

    def __eq__(self, other) -> bool:
        return (isinstance(other, Vocabulary)
                and self.max_move_length == other.max_move_length
                and self._moves == other._moves)

    def to_json_dict(self) -> dict:
        return {
            "max_move_length": self.max_move_length,
            "entries": [
                {"pen": m.pen, "dx": m.dx, "dy": m.dy, "id": i}
                for i, m in enumerate(self._moves)
            ],
            "specials": {"IMAGE_END": self.image_end_id},
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Vocabulary":
        entries = sorted(data["entries"], key=lambda e: e["id"])
        moves = [Move(bool(e["pen"]), int(e["dx"]), int(e["dy"])) for e in entries]
        vocab = cls(moves, int(data["max_move_length"]))
        expected_ids = [e["id"] for e in entries]
        if expected_ids != list(range(len(moves))):
            raise ValueError("vocabulary ids must be dense from 0")
        if data.get("specials", {}).get("IMAGE_END") != vocab.image_end_id:
            raise ValueError("IMAGE_END must take the last id")
        return vocab


def build_vocabulary(corpora: Iterable[Iterable[MoveToken]],
                     max_len: int = DEFAULT_MAX_MOVE_LEN,
                     closed: bool = True) -> Vocabulary:
    """Build the token vocabulary from observed move sequences.

    With ``closed=True`` (default) the vocabulary contains every grid move
    with Chebyshev length <= max_len for both pen states, so any augmented
    patch stays encodable. ``closed=False`` keeps only observed moves (for
    ablation).
    """
    observed: set[Move] = set()
    count = 0
    for seq in corpora:
        count += 1
        for token in seq:
            if isinstance(token, Move):
                observed.add(token)
    if count == 0:
        raise ValueError("need at least one move sequence")
    if closed:
        moves = [
            Move(pen, dx, dy)
            for pen in (False, True)
            for dx in range(-max_len, max_len + 1)
            for dy in range(-max_len, max_len + 1)
            if (dx, dy) != (0, 0)
        ]
        vocab = Vocabulary(moves, max_len)
        for m in observed:  # sanity: observed moves must all be encodable
            if m not in vocab:
                raise ValueError(f"observed move {m} exceeds max length {max_len}")
        return vocab
    return Vocabulary(observed, max_len)


def encode(moves: Iterable[MoveToken], vocab: Vocabulary) -> list[int]:
    return [vocab.encode_move(m) for m in moves]


def decode(token_ids: Iterable[int], vocab: Vocabulary) -> list[MoveToken]:
    return [vocab.decode_id(int(i)) for i in token_ids]
