"""16-decimal-digit identifiers for supersets, sets and subsets."""

import hashlib

ID_DIGITS = 16
_LOW = 10 ** (ID_DIGITS - 1)
_SPAN = 9 * _LOW


def make_id(*parts) -> int:
    """Stable 16-digit id derived from ``parts`` (first digit never zero)."""
    h = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=16).digest()
    return _LOW + int.from_bytes(h, "big") % _SPAN


def is_valid_id(value) -> bool:
    return isinstance(value, int) and _LOW <= value < 10 ** ID_DIGITS
