"""Canonical JSON encoding for the wire protocol and result logs.

The encoding is pinned so independently written peers reproduce it byte for
byte:

  * one JSON value per line, UTF-8, no whitespace, ``\\n`` terminated;
  * object keys are ASCII and sorted lexicographically;
  * strings escape non-ASCII and control characters as ``\\uXXXX`` with
    lowercase hex digits;
  * numbers use the ECMAScript ``ToString(Number)`` rendering of their
    double value (so ``5.0`` encodes as ``5``, ``1e-7`` stays exponential,
    ``0.000001`` stays plain), which is exactly what JavaScript's native
    ``String(x)`` produces;
  * NaN and infinities are rejected.
"""

from __future__ import annotations

import json
import math
from decimal import Decimal

from .errors import InvalidParameter


def format_number(x: int | float) -> str:
    """ECMAScript ToString(Number) for a finite double (or int)."""
    if isinstance(x, bool):
        raise InvalidParameter("booleans are not numbers")
    if isinstance(x, int):
        return str(x)
    if not math.isfinite(x):
        raise InvalidParameter(f"non-finite number {x!r} cannot be encoded")
    if x == 0.0:
        return "0"
    sign = "-" if x < 0 else ""
    # repr() gives the shortest round-trip decimal; Decimal splits it into
    # digits and exponent without any float re-rounding.
    d = Decimal(repr(abs(x))).normalize()
    _, digits, exp = d.as_tuple()
    s = "".join(str(dd) for dd in digits)
    k = len(digits)
    n = exp + k  # value == 0.<digits> * 10**n
    if k <= n <= 21:
        body = s + "0" * (n - k)
    elif 0 < n <= 21:
        body = s[:n] + "." + s[n:]
    elif -6 < n <= 0:
        body = "0." + "0" * (-n) + s
    else:
        mantissa = s[0] + ("." + s[1:] if k > 1 else "")
        e = n - 1
        body = f"{mantissa}e{'+' if e >= 0 else '-'}{abs(e)}"
    return sign + body


def _encode(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=True))
    elif isinstance(obj, (int, float)):
        out.append(format_number(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise InvalidParameter("object keys must be strings")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=True))
            out.append(":")
            _encode(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    else:
        raise InvalidParameter(f"cannot canonically encode {type(obj)!r}")


def canonical_dumps(obj) -> str:
    """Serialize to the canonical form (no trailing newline)."""
    out: list[str] = []
    _encode(obj, out)
    return "".join(out)


def canonical_line(obj) -> bytes:
    """Serialize to one newline-terminated UTF-8 wire line."""
    return canonical_dumps(obj).encode("utf-8") + b"\n"


def parse_line(line: bytes | str):
    """Parse one wire line to Python objects (floats stay floats/ints as
    written; field consumers coerce)."""
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    return json.loads(line)
