"""Parsing and canonical rendering of numbers as they appear in financial tables."""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation
from typing import Optional, Union

_CURRENCY = re.compile(r"[$€£¥]")
_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)")


def normalize_numeric(text: str) -> Optional[Decimal]:
    """Parse a financial rendering such as ``"(37,619)"`` or ``"$1,234.50"``.

    Returns ``None`` for anything that is not a number.
    """
    if text is None:
        return None
    s = text.strip().replace("−", "-")
    s = _CURRENCY.sub("", s).replace(",", "").replace("%", "")
    s = re.sub(r"\s+", "", s)
    negative = False
    if s.startswith("(") and s.endswith(")"):
        negative, s = True, s[1:-1]
    # "-$5" and "$-5" both collapse to "-5" once the symbol is gone
    if not _NUMBER.fullmatch(s):
        return None
    try:
        value = Decimal(s)
    except InvalidOperation:
        return None
    return -value if negative else value


def render_number(value: Union[Decimal, int, float], max_places: Optional[int] = None) -> str:
    """Canonical numeric form: plain digits, '.' decimal point, leading '-'.

    Trailing fractional zeros are dropped so equal values render equally.

    >>> render_number(Decimal("-37619")), render_number(Decimal("1234.50")), render_number(Decimal("1E+3"))
    ('-37619', '1234.5', '1000')
    """
    d = value if isinstance(value, Decimal) else Decimal(str(value))
    if max_places is not None:
        d = d.quantize(Decimal(1).scaleb(-max_places))
    d = abs(d) if d == 0 else d.normalize()
    if d.as_tuple().exponent > 0 or d == 0:
        d = d.quantize(Decimal(1))
    return format(d, "f")


def canonical_answer(text: str) -> str:
    value = normalize_numeric(text)
    return render_number(value) if value is not None else text.strip()
