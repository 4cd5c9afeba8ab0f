"""Noncommutative expressions: scalar x differential x word of operator symbols.

A term ``(diff, word) -> coeff`` stands for ``coeff * d diff * w_1 w_2 ... w_n``:
the (at most one) noise differential is always written leftmost, every
operator symbol that used to sit to its left having already been moved
across it with the appropriate commutation sign. Coefficients are
``sympy`` expressions, so equality checks are exact.
"""

from dataclasses import dataclass, field, replace

import sympy

ZERO = sympy.Integer(0)
ONE = sympy.Integer(1)


@dataclass(frozen=True, order=True)
class Sym:
    """Operator symbol.

    Only ``name`` and ``star`` take part in equality and ordering; the
    remaining attributes are declarations. ``adapted`` symbols pick up the
    commutation sign of a differential they are moved across, constant
    (system) operators never do. ``inverse`` names the symbol that cancels
    this one when the two are adjacent.
    """
    name: str
    star: bool = False
    hermitian: bool = field(default=False, compare=False)
    adapted: bool = field(default=True, compare=False)
    inverse: str | None = field(default=None, compare=False)

    def adjoint(self):
        if self.hermitian:
            return self
        return replace(self, star=not self.star)

    def __str__(self):
        return self.name + ("*" if self.star else "")


def _reduce_word(word):
    out = []
    for s in word:
        if out and out[-1].inverse == s.name and out[-1].star == s.star:
            out.pop()
        else:
            out.append(s)
    return tuple(out)


def _key(item):
    (diff, word), _ = item
    return (diff or "", tuple((s.name, s.star) for s in word))


class NCExpr:
    """Immutable canonical sum of terms.

    Construction always canonicalizes: adjacent symbol/inverse pairs cancel,
    like terms merge, zero coefficients disappear and terms are sorted by
    ``(differential, word)``.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms=(), cancel_inverses=True):
        acc = {}
        for (diff, word), c in (terms.items() if isinstance(terms, dict) else terms):
            word = tuple(word)
            if cancel_inverses:
                word = _reduce_word(word)
            k = (diff, word)
            acc[k] = acc.get(k, ZERO) + sympy.sympify(c)
        items = []
        for k, c in acc.items():
            c = sympy.expand(c)
            if c != 0:
                items.append((k, c))
        items.sort(key=_key)
        self._terms = tuple(items)

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def one(cls):
        return cls({(None, ()): ONE})

    @classmethod
    def scalar(cls, c):
        return cls({(None, ()): c})

    @classmethod
    def symbol(cls, *syms, coeff=ONE):
        return cls({(None, tuple(syms)): coeff})

    @classmethod
    def differential(cls, label, coeff=ONE):
        return cls({(label, ()): coeff})

    # inspection -----------------------------------------------------------
    def terms(self):
        """Tuples ``(coeff, diff, word)`` in canonical order."""
        return [(c, d, w) for (d, w), c in self._terms]

    def items(self):
        return iter(self._terms)

    def is_zero(self):
        return not self._terms

    def __bool__(self):
        return bool(self._terms)

    def __len__(self):
        return len(self._terms)

    def differentials(self):
        return sorted({d for (d, _), _ in self._terms}, key=lambda d: d or "")

    def has_differential(self):
        return any(d is not None for (d, _), _ in self._terms)

    def is_differential(self):
        """Every term carries a differential (true for zero)."""
        return all(d is not None for (d, _), _ in self._terms)

    def symbols(self):
        return {s for (_, w), _ in self._terms for s in w}

    # arithmetic not needing an Ito table ---------------------------------
    def __add__(self, other):
        if not isinstance(other, NCExpr):
            other = NCExpr.scalar(other)
        return NCExpr(self._terms + other._terms)

    __radd__ = __add__

    def __neg__(self):
        return NCExpr(((k, -c) for k, c in self._terms))

    def __sub__(self, other):
        if not isinstance(other, NCExpr):
            other = NCExpr.scalar(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c):
        c = sympy.sympify(c)
        return NCExpr(((k, c * v) for k, v in self._terms))

    def map_coeffs(self, fn):
        return NCExpr(((k, fn(v)) for k, v in self._terms))

    def __eq__(self, other):
        if not isinstance(other, NCExpr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(self._terms)

    def __repr__(self):
        return f"NCExpr({self})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for (d, w), c in self._terms:
            word = " ".join(str(s) for s in w)
            piece = " ".join(p for p in (d or "", word) if p) or "1"
            parts.append(f"({sympy.sstr(c)})*{piece}")
        return " + ".join(parts)

    # serialization --------------------------------------------------------
    def to_data(self):
        """Stable list of ``[coefficient, [symbols...], differential]``."""
        return [[sympy.sstr(c), [str(s) for s in w], d] for (d, w), c in self._terms]


def word_expr(*syms):
    return NCExpr.symbol(*syms)
