"""Products, adjoints and the Ito product rule on :class:`NCExpr`."""

from functools import reduce

import sympy

from .expr import NCExpr, ONE, Sym


class MalformedExpressionError(ValueError):
    pass


def rho_sign(word, label, table):
    """Sign picked up by ``word`` when moved to the right of ``d label``.

    The commutation automorphism acts as a parity grading: each adapted
    symbol contributes one factor of the label's sign.
    """
    s = table.rho(label)
    if s == 1:
        return 1
    n = sum(1 for x in word if x.adapted)
    return -1 if n % 2 else 1


def rho(expr, label, table):
    """Apply the commutation automorphism of ``label`` to a differential-free expression."""
    if expr.has_differential():
        raise MalformedExpressionError("rho applies to differential-free expressions")
    return NCExpr(((d, w), c * rho_sign(w, label, table)) for (d, w), c in expr.items())


def _mul2(x, y, table):
    out = []
    for (d1, w1), c1 in x.items():
        for (d2, w2), c2 in y.items():
            c = c1 * c2
            if d2 is None:
                out.append(((d1, w1 + w2), c))
                continue
            sgn = rho_sign(w1, d2, table) if table is not None else None
            if sgn is None:
                if any(s.adapted for s in w1):
                    raise MalformedExpressionError("an Ito table is needed to move "
                                                   "adapted symbols across a differential")
                sgn = 1
            if d1 is None:
                out.append(((d2, w1 + w2), c * sgn))
            else:
                if table is None:
                    raise MalformedExpressionError("multiplying differentials needs an Ito table")
                for g, k in table.product(d1, d2).items():
                    out.append(((g, w1 + w2), c * k * sgn))
    return NCExpr(out)


def mul(*factors, table=None):
    """Product of expressions; differentials collapse through ``table``."""
    if not factors:
        return NCExpr.one()
    return reduce(lambda a, b: _mul2(a, b, table), factors)


def adjoint_expr(expr, table=None):
    """Involution: conjugate scalars, reverse and star words, star differentials.

    ``(c dM_a w)* = conj(c) w* dM_{a*} = conj(c) dM_{a*} rho_{a*}(w*)``.
    """
    out = []
    for (d, w), c in expr.items():
        ws = tuple(s.adjoint() for s in reversed(w))
        cc = sympy.conjugate(c)
        if d is None:
            out.append(((None, ws), cc))
        else:
            if table is None:
                raise MalformedExpressionError("adjoint of a differential needs an Ito table")
            ds = table.star(d)
            out.append(((ds, ws), cc * rho_sign(ws, ds, table)))
    return NCExpr(out)


def mul_differentials(a, b, table):
    """Table entry for ``d a . d b`` as a sum of single differentials."""
    return NCExpr(((g, ()), c) for g, c in table.product(a, b).items())


def ito_product(X, dX, Y, dY, table):
    """``d(XY) = dX Y + X dY + dX dY`` with the last term collapsed by the table."""
    if X.has_differential() or Y.has_differential():
        raise MalformedExpressionError("X and Y must be differential-free")
    if not (dX.is_differential() and dY.is_differential()):
        raise MalformedExpressionError("dX and dY must carry a differential in every term")
    return mul(dX, Y, table=table) + mul(X, dY, table=table) + mul(dX, dY, table=table)


def collect(expr):
    """Group terms by differential.

    Returns ``{label: coefficient}`` where each coefficient is the
    differential-free expression multiplying ``d label``; the
    differential-free part sits under the key ``None``.
    """
    groups = {}
    for (d, w), c in expr.items():
        groups.setdefault(d, []).append(((None, w), c))
    return {d: NCExpr(ts) for d, ts in groups.items()}


def reassemble(groups):
    out = []
    for d, e in groups.items():
        for (_, w), c in e.items():
            out.append(((d, w), c))
    return NCExpr(out)


def substitute(expr, mapping, table=None):
    """Replace operator symbols by differential-free expressions.

    ``mapping`` keys are :class:`Sym` (matched on name and star). Since
    canonical terms carry their differential leftmost, substitution is a
    plain word-level expansion.
    """
    for v in mapping.values():
        if v.has_differential():
            raise MalformedExpressionError("substituted expressions must be differential-free")
    out = NCExpr.zero()
    for (d, w), c in expr.items():
        pieces = [NCExpr.differential(d, c) if d else NCExpr.scalar(c)]
        for s in w:
            pieces.append(mapping[s] if s in mapping else NCExpr.symbol(s))
        out = out + mul(*pieces, table=table)
    return out


def extract_sandwich(expr, left, right):
    """Strip ``left ... right`` from every word.

    Returns ``(inner, remainder)``; ``remainder`` holds the terms that do not
    have the requested shape.
    """
    inner, rest = [], []
    for (d, w), c in expr.items():
        if len(w) >= 2 and w[0] == left and w[-1] == right:
            inner.append(((d, w[1:-1]), c))
        else:
            rest.append(((d, w), c))
    return NCExpr(inner, cancel_inverses=False), NCExpr(rest, cancel_inverses=False)


def op(name, **kw):
    return NCExpr.symbol(Sym(name, **kw))


__all__ = [
    "MalformedExpressionError", "rho_sign", "rho", "mul", "adjoint_expr",
    "mul_differentials", "ito_product", "collect", "reassemble", "substitute",
    "extract_sandwich", "op", "ONE",
]
