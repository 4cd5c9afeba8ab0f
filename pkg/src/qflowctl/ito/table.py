"""Noise bases and Ito multiplication tables with constant structure scalars."""

from dataclasses import dataclass

import numpy as np
import sympy

TIME = "dt"


class UnknownLabelError(KeyError):
    pass


@dataclass(frozen=True)
class NoiseBasis:
    """Differential labels, their involution ``a -> a*`` and commutation signs.

    ``rho`` maps each label to +1 (Boson) or -1 (Fermion). The time label
    is self-adjoint and always carries sign +1.
    """
    labels: tuple
    star: dict
    rho: dict
    time: str = TIME

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if self.time not in labels:
            raise ValueError(f"time label {self.time!r} missing from basis")
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate labels")
        for a in labels:
            if a not in self.star or a not in self.rho:
                raise ValueError(f"label {a!r} lacks involution or sign")
            if self.star[self.star[a]] != a:
                raise ValueError(f"involution is not its own inverse at {a!r}")
            if self.rho[a] not in (1, -1):
                raise ValueError(f"sign of {a!r} must be +1 or -1")
            if self.rho[self.star[a]] != self.rho[a]:
                raise ValueError(f"{a!r} and its adjoint carry different signs")
        if self.star[self.time] != self.time or self.rho[self.time] != 1:
            raise ValueError("time differential must be self-adjoint with sign +1")

    @property
    def noise(self):
        return tuple(a for a in self.labels if a != self.time)

    def check(self, label):
        if label not in self.star:
            raise UnknownLabelError(label)
        return label


class ItoTable:
    """Products ``dM_a dM_b = sum_g c^g_ab dM_g`` over a :class:`NoiseBasis`.

    ``products`` maps ``(a, b)`` to ``{label: coeff}``; missing pairs are
    zero. Any product involving the time differential is zero and may not be
    overridden. ``sigma`` (Levy pairs only) is the 2x2 matrix with
    ``dM_b* dM_a = sigma[b][a] dt``, indices 1-based in the usual notation.
    """

    def __init__(self, basis, products=None, sigma=None, name=""):
        self.basis = basis
        self.name = name
        self.sigma = sigma
        table = {}
        for (a, b), combo in (products or {}).items():
            basis.check(a)
            basis.check(b)
            entry = {}
            for g, c in combo.items():
                basis.check(g)
                c = sympy.sympify(c)
                if c != 0:
                    entry[g] = c
            if entry and basis.time in (a, b):
                raise ValueError(f"d{basis.time} products must vanish, got ({a}, {b})")
            if entry:
                table[(a, b)] = entry
        self._table = table

    @property
    def labels(self):
        return self.basis.labels

    @property
    def noise(self):
        return self.basis.noise

    @property
    def time(self):
        return self.basis.time

    def star(self, a):
        return self.basis.star[self.basis.check(a)]

    def rho(self, a):
        return self.basis.rho[self.basis.check(a)]

    def product(self, a, b):
        self.basis.check(a)
        self.basis.check(b)
        return dict(self._table.get((a, b), {}))

    def c0(self, a, b):
        """Time component of ``dM_a dM_b``."""
        return self.product(a, b).get(self.time, sympy.Integer(0))

    def c(self, g, a, b):
        """``dM_g`` component of ``dM_a dM_b``."""
        return self.product(a, b).get(g, sympy.Integer(0))

    def associativity_defect(self):
        """Nonzero entries of ``(dM_a dM_b) dM_c - dM_a (dM_b dM_c)``.

        Returns ``{(a, b, c, h): coefficient}``; empty for an associative
        table. Free-symbol tables with two or more noises are not associative
        unless their constants satisfy these polynomial identities.
        """
        out = {}
        noise = self.noise
        for a in noise:
            for b in noise:
                for c in noise:
                    for h in self.labels:
                        lhs = sum((self.c(g, a, b) * self._comp(h, g, c) for g in noise),
                                  sympy.Integer(0))
                        rhs = sum((self.c(g, b, c) * self._comp(h, a, g) for g in noise),
                                  sympy.Integer(0))
                        d = sympy.expand(lhs - rhs)
                        if d != 0:
                            out[(a, b, c, h)] = d
        return out

    def _comp(self, h, a, b):
        return self.c0(a, b) if h == self.time else self.c(h, a, b)

    def is_levy(self):
        return self.sigma is not None

    def sigma_is_positive(self, tol=1e-12):
        """Hermitian part of a numeric sigma matrix is positive semidefinite.

        Returns ``None`` when sigma holds free symbols.
        """
        if self.sigma is None:
            raise ValueError("not a Levy-pair table")
        M = sympy.Matrix(self.sigma)
        if M.free_symbols:
            return None
        A = np.array(M.evalf(), dtype=complex)
        return bool(np.linalg.eigvalsh(0.5 * (A + A.conj().T))[0] >= -tol)

    def __repr__(self):
        return f"ItoTable({self.name or self.labels})"


def classical_table():
    """Only the time differential: the noise-free (deterministic) case."""
    return ItoTable(NoiseBasis((TIME,), {TIME: TIME}, {TIME: 1}), name="classical")


def levy_pair_table(sigma, fermion=False, labels=("dM1", "dM2"), name=None):
    """Levy pair ``dM_2 = dM_1*`` with ``dM_b* dM_a = sigma_ba dt``.

    ``sigma[b-1][a-1]`` holds ``sigma_ba``. Since ``1* = 2``, this gives
    ``dM_1 dM_1 = sigma_21``, ``dM_1 dM_2 = sigma_22``,
    ``dM_2 dM_1 = sigma_11`` and ``dM_2 dM_2 = sigma_12`` (times ``dt``).
    """
    m1, m2 = labels
    s = -1 if fermion else 1
    basis = NoiseBasis((TIME, m1, m2), {TIME: TIME, m1: m2, m2: m1},
                       {TIME: 1, m1: s, m2: s})
    sig = [[sympy.sympify(x) for x in row] for row in sigma]
    idx = {m1: 0, m2: 1}
    star = basis.star
    products = {}
    for a in (m1, m2):
        for b in (m1, m2):
            # dM_a dM_b = dM_{a*}^* dM_b = sigma_{a* b} dt
            products[(a, b)] = {TIME: sig[idx[star[a]]][idx[b]]}
    kind = "fermion" if fermion else "boson"
    return ItoTable(basis, products, sigma=sig, name=name or f"levy-{kind}")


def boson_fock_table():
    """Creation/annihilation pair: ``dA dA^dagger = dt``, all else zero."""
    return levy_pair_table([[0, 0], [0, 1]], labels=("dA", "dAdag"), name="boson-fock")


def gauge_table():
    """Annihilation, creation and number (gauge) differentials.

    ``dA dA^dagger = dt``, ``dA dLambda = dA``, ``dLambda dA^dagger = dA^dagger``,
    ``dLambda dLambda = dLambda``; all other products vanish.
    """
    basis = NoiseBasis((TIME, "dA", "dAdag", "dLam"),
                       {TIME: TIME, "dA": "dAdag", "dAdag": "dA", "dLam": "dLam"},
                       {TIME: 1, "dA": 1, "dAdag": 1, "dLam": 1})
    products = {("dA", "dAdag"): {TIME: 1}, ("dA", "dLam"): {"dA": 1},
                ("dLam", "dAdag"): {"dAdag": 1}, ("dLam", "dLam"): {"dLam": 1}}
    return ItoTable(basis, products, name="gauge")


def poisson_pair_table():
    """Two independent compensated-free counting differentials: ``dN_i dN_j = delta_ij dN_i``."""
    basis = NoiseBasis((TIME, "dN1", "dN2"), {TIME: TIME, "dN1": "dN1", "dN2": "dN2"},
                       {TIME: 1, "dN1": 1, "dN2": 1})
    return ItoTable(basis, {("dN1", "dN1"): {"dN1": 1}, ("dN2", "dN2"): {"dN2": 1}},
                    name="poisson-pair")


def fermion_levy_table(sigma=((0, 0), (0, 1))):
    return levy_pair_table(sigma, fermion=True, name="fermion-levy")


def symbolic_levy_table(fermion=False):
    """Levy pair whose sigma entries are free complex symbols ``sigma11``..."""
    sig = [[sympy.Symbol(f"sigma{b}{a}") for a in (1, 2)] for b in (1, 2)]
    return levy_pair_table(sig, fermion=fermion,
                           name="levy-symbolic-" + ("fermion" if fermion else "boson"))


def generic_table(noise_labels, star, rho=None, name="generic"):
    """Table with every structure constant a free symbol.

    ``c0_a_b`` is the time component of ``dM_a dM_b`` and ``c_g_a_b`` its
    ``dM_g`` component.
    """
    labels = (TIME,) + tuple(noise_labels)
    rho = dict(rho or {a: 1 for a in noise_labels})
    rho[TIME] = 1
    star = dict(star)
    star[TIME] = TIME
    basis = NoiseBasis(labels, star, rho)
    products = {}
    for a in noise_labels:
        for b in noise_labels:
            combo = {TIME: sympy.Symbol(f"c0_{a}_{b}")}
            for g in noise_labels:
                combo[g] = sympy.Symbol(f"c_{g}_{a}_{b}")
            products[(a, b)] = combo
    return ItoTable(basis, products, name=name)


def single_noise_table(label="dM", c0=0, c=0, fermion=False):
    """One self-adjoint noise with ``dM dM = c0 dt + c dM``."""
    basis = NoiseBasis((TIME, label), {TIME: TIME, label: label},
                       {TIME: 1, label: -1 if fermion else 1})
    return ItoTable(basis, {(label, label): {TIME: c0, label: c}}, name="single-noise")
