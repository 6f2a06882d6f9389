"""Normal-ordered operators: composition, commutators, adjoints, weights."""

import random
from fractions import Fraction

import pytest

from superdelta import (
    Chart,
    DensityElement,
    DiffOp,
    GradedPoly,
    berezin_integral,
    commutator,
    compose,
    conjugate_by_exp,
    formal_adjoint,
    op_from_action,
    pencil_adjoint,
    specialize,
)

from conftest import R11, R12, R22, R02, R03, rand_op, rand_poly


def test_constructors_and_order():
    D = DiffOp.deriv(R11, "x")
    assert D.order() == 1
    assert DiffOp.zero(R11).order() is None
    assert DiffOp.mult(GradedPoly.var(R11, "x")).order() == 0
    assert compose(D, D).order() == 2
    assert DiffOp.identity(R11).apply_poly(GradedPoly.var(R11, "x")) == \
        GradedPoly.var(R11, "x")


def test_apply_oracle_composition(rng):
    """Normal ordering is certified by the action: (DE)f = D(Ef)."""
    for chart in (R11, R12, R22, R03):
        for _ in range(8):
            D = rand_op(rng, chart, 2)
            E = rand_op(rng, chart, 2)
            f = rand_poly(rng, chart, 3)
            assert compose(D, E).apply_poly(f) == D.apply_poly(E.apply_poly(f))


def test_compose_associative(rng):
    for _ in range(6):
        D = rand_op(rng, R12, 2)
        E = rand_op(rng, R12, 2)
        F = rand_op(rng, R12, 2)
        assert compose(compose(D, E), F) == compose(D, compose(E, F))


def test_commutator_grading(rng):
    for _ in range(8):
        D = rand_op(rng, R12, 2, parity=rng.randint(0, 1))
        E = rand_op(rng, R12, 2, parity=rng.randint(0, 1))
        pD, pE = D.parity(), E.parity()
        if pD is None or pE is None:
            continue
        lhs = commutator(D, E)
        rhs = compose(D, E) - compose(E, D) * Fraction((-1) ** (pD * pE))
        assert lhs == rhs
        # graded antisymmetry
        assert commutator(E, D) == -(lhs * Fraction((-1) ** (pD * pE)))


def test_commutator_jacobi(rng):
    for _ in range(4):
        ops = [rand_op(rng, R11, 2, parity=rng.randint(0, 1)) for _ in range(3)]
        pars = [D.parity() for D in ops]
        if None in pars:
            continue
        A, B, C = ops
        pa, pb, pc = pars
        lhs = commutator(A, commutator(B, C))
        rhs = commutator(commutator(A, B), C) + \
            commutator(B, commutator(A, C)) * Fraction((-1) ** (pa * pb))
        assert lhs == rhs


def test_weight_symbol_central_and_specialization():
    W = DiffOp.weight(R11)
    D = DiffOp.deriv(R11, "x")
    assert compose(W, D) == compose(D, W)
    P = compose(W + W - DiffOp.identity(R11), D)  # (2W - 1) d_x
    assert specialize(P, Fraction(1, 2)).is_zero()
    assert specialize(P, 1) == D
    psi = DensityElement(R11, {Fraction(1, 2): GradedPoly.var(R11, "x")})
    assert compose(W, DiffOp.identity(R11)).apply(psi) == psi * Fraction(1, 2)


def test_conjugation_by_exponential(rng):
    """e^{-u} D e^{u} agrees with the action on e^{u}-multiplied arguments
    for nilpotent u (so the exponential is itself polynomial)."""
    chart = R12
    xi1 = GradedPoly.var(chart, "xi1")
    xi2 = GradedPoly.var(chart, "xi2")
    u = rand_poly(rng, chart, 1, parity=0, nterms=2) * xi1 * xi2
    eu = GradedPoly.one(chart) + u  # u^2 = 0
    emu = GradedPoly.one(chart) - u
    for _ in range(5):
        D = rand_op(rng, chart, 2)
        f = rand_poly(rng, chart, 3)
        lhs = conjugate_by_exp(D, u).apply_poly(f)
        rhs = emu * D.apply_poly(eu * f)
        assert lhs == rhs


def _pair(p: GradedPoly, q: GradedPoly):
    return berezin_integral(p * q)


def test_adjoint_berezin_oracle(rng):
    """<D psi, chi> = (-1)^{pD p psi} <psi, D* chi> on purely odd charts."""
    for chart in (R02, R03):
        monos = [GradedPoly(chart, {((), o): Fraction(1)})
                 for r in range(len(chart.odd) + 1)
                 for o in __import__("itertools").combinations(
                     range(len(chart.odd)), r)]
        for _ in range(20):
            D = rand_op(rng, chart, 3, parity=rng.randint(0, 1))
            pD = D.parity()
            if pD is None:
                continue
            Ds = formal_adjoint(D)
            for psi in monos:
                for chi in monos:
                    lhs = _pair(D.apply_poly(psi), chi)
                    rhs = _pair(psi, Ds.apply_poly(chi)) * \
                        (-1) ** (pD * psi.parity())
                    assert lhs == rhs


def test_adjoint_involution_and_antimultiplicativity(rng):
    for chart in (R11, R12, R02):
        for _ in range(8):
            D = rand_op(rng, chart, 2, parity=rng.randint(0, 1))
            E = rand_op(rng, chart, 2, parity=rng.randint(0, 1))
            pD, pE = D.parity(), E.parity()
            if pD is None or pE is None:
                continue
            assert formal_adjoint(formal_adjoint(D)) == D
            assert formal_adjoint(compose(D, E)) == \
                compose(formal_adjoint(E), formal_adjoint(D)) * \
                Fraction((-1) ** (pD * pE))


def test_pencil_adjoint_weight_rule():
    W = DiffOp.weight(R11)
    one = DiffOp.identity(R11)
    assert pencil_adjoint(W) == one - W
    P = compose(W + W - one, DiffOp.deriv(R11, "x"))  # (2W-1) d_x
    assert pencil_adjoint(P) == P  # self-adjoint pencil


def test_op_from_action_round_trip(rng):
    for chart in (R11, R12):
        for _ in range(5):
            D = rand_op(rng, chart, 2)
            E = op_from_action(chart, D.apply_poly, 2)
            assert E == D
