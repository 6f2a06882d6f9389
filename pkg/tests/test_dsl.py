"""Parser, elaborator, and canonical printer."""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superdelta import DensityElement, DiffOp, GradedPoly
from superdelta.diffop import compose
from superdelta.dsl import (
    DslError,
    elaborate,
    load_module,
    parse_element,
    parse_module,
    render,
)

from conftest import R12, poly_strategy, rand_op, rand_poly

HDR = "chart C { even x; odd xi1, xi2; }\n"


def _elem(text: str):
    v = load_module(HDR + "element e on C = " + text + ";").elements["e"]
    return v


def _as_de(v):
    return v if isinstance(v, DensityElement) else DensityElement.from_poly(v)


# ---------------------------------------------------------------------------
# parsing


def test_smoke_module():
    m = load_module(
        "chart C { even x; odd xi; } operator D on C = d(x)*d(xi);")
    assert m.operators["D"] == compose(
        DiffOp.deriv(m.chart, "x"), DiffOp.deriv(m.chart, "xi"))


def test_tensor_symmetrization():
    m = load_module(HDR + "tensor S on C parity odd { [x,xi1] = 1; }")
    kind, eps, S = m.tensors["S"]
    assert kind == "matrix" and eps == 1
    assert S[("x", "xi1")] == GradedPoly.one(m.chart)
    assert S[("xi1", "x")] == GradedPoly.one(m.chart)  # (-1)^{0*1} = +1


def test_precedence():
    x = GradedPoly.var(R12, "x")
    assert _elem("1 + 2*x") == GradedPoly.one(R12) + x + x
    assert _elem("-x^2") == -(x * x)
    assert _elem("2^3") == GradedPoly.const(R12, 8)
    assert _elem("1/2*x") == x * Fraction(1, 2)


def test_weight_literals():
    v = _elem("t^(1/2) + 2*t^(-1/3)")
    assert isinstance(v, DensityElement)
    assert v.weights() == [Fraction(-1, 3), Fraction(1, 2)]


def test_operator_expressions():
    m = load_module(HDR + "operator P on C = (2*W - 1)*d(x);")
    W = DiffOp.weight(m.chart)
    expect = compose(W + W - DiffOp.identity(m.chart),
                     DiffOp.deriv(m.chart, "x"))
    assert m.operators["P"] == expect


def test_map_declaration():
    m = load_module(HDR + """
map phi on C { x -> x + xi1*xi2; xi1 -> xi1; xi2 -> xi2;
  inverse { x -> x - xi1*xi2; xi1 -> xi1; xi2 -> xi2; } }
""")
    cm = m.maps["phi"]
    assert cm.push(cm.pull(GradedPoly.var(m.chart, "x"))) == \
        GradedPoly.var(m.chart, "x")


# ---------------------------------------------------------------------------
# diagnostics


@pytest.mark.parametrize("src,line,col,frag", [
    ("chart C { even x; odd xi; }\noperator D on C = d(y);", 2, 21,
     "undeclared variable"),
    ("chart C { even x; odd xi; }\ndensity s on C = x*xi;", 2, 1,
     "must be even"),
    ("chart C { even x; }\nelement e on C = W;", 2, 18, "weight symbol"),
    ("chart C { even x; }\nelement e on C = 1 +;", 2, 21, "found"),
    ("chart C { even x; }\nelement e on C = y;", 2, 18, "undeclared name"),
    ("chart C { even x; } chart B { even y; }", 1, 21, "one chart"),
])
def test_diagnostic_positions(src, line, col, frag):
    with pytest.raises(DslError) as ei:
        load_module(src)
    assert ei.value.line == line
    assert ei.value.col == col
    assert frag in ei.value.message


def test_expected_token_sets():
    with pytest.raises(DslError) as ei:
        load_module("chart C { even x; }\nelement e on C = (1;")
    assert "')'" in ei.value.expected


def test_mixed_tensor_ranks_rejected():
    with pytest.raises(DslError):
        load_module(HDR + "tensor T on C parity odd { [x,xi1] = 1; [x] = xi1; }")


def test_tensor_parity_rejected():
    with pytest.raises(DslError):
        load_module(HDR + "tensor T on C parity odd { [x,xi1] = xi2; }")


# ---------------------------------------------------------------------------
# rendering


def test_render_examples():
    x = GradedPoly.var(R12, "x")
    xi1 = GradedPoly.var(R12, "xi1")
    xi2 = GradedPoly.var(R12, "xi2")
    assert render(x * x + x * xi1 * xi2 * 2) == "x^2 + 2*x*xi1*xi2"
    assert render(x * Fraction(1, 2)) == "(1/2)*x"
    assert render(DiffOp.deriv(R12, "x") + DiffOp.identity(R12)) == "1 + d(x)"
    psi = DensityElement(R12, {Fraction(1, 2): x * Fraction(1, 2)})
    assert render(psi) == "(1/2)*x*t^(1/2)"
    W = DiffOp.weight(R12)
    P = compose(W + W - DiffOp.identity(R12), DiffOp.deriv(R12, "x"))
    assert render(P) == "(2*W - 1)*d(x)"
    assert render(GradedPoly.zero(R12)) == "0"


@given(poly_strategy(R12, 3))
@settings(max_examples=80, deadline=None)
def test_poly_round_trip(p):
    assert _elem(render(p)) == p


def test_render_canonical_distinct(rng):
    seen = {}
    for _ in range(60):
        p = rand_poly(rng, R12, 3)
        s = render(p)
        if s in seen:
            assert seen[s] == p
        seen[s] = p


def test_operator_round_trip(rng):
    for _ in range(40):
        D = rand_op(rng, R12, 3)
        if rng.random() < 0.5:
            D = D * DiffOp.weight(R12) + D
        src = HDR + "operator e on C = " + render(D) + ";"
        assert load_module(src).operators["e"] == D


def test_density_round_trip(rng):
    for _ in range(40):
        d = DensityElement(R12, {
            Fraction(1, 2): rand_poly(rng, R12, 2),
            Fraction(0): rand_poly(rng, R12, 2),
            Fraction(-2, 3): rand_poly(rng, R12, 2),
        })
        got = _as_de(_elem(render(d)))
        assert got == d


def test_parse_element_helper():
    m = load_module(HDR + "element f on C = x^2;")
    assert parse_element("f + 1", m) == \
        GradedPoly.var(m.chart, "x") ** 2 + GradedPoly.one(m.chart)
    with pytest.raises(DslError):
        parse_element("zz", m)
