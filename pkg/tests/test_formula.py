import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gelcal.data import ObservedSample
from gelcal.errors import FormulaSyntaxError, InvariantViolation, UnknownColumn
from gelcal.formula import bind, parse_formula


def test_interaction_terms():
    f = parse_formula("y ~ z1 + z2 + z1:z2")
    assert [str(t) for t in f.terms] == ["z1", "z2", "z1:z2"]
    assert len(f.terms[2].factors) == 2
    assert f.columns == ("z1", "z2")


def test_indicator_response_and_sqrt():
    f = parse_formula("I(y>240) ~ x1 + sqrt(x2)")
    assert f.is_indicator
    assert f.response.threshold == 240.0 and f.response.op == ">"
    assert f.terms[1].factors[0].transform == "sqrt"


def test_syntax_error_offset():
    with pytest.raises(FormulaSyntaxError) as exc:
        parse_formula("y ~ + z1")
    assert exc.value.offset == 4
    assert exc.value.exit_code == 1


@pytest.mark.parametrize("text", ["", "y", "y ~", "~ x", "y ~ x +", "y ~ x x", "y ~ foo(x)", "y ~ I(x)",
                                  "y ~ sqrt(x", "y ~ (x)", "y ~ 1 + x", "y ~ x:"])
def test_rejects(text):
    with pytest.raises(FormulaSyntaxError):
        parse_formula(text)


def test_intercept_only_and_chains():
    assert parse_formula("y ~ 1").terms == ()
    f = parse_formula("y~z1:z2:z3+log(x4)+sq(x1)+I(x1>=3):x2")
    assert str(f) == "y ~ z1:z2:z3 + log(x4) + sq(x1) + I(x1>=3.0):x2"
    assert parse_formula(str(f)) == f


def test_bind_and_design():
    s = ObservedSample(np.array([1.0, np.nan, 3.0]), np.array([1, 0, 1]),
                       np.array([[1.0, 4.0], [2.0, 9.0], [3.0, 16.0]]), ("a", "b"))
    f = bind(parse_formula("y ~ a + sqrt(b) + a:I(a>1) + sq(a)"), s.column_names)
    F, names = f.design(s)
    np.testing.assert_array_equal(F, [[1, 1, 2, 0, 1], [1, 2, 3, 2, 4], [1, 3, 4, 3, 9]])
    assert names[0] == "(intercept)"
    with pytest.raises(UnknownColumn):
        bind(parse_formula("y ~ c"), s.column_names)
    with pytest.raises(InvariantViolation):
        parse_formula("y ~ log(a)").design(
            ObservedSample(np.array([1.0]), np.array([1]), np.array([[0.0, 1.0]]), ("a", "b")))


@settings(max_examples=500, deadline=None)
@given(st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=40))
def test_fuzz_never_crashes(text):
    try:
        f = parse_formula(text)
    except FormulaSyntaxError as exc:
        assert 0 <= exc.offset <= len(text.encode())
        return
    # anything accepted re-parses to the same structure
    assert parse_formula(str(f)) == f


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["x1", "x2", "sqrt(x3)", "log(x4)", "sq(z1)", "x1:z2", "I(x1>=3)"]),
                min_size=1, max_size=6))
def test_generated_formulas_parse(terms):
    f = parse_formula("y ~ " + " + ".join(terms))
    assert len(f.terms) == len(terms)
