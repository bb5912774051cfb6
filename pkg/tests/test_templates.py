import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from envaug.templates import (
    Constant,
    FeatureTemplate,
    GaussianKernel,
    LogisticFall,
    LogisticRise,
    TemplateFormatError,
    dump_template,
    eval_likelihood,
    parse_cell,
    parse_template,
)


def test_gaussian_peak():
    assert eval_likelihood(GaussianKernel(0.16, 0.02), 0.16) == 1.0


def test_logistic_midpoint():
    assert eval_likelihood(LogisticRise(0.08, 50), 0.08) == 0.5


def test_gaussian_one_sigma():
    assert eval_likelihood(GaussianKernel(0.16, 0.02), 0.14) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert eval_likelihood(GaussianKernel(0.16, 0.02), 0.14) == pytest.approx(0.60653, abs=1e-5)


def test_underflow_clamp():
    assert eval_likelihood(GaussianKernel(0.0, 0.001), 10.0) == 1e-300
    assert eval_likelihood(LogisticRise(0.0, 1e4), -10.0) == 1e-300


def test_minimal_constant_cell():
    assert parse_cell("c:1.0") == Constant(1.0)
    t = parse_template("name one\ncell_size 0.08\n1 2\nc:1.0 c:1.0\nentry 0\nexit 1\n")
    assert t.grid == (Constant(1.0), Constant(1.0))


def test_single_cell_template_cannot_have_disjoint_ends():
    with pytest.raises(TemplateFormatError, match="disjoint"):
        parse_template("name one\ncell_size 0.08\n1 1\nc:1.0\nentry 0\nexit 0\n")


def test_ledge_h2_fields(templates):
    t = templates["ledge-h2"]
    assert (t.rows, t.cols, t.n_cells, t.cell_size) == (3, 2, 6, 0.08)
    assert t.grid[:2] == (GaussianKernel(0.0, 0.02),) * 2
    assert t.grid[2:4] == (LogisticRise(0.08, 50.0),) * 2
    assert t.grid[4:] == (GaussianKernel(0.16, 0.02),) * 2
    assert t.entry_cells == (0, 1) and t.exit_cells == (4, 5)


@pytest.mark.parametrize(
    "token",
    ["g:0.16:-0.02", "g:0.16:0", "sr:0.08:0", "sf:0.08:-1", "c:0", "c:1.5", "q:1", "g:abc:0.1", "g:0.1"],
)
def test_bad_cell_tokens(token):
    text = f"name bad\ncell_size 0.08\n1 2\nc:1.0 {token}\nentry 0\nexit 1\n"
    with pytest.raises(TemplateFormatError) as exc:
        parse_template(text)
    assert exc.value.line == 4
    assert exc.value.column == 7


@pytest.mark.parametrize(
    "text",
    [
        "cell_size 0.08\n1 2\nc:1 c:1\nentry 0\nexit 1\n",
        "name x\ncell_size -1\n1 2\nc:1 c:1\nentry 0\nexit 1\n",
        "name x\ncell_size 0.08\n1 2\nc:1\nentry 0\nexit 1\n",
        "name x\ncell_size 0.08\n1 2\nc:1 c:1\nentry 0\nexit 0\n",
        "name x\ncell_size 0.08\n1 2\nc:1 c:1\nentry 0\nexit 5\n",
        "name x\ncell_size 0.08\n1 2\nc:1 c:1\nentry\nexit 1\n",
    ],
)
def test_bad_templates(text):
    with pytest.raises(TemplateFormatError):
        parse_template(text)


def test_shipped_templates_sizes(templates):
    assert {n: t.n_cells for n, t in templates.items()} == {
        "ledge-h1": 4,
        "ledge-h2": 6,
        "gap": 12,
        "gap-wide": 26,
    }


reals = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)
positive = st.floats(min_value=1e-3, max_value=200.0, allow_nan=False)
likelihoods = st.one_of(
    st.builds(GaussianKernel, reals, st.floats(min_value=1e-3, max_value=1.0)),
    st.builds(LogisticRise, reals, positive),
    st.builds(LogisticFall, reals, positive),
    st.builds(Constant, st.floats(min_value=1e-6, max_value=1.0, exclude_min=False)),
)


@given(likelihoods, st.floats(min_value=-50, max_value=50, allow_nan=False))
def test_likelihood_in_unit_interval(fn, h):
    v = eval_likelihood(fn, h)
    assert 0.0 < v <= 1.0


@given(reals, st.floats(min_value=1e-3, max_value=1.0), st.floats(min_value=0, max_value=1.0))
def test_gaussian_symmetry(mu, sigma, d):
    g = GaussianKernel(mu, sigma)
    assert abs(eval_likelihood(g, mu + d) - eval_likelihood(g, mu - d)) <= 1e-12


@given(reals, st.floats(min_value=1e-3, max_value=60.0), st.floats(min_value=-1, max_value=1))
def test_rise_plus_fall_is_one(x0, k, h):
    total = eval_likelihood(LogisticRise(x0, k), h) + eval_likelihood(LogisticFall(x0, k), h)
    assert abs(total - 1.0) <= 1e-12


@st.composite
def templates_strategy(draw):
    rows = draw(st.integers(1, 5))
    cols = draw(st.integers(1, 4))
    m = rows * cols
    if m < 2:
        cols = 2
        m = rows * cols
    grid = tuple(draw(st.lists(likelihoods, min_size=m, max_size=m)))
    idx = draw(st.permutations(range(m)))
    n_entry = draw(st.integers(1, m - 1))
    n_exit = draw(st.integers(1, m - n_entry))
    return FeatureTemplate(
        draw(st.from_regex(r"[a-z][a-z0-9\-]{0,8}", fullmatch=True)),
        draw(st.floats(min_value=0.01, max_value=0.5)),
        rows,
        cols,
        grid,
        tuple(sorted(idx[:n_entry])),
        tuple(sorted(idx[n_entry : n_entry + n_exit])),
    )


@given(templates_strategy())
def test_template_round_trip(t):
    assert parse_template(dump_template(t)) == t


def test_offsets_are_centred(templates):
    off = templates["gap"].offsets()
    assert off.shape == (12, 2)
    assert np.allclose(off.mean(axis=0), 0.0)
    assert off[0].tolist() == pytest.approx([-0.2, -0.04])
