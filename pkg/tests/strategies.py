"""Hypothesis strategies for grids and grid functions."""

import numpy as np
from hypothesis import strategies as st

from lpsubdiff.grid import GridFunction, MeasureSpace

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False, allow_subnormal=False)
measures = st.floats(min_value=1e-3, max_value=10.0, allow_nan=False)


@st.composite
def spaces(draw, min_cells=1, max_cells=12):
    n = draw(st.integers(min_cells, max_cells))
    return MeasureSpace(draw(st.lists(measures, min_size=n, max_size=n)))


@st.composite
def functions(draw, space=None, sparse=True):
    sp = draw(spaces()) if space is None else space
    vals = draw(st.lists(finite, min_size=sp.n, max_size=sp.n))
    vals = np.array(vals)
    if sparse:
        zero = draw(st.lists(st.booleans(), min_size=sp.n, max_size=sp.n))
        vals[np.array(zero)] = 0.0
    return GridFunction(sp, vals)


@st.composite
def function_pairs(draw):
    sp = draw(spaces())
    return draw(functions(sp)), draw(functions(sp))
