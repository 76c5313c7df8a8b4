"""Hypothesis strategies shared by the property tests."""

import numpy as np
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec3 = hnp.arrays(np.float64, 3, elements=finite)


@st.composite
def unit_quats(draw):
    q = draw(hnp.arrays(np.float64, 4, elements=st.floats(-1.0, 1.0)))
    n = np.linalg.norm(q)
    if n < 1e-3:
        q = np.array([0.0, 0.0, 0.0, 1.0])
        n = 1.0
    return q / n


small_vec3 = hnp.arrays(np.float64, 3, elements=st.floats(-1e-3, 1e-3))
