from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from nonplanar_brake.affine import V2, VDOT, AffineScalar, refit

f = st.floats(-1e3, 1e3)
coef = st.builds(AffineScalar, f, f, f)


@given(a=coef, b=coef, k=f, v2=st.floats(0, 1e3), vd=f)
def test_value_is_affine_and_closed(a, b, k, v2, vd):
    assert (a + b).value(v2, vd) == pytest.approx(a.value(v2, vd) + b.value(v2, vd), abs=1e-6)
    assert (k * a).value(v2, vd) == pytest.approx(k * a.value(v2, vd), rel=1e-9, abs=1e-6)
    assert (a - b).isclose(a + (-b))
    assert refit(a.value).isclose(a, 1e-9)


def test_basis_and_constants():
    e = 3.0 + 2.0 * V2 - VDOT
    assert e == AffineScalar(3.0, 2.0, -1.0)
    assert (5.0 - e) == AffineScalar(2.0, -2.0, 1.0)
    assert (e / 2).c_v2 == 1.0
    with pytest.raises(TypeError):
        _ = V2 * V2
