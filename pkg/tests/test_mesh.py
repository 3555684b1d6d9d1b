"""Grid, field, quadrature, and field CSV round-trip tests.

The quadrature oracles are analytic: the trapezoid rule on a uniform grid
integrates products of the sampled sine modes exactly (discrete sine
orthogonality), and its error on a product of two affine functions has the
closed form (b - a) h^2 f' g' / 6.
"""

import numpy as np
import pytest

from adjointflow.errors import ConformabilityError
from adjointflow.mesh import (
    Field,
    Grid,
    inner_product,
    norm_l2,
    read_field_csv,
    sample_function,
    write_field_csv,
)


def test_interval_layout():
    g = Grid.interval(31)
    assert g.dim == 1
    assert g.n_nodes == 33
    assert g.n_interior_nodes == 31
    assert g.spacing == (1.0 / 32.0,)
    x = g.axis_coords[0]
    assert x[0] == 0.0 and x[-1] == 1.0
    assert np.allclose(np.diff(x), 1.0 / 32.0, rtol=0, atol=1e-15)


def test_box_layout_lexicographic():
    g = Grid.box(3, 2)
    assert g.dim == 2
    assert g.n_nodes == 5 * 4
    assert g.n_interior_nodes == 6
    # x runs fastest in the flattened node order
    assert np.allclose(g.coords[1] - g.coords[0], [g.spacing[0], 0.0])


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((0.0,), (0.0,), (4,))
    with pytest.raises(ValueError):
        Grid((0.0,), (1.0,), (0,))
    with pytest.raises(ConformabilityError):
        Grid((0.0, 0.0), (1.0,), (4,))
    with pytest.raises(ValueError):
        Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (2, 2, 2))


def test_quad_weights_sum_to_volume():
    for g in (Grid.interval(31), Grid.box(7, 5), Grid.interval(10, lo=-2.0, hi=3.0)):
        w = g.quad_weights
        assert np.all(w > 0)
        assert np.isclose(w.sum(), g.volume, rtol=0, atol=1e-13)


def test_trapezoid_sine_square_is_exactly_half():
    # sin^2(pi x) = (1 - cos 2 pi x)/2 and the cosine sums telescope to zero
    g = Grid.interval(31)
    f = sample_function(g, lambda x: np.sin(np.pi * x))
    assert inner_product(f, f) == pytest.approx(0.5, abs=1e-14)


def test_discrete_sine_orthogonality():
    g = Grid.interval(31)
    for j in range(1, 4):
        for k in range(1, 4):
            fj = sample_function(g, lambda x, j=j: np.sin(j * np.pi * x))
            fk = sample_function(g, lambda x, k=k: np.sin(k * np.pi * x))
            want = 0.5 if j == k else 0.0
            assert inner_product(fj, fk) == pytest.approx(want, abs=1e-10)


def test_trapezoid_error_identity_on_affine_product():
    # T(fg) - integral(fg) = (b - a) h^2 f' g' / 6 for affine f, g
    g = Grid.interval(31)
    h = g.spacing[0]
    f = sample_function(g, lambda x: 2.0 * x - 1.0)
    q = sample_function(g, lambda x: 3.0 * x + 0.5)
    exact = 0.5  # integral of 6x^2 - 2x - 0.5 on [0,1]
    want_err = h * h * (2.0 * 3.0) / 6.0
    assert inner_product(f, q) - exact == pytest.approx(want_err, abs=1e-14)


def test_trapezoid_2d_tensor_error():
    g = Grid.box(15, 15)
    f = sample_function(g, lambda x, y: x * y)
    # separable: T(x^2) T(y^2) with T(x^2) = 1/3 + h^2/6
    h = g.spacing[0]
    t1 = 1.0 / 3.0 + h * h / 6.0
    assert inner_product(f, f) == pytest.approx(t1 * t1, abs=1e-14)


def test_norm_is_weighted():
    g = Grid.interval(31)
    f = sample_function(g, lambda x: np.sin(np.pi * x))
    assert norm_l2(f) == pytest.approx(np.sqrt(0.5), abs=1e-12)


def test_field_roundtrip_interior():
    g = Grid.interval(5)
    vals = np.arange(1.0, 6.0)
    f = Field.from_interior(g, vals)
    assert np.array_equal(f.interior(), vals)
    assert f.values[0] == 0.0 and f.values[-1] == 0.0
    assert f.is_homogeneous_dirichlet()


def test_field_boundary_fill():
    g = Grid.interval(3)
    b = Field(g, np.array([2.0, 0.0, 0.0, 0.0, -1.0]))
    f = Field.from_interior(g, np.ones(3), boundary=b)
    assert f.values[0] == 2.0 and f.values[-1] == -1.0
    assert not f.is_homogeneous_dirichlet()


def test_field_values_are_read_only():
    g = Grid.interval(3)
    f = Field.zeros(g)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_field_arithmetic():
    g = Grid.interval(4)
    a = sample_function(g, lambda x: x)
    b = sample_function(g, lambda x: 1.0 - x)
    s = a + b
    assert np.allclose(s.values, 1.0, rtol=0, atol=1e-15)
    assert np.allclose((a - a).values, 0.0)
    assert np.allclose((2.0 * a).values, 2.0 * a.values)
    assert np.allclose((-a).values, -a.values)


def test_field_size_mismatch():
    g = Grid.interval(4)
    with pytest.raises(ConformabilityError):
        Field(g, np.zeros(7))
    with pytest.raises(ConformabilityError):
        Field.from_interior(g, np.zeros(3))


def test_mixed_grid_inner_product_rejected():
    a = sample_function(Grid.interval(4), lambda x: x)
    b = sample_function(Grid.interval(5), lambda x: x)
    with pytest.raises(ConformabilityError):
        inner_product(a, b)


def test_as_2d_shape_and_orientation():
    g = Grid.box(3, 2)
    f = sample_function(g, lambda x, y: x + 10.0 * y)
    m = f.as_2d()
    assert m.shape == (4, 5)  # (ny+2, nx+2)
    assert m[0, 1] == pytest.approx(g.axis_coords[0][1])
    assert m[1, 0] == pytest.approx(10.0 * g.axis_coords[1][1])


def test_field_csv_roundtrip_1d(tmp_path):
    g = Grid.interval(9)
    f = sample_function(g, lambda x: np.sin(2.1 * x) + 0.123456789012345)
    path = tmp_path / "f.csv"
    write_field_csv(f, path)
    back = read_field_csv(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
    # a second write is byte-identical
    p2 = tmp_path / "g.csv"
    write_field_csv(back, p2)
    assert path.read_bytes() == p2.read_bytes()


def test_field_csv_roundtrip_2d(tmp_path):
    g = Grid.box(4, 3)
    f = sample_function(g, lambda x, y: np.cos(x) * y)
    path = tmp_path / "f2.csv"
    write_field_csv(f, path)
    back = read_field_csv(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_field_csv_rejects_non_field(tmp_path):
    path = tmp_path / "junk.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_field_csv(path)
