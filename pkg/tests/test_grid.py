import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard_neumann.exponents import FlatBoundarySpec, sphere_area
from choquard_neumann.grid import (DomainError, GridFunction, dirichlet_energy, integrate,
                                   make_domain, parse_domain_spec, read_grid_function)


def test_box_measure_and_linear_energy():
    d = make_domain("box", [(0, 1), (0, 2)], (11, 21))
    assert d.measure == pytest.approx(2.0)
    u = GridFunction.from_callable(d, lambda x: x[:, 0])
    assert dirichlet_energy(u) == pytest.approx(2.0, rel=1e-12)
    assert integrate(u) == pytest.approx(1.0, rel=1e-12)


def test_radial_weights_sum_to_measure():
    d = make_domain("radial-half-ball", [(0, 1)], 41, dim=4)
    assert d.weights.sum() == pytest.approx(0.5 * sphere_area(4) / 4, rel=1e-12)
    d = make_domain("radial-ball", [(0, 2)], 30, dim=3, grading="geometric", r_min=1e-3)
    assert d.weights.sum() == pytest.approx(sphere_area(3) * 8 / 3, rel=1e-12)


def test_radial_energy_of_r_squared():
    # int_B |grad r^2|^2 = 4 |S| R^{N+2}/(N+2); P1 is exact only in the limit
    d = make_domain("radial-ball", [(0, 1)], 401, dim=3)
    u = GridFunction(d, d.radii**2)
    assert dirichlet_energy(u) == pytest.approx(4 * 4 * np.pi / 5, rel=1e-4)


def test_sigma_measure_matches_layer_integral():
    fl = FlatBoundarySpec(4.0, 0.1, 1.0)
    d = make_domain("radial-half-ball", [(0, 1)], 801, fl, dim=4)
    # int_{|x'|<1/2} c|x'|^4 dx' = c |S^2| (1/2)^7 / 7
    assert d.sigma_measure == pytest.approx(0.1 * 4 * np.pi * 0.5**7 / 7, rel=1e-4)


@pytest.mark.parametrize("kwargs, msg", [
    (dict(kind="box", extents=[(0, 1)], resolution=2), "resolution"),
    (dict(kind="box", extents=[(1, 0)], resolution=5), "lo < hi"),
    (dict(kind="reflected-pair", extents=[(0, 1), (-1, 1)], resolution=(5, 6)), "odd"),
    (dict(kind="box", extents=[(0, 1)], resolution=5, dirichlet=("x2+",)), "Dirichlet"),
    (dict(kind="radial-ball", extents=[(0, 1)], resolution=5, dim=3, dirichlet=("x1+",)), "cap"),
    (dict(kind="blob", extents=[(0, 1)], resolution=5), "unknown domain kind"),
])
def test_domain_validation(kwargs, msg):
    with pytest.raises(DomainError, match=msg):
        make_domain(**kwargs)


def test_flatness_only_on_supported_kinds():
    with pytest.raises(DomainError):
        make_domain("radial-ball", [(0, 1)], 5, FlatBoundarySpec(3.0), dim=3)
    with pytest.raises(DomainError):
        make_domain("radial-half-ball", [(0, 1)], 5, FlatBoundarySpec(3.0, 1.0, 2.0), dim=3)


def test_roles_dirichlet_wins_at_junctions():
    d = make_domain("box", [(0, 1), (0, 1)], (5, 5), dirichlet=("x1+",))
    roles = d.node_roles.reshape(d.shape)
    assert (roles[-1, :] == "gamma0").all()
    assert roles[0, 0] == "gamma1"
    assert roles[2, 2] == "interior"
    assert d.free_mask.sum() == 20


def test_spec_text_roundtrip():
    d = make_domain("radial-half-ball", [(0, 1)], 33, FlatBoundarySpec(4, 1.0, 1.0), dim=4,
                    dirichlet=("cap",), grading="geometric", r_min=1e-2)
    d2 = parse_domain_spec(d.to_spec_text())
    assert d2.to_spec_text() == d.to_spec_text()
    assert np.array_equal(d2.radii, d.radii)


def test_unknown_spec_key():
    with pytest.raises(DomainError, match="unknown"):
        parse_domain_spec("kind=box\nextents=0:1\nresolution=5\ncolour=red\n")


def test_csv_roundtrip_exact():
    d = make_domain("box", [(0, 1), (0, 1)], (4, 5))
    u = GridFunction.from_callable(d, lambda x: np.sin(7 * x[:, 0]) + x[:, 1] / 3)
    v = read_grid_function(d, u.to_csv())
    assert np.array_equal(u.values, v.values)


def test_nonfinite_values_rejected():
    d = make_domain("box", [(0, 1)], 5)
    with pytest.raises(ValueError):
        GridFunction(d, [0, 1, np.nan, 2, 3])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=9, max_size=9), st.floats(-5, 5))
def test_energy_is_quadratic_and_translation_free(vals, c):
    d = make_domain("box", [(0, 1), (0, 2)], (3, 3))
    u = GridFunction(d, vals)
    assert dirichlet_energy(u) >= -1e-12
    assert dirichlet_energy(u + c) == pytest.approx(dirichlet_energy(u), rel=1e-9, abs=1e-9)
    assert dirichlet_energy(u * 2.0) == pytest.approx(4 * dirichlet_energy(u), rel=1e-12, abs=1e-12)
