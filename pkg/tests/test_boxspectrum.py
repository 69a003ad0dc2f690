import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latent_spectrum.boxspectrum import (
    BoxSpec,
    build_table,
    coupling,
    coupling_quad,
    e0,
    e1_closed,
    e1_quad,
    e1_slope,
    gauss_legendre_integrate,
    map_to_box,
    overlap_quad,
    perturbed_psi,
    phi,
    potential,
    read_table,
    write_table,
)
from latent_spectrum.errors import ConfigError, ContractError

UNIT = BoxSpec(L=1.0, A=1.0, t=2)


def test_phi_examples():
    assert phi(1, 0.5, UNIT) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert phi(3.7, 0.0, UNIT) == 0.0
    assert phi(2, 0.25, UNIT) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_e0_examples():
    assert e0(1, UNIT) == pytest.approx(9.8696044, abs=1e-7)
    assert e0(2, UNIT) == pytest.approx(4 * e0(1, UNIT), rel=1e-15)
    assert e0(1, BoxSpec(L=2.0)) == pytest.approx(e0(1, UNIT) / 4, rel=1e-15)


def test_e0_quadratic_and_increasing():
    n = np.arange(1, 40)
    assert np.all(np.diff(e0(n, UNIT)) > 0)
    assert np.array_equal(e0(2 * n, UNIT), 4 * e0(n, UNIT))


def test_potential_examples():
    assert potential(0.25, BoxSpec(t=1)) == pytest.approx(1.0, abs=1e-15)
    assert potential(0.0, BoxSpec(t=5)) == 0.0


@pytest.mark.parametrize("t", [1, 2, 3, 4])
def test_potential_has_t_minima(t):
    z = np.linspace(0, 1, 100_001)
    d = np.diff(potential(z, BoxSpec(t=t)))
    minima = np.sum((d[:-1] < 0) & (d[1:] >= 0))
    assert minima == t


def test_potential_scales_with_box():
    assert potential(0.5, BoxSpec(L=2.0, t=1)) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 10])
@pytest.mark.parametrize("t", [1, 2, 3, 5])
def test_e1_vanishes_for_integer_pairs(n, t):
    spec = BoxSpec(t=t)
    assert abs(e1_quad(n, spec)) < 1e-12
    assert abs(e1_closed(n, spec)) < 1e-12


def test_e1_non_integer_matches_frozen_oracle():
    # scipy adaptive quadrature of 2 sin^2(1.5 pi z) sin(4 pi z) over [0, 1]
    assert e1_closed(1.5, UNIT) == pytest.approx(-0.36378272706718945, abs=1e-9)
    assert e1_quad(1.5, UNIT) == pytest.approx(-0.36378272706718945, abs=1e-9)


def test_e1_small_n_limit():
    spec = BoxSpec(t=3)
    assert abs(e1_quad(1e-4, spec)) < 1e-3
    assert e1_closed(1e-4, spec) == pytest.approx(-1.047197517908733e-08, abs=1e-15)


def test_e1_continuous_across_resonance():
    spec = BoxSpec(t=3)
    limit = e1_closed(3.0, spec)
    assert abs(e1_closed(3 + 1e-6, spec) - limit) < 1e-4
    assert abs(e1_closed(3 - 1e-6, spec) - limit) < 1e-4


def test_e1_independent_of_box_length():
    for L in (0.5, 1.0, 3.0):
        spec = BoxSpec(L=L, t=2)
        assert e1_closed(2.3, spec) == pytest.approx(e1_quad(2.3, spec), abs=1e-9)


def test_e1_random_real_n_against_quadrature():
    rng = np.random.default_rng(0)
    spec = BoxSpec()
    for n in rng.uniform(1e-6, 10.0, 100):
        assert abs(e1_closed(n, spec) - e1_quad(n, spec, 100_000)) < 1e-9


def test_e1_slope_matches_finite_differences():
    spec = BoxSpec()
    h = 1e-6
    for n in [1e-3, 0.4, 1.0, 2.99, 3.0, 4.5, 9.1]:
        fd = (e1_closed(n + h, spec) - e1_closed(n - h, spec)) / (2 * h)
        assert e1_slope(n, spec) == pytest.approx(fd, abs=1e-7)


def test_coupling_examples():
    spec = BoxSpec(t=1)
    assert coupling(1, 2, spec) == pytest.approx(0.6790610905254203, abs=1e-9)
    assert coupling_quad(1, 2, spec) == pytest.approx(0.6790610905254203, abs=1e-9)
    assert coupling(2, 5, BoxSpec(t=3)) == pytest.approx(0.4352955708496283, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(m=st.integers(1, 12), n=st.integers(1, 12), t=st.integers(1, 6))
def test_coupling_symmetric_and_diagonal(m, n, t):
    spec = BoxSpec(t=t)
    assert abs(coupling(m, n, spec) - coupling(n, m, spec)) < 1e-12
    assert abs(coupling(n, n, spec) - e1_closed(n, spec)) < 1e-12


def test_orthonormality():
    spec = BoxSpec(L=1.7)
    for m in range(1, 11):
        for n in range(1, 11):
            assert abs(overlap_quad(m, n, spec) - (m == n)) < 1e-9


def test_gauss_legendre_polynomial_exact():
    val = gauss_legendre_integrate(lambda x: 13 * x**7 - 2 * x + 1, -1.0, 4.0, max_freq=0)
    exact = 13 * (4**8 - 1) / 8 - (16 - 1) + 5
    assert val == pytest.approx(exact, rel=1e-14)


def test_table_invariants():
    spec = BoxSpec(M=8, t=2)
    table = build_table(spec)
    assert np.all(np.diff(table.E0) > 0)
    assert np.array_equal(table.coupling, table.coupling.T)
    assert not np.diag(table.coupling).any()
    for i, m in enumerate(table.modes):
        assert abs(table.E1[i] - e1_quad(m, spec)) < 1e-9
        for j, n in enumerate(table.modes):
            if m != n:
                assert abs(table.coupling[i, j] - coupling_quad(m, n, spec)) < 1e-9


def test_table_csv_roundtrip(tmp_path):
    table = build_table(BoxSpec())
    write_table(table, tmp_path / "s.csv", tmp_path / "c.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "n,E0,E1"
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "m,n,c"
    back = read_table(tmp_path / "s.csv", tmp_path / "c.csv")
    assert np.array_equal(back.E0, table.E0)
    assert np.array_equal(back.E1, table.E1)
    assert np.array_equal(back.coupling, table.coupling)


def test_perturbed_psi_expansion():
    spec = BoxSpec(M=6, t=1)
    table = build_table(spec)
    z = np.linspace(0, 1, 11)
    manual = phi(2, z, spec) + sum(coupling(m, 2, spec) * phi(m, z, spec) for m in range(1, 7) if m != 2)
    np.testing.assert_allclose(perturbed_psi(2, z, spec, table), manual, atol=1e-14)
    textbook = phi(2, z, spec) + sum(
        coupling(m, 2, spec) / (e0(2, spec) - e0(m, spec)) * phi(m, z, spec) for m in range(1, 7) if m != 2
    )
    np.testing.assert_allclose(perturbed_psi(2, z, spec, table, textbook=True), textbook, atol=1e-14)


def test_perturbed_psi_vanishes_at_walls():
    spec = BoxSpec()
    table = build_table(spec)
    assert abs(perturbed_psi(3, 0.0, spec, table)) < 1e-15
    assert abs(perturbed_psi(3, 1.0, spec, table)) < 1e-12


def test_perturbed_psi_mode_out_of_range():
    spec = BoxSpec(M=4)
    with pytest.raises(ContractError):
        perturbed_psi(5, 0.1, spec, build_table(spec))


def test_map_to_box_examples():
    spec = BoxSpec()
    np.testing.assert_allclose(map_to_box([0.0, 1.0], spec, 0.01), [0.01, 0.99], atol=1e-15)
    np.testing.assert_array_equal(map_to_box([3.0, 3.0, 3.0], spec, 0.01), [0.5, 0.5, 0.5])
    np.testing.assert_allclose(map_to_box([-2.0, 0.0, 2.0], spec, 0.01), [0.01, 0.5, 0.99], atol=1e-15)


def test_map_to_box_empty():
    with pytest.raises(ContractError):
        map_to_box([], BoxSpec())


@pytest.mark.parametrize("kw", [{"L": 0}, {"A": -1}, {"t": 0}, {"t": 1.5}, {"M": 1}, {"alpha": 0}])
def test_boxspec_validation(kw):
    with pytest.raises(ConfigError):
        BoxSpec(**kw)
