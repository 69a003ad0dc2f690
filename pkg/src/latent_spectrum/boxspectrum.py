"""Particle in a box with a sinusoidal perturbation, to first order.

Closed forms come from product-to-sum identities. Each integral also has an
independent composite Gauss-Legendre evaluation (``*_quad``) for checking.

With ``u = z / L`` every matrix element reduces to integrals of the form
``int_0^1 sin(pi q u) du = (1 - cos(pi q)) / (pi q)``, which is written as
``(pi q / 2) * sinc(q / 2)**2`` so the ``q -> 0`` limit needs no special case.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class BoxSpec:
    L: float = 1.0
    A: float = 1.0
    t: int = 3
    alpha: float = 1.0
    M: int = 10

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigError("box length L must be positive", "L")
        if not self.A > 0:
            raise ConfigError("kinetic constant A must be positive", "A")
        if int(self.t) != self.t or self.t < 1:
            raise ConfigError("potential frequency t must be an integer >= 1", "t")
        if not self.alpha > 0:
            raise ConfigError("kinetic weight alpha must be positive", "alpha")
        if int(self.M) != self.M or self.M < 2:
            raise ConfigError("mode cutoff M must be an integer >= 2", "M")


def phi(n, z, spec: BoxSpec):
    """Unperturbed eigenfunction ``sqrt(2/L) sin(pi n z / L)``; ``n`` may be real."""
    return np.sqrt(2.0 / spec.L) * np.sin(np.pi * np.asarray(n) * np.asarray(z) / spec.L)


def e0(n, spec: BoxSpec):
    return (np.pi / spec.L) ** 2 * spec.A * np.asarray(n, dtype=np.float64) ** 2


def potential(z, spec: BoxSpec):
    """``sin(2 pi t z / L)``: exactly ``t`` minima inside the box."""
    return np.sin(2.0 * np.pi * spec.t * np.asarray(z) / spec.L)


def _sine_moment(q):
    # int_0^1 sin(pi q u) du
    q = np.asarray(q, dtype=np.float64)
    return 0.5 * np.pi * q * np.sinc(0.5 * q) ** 2


def _cos_sin_moment(p, t):
    # int_0^1 cos(pi p u) sin(2 pi t u) du
    return 0.5 * (_sine_moment(2.0 * t + p) + _sine_moment(2.0 * t - p))


def e1_closed(n, spec: BoxSpec):
    """First-order energy shift ``<phi_n|V|phi_n>`` for real ``n > 0``.

    Independent of ``L`` because the potential scales with the box.
    """
    n = np.asarray(n, dtype=np.float64)
    return _cos_sin_moment(0.0, spec.t) - _cos_sin_moment(2.0 * n, spec.t)


def _sine_moment_slope(q):
    # d/dq of _sine_moment, pi * (sin(pi q)/(pi q) - (1 - cos(pi q))/(pi q)^2)
    q = np.asarray(q, dtype=np.float64)
    return np.pi * (np.sinc(q) - 0.5 * np.sinc(0.5 * q) ** 2)


def e1_slope(n, spec: BoxSpec):
    """Derivative of :func:`e1_closed` with respect to the (real) mode number."""
    n = np.asarray(n, dtype=np.float64)
    return -(_sine_moment_slope(2.0 * spec.t + 2.0 * n) - _sine_moment_slope(2.0 * spec.t - 2.0 * n))


def coupling(m, n, spec: BoxSpec):
    """Matrix element ``<phi_m|V|phi_n>``; symmetric in ``m`` and ``n``."""
    m = np.asarray(m, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return _cos_sin_moment(m - n, spec.t) - _cos_sin_moment(m + n, spec.t)


def gauss_legendre_integrate(f, a, b, max_freq, points=None, nodes_per_panel=64):
    """Composite Gauss-Legendre integral of ``f`` over ``[a, b]``.

    Panels are no wider than half of the shortest period ``1 / max_freq``
    (in units of the integration variable). ``points`` optionally raises the
    total node count; the panel count never drops below the period rule.
    """
    if nodes_per_panel < 64:
        raise ContractError("oracle requires at least 64 nodes per panel")
    width = b - a
    panels = int(np.ceil(2.0 * max_freq * width)) if max_freq > 0 else 1
    if points is not None:
        panels = max(panels, int(np.ceil(points / nodes_per_panel)))
    panels = max(panels, 1)
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).reshape(-1)
    weights = (half[:, None] * w[None, :]).reshape(-1)
    return float(np.dot(weights, f(nodes)))


def e1_quad(n, spec: BoxSpec, points=100_000) -> float:
    L = spec.L
    freq = (abs(n) + spec.t) / L  # highest spatial frequency in the integrand, cycles per unit z
    integrand = lambda z: phi(n, z, spec) ** 2 * potential(z, spec)
    return gauss_legendre_integrate(integrand, 0.0, L, freq, points)


def coupling_quad(m, n, spec: BoxSpec, points=100_000) -> float:
    L = spec.L
    freq = (0.5 * (abs(m) + abs(n)) + spec.t) / L
    integrand = lambda z: phi(m, z, spec) * phi(n, z, spec) * potential(z, spec)
    return gauss_legendre_integrate(integrand, 0.0, L, freq, points)


def overlap_quad(m, n, spec: BoxSpec, points=100_000) -> float:
    """``int_0^L phi_m phi_n dz`` by quadrature (orthonormality check)."""
    freq = 0.5 * (abs(m) + abs(n)) / spec.L
    return gauss_legendre_integrate(lambda z: phi(m, z, spec) * phi(n, z, spec), 0.0, spec.L, freq, points)


@dataclass(frozen=True)
class SpectrumTable:
    """Energies and couplings for modes ``1..M``.

    ``coupling[m-1, n-1]`` holds ``<phi_m|V|phi_n>`` with the diagonal zeroed,
    since the expansion only sums over ``m != n``.
    """

    modes: np.ndarray
    E0: np.ndarray
    E1: np.ndarray
    coupling: np.ndarray


def build_table(spec: BoxSpec) -> SpectrumTable:
    modes = np.arange(1, spec.M + 1)
    c = coupling(modes[:, None], modes[None, :], spec)
    c = 0.5 * (c + c.T)  # exact symmetry, not just to rounding
    np.fill_diagonal(c, 0.0)
    return SpectrumTable(modes=modes, E0=e0(modes, spec), E1=e1_closed(modes, spec), coupling=c)


def perturbed_psi(n: int, z, spec: BoxSpec, table: SpectrumTable, textbook=False):
    """``phi_n + sum_{m != n} c_{m,n} phi_m`` truncated at the table's cutoff.

    By default the coefficient is the bare matrix element. ``textbook=True``
    divides it by ``E0_n - E0_m`` as in standard Rayleigh-Schrodinger theory.
    """
    if int(n) != n or not 1 <= n <= len(table.modes):
        raise ContractError(f"mode {n} outside 1..{len(table.modes)}")
    n = int(n)
    z = np.asarray(z, dtype=np.float64)
    out = phi(n, z, spec)
    for m in table.modes:
        if m == n:
            continue
        c = table.coupling[m - 1, n - 1]
        if textbook:
            c = c / (table.E0[n - 1] - table.E0[m - 1])
        out = out + c * phi(m, z, spec)
    return out


def map_to_box(values, spec: BoxSpec, margin=None) -> np.ndarray:
    """Affine min-max rescale onto ``[margin, L - margin]``.

    A constant input maps to ``L / 2``. ``margin`` defaults to ``0.01 L``.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError("cannot map an empty vector into the box")
    eps = 0.01 * spec.L if margin is None else float(margin)
    if not 0 <= eps < spec.L / 2:
        raise ContractError(f"margin {eps} must lie in [0, L/2)")
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full(values.shape, spec.L / 2)
    return eps + (values - lo) / (hi - lo) * (spec.L - 2 * eps)


def write_table(table: SpectrumTable, spectrum_path, coupling_path) -> None:
    with open(spectrum_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "E0", "E1"])
        for n, a, b in zip(table.modes, table.E0, table.E1):
            w.writerow([int(n), repr(float(a)), repr(float(b))])
    with open(coupling_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "n", "c"])
        for i, m in enumerate(table.modes):
            for j, n in enumerate(table.modes):
                w.writerow([int(m), int(n), repr(float(table.coupling[i, j]))])


def read_table(spectrum_path, coupling_path) -> SpectrumTable:
    with open(spectrum_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    modes = np.array([int(r["n"]) for r in rows])
    E0 = np.array([float(r["E0"]) for r in rows])
    E1 = np.array([float(r["E1"]) for r in rows])
    c = np.zeros((len(modes), len(modes)))
    with open(coupling_path, newline="") as fh:
        for r in csv.DictReader(fh):
            c[int(r["m"]) - 1, int(r["n"]) - 1] = float(r["c"])
    return SpectrumTable(modes=modes, E0=E0, E1=E1, coupling=c)
