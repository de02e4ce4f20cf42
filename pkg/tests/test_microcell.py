import numpy as np
import pytest

from multiscale_rno.errors import (
    CFLError,
    ConfigError,
    DegenerateGeometryError,
    GeometryError,
    ResolutionError,
)
from multiscale_rno.microcell import (
    CellConfig,
    Kinetics,
    advance_interface,
    build_microstructure,
    evolve_interface,
    run_cell_trajectory,
    solve_cell_properties,
    solve_stokes_cell,
)
from multiscale_rno.microcell.geometry import signed_distance_defect
from multiscale_rno.types import Trajectory

from oracles import channel_permeability, circle_fraction, circle_perimeter, taylor_aris_quadrature


def circle(center=(0.5, 0.5), radius=0.25, N=32):
    return build_microstructure({"resolution": N, "primitives": [
        {"type": "circle", "center": list(center), "radius": radius}]})


def channel(N=32, gap=0.5):
    # solid slab across y, fluid gap of width ``gap`` along x
    return build_microstructure({"resolution": N, "primitives": [
        {"type": "band", "axis": "y", "lo": 0.0, "hi": 1.0 - gap}]})


# geometry -----------------------------------------------------------------

def test_circle_fraction_and_perimeter():
    g = circle(N=32)
    assert g.pore_fraction == pytest.approx(circle_fraction(0.25), abs=5e-3)
    assert g.perimeter == pytest.approx(circle_perimeter(0.25), abs=0.1)


def test_empty_spec_is_all_pore():
    g = build_microstructure({"resolution": 16, "primitives": []})
    assert g.pore_fraction == 1.0
    assert g.perimeter == 0.0


def test_corner_circle_matches_centred_circle():
    a = circle((0.5, 0.5), N=32)
    b = circle((0.0, 0.0), N=32)
    assert b.pore_fraction == pytest.approx(a.pore_fraction, abs=1e-12)
    assert b.perimeter == pytest.approx(a.perimeter, abs=1e-12)


def test_signed_distance_after_build():
    g = build_microstructure({"resolution": 48, "primitives": [
        {"type": "ellipse", "center": [0.4, 0.6], "radii": [0.3, 0.15], "angle": 0.4}]})
    assert signed_distance_defect(g) < 0.1


def test_all_solid_rejected():
    with pytest.raises(DegenerateGeometryError):
        build_microstructure({"resolution": 16, "primitives": [{"type": "circle", "center": [0.5, 0.5],
                                                                "radius": 0.9}]})


def test_low_resolution_rejected():
    with pytest.raises(ResolutionError):
        circle(N=8)


def test_unknown_primitive_rejected():
    with pytest.raises(GeometryError):
        build_microstructure({"resolution": 16, "primitives": [{"type": "square"}]})


# Stokes -------------------------------------------------------------------

def test_channel_permeability_and_transverse_blocking():
    flow = solve_stokes_cell(channel(N=32))
    assert flow.K[0, 0] == pytest.approx(channel_permeability(0.5), rel=0.08)
    assert flow.K[1, 1] <= 1e-6 * flow.K[0, 0]


def test_stokes_divergence_free_and_symmetric():
    g = circle(radius=0.3, N=32)
    flow = solve_stokes_cell(g)
    assert flow.max_divergence() < 1e-6
    assert abs(flow.K[0, 1] - flow.K[1, 0]) <= 1e-10 * abs(flow.K).max()
    assert np.all(np.linalg.eigvalsh(0.5 * (flow.K + flow.K.T)) > 0)
    # x-faces deep inside the solid carry no flow
    deep = 0.5 * (g.phi + np.roll(g.phi, 1, 0)) > 2 * g.h
    assert np.max(np.abs(flow.ux[:, deep])) == 0.0


def test_stokes_without_solid_rejected():
    g = build_microstructure({"resolution": 16, "primitives": []})
    with pytest.raises(GeometryError):
        solve_stokes_cell(g)


# effective properties ------------------------------------------------------

def test_zero_velocity_diffusivity_bounds():
    g = circle(radius=0.3, N=32)
    p, _, _, chi = solve_cell_properties(g, (0.0, 0.0), pe=0.0)
    ev = np.linalg.eigvals(p.D).real
    assert np.all(ev > 0) and np.all(ev <= p.lam + 1e-12)
    assert np.allclose(p.D, p.D.T, atol=1e-10)
    alpha = g.pore_weights()
    for j in range(2):
        assert abs(np.sum(alpha * chi.chi[j])) * g.h**2 < 1e-10
    assert np.max(np.abs(chi.compat_residual)) < 1e-8


def test_vbar_equals_imposed_velocity():
    g = circle(radius=0.3, N=32)
    p, *_ = solve_cell_properties(g, (0.01, -0.02), pe=10.0)
    assert np.allclose(p.vbar, [0.01, -0.02], rtol=1e-8, atol=1e-12)


def test_channel_taylor_dispersion():
    g = channel(N=64)
    p0, flow, _, _ = solve_cell_properties(g, (1.0, 0.0), pe=0.0)
    p10, *_ = solve_cell_properties(g, (1.0, 0.0), pe=10.0, flow=flow)
    assert p10.D[0, 0] > p0.D[0, 0]
    ref = taylor_aris_quadrature(0.5, 10.0, 1.0)
    assert p10.D[0, 0] == pytest.approx(ref, rel=0.05)


# interface motion ---------------------------------------------------------

def test_kinetics_sign_structure():
    kin = Kinetics()
    assert kin.q(kin.c_eq) == 0.0
    assert kin.q(0.7) > 0 > kin.q(0.3)
    with pytest.raises(ConfigError):
        Kinetics(rate=lambda c: c)


def test_equilibrium_leaves_interface_fixed():
    g = circle(N=32)
    assert np.array_equal(evolve_interface(g, 0.5, 0.1, Kinetics(), 1.0).phi, g.phi)


def test_deposition_and_dissolution_change_pore_fraction():
    g = circle(N=32)
    kin = Kinetics()
    grow = advance_interface(g, 0.8, 0.2, kin, 1.0)
    shrink = advance_interface(g, 0.2, 0.2, kin, 1.0)
    assert grow.pore_fraction < g.pore_fraction < shrink.pore_fraction
    # radius moves by da * q * t / m = 0.06
    assert grow.pore_fraction == pytest.approx(circle_fraction(0.31), abs=5e-3)


def test_cfl_violation_raises():
    with pytest.raises(CFLError):
        evolve_interface(circle(N=32), 1.0, 1.0, Kinetics(), 1.0)


def test_constant_equilibrium_trajectory_gives_constant_rows():
    g = circle(N=16)
    tr = Trajectory.constant(0.5, (0.001, 0.0), T=0.1, steps=3)
    s = run_cell_trajectory(g, tr, CellConfig(pe=100.0))
    assert np.allclose(s.values, s.values[0], rtol=0, atol=1e-14)
