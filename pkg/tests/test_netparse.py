"""Parser tests against hand-converted MATPOWER quantities."""

import math

import pytest

from otsqc import netparse

# Small two-bus case with every feature exercised: load, shunt, tap, shift,
# rating, angle limits, quadratic cost. Numbers chosen for easy hand checks.
TOY = """
function mpc = toy
mpc.version = '2';
mpc.baseMVA = 100.0;
mpc.bus = [
\t1\t3\t0.0\t0.0\t0.0\t0.0\t1\t1.0\t0.0\t240.0\t1\t1.1\t0.9;
\t2\t1\t60.0\t25.0\t5.0\t-4.0\t1\t1.0\t0.0\t240.0\t1\t1.08\t0.92;
];
mpc.gen = [
\t1\t50.0\t0.0\t40.0\t-40.0\t1.0\t100.0\t1\t90.0\t10.0;
];
mpc.gencost = [
\t2\t0.0\t0.0\t3\t0.11\t5.0\t20.0;
];
mpc.branch = [
\t1\t2\t0.03\t0.12\t0.06\t95.0\t0.0\t0.0\t0.98\t2.0\t1\t-25.0\t35.0;
];
"""


@pytest.fixture(scope="module")
def toy():
    return netparse.parse_matpower(TOY, name="toy")


def test_base_and_counts(toy):
    assert toy.base_mva == 100.0
    assert len(toy.buses) == 2
    assert len(toy.generators) == 1
    assert len(toy.branches) == 1
    assert toy.ref_buses == {1}


def test_bus_per_unit(toy):
    b2 = toy.bus(2)
    assert b2.demand_p == pytest.approx(0.60)
    assert b2.demand_q == pytest.approx(0.25)
    assert b2.shunt_g == pytest.approx(0.05)
    assert b2.shunt_b == pytest.approx(-0.04)
    assert b2.v_min == 0.92 and b2.v_max == 1.08


def test_gen_per_unit_and_cost(toy):
    g = toy.generators[0]
    assert g.bus == 1
    assert g.p_min == pytest.approx(0.10)
    assert g.p_max == pytest.approx(0.90)
    assert g.q_min == pytest.approx(-0.40)
    assert g.q_max == pytest.approx(0.40)
    # cost coefficients stay on the MW basis
    assert (g.c2, g.c1, g.c0) == (0.11, 5.0, 20.0)


def test_branch_admittance_oracle(toy):
    br = toy.branches[0]
    # series admittance from the complex reciprocal, computed independently
    y = 1.0 / complex(0.03, 0.12)
    assert br.g == pytest.approx(y.real, rel=1e-12)
    assert br.b == pytest.approx(y.imag, rel=1e-12)
    # charging splits evenly; no shunt conductance in the file format
    assert br.g_c == 0.0
    assert br.b_c == pytest.approx(0.03)


def test_branch_tap_shift(toy):
    br = toy.branches[0]
    t = 0.98 * complex(math.cos(math.radians(2.0)), math.sin(math.radians(2.0)))
    assert br.tap_re == pytest.approx(t.real, rel=1e-12)
    assert br.tap_im == pytest.approx(t.imag, rel=1e-12)
    assert br.tap_mag_sq == pytest.approx(abs(t) ** 2, rel=1e-12)


def test_branch_limits(toy):
    br = toy.branches[0]
    assert br.s_max == pytest.approx(0.95)
    assert br.theta_min == pytest.approx(math.radians(-25.0))
    assert br.theta_max == pytest.approx(math.radians(35.0))


def test_leaf_noload_detection(toy):
    # bus 1 has no demand and a single branch; bus 2 carries load
    assert toy.leaf_noload_buses == {1}
    text = TOY.replace("\t2\t1\t60.0\t25.0", "\t2\t1\t0.0\t0.0")
    net = netparse.parse_matpower(text, name="leafy")
    assert net.leaf_noload_buses == {1, 2}


def test_unconstrained_angles_default_to_half_pi():
    text = TOY.replace("-25.0\t35.0", "0.0\t0.0")
    net = netparse.parse_matpower(text)
    br = net.branches[0]
    assert br.theta_min == -math.pi / 2
    assert br.theta_max == math.pi / 2
    text = TOY.replace("-25.0\t35.0", "-360.0\t360.0")
    net = netparse.parse_matpower(text)
    assert net.branches[0].theta_max == math.pi / 2


def test_zero_rating_means_unlimited():
    text = TOY.replace("0.06\t95.0", "0.06\t0.0")
    net = netparse.parse_matpower(text)
    assert net.branches[0].s_max is None


def test_status_zero_rows_dropped():
    text = TOY.replace("0.98\t2.0\t1", "0.98\t2.0\t0")
    net = netparse.parse_matpower(text)
    assert net.branches == []
    text = TOY.replace("1\t90.0\t10.0", "0\t90.0\t10.0")
    net = netparse.parse_matpower(text)
    assert net.generators == []


def test_tap_zero_means_unity():
    text = TOY.replace("0.98\t2.0", "0.0\t0.0")
    net = netparse.parse_matpower(text)
    assert net.branches[0].tap_re == 1.0
    assert net.branches[0].tap_im == 0.0


@pytest.mark.parametrize("mutation, match", [
    ("mpc.baseMVA = 100.0;", "missing mpc.baseMVA"),
    ("mpc.gencost = [", "missing mpc.gencost"),
])
def test_missing_blocks_raise(mutation, match):
    broken = TOY.replace(mutation, "% removed")
    with pytest.raises(netparse.ParseError, match=match):
        netparse.parse_matpower(broken)


def test_zero_impedance_raises():
    text = TOY.replace("0.03\t0.12", "0.0\t0.0")
    with pytest.raises(netparse.ParseError, match="zero impedance"):
        netparse.parse_matpower(text)


def test_non_numeric_token_raises():
    text = TOY.replace("0.11", "eleven")
    with pytest.raises(netparse.ParseError, match="non-numeric"):
        netparse.parse_matpower(text)


def test_linear_cost_row_padded():
    text = TOY.replace("3\t0.11\t5.0\t20.0", "2\t5.0\t20.0")
    net = netparse.parse_matpower(text)
    g = net.generators[0]
    assert (g.c2, g.c1, g.c0) == (0.0, 5.0, 20.0)


def test_piecewise_cost_rejected():
    text = TOY.replace("\t2\t0.0\t0.0\t3", "\t1\t0.0\t0.0\t3")
    with pytest.raises(netparse.ParseError, match="model 1 unsupported"):
        netparse.parse_matpower(text)


def test_all_bundled_cases_parse_and_validate():
    names = [
        "case3_lmbd", "case5_pjm", "case14_ieee", "case24_ieee_rts",
        "case30_as", "case30_ieee", "case39_epri", "case57_ieee",
    ]
    for base in names:
        for suffix in ("", "__sad", "__api"):
            net = netparse.load_case(netparse.bundled_case_path(base + suffix))
            assert netparse.validate(net) == []
            assert net.buses and net.branches and net.generators


def test_case14_shape(case14):
    assert len(case14.buses) == 14
    assert len(case14.branches) == 20
    assert len(case14.generators) == 5


def test_validate_flags_bad_voltage_box(toy):
    net = netparse.parse_matpower(TOY)
    net.buses[0].v_min = 1.2
    rules = {v.rule for v in netparse.validate(net)}
    assert "voltage-bounds" in rules
