import numpy as np
import pytest

from flowcert import netio
from flowcert.netio import (
    CaseError,
    build_edge_admittances,
    load_case,
    network_from_json,
    network_to_json,
    parse_matpower,
)

from conftest import TWO_BUS_TEXT, case_path


def reference_ybus(net):
    """Textbook nodal stamping, independent of the edge-structure layout."""
    n = net.n_bus
    Y = np.zeros((n, n), dtype=complex)
    for b in range(n):
        Y[b, b] += complex(net.buses[b].g_sh, net.buses[b].b_sh)
    for br in net.branches:
        ys = br.y_series
        ych = 0.5j * br.b_charge
        tap = br.tap * np.exp(1j * br.shift)
        Y[br.f, br.f] += (ys + ych) / (br.tap**2)
        Y[br.t, br.t] += ys + ych
        Y[br.f, br.t] += -ys / np.conj(tap)
        Y[br.t, br.f] += -ys / tap
    return Y


def test_two_bus_parse():
    net = parse_matpower(TWO_BUS_TEXT)
    assert net.n_bus == 2
    assert net.n_branch == 1
    assert net.buses[0].kind == "slack"
    assert net.buses[1].kind == "load"
    y = 1.0 / complex(0.01, 0.1)
    assert net.branches[0].y_series == pytest.approx(y)


def test_two_bus_edge_structure():
    net = parse_matpower(TWO_BUS_TEXT)
    ean = build_edge_admittances(net)
    y = 1.0 / complex(0.01, 0.1)
    assert ean.y_d[0] == pytest.approx(y)
    assert ean.y_d[1] == pytest.approx(y)
    # both off-diagonal entries carry the branch two-port off-diagonals
    assert ean.Yf[0, 0] == pytest.approx(-y)
    assert ean.Yt[1, 0] == pytest.approx(-y)
    assert ean.Yf.getnnz() == 1 and ean.Yt.getnnz() == 1


def test_charging_splits_to_diagonal():
    text = TWO_BUS_TEXT.replace("1 2 0.01 0.1 0", "1 2 0.01 0.1 0.02")
    net = parse_matpower(text)
    base = parse_matpower(TWO_BUS_TEXT)
    d = build_edge_admittances(net).y_d - build_edge_admittances(base).y_d
    assert d[0] == pytest.approx(0.01j)
    assert d[1] == pytest.approx(0.01j)


def test_case9_counts():
    net = load_case(case_path("case9.m"))
    assert net.n_bus == 9
    assert net.n_branch == 9
    kinds = [b.kind for b in net.buses]
    assert kinds.count("slack") == 1
    assert kinds.count("generator") == 2
    assert len(net.loads) == 6


@pytest.mark.parametrize("name", ["case2.m", "case9.m", "synth57.m", "synth118.m"])
def test_ybus_matches_reference(name):
    net = load_case(case_path(name))
    Y = build_edge_admittances(net).bus_matrix().toarray()
    ref = reference_ybus(net)
    assert np.max(np.abs(Y - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_tap_and_shift_branch_ybus():
    text = TWO_BUS_TEXT.replace(
        "1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;",
        "1 2 0.01 0.1 0.04 0 0 0 0.98 3.0 1 -360 360;",
    )
    net = parse_matpower(text)
    Y = build_edge_admittances(net).bus_matrix().toarray()
    assert np.max(np.abs(Y - reference_ybus(net))) <= 1e-12 * np.max(np.abs(Y))
    # taps break the from/to symmetry of the off-diagonals
    assert Y[0, 1] != pytest.approx(Y[1, 0])


def test_missing_table_error():
    bad = TWO_BUS_TEXT.replace("mpc.gen", "mpc.notgen")
    with pytest.raises(CaseError, match="mpc.gen"):
        parse_matpower(bad)


def test_branch_to_missing_bus_error():
    bad = TWO_BUS_TEXT.replace(
        "1 2 0.01 0.1 0", "1 99 0.01 0.1 0"
    )
    with pytest.raises(CaseError, match="99"):
        parse_matpower(bad)


def test_duplicate_bus_error():
    bad = TWO_BUS_TEXT.replace(
        "2 1 0 0 0 0 1 1 0 345 1 1.1 0.9;",
        "2 1 0 0 0 0 1 1 0 345 1 1.1 0.9;\n2 1 0 0 0 0 1 1 0 345 1 1.1 0.9;",
    )
    with pytest.raises(CaseError, match="duplicate"):
        parse_matpower(bad)


def test_disconnected_error():
    bad = TWO_BUS_TEXT.replace(
        "2 1 0 0 0 0 1 1 0 345 1 1.1 0.9;",
        "2 1 0 0 0 0 1 1 0 345 1 1.1 0.9;\n3 1 0 0 0 0 1 1 0 345 1 1.1 0.9;",
    )
    with pytest.raises(CaseError, match="disconnected"):
        parse_matpower(bad)


def test_syntax_error_reports_location():
    bad = TWO_BUS_TEXT.replace("0.01 0.1", "0.01 oops")
    with pytest.raises(CaseError, match="line"):
        parse_matpower(bad)


def test_out_of_service_branch_dropped():
    text = TWO_BUS_TEXT.replace(
        "mpc.branch = [\n1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;",
        "mpc.branch = [\n1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;\n1 2 0.05 0.5 0 0 0 0 0 0 0 -360 360;",
    )
    net = parse_matpower(text)
    assert net.n_branch == 1


@pytest.mark.parametrize("name", ["case9.m", "synth39.m"])
def test_round_trip_serialization(name):
    net = load_case(case_path(name))
    again = network_from_json(network_to_json(net))
    assert again == net
    assert network_to_json(again) == network_to_json(net)


def test_multiple_generators_aggregate():
    text = TWO_BUS_TEXT.replace(
        "mpc.gen = [\n1 0 0 300 -300 1 100 1 250 -250;",
        "mpc.gen = [\n1 10 1 300 -300 1 100 1 250 0;\n1 20 2 100 -100 1 100 1 150 0;",
    )
    net = parse_matpower(text)
    slack = net.buses[net.slack]
    assert slack.p_base == pytest.approx(0.30)
    assert slack.q_base == pytest.approx(0.03)
    assert slack.q_max == pytest.approx(4.0)
    assert slack.p_max == pytest.approx(4.0)
