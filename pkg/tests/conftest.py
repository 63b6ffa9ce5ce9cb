import pathlib

import numpy as np
import pytest

from flowcert import load_case, solve_base
from flowcert.bounds import RelaxationCaps
from flowcert.model import InputSet, build_model
from flowcert.powerflow import default_limits

CASES = pathlib.Path(__file__).resolve().parents[1] / "cases"

TWO_BUS_TEXT = """\
function mpc = case2
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;
2 1 0 0 0 0 1 1 0 345 1 1.1 0.9;
];
mpc.gen = [
1 0 0 300 -300 1 100 1 250 -250;
];
mpc.branch = [
1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
"""


def case_path(name: str) -> str:
    return str(CASES / name)


@pytest.fixture(scope="session")
def caps():
    return RelaxationCaps()


@pytest.fixture(scope="session")
def case9():
    net = load_case(case_path("case9.m"))
    base = solve_base(net)
    return net, base


@pytest.fixture(scope="session")
def case9_model(case9, caps):
    net, base = case9
    limits = default_limits(net, base, band=0.01)
    mdl = build_model(net, base, InputSet.all_loads(net), limits)
    return mdl, limits


@pytest.fixture(scope="session")
def two_bus():
    net = load_case(case_path("case2.m"))
    base = solve_base(net)
    return net, base


@pytest.fixture(scope="session")
def synth57():
    net = load_case(case_path("synth57.m"))
    base = solve_base(net)
    return net, base


@pytest.fixture(scope="session")
def synth57_model(synth57, caps):
    net, base = synth57
    limits = default_limits(net, base, band=0.01)
    mdl = build_model(net, base, InputSet.all_loads(net), limits)
    return mdl, limits
