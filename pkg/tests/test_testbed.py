import numpy as np
import pytest

from simplexuq.errors import InfeasibleNetwork, InvalidNetworkFile
from simplexuq.testbed import (
    GasOracle,
    make_test_oracle,
    parse_network,
    toy_network,
)

SINGLE_PIPE = """
node S supply pressure=9.0
node D demand flow={flow}
edge P pipe S D length=5.0 friction=0.02
qoi D
"""

PIPE_VALVE = """
node S supply pressure={supply}
node A junction
node D demand flow=0.2
edge P pipe S A length=5.0 friction=0.02
edge V valve A D p_set=8.0
qoi D
"""


def test_smooth_sine_values_and_labels():
    oracle = make_test_oracle("smooth-sine", 2, 0.7)
    v, lab = oracle(np.array([0.5, 0.5]))
    assert v == pytest.approx(1.0)
    assert lab == 1
    vals, labs = oracle.evaluate_batch(np.random.default_rng(0).random((100, 2)))
    assert set(labs) == {1}  # never claims a kink


def test_clipped_sine_values_and_labels():
    oracle = make_test_oracle("clipped-sine", 2, 0.7)
    assert oracle(np.array([0.5, 0.5]))[0] == pytest.approx(0.7)
    assert oracle(np.array([0.5, 0.5]))[1] == 2
    v, lab = oracle(np.array([0.25, 0.25]))
    assert v == pytest.approx(np.sin(np.pi / 4) ** 2)
    assert lab == 1


def test_fake_kink_smooth_values_jumpy_labels():
    oracle = make_test_oracle("smooth-sine-fake-kink", 2, 0.7)
    smooth = make_test_oracle("smooth-sine", 2, 0.7)
    X = np.random.default_rng(1).random((200, 2))
    v1, lab1 = oracle.evaluate_batch(X)
    v2, _ = smooth.evaluate_batch(X)
    assert np.array_equal(v1, v2)
    assert set(lab1) == {1, 2}


def test_unknown_test_function():
    with pytest.raises(ValueError):
        make_test_oracle("cosine", 2)


def test_single_pipe_closed_form():
    net = parse_network(SINGLE_PIPE.format(flow=0.5))
    q, labels = net.solve_batch(np.zeros((1, 0)))
    # pi_S - pi_D = c q|q| with c = 0.1, q = 0.5
    assert q[0] == pytest.approx(np.sqrt(9.0 ** 2 - 0.1 * 0.25), rel=1e-10)
    assert labels[0] == 0


def test_single_pipe_zero_demand():
    net = parse_network(SINGLE_PIPE.format(flow=0.0))
    q, _ = net.solve_batch(np.zeros((1, 0)))
    assert q[0] == pytest.approx(9.0, abs=1e-9)


def test_overloaded_pipe_is_infeasible():
    net = parse_network(SINGLE_PIPE.format(flow=50.0))
    with pytest.raises(InfeasibleNetwork):
        net.solve_batch(np.zeros((1, 0)))


def test_active_valve_clamps_downstream():
    lo = parse_network(PIPE_VALVE.format(supply=8.8))
    hi = parse_network(PIPE_VALVE.format(supply=9.4))
    q_lo, lab_lo = lo.solve_batch(np.zeros((1, 0)))
    q_hi, lab_hi = hi.solve_batch(np.zeros((1, 0)))
    assert lab_lo[0] == 1 and lab_hi[0] == 1
    # both supplies exceed the set point, so the QoI must not change
    assert q_lo[0] == pytest.approx(8.0, abs=1e-9)
    assert q_hi[0] == pytest.approx(q_lo[0], abs=1e-12)


def test_inactive_valve_passes_pressure():
    net = parse_network(PIPE_VALVE.format(supply=7.5))
    q, lab = net.solve_batch(np.zeros((1, 0)))
    assert lab[0] == 0
    assert q[0] == pytest.approx(np.sqrt(7.5 ** 2 - 0.1 * 0.04), rel=1e-10)


def test_toy_network_shapes():
    assert toy_network(2).d == 2
    assert toy_network(1).d == 1
    with pytest.raises(ValueError):
        toy_network(3)


def test_toy_sweep_increases_then_flattens():
    oracle = GasOracle(toy_network(1))
    xs = np.linspace(0.0, 1.0, 101)[:, None]
    y, labels = oracle.evaluate_batch(xs)
    dy = np.diff(y)
    flat = dy <= 1e-12
    assert flat.any() and not flat.all()
    k = int(np.argmax(flat))
    assert np.all(dy[:k] > 1e-7), "must rise strictly before the kink"
    assert np.all(np.abs(dy[k:]) <= 1e-9), "must stay flat after the kink"
    assert labels[0] == 0 and labels[-1] == 3


def test_toy_network_batch_determinism():
    oracle = GasOracle(toy_network(2))
    X = np.random.default_rng(2).random((64, 2))
    a = oracle.evaluate_batch(X)
    b = oracle.evaluate_batch(X)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    # chunked and unchunked paths agree
    v_one = np.array([oracle(x)[0] for x in X])
    assert np.allclose(a[0], v_one, atol=1e-12)


def test_gas_oracle_protocol():
    oracle = GasOracle(toy_network(2))
    assert oracle.d == 2
    v, lab = oracle(np.array([0.5, 0.5]))
    assert isinstance(v, float) and isinstance(lab, int)


def test_parser_rejects_garbage():
    cases = [
        "flow S supply pressure=9",  # unknown directive
        "node S reservoir pressure=9",  # unknown node kind
        "node S supply pressure=9 pressure=8",  # duplicate key
        "node S supply head=9",  # unknown key
        "node S supply pressure=nope",  # bad number
        "node S supply",  # missing required key
        "edge P pipe S",  # too few tokens
        "edge P tube S D length=1 friction=1",  # unknown edge kind
        "bind 0 S 8 9",  # target without attribute
        "bind zero S.pressure 8 9",  # bad coordinate
    ]
    for text in cases:
        with pytest.raises(InvalidNetworkFile):
            parse_network(text + "\nqoi S\n")


def test_parser_requires_exactly_one_qoi():
    with pytest.raises(InvalidNetworkFile):
        parse_network("node S supply pressure=9\n")
    with pytest.raises(InvalidNetworkFile):
        parse_network("node S supply pressure=9\nqoi S\nqoi S\n")


def test_parser_comments_and_blank_lines():
    net = parse_network(
        "# header\n\nnode S supply pressure=9.0  # inline\nnode D demand flow=0.0\n"
        "edge P pipe S D length=1 friction=0.1\nqoi D\n"
    )
    assert set(net.nodes) == {"S", "D"}


def test_validation_rejects_inconsistent_networks():
    base = "node S supply pressure=9\nnode D demand flow=0.1\nedge P pipe S D length=1 friction=0.1\n"
    with pytest.raises(InvalidNetworkFile):  # two supplies
        parse_network(base + "node S2 supply pressure=8\nedge P2 pipe S S2 length=1 friction=0.1\nqoi D\n")
    with pytest.raises(InvalidNetworkFile):  # unknown qoi node
        parse_network(base + "qoi X\n")
    with pytest.raises(InvalidNetworkFile):  # disconnected node
        parse_network(base + "node L junction\nqoi D\n")
    with pytest.raises(InvalidNetworkFile):  # edge to nowhere
        parse_network(base + "edge PX pipe S X length=1 friction=0.1\nqoi D\n")
    with pytest.raises(InvalidNetworkFile):  # binding coords must be dense
        parse_network(base + "bind 1 S.pressure 8 9\nqoi D\n")
    with pytest.raises(InvalidNetworkFile):  # binding target kind mismatch
        parse_network(base + "bind 0 D.pressure 8 9\nqoi D\n")
    with pytest.raises(InvalidNetworkFile):  # duplicate edge name
        parse_network(base + "edge P pipe S D length=2 friction=0.1\nqoi D\n")


Y_NETWORK = """
node S supply pressure=9.0
node A junction
node D1 demand flow=0.4
node D2 demand flow=0.25
edge P1 pipe S A length=5.0 friction=0.02
edge P2 pipe A D1 length=4.0 friction=0.03
edge P3 pipe A D2 length=6.0 friction=0.02
qoi {qoi}
"""


def test_mass_balance_via_closed_form():
    # the trunk pipe must carry the sum of both demands; the closed form
    # below is only correct when mass balance holds at the junction
    c1, c2, c3 = 0.1, 0.12, 0.12
    f1, f2 = 0.4, 0.25
    pi_a = 81.0 - c1 * (f1 + f2) ** 2
    for qoi, expected in [
        ("D1", np.sqrt(pi_a - c2 * f1 ** 2)),
        ("D2", np.sqrt(pi_a - c3 * f2 ** 2)),
        ("A", np.sqrt(pi_a)),
    ]:
        net = parse_network(Y_NETWORK.format(qoi=qoi))
        q, _ = net.solve_batch(np.zeros((1, 0)))
        assert q[0] == pytest.approx(expected, rel=1e-10)


def test_binding_overrides_parameters():
    text = SINGLE_PIPE.format(flow=0.5) + "bind 0 S.pressure 8.0 10.0\n"
    net = parse_network(text)
    assert net.d == 1
    q, _ = net.solve_batch(np.array([[0.5]]))  # supply midpoint = 9.0
    base = parse_network(SINGLE_PIPE.format(flow=0.5))
    q0, _ = base.solve_batch(np.zeros((1, 0)))
    assert q[0] == pytest.approx(q0[0], rel=1e-12)
    q_lo, _ = net.solve_batch(np.array([[0.0]]))
    assert q_lo[0] == pytest.approx(np.sqrt(64.0 - 0.1 * 0.25), rel=1e-10)
