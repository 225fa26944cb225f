import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reshqcnn.network import (
    BranchState,
    NetworkSpec,
    SpecError,
    check_perceptrons,
    enumerate_paths,
    feedforward,
    format_spec,
    forward_stages,
    identity_perceptrons,
    layer_channel,
    parse_spec,
    random_perceptrons,
    residual_combine,
)
from reshqcnn.qmath import (
    InvariantError,
    embed,
    kron,
    ket,
    make_rng,
    partial_trace,
    projector,
    random_pure_state,
    random_unitary,
    zero_projector,
)

SPECS = ["2,3,2", "1,2~,1", "2,3~,2", "2,3~,3~,2", "2,3^,3~,2", "2,3,3~,2", "1,2~,1~", "2,3~,2~", "1,1,1~"]


def rand_density(n, rng):
    a = rng.standard_normal((2**n, 2**n)) + 1j * rng.standard_normal((2**n, 2**n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def layer_oracle(rho, layer, m_in, m_out, order=None):
    """tr_in(U (rho ⊗ |0..0><0..0|) U^dagger) with U assembled in the full register."""
    n = m_in + m_out
    big = np.eye(2**n, dtype=complex)
    for j in order or range(m_out):
        big = embed(layer[j], n, list(range(m_in)) + [m_in + j]) @ big
    full = kron(rho, zero_projector(m_out))
    return partial_trace(big @ full @ big.conj().T, list(range(m_in, n)))


# -- parsing ----------------------------------------------------------------


def test_parse_examples():
    s = parse_spec("2,3~,2")
    assert s.widths == (2, 3, 2) and s.residual_edges == ((2, 1),) and s.p is None
    assert parse_spec("2,3,2").residual_edges == ()
    assert parse_spec("2,3^,3~,2").residual_edges == ((3, 1),)
    s = parse_spec("1,2~,1~")
    assert s.residual_edges == ((2, 1), (3, 2)) and s.terminal == 3
    assert parse_spec("2,3~,3~,2").residual_edges == ((2, 1), (3, 2))
    assert parse_spec("1,2~,1;p=0.3").p == 0.3
    assert parse_spec("2,3,3~,2").residual_edges == ((3, 2),)


@pytest.mark.parametrize(
    "text",
    ["", "2,,2", "2,x,2", "2~,3,2", "2,3^,2", "2,3^", "2,3~~,2", "2,3~,2;q=1", "2,3~,2;p=abc",
     "2,1~,2", "1,1,2~", "0,1,1", "1,2~,1;p=1.5"],
)
def test_parse_errors(text):
    with pytest.raises(SpecError):
        parse_spec(text)


@pytest.mark.parametrize("text", SPECS + ["1,2~,1;p=0.3", "2,3^,4^,4~,2"])
def test_format_round_trip(text):
    spec = parse_spec(text)
    assert parse_spec(format_spec(spec)) == spec


def test_spec_validation():
    with pytest.raises(SpecError):
        NetworkSpec((2, 3, 2), ((2, 1), (2, 1)))
    with pytest.raises(SpecError):
        NetworkSpec((2, 3, 2), ((1, 1),))
    with pytest.raises(SpecError):
        NetworkSpec((2, 3, 2), ((5, 1),))
    assert NetworkSpec((2, 3, 2), ((2, 1),)).stripped() == NetworkSpec((2, 3, 2), ())


# -- paths ------------------------------------------------------------------


def test_paths_plain():
    dag = enumerate_paths(parse_spec("2,3,3,2"))
    assert len(dag) == 1 and dag.paths[0].layers == (1, 2, 3)


def test_paths_one_hidden():
    dag = enumerate_paths(parse_spec("1,2~,1"))
    assert [p.layers for p in dag.paths] == [(1, 2), (2,)]
    assert dag.paths[1].pads == (1,)


def test_paths_two_hidden():
    dag = enumerate_paths(parse_spec("2,3~,3~,2"))
    assert [p.layers for p in dag.paths] == [(1, 2, 3), (1, 3), (2, 3), (3,)]


def test_paths_output_residual_skips_last_layer():
    dag = enumerate_paths(parse_spec("1,2~,1~"))
    assert sorted(p.layers for p in dag.paths) == [(), (1,), (1, 2), (2,)]


@pytest.mark.parametrize("widths", [(1, 1), (1, 2, 2), (2, 2, 3, 3), (1, 1, 1, 1, 1)])
def test_per_layer_residuals_give_power_of_two(widths):
    L = len(widths) - 2
    spec = NetworkSpec(widths, tuple((l + 1, l) for l in range(1, L + 1)))
    assert len(enumerate_paths(spec)) == 2**L


def test_pmix_path_weights_sum_to_one():
    spec = parse_spec("2,3~,3~,2;p=0.3")
    assert np.isclose(sum(p.weight(spec) for p in enumerate_paths(spec).paths), 1.0)


# -- layer channel ----------------------------------------------------------


def test_layer_channel_identity_perceptrons():
    spec = parse_spec("2,3,2")
    rho = rand_density(2, make_rng(1))
    out = layer_channel(rho, 1, identity_perceptrons(spec))
    assert np.allclose(out, zero_projector(3))


def test_layer_channel_single_perceptron_hand_oracle():
    rng = make_rng(2)
    u = random_unitary(4, rng)
    rho = rand_density(1, rng)
    # rho ⊗ |0><0| in the 4x4 basis, conjugate, then trace the first qubit by hand
    full = np.zeros((4, 4), dtype=complex)
    full[np.ix_([0, 2], [0, 2])] = rho
    x = u @ full @ u.conj().T
    expected = np.array([[x[0, 0] + x[2, 2], x[0, 1] + x[2, 3]], [x[1, 0] + x[3, 2], x[1, 1] + x[3, 3]]])
    assert np.allclose(layer_channel(rho, 1, [[u]]), expected, atol=1e-14)


@pytest.mark.parametrize("m_in,m_out", [(1, 2), (2, 3), (3, 2), (2, 1)])
def test_layer_channel_matches_full_register(m_in, m_out):
    rng = make_rng(10 * m_in + m_out)
    layer = [random_unitary(2 ** (m_in + 1), rng) for _ in range(m_out)]
    rho = rand_density(m_in, rng)
    out = layer_channel(rho, 1, [layer])
    assert np.allclose(out, layer_oracle(rho, layer, m_in, m_out), atol=1e-13)
    assert np.isclose(np.trace(out), 1.0)
    assert np.min(np.linalg.eigvalsh(out)) > -1e-12


def test_layer_order_matters():
    rng = make_rng(3)
    layer = [random_unitary(8, rng) for _ in range(3)]
    rho = rand_density(2, rng)
    out = layer_channel(rho, 1, [layer])
    reversed_order = layer_oracle(rho, layer, 2, 3, order=[2, 1, 0])
    assert np.allclose(out, layer_oracle(rho, layer, 2, 3), atol=1e-13)
    assert np.max(np.abs(out - reversed_order)) > 1e-3


# -- residual combination and feedforward -----------------------------------


def test_residual_combine_identity_one_hidden():
    spec = parse_spec("1,2~,1")
    rho = rand_density(1, make_rng(4))
    stages, _ = forward_stages(rho, spec, identity_perceptrons(spec))
    expected = zero_projector(2) + kron(rho, projector(ket("0")))
    assert np.allclose(stages[2], expected)
    assert np.isclose(np.trace(stages[2]), 2)


def test_stage_traces_two_hidden():
    spec = parse_spec("2,3~,3~,2")
    rho = projector(random_pure_state(2, make_rng(5)))
    stages, _ = forward_stages(rho, spec, random_perceptrons(spec, make_rng(6)))
    assert np.isclose(np.trace(stages[2]), 2)
    assert np.isclose(np.trace(stages[3]), 4)
    assert np.isclose(np.trace(stages[4]), 4)


def test_residual_combine_modes():
    spec = parse_spec("1,2~,1;p=0.25")
    a, b = np.eye(2) / 2, np.diag([1.0, 0.0])
    mixed = residual_combine([BranchState(2, a, (1,), 0.75), BranchState(2, b, (), 0.25)], spec)
    assert np.allclose(mixed, 0.75 * a + 0.25 * b)
    plain = residual_combine([BranchState(2, a), BranchState(2, b)], spec.stripped())
    assert np.allclose(plain, a + b)
    with pytest.raises(SpecError):
        residual_combine([BranchState(2, a), BranchState(2, np.eye(4))], spec)


def test_pmix_p1_is_passthrough():
    spec = parse_spec("1,2~,1;p=1")
    rho = rand_density(1, make_rng(7))
    stages, _ = forward_stages(rho, spec, random_perceptrons(spec, make_rng(8)))
    assert np.array_equal(stages[2], kron(rho, projector(ket("0"))))


def test_residual_branch_uses_trailing_padding():
    spec = parse_spec("1,2~,1")
    phi = random_pure_state(1, make_rng(9))
    _, log = feedforward(phi, spec, random_perceptrons(spec, make_rng(10)))
    bypass = [b for b in log if b.stage == 2 and b.layers == ()]
    assert len(bypass) == 1
    assert np.array_equal(bypass[0].state, kron(projector(phi), projector(ket("0"))))


def test_feedforward_identity_hand_composition():
    spec = parse_spec("1,2~,1")
    rho_out, _ = feedforward(ket("0"), spec, identity_perceptrons(spec))
    assert np.allclose(rho_out, 2 * projector(ket("0")))


def test_output_residual_traces_trailing_qubits():
    spec = parse_spec("1,2,1~")
    rng = make_rng(11)
    perceptrons = random_perceptrons(spec, rng)
    rho = rand_density(1, rng)
    stages, _ = forward_stages(rho, spec, perceptrons)
    # the output layer's input (2 qubits) is reduced to its leading qubit
    out_layer = layer_channel(stages[2], 2, perceptrons)
    assert np.allclose(stages[3], out_layer + partial_trace(stages[2], [0]))


@pytest.mark.parametrize("text", SPECS)
def test_feedforward_trace_equals_path_count(text):
    spec = parse_spec(text)
    rng = make_rng(12)
    perceptrons = random_perceptrons(spec, rng)
    rho_out, log = feedforward(random_pure_state(spec.widths[0], rng), spec, perceptrons)
    assert abs(np.trace(rho_out) - len(enumerate_paths(spec))) <= 1e-10
    for b in log:
        assert abs(np.trace(b.state) - 1) <= 1e-10
        assert np.allclose(b.state, b.state.conj().T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(b.state)) >= -1e-10


@pytest.mark.parametrize("text", SPECS + ["2,3~,3~,2;p=0.4"])
def test_branchwise_matches_summed_stages(text):
    spec = parse_spec(text)
    rng = make_rng(13)
    perceptrons = random_perceptrons(spec, rng)
    phi = random_pure_state(spec.widths[0], rng)
    rho_out, _ = feedforward(phi, spec, perceptrons)
    stages, _ = forward_stages(projector(phi), spec, perceptrons)
    assert np.allclose(rho_out, stages[spec.terminal], atol=1e-13)


def test_feedforward_linear_in_input():
    spec = parse_spec("2,3~,3~,2")
    rng = make_rng(14)
    perceptrons = random_perceptrons(spec, rng)
    r1, r2 = rand_density(2, rng), rand_density(2, rng)
    h = r1 - 0.3j * (r2 - r2.T.conj())  # arbitrary Hermitian-ish mix is fine for linearity
    a, b = 1.7, -0.4

    def out(rho):
        return forward_stages(rho, spec, perceptrons)[0][spec.terminal]

    assert np.allclose(out(a * r1 + b * h), a * out(r1) + b * out(h), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    widths=st.lists(st.integers(1, 2), min_size=2, max_size=4),
    seed=st.integers(0, 2**32 - 1),
    data=st.data(),
)
def test_random_configurations_trace_invariant(widths, seed, data):
    n_stage = len(widths) - 1
    edges = []
    for t in range(2, n_stage + 2):
        if data.draw(st.booleans()):
            s = data.draw(st.integers(1, t - 1))
            ok = widths[s - 1] <= widths[t - 1] if t <= n_stage else widths[-2] >= widths[-1]
            if t > n_stage and s != t - 1:
                ok = ok and widths[s - 1] >= widths[-1]
            if ok:
                edges.append((t, s))
    try:
        spec = NetworkSpec(tuple(widths), tuple(edges))
    except SpecError:
        return
    rng = make_rng(seed)
    rho_out, _ = feedforward(random_pure_state(widths[0], rng), spec, random_perceptrons(spec, rng))
    assert abs(np.trace(rho_out).real - len(enumerate_paths(spec))) <= 1e-10


def test_check_perceptrons():
    spec = parse_spec("1,2,1")
    ps = random_perceptrons(spec, make_rng(15))
    check_perceptrons(spec, ps)
    ps[0][1] = 1.01 * ps[0][1]
    with pytest.raises(InvariantError):
        check_perceptrons(spec, ps)
    with pytest.raises(SpecError):
        check_perceptrons(spec, ps[:1])
