import numpy as np
import pytest

from spiketempo import (
    ConfigError,
    HiddenSpec,
    LifParams,
    NetworkSpec,
    TrPlacement,
    build_network,
    count_ac_ops,
    count_mac_flops,
    energy,
    network_forward,
    throughput,
)
from spiketempo.network import forward_pass
from spiketempo.profiling import (
    AC_ENERGY_PJ,
    MAC_ENERGY_PJ,
    EnergyReport,
    format_energy_kv,
    format_model_table,
    format_throughput_text,
)


def lif():
    return LifParams(eta=0.9, v_th=1.0, reset_mode="hard")


def tiny_net(n_inputs=1, hidden=2, taps=3, classes=2, nar=False, tr=()):
    spec = NetworkSpec(
        n_inputs, classes,
        [HiddenSpec(hidden, taps - 1, 0.0, lif())],
        [nar],
        list(tr),
        readout_eta=0.9,
    )
    return build_network(spec, seed=0)


# ----------------------------------------------------------- accumulate ops

def test_single_spike_hand_count():
    # 1 input spike into a layer with 2 outputs and 3 taps -> 6 accumulates
    net = tiny_net(n_inputs=1, hidden=2, taps=3)
    x = np.zeros((5, 1, 1))
    x[1, 0, 0] = 1.0
    _, record = network_forward(net, x)
    report = energy(record, net)
    first = next(l for l in report.layers if l.name == "hidden0.conv")
    assert first.ac_ops == 6
    assert first.mac_flops == 0
    assert first.energy_pj == 6 * AC_ENERGY_PJ
    assert first.energy_pj == 5.4


def test_zero_spikes_zero_accumulates():
    net = tiny_net()
    _, record = network_forward(net, np.zeros((6, 2, 1)))
    assert count_ac_ops(record, net) == 0


def test_doubling_spike_values_doubles_accumulates():
    net = tiny_net(n_inputs=3, hidden=3)
    rng = np.random.default_rng(0)
    x = (rng.random((8, 1, 3)) < 0.4).astype(np.float64)
    _, rec1 = network_forward(net, x)
    _, rec2 = network_forward(net, 2.0 * x)
    e1 = rec1.find("hidden0.conv")
    e2 = rec2.find("hidden0.conv")
    assert e2.in_value_sum == 2 * e1.in_value_sum
    # first conv's accumulate count doubles with its input values
    r1 = energy(rec1, net)
    r2 = energy(rec2, net)
    first1 = next(l for l in r1.layers if l.name == "hidden0.conv")
    first2 = next(l for l in r2.layers if l.name == "hidden0.conv")
    assert first2.ac_ops == 2 * first1.ac_ops


def test_strong_spikes_count_twice():
    net = tiny_net(n_inputs=1, hidden=2, taps=3)
    x = np.zeros((5, 1, 1))
    x[1, 0, 0] = 2.0  # one strong spike
    _, record = network_forward(net, x)
    report = energy(record, net)
    first = next(l for l in report.layers if l.name == "hidden0.conv")
    assert first.ac_ops == 12


def test_ac_invariant_under_unit_permutation():
    spec = NetworkSpec(
        4, 2, [HiddenSpec(4, 2, 0.0, lif())], [False], readout_eta=0.9
    )
    net = build_network(spec, seed=1)
    rng = np.random.default_rng(2)
    x = (rng.random((10, 2, 4)) < 0.4).astype(np.float64)
    _, rec_a = network_forward(net, x)
    _, rec_b = network_forward(net, x[:, :, rng.permutation(4)])
    a = rec_a.find("hidden0.conv")
    b = rec_b.find("hidden0.conv")
    assert a.in_value_sum == b.in_value_sum
    assert (
        int(round(a.in_value_sum)) * 4 * 3 == int(round(b.in_value_sum)) * 4 * 3
    )


def test_record_net_mismatch_rejected():
    net_a = tiny_net(n_inputs=1, hidden=2, taps=3)
    net_b = tiny_net(n_inputs=1, hidden=2, taps=2)
    _, record = network_forward(net_a, np.zeros((4, 1, 1)))
    with pytest.raises(ConfigError):
        count_ac_ops(record, net_b)


# ------------------------------------------------------------- dense flops

def test_folded_normalization_contributes_nothing():
    net = tiny_net(n_inputs=2, hidden=3)
    rng = np.random.default_rng(3)
    x = (rng.random((7, 2, 2)) < 0.5).astype(np.float64)
    _, record = network_forward(net, x)
    folded = energy(record, net, fold_bn=True)
    unfolded = energy(record, net, fold_bn=False)
    bn_entry = record.find("hidden0.bn")
    expected_bn = 2 * bn_entry.t_out * bn_entry.batch * bn_entry.units
    assert unfolded.mac_flops - folded.mac_flops == expected_bn


def test_readout_integration_element_count():
    # integrator over t_len 10, batch 1, 4 classes -> 40 dense ops
    spec = NetworkSpec(2, 4, [HiddenSpec(2, 0, 0.0, lif())], [False], readout_eta=0.9)
    net = build_network(spec, seed=4)
    _, record = network_forward(net, np.zeros((10, 1, 2)))
    assert count_mac_flops(net, record, fold_bn=True) == 40


def test_bias_additions_counted_when_bias_nonzero():
    net = tiny_net(n_inputs=1, hidden=2, taps=2)
    net.modules[0].conv.bias[:] = 0.5
    _, record = network_forward(net, np.zeros((4, 1, 1)))
    conv = record.find("hidden0.conv")
    # integrator (5*1*2=10) + hidden bias at full output length (5*1*2=10)
    assert count_mac_flops(net, record) == 10 + conv.t_out * conv.batch * conv.n_out


def test_mixed_report_energy_exact():
    report = EnergyReport(ac_ops=6, mac_flops=10, layers=[], fold_bn=True)
    assert report.energy_pj == 6 * AC_ENERGY_PJ + 10 * MAC_ENERGY_PJ
    assert report.energy_pj == 51.4


def test_energy_decomposition_holds_exactly():
    net = tiny_net(n_inputs=3, hidden=4)
    rng = np.random.default_rng(5)
    x = (rng.random((9, 2, 3)) < 0.5).astype(np.float64)
    _, record = network_forward(net, x)
    for fold in (True, False):
        report = energy(record, net, fold_bn=fold)
        assert report.energy_pj == report.ac_ops * AC_ENERGY_PJ + report.mac_flops * MAC_ENERGY_PJ
        assert report.ac_ops == count_ac_ops(record, net)
        assert report.mac_flops == count_mac_flops(net, record, fold_bn=fold)


def test_grouping_reduces_downstream_time_and_accumulates():
    base = NetworkSpec(
        6, 3,
        [HiddenSpec(6, 2, 0.0, lif()), HiddenSpec(6, 2, 0.0, lif())],
        [True, True],
        readout_eta=0.9,
    )
    grouped = NetworkSpec(
        6, 3,
        list(base.hidden),
        [True, True],
        [TrPlacement("no_overlap", 2, 1, 0)],
        readout_eta=0.9,
    )
    net_a = build_network(base, seed=6)
    net_b = build_network(grouped, seed=6)  # identical weights
    rng = np.random.default_rng(7)
    x = (rng.random((20, 2, 6)) < 0.4).astype(np.float64)
    _, rec_a = network_forward(net_a, x)
    _, rec_b = network_forward(net_b, x)
    assert rec_b.find("hidden1.conv").t_in < rec_a.find("hidden1.conv").t_in
    e_a = energy(rec_a, net_a)
    e_b = energy(rec_b, net_b)
    down_a = next(l for l in e_a.layers if l.name == "hidden1.conv")
    down_b = next(l for l in e_b.layers if l.name == "hidden1.conv")
    assert down_b.ac_ops <= down_a.ac_ops


# ------------------------------------------------------------- throughput

def test_throughput_reports_positive_finite_rate():
    net = tiny_net(n_inputs=4, hidden=4)
    report = throughput(net, (10, 2, 4), iterations=20)
    assert report.samples_per_second > 0
    assert np.isfinite(report.samples_per_second)
    assert report.samples_per_second == 20 * 2 / report.elapsed_s


def test_smaller_network_is_faster():
    small = build_network(
        NetworkSpec(8, 2, [HiddenSpec(8, 1, 0.0, lif())], [False], readout_eta=0.9), seed=0
    )
    big = build_network(
        NetworkSpec(
            8, 2,
            [HiddenSpec(32, 7, 0.0, lif()) for _ in range(3)],
            [False, False, False],
            readout_eta=0.9,
        ),
        seed=0,
    )

    def median_rate(net):
        rates = [throughput(net, (24, 2, 8), iterations=30, seed=i).samples_per_second
                 for i in range(3)]
        return float(np.median(rates))

    assert median_rate(small) > median_rate(big)


def test_throughput_validates_arguments():
    net = tiny_net(n_inputs=4, hidden=4)
    with pytest.raises(ConfigError):
        throughput(net, (10, 2, 4), iterations=0)
    from spiketempo import ShapeError

    with pytest.raises(ShapeError):
        throughput(net, (10, 2, 5))


def test_throughput_text_has_two_decimals():
    net = tiny_net(n_inputs=4, hidden=4)
    report = throughput(net, (8, 1, 4), iterations=5)
    text = format_throughput_text(report)
    line = next(l for l in text.splitlines() if l.startswith("throughput"))
    value = line.split(": ")[1]
    assert len(value.split(".")[1]) == 2


# ------------------------------------------------------------- formatting

def test_model_table_columns_in_order():
    net = tiny_net()
    table = format_model_table([("demo", 1234, 2327.54, 7.5e6, 0.8016)])
    header, row = table.splitlines()
    assert header.split() == ["model", "#Params(M)", "throughput(samples/s)", "consumption(pJ)", "Acc(%)"]
    assert "2327.54" in row
    assert "7.5E+06" in row
    assert "80.16" in row


def test_energy_kv_format_roundtrips_numbers():
    net = tiny_net(n_inputs=1, hidden=2, taps=3)
    x = np.zeros((5, 1, 1))
    x[1, 0, 0] = 1.0
    _, record = network_forward(net, x)
    kv = format_energy_kv(energy(record, net))
    fields = dict(line.split("=", 1) for line in kv.splitlines())
    assert fields["ac_ops"] == "6"
    assert float(fields["layer.hidden0.conv.energy_pj"]) == 5.4
