import json
import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
import pandas as pd
import pytest

from compression import quantize_model
from fxp import QFormat, quantize_array, quantize_tensor, requantize, round_shift
from model import NetworkModel, build_optimized, build_original, forward_fixed_raw, predict, run_layers_fixed
from model.forward import quantize_input
from model.layers import Conv1D, Dropout, FullyConnected, MaxPool1D, PointwiseConv, ReLU, channel_bias, conv_weight
from pipesim import (
    Block,
    BlockConfigError,
    BlockKind,
    DeadlockError,
    FusedBlock,
    Link,
    PartitionError,
    Pipeline,
    PipelineConfig,
    ProtocolError,
    REFERENCE_MAPPERS,
    allocate_resources,
    calibrate_handshake,
    cycles_to_time,
    partition,
    run_pipeline,
    run_stream,
    simulate,
    simulate_conv_block,
    simulate_fused_block,
    simulate_scoreboard,
)
from pipesim.pipeline import TRACE_COLUMNS

FMT = QFormat(10, 5)


def _quantize(layer, bits: int = 8, fmt: QFormat = FMT):
    layer.qweight = quantize_tensor(layer.weight, bits)
    layer.qbias = quantize_tensor(layer.bias, bits)
    layer.out_format = fmt
    return layer


def _conv(rng, in_ch: int, out_ch: int, padding: int = 0, scale: float = 0.5) -> Conv1D:
    return _quantize(
        Conv1D(
            name="conv",
            weight=conv_weight(rng.normal(scale=scale, size=(3, in_ch, out_ch))),
            bias=channel_bias(rng.normal(scale=0.2, size=out_ch)),
            padding=padding,
        )
    )


def _pointwise(name: str, weight: np.ndarray, bias: np.ndarray, bits: int = 8, fmt: QFormat = FMT) -> PointwiseConv:
    return _quantize(
        PointwiseConv(name=name, weight=np.asarray(weight)[None, None], bias=channel_bias(bias)), bits, fmt
    )


def _raw_input(rng, channels: int, length: int) -> np.ndarray:
    return quantize_array(rng.normal(size=(channels, length)), FMT)


def _naive_conv(x_raw: np.ndarray, in_frac: int, layer: Conv1D) -> np.ndarray:
    """Straight loops over output channel, position, input channel and tap."""
    p = layer.padding
    x = np.pad(x_raw, ((0, 0), (p, p)))
    w, b = layer.qweight, layer.qbias
    acc_frac = in_frac + w.shift
    outputs = x.shape[1] - 2
    out = np.zeros((layer.out_ch, outputs), dtype=np.int64)
    for o in range(layer.out_ch):
        for t in range(outputs):
            acc = 0
            for c in range(layer.in_ch):
                for k in range(3):
                    acc += int(x[c, t + k]) * int(w.raw[0, k, c, o])
            acc += round_shift(int(b.raw.reshape(-1)[o]), b.shift - acc_frac)
            acc = max(-(1 << 31), min((1 << 31) - 1, acc))
            out[o, t] = requantize(acc, acc_frac, layer.out_format)
    return out


def _saturate32(acc: int) -> int:
    return max(-(1 << 31), min((1 << 31) - 1, acc))


def _naive_affine(values, in_frac: int, weight_at, layer, out_index: int) -> int:
    """requant(Σ values[i]·w(i) + b) over Python ints."""
    w, b = layer.qweight, layer.qbias
    acc_frac = in_frac + w.shift
    acc = 0
    for i, value in enumerate(values):
        acc += int(value) * int(weight_at(i))
    acc = _saturate32(acc)
    acc = _saturate32(acc + round_shift(int(b.raw.reshape(-1)[out_index]), b.shift - acc_frac))
    return requantize(acc, acc_frac, layer.out_format)


def _naive_fused(x_raw: np.ndarray, in_frac: int, layers) -> np.ndarray:
    """e_j = b′ + Σ_i w′_i·max(0, w_i·a_j + b_i) one position and one row at a time."""
    head, end = layers[0], layers[-1]
    pool = next((layer.pool for layer in layers if isinstance(layer, MaxPool1D)), 1)
    k_in, length = x_raw.shape
    rows = head.out_ch
    hidden = []
    for j in range(length):
        column = [int(x_raw[k, j]) for k in range(k_in)]
        hidden.append(
            [max(0, _naive_affine(column, in_frac, lambda k: head.qweight.raw[0, 0, k, i], head, i)) for i in range(rows)]
        )
    if pool > 1:
        hidden = [
            [max(hidden[j * pool + p][i] for p in range(pool)) for i in range(rows)] for j in range(length // pool)
        ]
    frac = head.out_format.frac_bits
    positions = len(hidden)
    if isinstance(end, FullyConnected):
        flat = [hidden[j][i] for i in range(rows) for j in range(positions)]
        out = [[_naive_affine(flat, frac, lambda n: end.qweight.raw[o, n], end, o)] for o in range(end.out_dim)]
        return np.array(out, dtype=np.int64)
    out = np.zeros((end.out_ch, positions), dtype=np.int64)
    for o in range(end.out_ch):
        for j in range(positions):
            out[o, j] = _naive_affine(hidden[j], frac, lambda i: end.qweight.raw[0, 0, i, o], end, o)
    return out


def _random_biases(model: NetworkModel, seed: int = 0) -> NetworkModel:
    rng = np.random.default_rng(seed)
    for layer in model.weighted_layers():
        layer.bias[...] = rng.normal(scale=0.1, size=layer.bias.shape)
    return model


@pytest.fixture
def segments():
    return np.random.default_rng(42).normal(scale=0.5, size=(524, 66))


@pytest.fixture
def quantized(segments):
    return quantize_model(_random_biases(build_optimized(seed=3)), 4, calibration=segments[:128])


@pytest.fixture
def paper_cfg():
    return PipelineConfig(mapper_override=dict(REFERENCE_MAPPERS))


# ──────────────────────────────────────────────────────────────────────────────
# Blocks
# ──────────────────────────────────────────────────────────────────────────────


class TestConvBlock:
    """Convolution engines: numerics and shift counts"""

    def test_single_engine_shift_count(self):
        """One 3-MAC engine on 66 samples takes 64 cycles."""
        rng = np.random.default_rng(0)
        out = simulate_conv_block(_raw_input(rng, 1, 66), 5, _conv(rng, 1, 1), mac_count=3)
        assert out.cycles == 64
        assert out.raw.shape == (1, 64)

    def test_two_engines_halve_cycles(self):
        """Two engines split 66 samples into two 34-sample chunks, 32 cycles."""
        rng = np.random.default_rng(1)
        layer = _conv(rng, 1, 1)
        x = _raw_input(rng, 1, 66)
        one = simulate_conv_block(x, 5, layer, mac_count=3)
        two = simulate_conv_block(x, 5, layer, mac_count=6)
        assert two.cycles == 32
        np.testing.assert_array_equal(one.raw, two.raw)

    def test_split_invariance(self):
        """Outputs are identical for 1, 2 and 4 engines over n = 8..128."""
        rng = np.random.default_rng(2)
        for n in range(8, 129):
            layer = _conv(rng, 1, 1)
            x = _raw_input(rng, 1, n)
            runs = {e: simulate_conv_block(x, 5, layer, mac_count=3 * e) for e in (1, 2, 4)}
            assert runs[1].cycles == n - 2
            assert runs[2].cycles == math.ceil((n - 2) / 2)
            assert runs[4].cycles == math.ceil((n - 2) / 4)
            np.testing.assert_array_equal(runs[1].raw, runs[2].raw)
            np.testing.assert_array_equal(runs[1].raw, runs[4].raw)

    @pytest.mark.parametrize("in_ch,out_ch,padding", [(1, 1, 0), (1, 3, 1), (2, 2, 0), (3, 1, 1)])
    def test_matches_loop_oracle(self, in_ch, out_ch, padding):
        """Engine output is bit-identical to a straight-loop convolution."""
        rng = np.random.default_rng(in_ch * 10 + out_ch)
        layer = _conv(rng, in_ch, out_ch, padding)
        x = _raw_input(rng, in_ch, 20)
        for engines in (1, 2, 3):
            out = simulate_conv_block(x, 5, layer, mac_count=3 * engines)
            np.testing.assert_array_equal(out.raw, _naive_conv(x, 5, layer))
            assert out.cycles == out_ch * in_ch * math.ceil((20 + 2 * padding - 2) / engines)

    def test_zero_kernel_gives_zero(self):
        """An all-zero kernel and bias yields an all-zero output."""
        layer = _quantize(Conv1D(name="zero", weight=np.zeros((1, 3, 1, 1)), bias=np.zeros((1, 1, 1))))
        out = simulate_conv_block(_raw_input(np.random.default_rng(3), 1, 30), 5, layer)
        assert not out.raw.any()

    def test_rejects_partial_engine(self):
        """mac_count must be a multiple of three."""
        rng = np.random.default_rng(4)
        with pytest.raises(BlockConfigError, match="multiple of 3"):
            simulate_conv_block(_raw_input(rng, 1, 10), 5, _conv(rng, 1, 1), mac_count=4)

    def test_rejects_short_input(self):
        """Inputs shorter than the kernel are refused."""
        rng = np.random.default_rng(5)
        with pytest.raises(BlockConfigError, match="input length 2"):
            simulate_conv_block(_raw_input(rng, 1, 2), 5, _conv(rng, 1, 1))


class TestFusedBlock:
    """Fused projection mapper against the layer-by-layer datapath"""

    def _layers(self, rng, k_in, m, q, pool, fc_end, length):
        bits = int(rng.integers(2, 9))
        head = _pointwise(
            "head", rng.normal(size=(k_in, m)), rng.normal(scale=0.3, size=m), bits, QFormat(10, int(rng.integers(3, 8)))
        )
        layers = [head, ReLU(name="relu")]
        positions = length
        if pool:
            layers.append(MaxPool1D(name="pool"))
            positions = length // 2
        if rng.random() < 0.5:
            layers.append(Dropout(name="dropout"))
        end_fmt = QFormat(10, int(rng.integers(3, 8)))
        if fc_end:
            end = FullyConnected(name="end", weight=rng.normal(size=(q, m * positions)), bias=rng.normal(size=q))
            layers.append(_quantize(end, bits, end_fmt))
        else:
            layers.append(_pointwise("end", rng.normal(size=(m, q)), rng.normal(scale=0.3, size=q), bits, end_fmt))
        return layers

    def test_random_draws_match_layer_sequence(self):
        """10,000 random inputs over 2,000 parameter draws are bit-identical to the unfused layers."""
        rng = np.random.default_rng(10)
        for _ in range(2000):
            k_in, m, q = int(rng.integers(1, 3)), int(rng.integers(1, 11)), int(rng.integers(1, 4))
            pool, fc_end = bool(rng.random() < 0.5), bool(rng.random() < 0.3)
            length = int(rng.integers(2, 24))
            layers = self._layers(rng, k_in, m, q, pool, fc_end, length)
            for _ in range(5):
                x = _raw_input(rng, k_in, length)
                got = simulate_fused_block(x, 5, layers, mappers=int(rng.integers(1, 50)))
                expected, frac = run_layers_fixed(layers, x[None], 5)[-1]
                np.testing.assert_array_equal(got.raw, expected[0])
                assert got.frac == frac

    def test_random_draws_match_integer_loops(self):
        """Random fused blocks agree with straight-loop big-integer arithmetic."""
        rng = np.random.default_rng(15)
        for _ in range(300):
            k_in, m, q = int(rng.integers(1, 3)), int(rng.integers(1, 11)), int(rng.integers(1, 4))
            pool, fc_end = bool(rng.random() < 0.5), bool(rng.random() < 0.3)
            length = int(rng.integers(2, 24))
            layers = self._layers(rng, k_in, m, q, pool, fc_end, length)
            for _ in range(2):
                x = _raw_input(rng, k_in, length)
                got = simulate_fused_block(x, 5, layers, mappers=int(rng.integers(1, 50)))
                np.testing.assert_array_equal(got.raw, _naive_fused(x, 5, layers))
                assert got.frac == layers[-1].out_format.frac_bits

    def test_cycles_one_to_one_and_two_to_one(self):
        """⌈items/p⌉·m·k_in, plus a comparator cycle with a fused maxpool."""
        rng = np.random.default_rng(11)
        plain = [_pointwise("a", rng.normal(size=(1, 10)), np.zeros(10)), ReLU(name="r"),
                 _pointwise("b", rng.normal(size=(10, 1)), np.zeros(1))]
        pooled = plain[:2] + [MaxPool1D(name="p")] + plain[2:]
        x = _raw_input(rng, 1, 66)
        assert simulate_fused_block(x, 5, plain, mappers=44).cycles == 20
        assert simulate_fused_block(x, 5, plain, mappers=1).cycles == 660
        assert simulate_fused_block(x, 5, pooled, mappers=33).cycles == 11

    def test_zero_projection_in_gives_bias(self):
        """w′ = 0 makes every output the quantized b′."""
        rng = np.random.default_rng(12)
        layers = [
            _pointwise("head", rng.normal(size=(1, 10)), rng.normal(size=10)),
            ReLU(name="relu"),
            _pointwise("end", np.zeros((10, 2)), np.array([0.5, -0.25])),
        ]
        out = simulate_fused_block(_raw_input(rng, 1, 12), 5, layers)
        np.testing.assert_array_equal(out.raw, np.tile([[16], [-8]], (1, 12)))

    def test_negative_biases_kill_every_term(self):
        """w·a + b ≤ 0 everywhere leaves only b′."""
        rng = np.random.default_rng(13)
        layers = [
            _pointwise("head", rng.normal(scale=0.1, size=(1, 10)), np.full(10, -100.0)),
            ReLU(name="relu"),
            _pointwise("end", rng.normal(size=(10, 2)), np.array([0.5, -0.25])),
        ]
        out = simulate_fused_block(_raw_input(rng, 1, 12), 5, layers)
        np.testing.assert_array_equal(out.raw, np.tile([[16], [-8]], (1, 12)))

    def test_mismatched_rows_rejected(self):
        """Projection-in must read as many rows as projection-out writes."""
        rng = np.random.default_rng(14)
        layers = [
            _pointwise("head", rng.normal(size=(1, 4)), np.zeros(4)),
            ReLU(name="relu"),
            _pointwise("end", rng.normal(size=(3, 1)), np.zeros(1)),
        ]
        with pytest.raises(BlockConfigError, match="end"):
            simulate_fused_block(_raw_input(rng, 1, 8), 5, layers)


class TestScoreboard:
    """Sequential argmax"""

    def test_ties_keep_lowest_class(self):
        """Equal top scores resolve to the lower index."""
        out = simulate_scoreboard(np.array([3, 7, 7, 1]), 5)
        assert out.label == 1
        assert out.cycles == 3


# ──────────────────────────────────────────────────────────────────────────────
# Handshake
# ──────────────────────────────────────────────────────────────────────────────


class TestHandshake:
    """Four-signal protocol on one link"""

    def test_transfer_walks_signals(self):
        """push, ready_in, fetch, fetched and release hand over the head result."""
        link = Link("conv1", "fused1")
        link.push((0, "result"))
        assert link.state.ready and not link.has_space
        link.raise_ready_in()
        link.raise_fetch()
        link.raise_fetched()
        assert link.release() == (0, "result")
        assert link.transfers == 1
        assert not any(link.state.as_dict().values())

    def test_fetch_before_ready_is_protocol_error(self):
        """fetch without ready and ready_in is out of order."""
        link = Link("conv1", "fused1")
        link.raise_ready_in()
        with pytest.raises(ProtocolError, match="fetch before ready"):
            link.raise_fetch()

    def test_release_before_fetched_is_protocol_error(self):
        """The slot stays occupied until the consumer acknowledges."""
        link = Link("conv1", "fused1")
        link.push((0, None))
        link.raise_ready_in()
        link.raise_fetch()
        with pytest.raises(ProtocolError, match="released before fetched"):
            link.release()
        assert link.occupancy == 1

    def test_push_into_full_link(self):
        """A producer cannot overwrite an unfetched result."""
        link = Link("conv1", "fused1", capacity=1)
        link.push((0, None))
        with pytest.raises(ProtocolError, match="full link"):
            link.push((1, None))

    def test_ready_stays_high_with_results_queued(self):
        """With two slots, releasing the head leaves ready raised for the next one."""
        link = Link("conv1", "fused1", capacity=2)
        link.push((0, None))
        link.push((1, None))
        link.raise_ready_in()
        link.raise_fetch()
        link.raise_fetched()
        assert link.release() == (0, None)
        assert link.state.ready and not link.state.ready_in
        assert link.occupancy == 1

    def test_zero_capacity_link_never_has_space(self):
        """A link without a slot refuses every push."""
        link = Link("conv1", "fused1", capacity=0)
        assert not link.has_space
        with pytest.raises(ProtocolError):
            link.push((0, None))


@dataclass(eq=False)
class _TimedBlock(Block):
    """Stand-in stage with a fixed compute time."""

    cycles: int = 1

    kind: ClassVar[BlockKind] = BlockKind.CONV

    def cycles_for(self, resources: int) -> int:
        return self.cycles


@dataclass(eq=False)
class _TimedSource(_TimedBlock):
    kind: ClassVar[BlockKind] = BlockKind.SIGNAL_MEMORY
    handshaked: ClassVar[bool] = False


def _chain(*cycles: int):
    source = _TimedSource(name="memory", layers=[], in_shape=(1, 1), cycles=cycles[0])
    names = "abcdefgh"
    return [source] + [
        _TimedBlock(name=names[i], layers=[], in_shape=(1, 1), cycles=c) for i, c in enumerate(cycles[1:])
    ]


class TestBackPressure:
    """Producers wait on full links"""

    def test_single_slot_stalls_producers(self):
        """With κ=1 a slow consumer holds its producer and, through it, the source."""
        cfg = PipelineConfig(handshake_cycles=1, link_capacity=1)
        trace, sink = simulate(_chain(1, 2, 10), cfg, 3)
        memory, a, b = trace.blocks
        assert [memory.stall_cycles, a.stall_cycles, b.stall_cycles] == [2, 6, 0]
        assert (a.start, a.end, b.start, b.end) == (1, 4, 4, 15)
        assert trace.latency_cycles == 15
        assert trace.stream_cycles == 37
        assert trace.initiation_interval_cycles == 11
        assert trace.link_transfers == {"memory -> a": 3, "a -> b": 3}
        assert sink == [None, None, None]

    def test_second_slot_absorbs_the_wait(self):
        """κ=2 removes every stall without changing the sink's push times."""
        cfg = PipelineConfig(handshake_cycles=1, link_capacity=2)
        trace, _ = simulate(_chain(1, 2, 10), cfg, 3)
        assert [block.stall_cycles for block in trace.blocks] == [0, 0, 0]
        assert (trace.latency_cycles, trace.stream_cycles, trace.initiation_interval_cycles) == (15, 37, 11)

    def test_payloads_follow_segments(self):
        """Each stage's work sees its upstream result; the sink collects them in order."""
        cfg = PipelineConfig(handshake_cycles=0, link_capacity=1)

        def work(block, value):
            return value * 10 if block.name == "memory" else value + 1

        _, sink = simulate(_chain(3, 1, 2), cfg, 4, work)
        assert sink == [2, 12, 22, 32]

    def test_zero_capacity_names_first_link(self):
        """The source holds its first result forever on a slotless link."""
        cfg = PipelineConfig(handshake_cycles=1, link_capacity=0)
        with pytest.raises(DeadlockError, match="deadlock on link memory -> a") as exc:
            simulate(_chain(1, 2, 10), cfg, 2)
        assert exc.value.link == "memory -> a"


# ──────────────────────────────────────────────────────────────────────────────
# Partition and allocation
# ──────────────────────────────────────────────────────────────────────────────


class TestPartition:
    """Projected model → hardware blocks"""

    def test_block_sequence(self, quantized):
        """The projected model maps onto the nine-block pipeline."""
        names = [block.name for block in partition(quantized)]
        assert names == [
            "signal_memory", "conv1", "fused1", "conv2", "fused2", "conv3", "fused3", "classifier", "scoreboard",
        ]

    def test_unquantized_rejected(self):
        """Running the pipeline needs quantized parameters."""
        with pytest.raises(PartitionError, match="quantized"):
            partition(build_optimized())

    def test_original_topology_rejected(self):
        """An unprojected network does not fit the block pattern."""
        with pytest.raises(PartitionError, match="relu1"):
            partition(build_original(), require_quantized=False)


class TestAllocation:
    """Roofline allocation against the cycle budget"""

    def test_conv_engines(self):
        """Every convolution needs two engines: {6, 6, 6} MACs."""
        allocation = allocate_resources(build_optimized())
        assert allocation.budget == 33
        assert allocation.resources("conv") == {"conv1": 6, "conv2": 6, "conv3": 6}
        cycles = {b.name: b.compute_cycles for b in allocation.blocks}
        assert (cycles["conv1"], cycles["conv2"], cycles["conv3"]) == (33, 32, 30)

    def test_minimal_mappers(self):
        """Without an override the fused blocks get the fewest mappers that fit."""
        allocation = allocate_resources(build_optimized())
        assert allocation.resources("fused") == {"fused1": 22, "fused2": 11, "fused3": 30}
        assert allocation.within_budget

    def test_reference_mappers_verified(self, paper_cfg):
        """{44, 33, 30} mappers finish in 20, 11 and 21 cycles, all within 30."""
        allocation = allocate_resources(build_optimized(), paper_cfg)
        fused = {b.name: b for b in allocation.blocks if b.kind == "fused"}
        assert {name: b.resources for name, b in fused.items()} == REFERENCE_MAPPERS
        assert [fused[n].compute_cycles for n in ("fused1", "fused2", "fused3")] == [20, 11, 21]
        assert all(b.overridden and b.compute_cycles <= 30 for b in fused.values())

    def test_minimality(self):
        """Removing one unit from any searched block breaks the budget."""
        model = build_optimized()
        blocks = partition(model, require_quantized=False)
        allocation = allocate_resources(model)
        for block, entry in zip(blocks, allocation.blocks):
            assert entry.compute_cycles <= allocation.budget
            smaller = entry.resources - block.resource_step
            if smaller >= block.resource_step:
                assert block.cycles_for(smaller) > allocation.budget

    def test_single_output_toy(self):
        """A budget equal to the workload needs one unit everywhere."""
        rng = np.random.default_rng(20)
        layers = [
            Conv1D(name="conv.core", weight=conv_weight(rng.normal(size=(3, 1, 1))), bias=channel_bias([0.0])),
            PointwiseConv(name="conv.proj_out", weight=np.ones((1, 1, 1, 1)), bias=channel_bias([0.0])),
            ReLU(name="relu"),
            FullyConnected(name="fc.proj_in", weight=np.ones((1, 2)), bias=np.zeros(1)),
            FullyConnected(name="fc.proj_out", weight=np.ones((1, 1)), bias=np.zeros(1)),
            ReLU(name="relu_fc"),
        ]
        model = NetworkModel(layers=layers, class_count=1, input_length=4)
        allocation = allocate_resources(model, PipelineConfig(cycle_budget=2, budget_tolerance=0))
        resources = allocation.resources()
        assert resources["conv1"] == 3
        assert resources["fused1"] == 1
        assert resources["classifier"] == 1
        assert allocation.within_budget

    def test_unknown_override_rejected(self):
        """Overrides must name fused blocks."""
        with pytest.raises(BlockConfigError, match="fused9"):
            allocate_resources(build_optimized(), PipelineConfig(mapper_override={"fused9": 4}))


# ──────────────────────────────────────────────────────────────────────────────
# Pipeline runs
# ──────────────────────────────────────────────────────────────────────────────


class TestTiming:
    """Cycle accounting of the self-timed pipeline"""

    def test_cycles_to_time(self):
        """42 cycles at 2.5 MHz is 16.8 µs; 30 cycles is 12 µs."""
        assert cycles_to_time(42, 2.5e6) == pytest.approx(16.8e-6)
        assert cycles_to_time(30, 2.5e6) == pytest.approx(12e-6)
        assert cycles_to_time(0, 2.5e6) == 0

    def test_cycles_to_time_rejects_bad_frequency(self):
        """Frequency must be positive."""
        with pytest.raises(ValueError):
            cycles_to_time(42, 0)

    def test_trace_totals(self, quantized, paper_cfg, segments):
        """Per-block spans add up to the latency; the interval is the slowest stage."""
        _, trace = run_pipeline(quantized, segments[0], paper_cfg)
        compute = [b.compute_cycles for b in trace.blocks]
        assert compute == [1, 33, 20, 32, 11, 30, 21, 6, 2]
        for block in trace.blocks:
            assert block.end - block.start == block.compute_cycles + block.handshake_cycles
        for before, after in zip(trace.blocks, trace.blocks[1:]):
            assert after.start == before.end
        assert trace.latency_cycles == sum(compute) + 2 * 8 == trace.blocks[-1].end
        assert trace.initiation_interval_cycles == 35
        assert trace.initiation_interval_cycles <= max(compute) + 2

    def test_calibration_reaches_reference_delay(self, quantized, paper_cfg, segments):
        """The solved handshake cost makes the delay 42 cycles (16.8 µs)."""
        cfg = calibrate_handshake(quantized, 42, paper_cfg)
        assert cfg.handshake_cycles == 9
        _, trace = run_pipeline(quantized, segments[0], cfg)
        assert trace.delay_cycles == 42
        assert trace.summary()["time_at_frequency"]["initiation_interval_s"] == pytest.approx(16.8e-6)
        assert trace.latency_cycles == 156 + 9 * 8

    def test_calibration_below_slowest_block(self, quantized):
        """A target under the slowest block's compute time cannot be met."""
        with pytest.raises(ValueError, match="slowest"):
            calibrate_handshake(quantized, 20)

    def test_timing_is_data_independent(self, quantized, paper_cfg, segments):
        """A zero signal and a random one give the same trace."""
        _, zero = run_pipeline(quantized, np.zeros(66), paper_cfg)
        _, noisy = run_pipeline(quantized, segments[1] * 3, paper_cfg)
        assert zero.summary() == noisy.summary()
        assert [b.as_dict() for b in zero.blocks] == [b.as_dict() for b in noisy.blocks]

    def test_zero_capacity_link_deadlocks(self, quantized, segments):
        """With no link slot the first transfer stalls and is named."""
        with pytest.raises(DeadlockError, match="signal_memory -> conv1"):
            run_pipeline(quantized, segments[0], PipelineConfig(link_capacity=0))

    def test_trace_export(self, quantized, paper_cfg, segments, tmp_path):
        """CSV carries the config hash and trace columns; JSON the summary."""
        _, trace = run_pipeline(quantized, segments[0], paper_cfg)
        trace.write_csv(tmp_path / "trace.csv", config_hash="abc123")
        trace.write_json(tmp_path / "trace.json", config_hash="abc123")
        assert (tmp_path / "trace.csv").read_text().splitlines()[0] == "# config_hash=abc123"
        frame = pd.read_csv(tmp_path / "trace.csv", comment="#")
        assert list(frame.columns) == TRACE_COLUMNS
        assert len(frame) == 9
        summary = json.loads((tmp_path / "trace.json").read_text())
        assert summary["config_hash"] == "abc123"
        assert summary["latency_cycles"] == trace.latency_cycles
        assert summary["reference_delay_cycles"] == 42


class TestEquivalence:
    """Pipeline results against the model's quantized forward"""

    def test_labels_match_quantized_forward(self, quantized, segments):
        """All 524 segments get the quantized-forward label."""
        labels, trace = run_stream(quantized, segments)
        np.testing.assert_array_equal(labels, predict(quantized, segments))
        assert trace.segments == 524

    def test_every_block_output_matches_layer_outputs(self, quantized, segments):
        """Each block's output equals the activation after its last layer."""
        pipeline = Pipeline.build(quantized)
        for segment in segments[:20]:
            acts = run_layers_fixed(quantized.layers, quantize_input(quantized, segment), quantized.input_format.frac_bits)
            _, outputs = pipeline.classify(segment)
            for block, out in zip(pipeline.blocks, outputs):
                if not block.layers:
                    continue
                raw, frac = acts[quantized.index_of(block.layers[-1].name) + 1]
                np.testing.assert_array_equal(out.raw, raw[0])
                assert out.frac == frac

    def test_fused_blocks_match_integer_loops(self, quantized, segments):
        """Every fused block of the projected model agrees with straight-loop integer arithmetic."""
        pipeline = Pipeline.build(quantized)
        for segment in segments[:3]:
            _, outputs = pipeline.classify(segment)
            for b, block in enumerate(pipeline.blocks):
                if isinstance(block, FusedBlock):
                    upstream = outputs[b - 1]
                    np.testing.assert_array_equal(outputs[b].raw, _naive_fused(upstream.raw, upstream.frac, block.layers))

    def test_scores_match_raw_forward(self, quantized, segments):
        """Classifier scores are the quantized forward's raw scores."""
        pipeline = Pipeline.build(quantized)
        raw, _ = forward_fixed_raw(quantized, segments[:10])
        for segment, expected in zip(segments[:10], raw):
            _, outputs = pipeline.classify(segment)
            np.testing.assert_array_equal(outputs[-2].raw.reshape(-1), expected)

    def test_zero_signal_gets_bias_class(self, quantized):
        """A silent segment lands on the class its biases favour."""
        label, _ = run_pipeline(quantized, np.zeros(66))
        assert label == int(predict(quantized, np.zeros(66))[0])
