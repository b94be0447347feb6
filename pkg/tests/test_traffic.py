import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slicesim.network import SliceId, UserSpec
from slicesim.traffic import (
    Packet, UserBuffer, arrivals_in_tti, dequeue_bits, drop_expired, generate_arrivals,
)

EMBB = UserSpec(1, SliceId.E, 16e6, 10.0, 8192, 0.5, 30.0)
URLLC = UserSpec(6, SliceId.U, 3.8e6, 2.0, 3840, 1.0, 30.0)


def _buffer(*sizes, arrival=0.0):
    b = UserBuffer()
    b.push([Packet(1, s, arrival) for s in sizes])
    return b


def test_offered_load_per_tti():
    e = generate_arrivals(0.0, EMBB)
    assert len(e) == 2 and sum(p.size for p in e) == 16384
    u = generate_arrivals(0.0, URLLC)
    assert len(u) == 1 and sum(p.size for p in u) == 3840
    # over a second, offered loads are 16.384 and 3.84 Mbps
    assert sum(sum(p.size for p in generate_arrivals(float(t), EMBB)) for t in range(1000)) == 16_384_000
    assert sum(sum(p.size for p in generate_arrivals(float(t), URLLC)) for t in range(1000)) == 3_840_000


def test_first_arrival_at_zero():
    b = UserBuffer()
    b.push(generate_arrivals(0.0, URLLC))
    assert len(b) == 1 and b.queue[0].arrival_ts == 0.0


def test_arrivals_stamped_at_tti_start():
    assert all(p.arrival_ts == 7.0 for p in generate_arrivals(7.0, EMBB))


@pytest.mark.parametrize("interval, expect", [(0.5, 2), (1.0, 1), (2.0, None), (0.3, None)])
def test_arrival_counts_sum_to_horizon(interval, expect):
    counts = [arrivals_in_tti(float(t), interval) for t in range(600)]
    if expect is not None:
        assert set(counts) == {expect}
    assert sum(counts) == round(600 / interval)


def test_drop_strictly_older_than_dmax():
    b = _buffer(3840, arrival=0.0)
    assert drop_expired(b, 2.0, 2.0) == []  # aged exactly d_max: kept
    gone = drop_expired(b, 2.5, 2.0)
    assert len(gone) == 1 and len(b) == 0 and b.bits == 0
    assert drop_expired(UserBuffer(), 5.0, 2.0) == []


def test_in_flight_packet_not_dropped():
    b = _buffer(8192, 8192, arrival=0.0)
    dequeue_bits(b, 100, 0.0)
    gone = drop_expired(b, 50.0, 10.0)
    assert len(gone) == 1
    assert len(b) == 1 and b.queue[0].sent == 100


def test_dequeue_examples():
    b = _buffer(8192, 8192)
    out = dequeue_bits(b, 8192, 0.0)
    assert [full for _, full in out] == [True]
    assert len(b) == 1 and b.queue[0].sent == 0 and b.bits == 8192

    b = _buffer(8192, 8192)
    out = dequeue_bits(b, 12288, 0.0)
    assert [full for _, full in out] == [True, False]
    assert b.queue[0].sent == 4096 and b.bits == 4096

    b = _buffer(8192, 8192)
    assert dequeue_bits(b, 0, 0.0) == [] and b.bits == 16384


def test_timestamps_over_multi_tti_packet():
    b = _buffer(8192, arrival=0.0)
    p0 = b.queue[0]
    dequeue_bits(b, 1000, 3.0)
    assert p0.in_flight and p0.tx_start_ts == 3.0
    dequeue_bits(b, 8000, 4.0)
    assert len(b) == 0 and not p0.in_flight
    # starts in TTI 3, finishes with the end of TTI 4
    assert (p0.tx_start_ts, p0.tx_end_ts) == (3.0, 5.0)
    p = Packet(1, 1, 0.0)
    b.push([p])
    (done, full), = dequeue_bits(b, 1, 9.0)
    assert full and done.tx_start_ts == 9.0 and done.tx_end_ts == 10.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 20000), max_size=12), st.lists(st.integers(0, 30000), max_size=20),
       st.floats(0.5, 20.0))
def test_bit_conservation(sizes, grants, d_max):
    b = _buffer(*sizes)
    arrived = sum(sizes)
    sent = dropped = 0
    for t, g in enumerate(grants):
        dropped += sum(p.remaining for p in drop_expired(b, float(t), d_max))
        before = b.bits
        out = dequeue_bits(b, g, float(t))
        moved = before - b.bits
        assert moved == min(g, before)
        sent += moved
        b.check()
        assert all(p.remaining == 0 for p, full in out if full)
    assert b.bits == arrived - sent - dropped
    assert b.bits == sum(p.remaining for p in b.queue)
