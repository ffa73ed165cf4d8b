from __future__ import annotations

import json
import socket
from collections import Counter

import pytest

from oracles import INJECTOR, walk_messages

from corebench.clock import VirtualClock
from corebench.emulator.chains import DISCOVER, HANDLERS, HEARTBEAT, entry_requests, vnfs_involved
from corebench.emulator.core import NoSuchSession, TransportKind, start_emulator
from corebench.emulator.costs import PS_PER_US, ResourceCostModel, load_cost_model
from corebench.emulator.transport import (
    HEADER, MAX_FRAME, AddressInUse, FrameError, FrameServer, SbiMessage, SbiResponse, TcpClient,
    UnknownServiceOp, UpstreamTimeout, read_frame, write_frame,
)
from corebench.kinds import Direction, ProcedureKind, VnfKind

A, S, U = VnfKind.AMF, VnfKind.SMF, VnfKind.UPF


@pytest.fixture
def emu():
    e = start_emulator(clock=VirtualClock(0))
    yield e
    e.stop()


def _register(emu, rid="r1", supi="imsi-001010000000001"):
    return emu.submit(A, "REGISTRATION_REQUEST", rid, supi)


def _pdu(emu, rid, supi, psi=1):
    return emu.submit(A, "PDU_SESSION_REQUEST", rid, supi, {"pdu_session_id": psi, "session_key": f"{supi}:{psi}"})


def test_startup_registers_every_vnf(emu):
    assert emu.registered() == set(VnfKind) - {VnfKind.NRF}
    assert all(e.service_op == "REGISTER" for e in emu.tap.entries())


def test_chain_counts_cold_and_warm(emu):
    mark = len(emu.tap)
    assert _register(emu).ok
    assert len(emu.tap) - mark == 10
    mark = len(emu.tap)
    assert _register(emu, "r2", "imsi-001010000000002").ok
    assert len(emu.tap) - mark == 6
    # UDM already knows the UDR from registration, so this PDU chain discovers only three hops
    mark = len(emu.tap)
    assert _pdu(emu, "p1", "imsi-001010000000001").ok
    assert len(emu.tap) - mark == 8


def test_pdu_chain_counts_cold_and_warm():
    emu = start_emulator(clock=VirtualClock(0))
    mark = len(emu.tap)
    assert _pdu(emu, "p1", "imsi-001010000000001").ok
    assert len(emu.tap) - mark == 9
    mark = len(emu.tap)
    assert _pdu(emu, "p2", "imsi-001010000000002").ok
    assert len(emu.tap) - mark == 5
    emu.stop()


def test_vnfs_involved():
    assert vnfs_involved(ProcedureKind.PDU_SESSION_SETUP) == {A, S, VnfKind.UDM, VnfKind.UDR, VnfKind.NRF, U}
    assert vnfs_involved(ProcedureKind.AUTHENTICATION, VnfKind.AUSF, stub_upstreams=True) == {VnfKind.AUSF}
    assert vnfs_involved(ProcedureKind.HEARTBEAT) == {VnfKind.NRF}
    with pytest.raises(ValueError):
        entry_requests(ProcedureKind.REGISTRATION, VnfKind.UDR)


def test_targeted_entry_matches_walker(emu):
    mark = len(emu.tap)
    resp = emu.submit(S, "CREATE_SM_CONTEXT", "t1", "imsi-1", {"session_key": "imsi-1:1"})
    assert resp.ok
    tap = Counter((e.origin, e.target, e.service_op) for e in emu.tap.entries(mark))
    assert tap == walk_messages(ProcedureKind.PDU_SESSION_SETUP, S)


def test_discovery_ttl():
    clock = VirtualClock(0)
    emu = start_emulator(clock=clock, discovery_ttl_ms=1000)

    def discoveries():
        mark = len(emu.tap)
        assert _register(emu, f"r{clock.now_ms()}").ok
        return Counter((e.origin, e.target) for e in emu.tap.entries(mark) if e.service_op == DISCOVER)

    first = discoveries()
    # AMF looks up AUSF and UDM, AUSF looks up UDM, UDM looks up UDR
    assert first == Counter({("AMF", "NRF"): 2, ("AUSF", "NRF"): 1, ("UDM", "NRF"): 1})
    clock.advance_to(999)
    assert sum(discoveries().values()) == 0
    clock.advance_to(1000)
    # after expiry, exactly one lookup per (requester, wanted) pair again
    assert discoveries() == first
    emu.stop()


def test_context_conservation(emu):
    costs = emu.costs
    before = {v: emu.snapshot(v).mem_bytes for v in VnfKind}
    for i in range(7):
        supi = f"imsi-00101{i:010d}"
        assert _register(emu, f"r{i}", supi).ok
        assert _pdu(emu, f"p{i}", supi).ok
    grown = {v: emu.snapshot(v).mem_bytes - before[v] for v in VnfKind}
    expected = Counter()
    for (vnf, op), handler in HANDLERS.items():
        if handler.stores and op in {"REGISTRATION_REQUEST", "UE_AUTHENTICATE", "REGISTER_UE_CONTEXT",
                                     "STORE_UE_CONTEXT", "PDU_SESSION_REQUEST", "CREATE_SM_CONTEXT",
                                     "N4_SESSION_ESTABLISH"}:
            expected[vnf] += 7 * costs.context_bytes(vnf, handler.stores)
    assert grown == {v: expected[v] for v in VnfKind}
    assert grown[U] == 0


def test_repeated_registration_stores_one_context(emu):
    _register(emu, "a")
    mem = emu.snapshot(A).mem_bytes
    _register(emu, "b")
    assert emu.snapshot(A).mem_bytes == mem


def test_cpu_additivity_against_the_tap(emu):
    start = {v: emu.snapshot(v).cpu_time_ps for v in VnfKind}
    mark = len(emu.tap)
    for i in range(5):
        _register(emu, f"r{i}", f"imsi-{i}")
        _pdu(emu, f"p{i}", f"imsi-{i}")
    emu.clock.advance_to(20_000)
    emu.heartbeat_tick()
    expected = Counter()
    for e in emu.tap.entries(mark):
        expected[VnfKind(e.target)] += emu.costs.step_ps(VnfKind(e.target), e.service_op)
        if e.service_op == HEARTBEAT:
            expected[VnfKind(e.origin)] += emu.costs.step_ps(VnfKind(e.origin), HEARTBEAT)
    for v in VnfKind:
        assert emu.snapshot(v).cpu_time_ps - start[v] == expected[v]


def test_heartbeats_follow_the_period(emu):
    assert emu.heartbeat_tick() == 0
    emu.clock.advance_to(9_999)
    assert emu.heartbeat_tick() == 0
    emu.clock.advance_to(10_000)
    assert emu.heartbeat_tick() == 7
    assert emu.heartbeat_tick() == 0


def test_deregistered_upstream_fails_the_chain(emu):
    emu.deregister(VnfKind.AUSF)
    resp = _register(emu)
    assert not resp.ok and "NotRegistered" in resp.reason


def test_unresponsive_upstream_times_out(emu):
    emu.set_unresponsive(VnfKind.UDR)
    resp = _register(emu)
    assert not resp.ok and "UpstreamTimeout" in resp.reason


def test_unknown_service_op(emu):
    with pytest.raises(UnknownServiceOp):
        emu.submit(A, "CREATE_SM_CONTEXT", "x")


def test_upf_ingest(emu):
    emu.establish_session("s:1")
    base = emu.snapshot(U)
    r = emu.upf_ingest("s:1", 1500, Direction.DOWNLINK)
    assert r.cpu_us == pytest.approx(2.0 + 1.5)
    after = emu.snapshot(U)
    assert after.cpu_time_ps - base.cpu_time_ps == 3_500_000
    assert after.mem_bytes == base.mem_bytes == 4_330_000
    assert emu.vnfs[U].session_stats["s:1"] == [1, 1500]
    with pytest.raises(NoSuchSession):
        emu.upf_ingest("missing:1", 100, Direction.UPLINK)
    assert emu.release_session("s:1").ok
    assert not emu.has_session("s:1")
    assert not emu.release_session("s:1").ok


def test_cost_model_round_trip(tmp_path):
    model = load_cost_model()
    assert ResourceCostModel.from_dict(json.loads(json.dumps(model.to_dict()))) == model
    assert model.step_ps(A, "REGISTRATION_REQUEST") == 900 * PS_PER_US
    assert model.packets_cost_ps(2, 1000) == 2 * 2_000_000 + 1000 * 1000
    with pytest.raises(ValueError):
        ResourceCostModel.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        ResourceCostModel(upf_pkt_cpu_us=-1.0)


def test_wire_format_is_sorted_compact_json():
    msg = SbiMessage("r1", "DISCOVER", "AMF", "NRF", None, {"wanted": "SMF", "a": 1})
    assert msg.encode() == b'{"body":{"a":1,"wanted":"SMF"},"origin":"AMF","request_id":"r1",' \
                           b'"service_op":"DISCOVER","target":"NRF"}'
    assert msg.wire_size == HEADER.size + len(msg.encode())
    assert SbiMessage.from_wire(json.loads(msg.encode())) == msg
    with pytest.raises(FrameError):
        SbiResponse.from_wire({"status": "Success"})


def test_frames_round_trip_over_a_socket_pair():
    a, b = socket.socketpair()
    write_frame(a, b"hello")
    assert read_frame(b) == b"hello"
    with pytest.raises(FrameError):
        write_frame(a, b"x" * (MAX_FRAME + 1))
    a.close()
    b.close()


def test_tcp_transport_matches_in_process():
    runs = {}
    for transport in TransportKind:
        emu = start_emulator(transport=transport, clock=VirtualClock(0))
        try:
            for i in range(3):
                assert _register(emu, f"r{i}", f"imsi-{i}").ok
                assert _pdu(emu, f"p{i}", f"imsi-{i}").ok
            runs[transport] = ([(e.origin, e.target, e.service_op, e.request_id) for e in emu.tap.entries()],
                               {v: emu.snapshot(v).cpu_time_ps for v in VnfKind},
                               {v: emu.snapshot(v).mem_bytes for v in VnfKind})
        finally:
            emu.stop()
    inproc, tcp = runs[TransportKind.IN_PROCESS], runs[TransportKind.TCP_LOOPBACK]
    assert inproc[0] == tcp[0] and inproc[1] == tcp[1] and inproc[2] == tcp[2]


def test_tcp_unknown_service_op_and_timeout():
    emu = start_emulator(transport="tcp", clock=VirtualClock(0), hop_deadline_ms=200)
    try:
        with pytest.raises(UnknownServiceOp):
            emu.submit(A, "NO_SUCH_OP", "x")
        emu.set_unresponsive(VnfKind.UDM)
        resp = _register(emu)
        assert not resp.ok and "UpstreamTimeout" in resp.reason
        client = TcpClient(0.2)
        with pytest.raises(UpstreamTimeout):
            client.request(emu.endpoints[VnfKind.UDM], SbiMessage("y", "GENERATE_AUTH_VECTOR", INJECTOR, "UDM"))
        client.close()
    finally:
        emu.stop()


def test_address_in_use():
    holder = FrameServer("127.0.0.1", 0, lambda m: SbiResponse.success(m.request_id)).start()
    try:
        with pytest.raises(AddressInUse):
            start_emulator(transport="tcp", base_port=holder.port)
    finally:
        holder.stop()
