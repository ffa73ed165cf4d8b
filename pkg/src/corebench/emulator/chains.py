"""Message-level chain definitions for every signaling procedure.

Each ``(vnf, service_op)`` pair maps to the upstream requests the VNF issues
while handling it, in order, and to the context it stores. The emulator
executes this table; the tests walk it independently.
"""

from __future__ import annotations

from dataclasses import dataclass

from corebench.kinds import ProcedureKind, VnfKind

A, S, AU, UM, UR, N, U, D = (
    VnfKind.AMF, VnfKind.SMF, VnfKind.AUSF, VnfKind.UDM,
    VnfKind.UDR, VnfKind.NRF, VnfKind.UPF, VnfKind.DN,
)

DISCOVER = "DISCOVER"
HEARTBEAT = "HEARTBEAT"
REGISTER = "REGISTER"
DEREGISTER = "DEREGISTER"


@dataclass(frozen=True)
class Handler:
    calls: tuple[tuple[VnfKind, str], ...] = ()
    stores: str | None = None
    releases: str | None = None
    # "supi" or "session": which message field keys the stored context
    key: str = "supi"


HANDLERS: dict[tuple[VnfKind, str], Handler] = {
    # Registration
    (A, "REGISTRATION_REQUEST"): Handler(
        calls=((AU, "UE_AUTHENTICATE"), (UM, "REGISTER_UE_CONTEXT")), stores="ue_context"),
    (AU, "UE_AUTHENTICATE"): Handler(calls=((UM, "GENERATE_AUTH_VECTOR"),), stores="auth_context"),
    (UM, "GENERATE_AUTH_VECTOR"): Handler(calls=((UR, "QUERY_AUTH_SUBSCRIPTION"),)),
    (UR, "QUERY_AUTH_SUBSCRIPTION"): Handler(),
    (UM, "REGISTER_UE_CONTEXT"): Handler(
        calls=((UR, "STORE_UE_CONTEXT"),), stores="uecm_registration"),
    (UR, "STORE_UE_CONTEXT"): Handler(stores="amf_registration_record"),
    # PDU session setup
    (A, "PDU_SESSION_REQUEST"): Handler(
        calls=((S, "CREATE_SM_CONTEXT"),), stores="pdu_session", key="session"),
    (S, "CREATE_SM_CONTEXT"): Handler(
        calls=((UM, "GET_SM_SUBSCRIPTION"), (U, "N4_SESSION_ESTABLISH")),
        stores="sm_context", key="session"),
    (UM, "GET_SM_SUBSCRIPTION"): Handler(calls=((UR, "QUERY_SM_DATA"),)),
    (UR, "QUERY_SM_DATA"): Handler(),
    (U, "N4_SESSION_ESTABLISH"): Handler(stores="n4_session", key="session"),
    (U, "N4_SESSION_RELEASE"): Handler(releases="n4_session", key="session"),
    # subscription data management
    (UR, "QUERY_SUBSCRIPTION_DATA"): Handler(),
    (UR, "STORE_SUBSCRIPTION_DATA"): Handler(stores="subscription_data"),
    # NRF services
    (N, DISCOVER): Handler(),
    (N, HEARTBEAT): Handler(),
    (N, REGISTER): Handler(),
    (N, DEREGISTER): Handler(),
}

SERVICE_OPS: frozenset[str] = frozenset(op for _, op in HANDLERS)

# requests the injector sends for a procedure when no single VNF is targeted
DEFAULT_ENTRY: dict[ProcedureKind, tuple[tuple[VnfKind, str], ...]] = {
    ProcedureKind.REGISTRATION: ((A, "REGISTRATION_REQUEST"),),
    ProcedureKind.PDU_SESSION_SETUP: ((A, "PDU_SESSION_REQUEST"),),
    ProcedureKind.AUTHENTICATION: ((AU, "UE_AUTHENTICATE"),),
    ProcedureKind.AUTH_VECTOR_GENERATION: ((UM, "GENERATE_AUTH_VECTOR"),),
    ProcedureKind.SUBSCRIPTION_DATA_MGMT: (
        (UR, "QUERY_SUBSCRIPTION_DATA"), (UR, "STORE_SUBSCRIPTION_DATA")),
    ProcedureKind.NRF_DISCOVERY: ((N, DISCOVER),),
    ProcedureKind.HEARTBEAT: ((N, HEARTBEAT),),
}

# entry requests when a procedure is aimed at one VNF (the VNF-rooted suffix)
TARGETED_ENTRY: dict[tuple[ProcedureKind, VnfKind], tuple[tuple[VnfKind, str], ...]] = {
    (ProcedureKind.REGISTRATION, A): ((A, "REGISTRATION_REQUEST"),),
    (ProcedureKind.PDU_SESSION_SETUP, S): ((S, "CREATE_SM_CONTEXT"),),
    (ProcedureKind.AUTHENTICATION, AU): ((AU, "UE_AUTHENTICATE"),),
    (ProcedureKind.AUTH_VECTOR_GENERATION, UM): ((UM, "GENERATE_AUTH_VECTOR"),),
    (ProcedureKind.SUBSCRIPTION_DATA_MGMT, UR): DEFAULT_ENTRY[ProcedureKind.SUBSCRIPTION_DATA_MGMT],
    (ProcedureKind.NRF_DISCOVERY, N): ((N, DISCOVER),),
}


def entry_requests(procedure: ProcedureKind,
                   target_vnf: VnfKind | None = None) -> tuple[tuple[VnfKind, str], ...]:
    if target_vnf is None:
        return DEFAULT_ENTRY[procedure]
    try:
        return TARGETED_ENTRY[(procedure, target_vnf)]
    except KeyError:
        raise ValueError(f"{procedure.value} is not servable by {target_vnf.value}") from None


def ops_served_by(vnf: VnfKind) -> set[str]:
    return {op for kind, op in HANDLERS if kind is vnf}


def chain_depth(vnf: VnfKind, op: str) -> int:
    """Longest run of nested requests below and including ``(vnf, op)``; unknown pairs count as one."""
    handler = HANDLERS.get((vnf, op))
    if handler is None:
        return 1
    return 1 + max((chain_depth(t, o) for t, o in handler.calls), default=0)


def vnfs_involved(procedure: ProcedureKind, target_vnf: VnfKind | None = None,
                  stub_upstreams: bool = False) -> set[VnfKind]:
    """VNFs a procedure touches, NRF included whenever a hop needs discovery."""
    seen: set[VnfKind] = set()

    def walk(vnf: VnfKind, op: str) -> None:
        seen.add(vnf)
        for target, upstream_op in HANDLERS[(vnf, op)].calls:
            seen.add(VnfKind.NRF)
            walk(target, upstream_op)

    for vnf, op in entry_requests(procedure, target_vnf):
        if stub_upstreams:
            seen.add(vnf)
        else:
            walk(vnf, op)
    return seen
