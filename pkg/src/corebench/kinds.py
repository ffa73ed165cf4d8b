"""Enumerations shared across the framework."""

from __future__ import annotations

from enum import Enum


class VnfKind(str, Enum):
    AMF = "AMF"
    SMF = "SMF"
    AUSF = "AUSF"
    UDM = "UDM"
    UDR = "UDR"
    NRF = "NRF"
    UPF = "UPF"
    DN = "DN"


class ProcedureKind(str, Enum):
    REGISTRATION = "Registration"
    PDU_SESSION_SETUP = "PduSessionSetup"
    AUTHENTICATION = "Authentication"
    AUTH_VECTOR_GENERATION = "AuthVectorGeneration"
    SUBSCRIPTION_DATA_MGMT = "SubscriptionDataMgmt"
    NRF_DISCOVERY = "NrfDiscovery"
    HEARTBEAT = "Heartbeat"


class Scope(str, Enum):
    CONTROL_PLANE = "ControlPlane"
    USER_PLANE = "UserPlane"
    JOINT = "Joint"


class TargetKind(str, Enum):
    EMULATOR = "Emulator"
    EXTERNAL = "External"


# Procedures a single VNF can serve when it is targeted in isolation.
SERVABLE_BY: dict[VnfKind, ProcedureKind] = {
    VnfKind.AMF: ProcedureKind.REGISTRATION,
    VnfKind.SMF: ProcedureKind.PDU_SESSION_SETUP,
    VnfKind.AUSF: ProcedureKind.AUTHENTICATION,
    VnfKind.UDM: ProcedureKind.AUTH_VECTOR_GENERATION,
    VnfKind.UDR: ProcedureKind.SUBSCRIPTION_DATA_MGMT,
    VnfKind.NRF: ProcedureKind.NRF_DISCOVERY,
}


def servable(procedure: ProcedureKind, vnf: VnfKind) -> bool:
    return SERVABLE_BY.get(vnf) is procedure


class Direction(str, Enum):
    UPLINK = "Uplink"
    DOWNLINK = "Downlink"
