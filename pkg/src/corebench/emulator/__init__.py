from corebench.emulator.core import (
    Emulator, ForwardResult, MessageTap, NoSuchSession, NotRegistered, ResourceSnapshot,
    TapEntry, TransportKind, start_emulator,
)
from corebench.emulator.costs import ResourceCostModel, load_cost_model
from corebench.emulator.transport import (
    AddressInUse, SbiMessage, SbiResponse, TargetUnreachable, UnknownServiceOp, UpstreamTimeout,
)

__all__ = [
    "AddressInUse", "Emulator", "ForwardResult", "MessageTap", "NoSuchSession", "NotRegistered",
    "ResourceCostModel", "ResourceSnapshot", "SbiMessage", "SbiResponse", "TapEntry",
    "TargetUnreachable", "TransportKind", "UnknownServiceOp", "UpstreamTimeout",
    "load_cost_model", "start_emulator",
]
