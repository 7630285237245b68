"""
Versioned wire format for the two federation messages.

Envelope (UTF-8 JSON, sorted keys, no whitespace):

    {"fields": {...}, "type": "broadcast" | "client_update", "version": 1}

Array fields are `.npy` bytes (little-endian float64, no pickle) encoded as
base64 strings; integer and boolean fields are plain JSON values. Decoding
rejects unknown or missing fields, so a message can only ever carry what its
dataclass declares.
"""
import base64
import binascii
import io
import json
import logging
from dataclasses import dataclass, fields
from typing import Dict, Union

import numpy as np

from .errors import WireFormatError

logger = logging.getLogger(__name__)

WIRE_VERSION = 1

ARRAY = 'array'
INT = 'int'
BOOL = 'bool'


@dataclass(frozen=True, eq=False)
class BroadcastMsg:
    """Server -> client: global prompt tokens and the global probe."""
    round: int
    global_tokens: np.ndarray     # (C+1, d_g, D)
    probe_weights: np.ndarray     # (C, D)
    probe_biases: np.ndarray      # (C,)
    probe_trained: bool

    WIRE_TYPE = 'broadcast'
    WIRE_FIELDS = {
        'round': INT, 'global_tokens': ARRAY, 'probe_weights': ARRAY,
        'probe_biases': ARRAY, 'probe_trained': BOOL,
    }
    ARRAY_RANKS = {'global_tokens': 3, 'probe_weights': 2, 'probe_biases': 1}

    def __post_init__(self):
        _check_fields(self)


@dataclass(frozen=True, eq=False)
class ClientUpdateMsg:
    """Client -> server: updated global-token copy, probe and the two sample counts."""
    client_id: int
    round: int
    global_tokens: np.ndarray
    probe_weights: np.ndarray
    probe_biases: np.ndarray
    probe_trained: bool
    n_prompt: int
    m_probe: int

    WIRE_TYPE = 'client_update'
    WIRE_FIELDS = {
        'client_id': INT, 'round': INT, 'global_tokens': ARRAY, 'probe_weights': ARRAY,
        'probe_biases': ARRAY, 'probe_trained': BOOL, 'n_prompt': INT, 'm_probe': INT,
    }
    ARRAY_RANKS = {'global_tokens': 3, 'probe_weights': 2, 'probe_biases': 1}

    def __post_init__(self):
        _check_fields(self)
        if self.n_prompt < 0 or self.m_probe < 0:
            raise WireFormatError("sample counts must be non-negative")


Message = Union[BroadcastMsg, ClientUpdateMsg]
MESSAGE_TYPES = {cls.WIRE_TYPE: cls for cls in (BroadcastMsg, ClientUpdateMsg)}


def _check_fields(msg):
    declared = {f.name for f in fields(msg)}
    if declared != set(msg.WIRE_FIELDS):
        raise WireFormatError(f"{type(msg).__name__} fields drifted from its wire schema")
    for name, kind in msg.WIRE_FIELDS.items():
        value = getattr(msg, name)
        if kind == ARRAY:
            arr = np.array(value, dtype=np.float64)
            if arr.ndim != msg.ARRAY_RANKS[name]:
                raise WireFormatError(f"{name} must have rank {msg.ARRAY_RANKS[name]}, got {arr.ndim}")
            if not np.all(np.isfinite(arr)):
                raise WireFormatError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(msg, name, arr)
        elif kind == BOOL:
            if not isinstance(value, (bool, np.bool_)):
                raise WireFormatError(f"{name} must be a bool")
            object.__setattr__(msg, name, bool(value))
        else:
            if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
                raise WireFormatError(f"{name} must be an integer")
            object.__setattr__(msg, name, int(value))


# ----------------------------------------------------------------------
# Arrays
# ----------------------------------------------------------------------

def ndarray_to_wire(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr, dtype='<f8'), allow_pickle=False)
    return base64.b64encode(buf.getvalue()).decode('ascii')


def ndarray_from_wire(text: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text.encode('ascii'), validate=True)
        arr = np.load(io.BytesIO(raw), allow_pickle=False)
    except (binascii.Error, ValueError, UnicodeEncodeError, AttributeError, EOFError) as e:
        raise WireFormatError(f"malformed array payload: {e}")
    if arr.dtype != np.dtype('<f8'):
        raise WireFormatError(f"array dtype must be <f8, got {arr.dtype}")
    return arr


# ----------------------------------------------------------------------
# Encode / decode
# ----------------------------------------------------------------------

def encode_message(msg: Message) -> bytes:
    if type(msg) not in MESSAGE_TYPES.values():
        raise WireFormatError(f"cannot encode {type(msg).__name__}: not a federation message")
    payload: Dict[str, object] = {}
    for name, kind in msg.WIRE_FIELDS.items():
        value = getattr(msg, name)
        payload[name] = ndarray_to_wire(value) if kind == ARRAY else value
    envelope = {'version': WIRE_VERSION, 'type': msg.WIRE_TYPE, 'fields': payload}
    return json.dumps(envelope, sort_keys=True, separators=(',', ':')).encode('utf-8')


def decode_message(data: bytes) -> Message:
    try:
        envelope = json.loads(data.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WireFormatError(f"not a wire envelope: {e}")
    if not isinstance(envelope, dict) or set(envelope) != {'version', 'type', 'fields'}:
        raise WireFormatError("envelope must hold exactly version, type and fields")
    if envelope['version'] != WIRE_VERSION:
        raise WireFormatError(f"unsupported wire version {envelope['version']!r}")
    cls = MESSAGE_TYPES.get(envelope['type'])
    if cls is None:
        raise WireFormatError(f"unknown message type {envelope['type']!r}")
    payload = envelope['fields']
    if not isinstance(payload, dict):
        raise WireFormatError("fields must be an object")
    unknown = sorted(set(payload) - set(cls.WIRE_FIELDS))
    missing = sorted(set(cls.WIRE_FIELDS) - set(payload))
    if unknown or missing:
        raise WireFormatError(f"{cls.WIRE_TYPE}: unknown fields {unknown}, missing fields {missing}")
    values = {}
    for name, kind in cls.WIRE_FIELDS.items():
        raw = payload[name]
        if kind == ARRAY:
            if not isinstance(raw, str):
                raise WireFormatError(f"{name} must be a base64 string")
            values[name] = ndarray_from_wire(raw)
        else:
            values[name] = raw
    return cls(**values)


def loopback(msg: Message) -> Message:
    """Send a message through the full encode/decode path in-process."""
    return decode_message(encode_message(msg))
