"""Byte-frame codec for the sensor link.

Wire format: ``[0xFF][node_id][payload...][checksum]``.  The header byte is
fixed at 0xFF, the checksum is the node id plus all payload bytes, mod 256.
There is no length field on the wire, so the expected payload length is looked
up per node id in a :class:`PayloadRegistry`.
"""

from dataclasses import dataclass, field

HEADER = 0xFF
MAX_PAYLOAD = 8
MAX_BUFFER = 64

KIND_TEMPERATURE = "temperature"
KIND_ROBOT_POSITION = "robot-position"
KIND_ROBOT_COMMAND = "robot-command"


class FrameError(ValueError):
    """Raised when a frame or registry entry violates the wire contract."""


def compute_checksum(node_id: int, payload: bytes) -> int:
    """Additive checksum: (node_id + sum of payload bytes) mod 256."""
    if not 1 <= node_id <= 254:
        raise FrameError(f"node_id {node_id} outside 1..254")
    if not 1 <= len(payload) <= MAX_PAYLOAD:
        raise FrameError(f"payload length {len(payload)} outside 1..{MAX_PAYLOAD}")
    return (node_id + sum(payload)) % 256


@dataclass(frozen=True)
class Frame:
    """One decoded packet. The checksum is derived from id and payload."""

    node_id: int
    payload: bytes
    checksum: int = field(default=-1)

    def __post_init__(self):
        payload = bytes(self.payload)
        object.__setattr__(self, "payload", payload)
        expected = compute_checksum(self.node_id, payload)
        if self.checksum == -1:
            object.__setattr__(self, "checksum", expected)
        elif self.checksum != expected:
            raise FrameError(
                f"checksum {self.checksum} does not match computed {expected}"
            )


@dataclass(frozen=True)
class PayloadSpec:
    length: int
    kind: str


class PayloadRegistry:
    """Maps node id -> expected payload length and payload kind.

    The wire carries no length field; each endpoint knows the length of the
    payloads it expects from each node id.  The same id may mean different
    things to different endpoints (the robot id carries position reports
    uplink and commands downlink), so each parser owns its own registry.
    """

    def __init__(self, entries: dict[int, PayloadSpec] | None = None):
        self._entries: dict[int, PayloadSpec] = {}
        for node_id, spec in (entries or {}).items():
            self.register(node_id, spec.length, spec.kind)

    def register(self, node_id: int, length: int, kind: str) -> None:
        if not 1 <= node_id <= 254:
            raise FrameError(f"node_id {node_id} outside 1..254")
        if not 1 <= length <= MAX_PAYLOAD:
            raise FrameError(f"payload length {length} outside 1..{MAX_PAYLOAD}")
        if node_id in self._entries:
            raise FrameError(f"node_id {node_id} registered twice")
        self._entries[node_id] = PayloadSpec(length, kind)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._entries

    def length_of(self, node_id: int) -> int:
        return self._entries[node_id].length

    def kind_of(self, node_id: int) -> str:
        return self._entries[node_id].kind

    def node_ids(self) -> list[int]:
        return sorted(self._entries)

    @classmethod
    def gateway_default(cls, robot_id: int = 3) -> "PayloadRegistry":
        """Registry used on the coordinator side: two 1-byte temperature
        nodes plus 2-byte robot position reports."""
        reg = cls()
        reg.register(1, 1, KIND_TEMPERATURE)
        reg.register(2, 1, KIND_TEMPERATURE)
        reg.register(robot_id, 2, KIND_ROBOT_POSITION)
        return reg

    @classmethod
    def robot_default(cls, robot_id: int = 3) -> "PayloadRegistry":
        """Registry used on the robot side: 2-byte waypoint commands."""
        reg = cls()
        reg.register(robot_id, 2, KIND_ROBOT_COMMAND)
        return reg


def encode_frame(frame: Frame, registry: PayloadRegistry | None = None) -> bytes:
    """Serialize a frame. With a registry, also checks the payload length."""
    if registry is not None:
        if frame.node_id not in registry:
            raise FrameError(f"node_id {frame.node_id} not registered")
        if len(frame.payload) != registry.length_of(frame.node_id):
            raise FrameError(
                f"payload length {len(frame.payload)} != registered "
                f"{registry.length_of(frame.node_id)} for node {frame.node_id}"
            )
    return bytes([HEADER, frame.node_id, *frame.payload, frame.checksum])


class StreamParser:
    """Incremental decoder that resynchronizes on the 0xFF header byte.

    Feed it arbitrary byte chunks; it emits every frame whose checksum
    validates.  On a bad checksum or an unregistered node id it skips one
    byte past the header candidate and rescans, so a later 0xFF inside the
    corrupted region can still start a valid frame.  Never raises on input.
    """

    def __init__(self, registry: PayloadRegistry, max_buffer: int = MAX_BUFFER):
        self.registry = registry
        self.max_buffer = max_buffer
        self._buf = bytearray()
        self.frames_ok = 0
        self.checksum_failures = 0
        self.resync_skips = 0

    def feed(self, data: bytes) -> list[Frame]:
        self._buf.extend(data)
        frames: list[Frame] = []
        buf = self._buf
        pos = 0
        while True:
            # hunt for the header byte
            start = buf.find(HEADER, pos)
            if start < 0:
                self.resync_skips += len(buf) - pos
                pos = len(buf)
                break
            self.resync_skips += start - pos
            pos = start
            if len(buf) - pos < 2:
                break  # header alone; wait for the id byte
            node_id = buf[pos + 1]
            if node_id not in self.registry:
                pos += 1  # skip just the header candidate
                self.resync_skips += 1
                continue
            length = self.registry.length_of(node_id)
            total = 3 + length
            if len(buf) - pos < total:
                break  # incomplete frame stays buffered
            payload = bytes(buf[pos + 2 : pos + 2 + length])
            checksum = buf[pos + 2 + length]
            if checksum == compute_checksum(node_id, payload):
                frames.append(Frame(node_id, payload, checksum))
                self.frames_ok += 1
                pos += total
            else:
                self.checksum_failures += 1
                self.resync_skips += 1
                pos += 1
        del buf[:pos]
        if len(buf) > self.max_buffer:
            drop = len(buf) - self.max_buffer
            del buf[:drop]
            self.resync_skips += drop
        return frames

    @property
    def buffered(self) -> bytes:
        return bytes(self._buf)


def hex_dump(data: bytes) -> str:
    """Uppercase hex with spaces, e.g. 'FF 01 20 21'. Used for test goldens."""
    return " ".join(f"{b:02X}" for b in data)
