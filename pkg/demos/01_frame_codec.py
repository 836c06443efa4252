"""Walk through the wire protocol byte by byte.

Every packet is [0xFF][node id][payload][checksum] with an additive
checksum over id + payload.  This script encodes the classic readings,
then corrupts a stream and watches the parser resynchronize.
"""

from meshbed import Frame, PayloadRegistry, StreamParser, encode_frame, hex_dump

registry = PayloadRegistry.gateway_default()

print("== encoding ==")
for frame in (Frame(1, bytes([32])), Frame(2, bytes([28])), Frame(3, bytes([2, 1]))):
    encoded = encode_frame(frame, registry)
    print(f"node {frame.node_id} payload {list(frame.payload)} -> {hex_dump(encoded)}")

print()
print("== a clean stream ==")
stream = encode_frame(Frame(1, bytes([32]))) + encode_frame(Frame(2, bytes([28])))
parser = StreamParser(registry)
for frame in parser.feed(stream):
    print(f"decoded node {frame.node_id}: {frame.payload[0]} degC")

print()
print("== corruption and resync ==")
good = encode_frame(Frame(2, bytes([28])))
bad = bytearray(encode_frame(Frame(1, bytes([32]))))
bad[2] ^= 0x55  # flip payload bits; checksum no longer matches
noisy = b"\x00\x17" + bytes(bad) + good
print(f"wire bytes: {hex_dump(noisy)}")
parser = StreamParser(registry)
frames = parser.feed(noisy)
print(f"recovered: {[(f.node_id, list(f.payload)) for f in frames]}")
print(
    f"counters: ok={parser.frames_ok} checksum_failures={parser.checksum_failures} "
    f"resync_skips={parser.resync_skips}"
)

print()
print("== chunked arrival (serial ports do this) ==")
parser = StreamParser(registry)
collected = []
for i in range(len(noisy)):
    collected += parser.feed(noisy[i : i + 1])
print(f"one byte at a time yields the same frames: {[(f.node_id, list(f.payload)) for f in collected]}")
