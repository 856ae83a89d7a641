"""
Stop-and-wait update with a power failure
=========================================

The distributor remembers how many segments the device has acknowledged.
After a reboot the device says HELLO and the distributor resends only the
packets of the segment that was cut short.
"""
from eaota.codec import MsgType
from eaota.protocol import DeviceState, DistributorSession, drive, expected_flash, plan_packets

old = bytes(4096)
new = b"\x11" * 512 + b"\x22" * 512 + bytes(3072)
packets = plan_packets("EA", old, new)
print([("defer" if p.defer else "commit") for p in packets])

device = DeviceState.with_image(old)
session = DistributorSession(device.device_id, "EA", packets)

msg = session.start()
acks = 0
while acks < 4:
    reply, actions, _ = drive(device, msg)
    print(msg.msg_type.name, "->", [a.kind for a in actions])
    acks += reply.msg_type is MsgType.ACK
    msg = session.step(reply)

###############################################################################
# The capacitor runs dry while the fifth packet is on air.  SRAM is gone,
# segment 0 is safe in flash.

msg = session.step(device.power_on())
print("resume at packet", session.cursor)
while msg.msg_type is not MsgType.DONE:
    reply, _, _ = drive(device, msg)
    msg = session.step(reply)
drive(device, msg)

print("retransmitted per failure:", session.retransmissions)
assert device.flash.image() == expected_flash(new, device.flash.total_size)
