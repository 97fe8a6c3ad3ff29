import json

import pytest

from buffetfs.errors import TransportError
from buffetfs.transport import LatencyModel, SimNetwork
from buffetfs.types import AccessKind, BuffetInode, Credentials, OpenFlags
from buffetfs.wire import (
    AdminDumpRequest,
    CloseNotify,
    DeferredOpen,
    ReadRequest,
    encode_message,
)
from conftest import World


class TestLatencyModel:
    def test_cost_arithmetic(self):
        model = LatencyModel(rtt_us=200.0, per_byte_us=0.01, service_us=50.0)
        assert model.cost(100, 200) == pytest.approx(253.0)

    def test_per_byte_term(self):
        model = LatencyModel(rtt_us=200.0, per_byte_us=0.01, service_us=0.0)
        assert model.cost(2048, 2048) == pytest.approx(240.96)

    def test_defaults_are_rtt_only(self):
        assert LatencyModel(rtt_us=100.0).cost(10_000, 10_000) == pytest.approx(100.0)


class TestCounters:
    def test_sync_call_counts(self, world):
        reply = world.net.call(world.address, AdminDumpRequest())
        counters = world.net.snapshot_counters()
        assert counters.sync_rpcs == 1
        assert counters.async_msgs == 0
        assert counters.per_type == {"AdminDumpRequest": 1}
        assert counters.bytes_sent == len(encode_message(AdminDumpRequest()))
        assert counters.bytes_received == len(encode_message(reply))

    def test_notify_counts_async_and_costs_nothing(self, world):
        msg = CloseNotify(inode=BuffetInode(1, 1, 1), open_token=99, client_id=1)
        world.net.notify(world.address, msg)
        counters = world.net.snapshot_counters()
        assert counters.sync_rpcs == 0
        assert counters.async_msgs == 1
        assert counters.bytes_sent == len(encode_message(msg))
        assert counters.simulated_elapsed_us == 0.0

    def test_flow_elapsed_matches_model(self, world):
        flow = world.net.flow()
        req = AdminDumpRequest()
        reply = world.net.call(world.address, req, flow=flow)
        expected = world.net.latency.cost(
            len(encode_message(req)), len(encode_message(reply))
        )
        assert flow.elapsed_us == pytest.approx(expected)
        assert world.net.snapshot_counters().simulated_elapsed_us == pytest.approx(expected)

    def test_reset(self, world):
        world.net.call(world.address, AdminDumpRequest())
        world.net.reset_counters()
        counters = world.net.snapshot_counters()
        assert counters.sync_rpcs == 0
        assert counters.bytes_sent == 0
        assert counters.simulated_elapsed_us == 0.0

    def test_snapshot_is_a_copy(self, world):
        snap = world.net.snapshot_counters()
        world.net.call(world.address, AdminDumpRequest())
        assert snap.sync_rpcs == 0

    def test_identical_workloads_identical_counters(self):
        def run():
            w = World()
            w.server.seed_entry("/f", 0o644, data=b"payload", uid=1, gid=1)
            ino = w.server.inode_for(1)
            w.net.call(
                w.address,
                ReadRequest(
                    inode=ino,
                    client_id=1,
                    open_token=1,
                    offset=0,
                    length=7,
                    deferred_open=DeferredOpen(
                        open_token=1,
                        flags=OpenFlags(AccessKind.RDONLY),
                        cred=Credentials(1, 1),
                    ),
                ),
            )
            c = w.net.snapshot_counters()
            return (c.sync_rpcs, c.bytes_sent, c.bytes_received, c.simulated_elapsed_us)

        assert run() == run()


class TestErrors:
    def test_one_way_message_is_not_callable(self, world):
        with pytest.raises(TransportError):
            world.net.call(
                world.address, CloseNotify(inode=BuffetInode(1, 1, 1), open_token=1, client_id=1)
            )

    def test_unknown_address(self, world):
        with pytest.raises(TransportError):
            world.net.call("sim://nowhere", AdminDumpRequest())


class TestDelivery:
    def test_drain_is_idempotent(self, world):
        world.net.drain()
        world.net.drain()
        assert not world.net.pending_notifies

    def test_notify_then_call_preserves_fifo(self):
        """A queued async close lands before a later sync call to the same
        server, so the opened-file list is already clean in the dump."""
        w = World(auto_deliver=False)
        w.server.seed_entry("/f", 0o644, data=b"abc", uid=1, gid=1)
        ino = w.server.inode_for(1)
        w.net.call(
            w.address,
            ReadRequest(
                inode=ino,
                client_id=1,
                open_token=1,
                offset=0,
                length=3,
                deferred_open=DeferredOpen(
                    open_token=1, flags=OpenFlags(AccessKind.RDONLY), cred=Credentials(1, 1)
                ),
            ),
        )
        assert (1, 1) in w.server.opened
        w.net.notify(w.address, CloseNotify(inode=ino, open_token=1, client_id=1))
        assert w.net.pending_notifies  # held back until something forces order
        dump = json.loads(w.net.call(w.address, AdminDumpRequest()).payload)
        assert dump["opened"] == []
        assert not w.net.pending_notifies
