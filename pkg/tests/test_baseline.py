import pytest

from buffetfs.baseline import BaselineClient, BaselineMode
from buffetfs.errors import BuffetError, ErrorCode
from buffetfs.types import AccessKind, Credentials, OpenFlags

CRED = Credentials(uid=1000, gid=100)
RD = OpenFlags(AccessKind.RDONLY)
WR = OpenFlags(AccessKind.WRONLY)


@pytest.fixture
def seeded(world):
    world.server.seed_entry("/d0", 0o755, is_dir=True, uid=1000, gid=100)
    world.server.seed_entry("/d0/small", 0o644, data=b"s" * 100, uid=1000, gid=100)
    world.server.seed_entry("/d0/big", 0o644, data=b"b" * 5000, uid=1000, gid=100)
    return world


def baseline(world, mode=BaselineMode.NORMAL, dom_threshold=4096):
    return BaselineClient(
        client_id=50,
        cluster=world.cluster,
        home=(1, 1),
        transport=world.net,
        mode=mode,
        dom_threshold=dom_threshold,
    )


class TestNormalMode:
    def test_open_read_close_is_two_sync_one_async(self, seeded):
        client = baseline(seeded)
        fd = client.open("/d0/small", RD, CRED)
        assert client.read(fd, 100) == b"s" * 100
        client.close(fd)
        counters = seeded.net.snapshot_counters()
        assert counters.sync_rpcs == 2
        assert counters.async_msgs == 1
        assert counters.per_type == {"BaselineOpenRequest": 1, "ReadRequest": 1}

    def test_open_plus_k_ops_is_k_plus_one_sync(self, seeded):
        client = baseline(seeded)
        fd = client.open("/d0/big", RD, CRED)
        for _ in range(5):
            client.read(fd, 1000)
        client.close(fd)
        assert seeded.net.snapshot_counters().sync_rpcs == 6

    def test_every_open_pays_even_when_repeated(self, seeded):
        client = baseline(seeded)
        for _ in range(3):
            fd = client.open("/d0/small", RD, CRED)
            client.close(fd)
        counters = seeded.net.snapshot_counters()
        assert counters.per_type == {"BaselineOpenRequest": 3}

    def test_errors_surface(self, seeded):
        client = baseline(seeded)
        with pytest.raises(BuffetError) as exc:
            client.open("/d0/missing", RD, CRED)
        assert exc.value.code == ErrorCode.NOT_FOUND
        with pytest.raises(BuffetError) as exc:
            client.open("/d0/small", WR, Credentials(9, 9))
        assert exc.value.code == ErrorCode.ACCESS_DENIED


class TestDomMode:
    def test_small_read_is_one_sync_one_async(self, seeded):
        client = baseline(seeded, mode=BaselineMode.DOM)
        fd = client.open("/d0/small", RD, CRED)
        assert client.read(fd, 100) == b"s" * 100
        client.close(fd)
        counters = seeded.net.snapshot_counters()
        assert counters.sync_rpcs == 1
        assert counters.async_msgs == 1
        assert counters.per_type == {"BaselineOpenRequest": 1}

    def test_inline_respects_offset(self, seeded):
        client = baseline(seeded, mode=BaselineMode.DOM)
        fd = client.open("/d0/small", RD, CRED)
        client.seek(fd, 98)
        assert client.read(fd, 10) == b"ss"

    def test_large_file_falls_back_to_read_rpc(self, seeded):
        client = baseline(seeded, mode=BaselineMode.DOM)
        fd = client.open("/d0/big", RD, CRED)
        assert client.read(fd, 5000) == b"b" * 5000
        counters = seeded.net.snapshot_counters()
        assert counters.per_type == {"BaselineOpenRequest": 1, "ReadRequest": 1}

    def test_write_always_pays_an_rpc(self, seeded):
        client = baseline(seeded, mode=BaselineMode.DOM)
        fd = client.open("/d0/small", OpenFlags(AccessKind.RDWR), CRED)
        client.write(fd, b"X")
        client.close(fd)
        counters = seeded.net.snapshot_counters()
        assert counters.sync_rpcs == 2
        assert counters.async_msgs == 1
        assert counters.per_type == {"BaselineOpenRequest": 1, "WriteRequest": 1}

    def test_write_invalidates_inline_copy(self, seeded):
        client = baseline(seeded, mode=BaselineMode.DOM)
        fd = client.open("/d0/small", OpenFlags(AccessKind.RDWR), CRED)
        client.write(fd, b"XY")
        client.seek(fd, 0)
        assert client.read(fd, 4) == b"XYss"  # served by the server, not the stale inline


class TestHandles:
    def test_double_close_is_bad_handle(self, seeded):
        client = baseline(seeded)
        fd = client.open("/d0/small", RD, CRED)
        client.close(fd)
        with pytest.raises(BuffetError) as exc:
            client.close(fd)
        assert exc.value.code == ErrorCode.BAD_HANDLE

    def test_close_frees_server_record(self, seeded):
        client = baseline(seeded)
        fd = client.open("/d0/small", RD, CRED)
        client.close(fd)
        seeded.net.drain()
        assert seeded.server.opened == {}
