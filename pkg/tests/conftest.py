import pytest

from buffetfs.client import BuffetClient
from buffetfs.server import BServer, LogicalClock
from buffetfs.transport import LatencyModel, SimNetwork
from buffetfs.types import ClusterConfig


class World:
    """One simulated server plus cluster config, ready for clients."""

    def __init__(self, latency=None, auto_deliver=True):
        self.net = SimNetwork(latency=latency or LatencyModel(rtt_us=200.0), auto_deliver=auto_deliver)
        self.server = BServer(host_id=1, version=1, clock_ns=LogicalClock())
        self.address = "sim://s1"
        self.net.add_server(self.address, self.server)
        self.cluster = ClusterConfig()
        self.cluster.add(1, 1, self.address)

    def client(self, client_id, **kw):
        return BuffetClient(
            client_id=client_id, cluster=self.cluster, home=(1, 1), transport=self.net, **kw
        )


@pytest.fixture
def world():
    return World()
