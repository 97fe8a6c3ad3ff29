"""Scripted consistency scenarios shared by the unit and acceptance tests."""

import json

from buffetfs.harness import ConsistencyHarness, Step, check_linearizable, load_script
from buffetfs.wire import AdminDumpRequest

CHMOD_THEN_OPEN_SCRIPT = """
# a cached admission must not survive a completed revocation
c1 open /d/f0 r
net drain
c0 chmod /d/f0 000     # c0 owns f0
net drain
c1 open /d/f0 r        # must observe the NEW permission
"""


def run_chmod_then_open():
    """A client with a warm cache re-opens after a revoking chmod completes:
    the open must be denied, and the history must linearize."""
    harness = ConsistencyHarness(n_clients=2)
    harness.execute(load_script(CHMOD_THEN_OPEN_SCRIPT))
    harness.finish()
    opens = [op for op in harness.trace.ops if op.kind == "open"]
    chmods = [op for op in harness.trace.ops if op.kind == "chmod"]
    assert opens[0].outcome == "admit"
    assert chmods[0].outcome == "admit"
    assert opens[1].outcome == "deny", "open after completed chmod saw the old permission"
    verdict = check_linearizable(harness.trace, harness.files, harness.owners)
    assert verdict.ok, verdict.reason
    return harness


def run_ack_withheld():
    """Invalidate-before-modify: while one ack is withheld the chmod is
    unapplied and a GetDir on the parent is held; the ack releases both."""
    harness = ConsistencyHarness(n_clients=2)
    net, server = harness.net, harness.server

    def dump():
        return json.loads(net.call("sim://s1", AdminDumpRequest()).payload)

    d_fid = server.dirs[0]["d"].inode.file_id
    f0_fid = server.dirs[d_fid]["f0"].inode.file_id

    harness.run_step(0, Step("c1", "open", ("/d/f0", "r")))
    harness.run_step(1, Step("net", "drain"))
    harness.run_step(2, Step("c0", "chmod", ("/d/f0", "600")))
    # both registered clients get the invalidation push
    assert len(net.pending_pushes) == 2
    harness.run_step(3, Step("net", "deliver_push"))
    harness.run_step(4, Step("net", "deliver_push"))
    # release only client 2's ack; client 1's stays withheld
    assert len(net.pending_acks) == 2
    harness.run_step(5, Step("net", "deliver_ack", ("1",)))

    snap = dump()
    assert snap["files"][str(f0_fid)]["mode"] & 0o777 == 0o644, "chmod applied before all acks"
    assert snap["pending_rounds"] and snap["pending_rounds"][0]["waiting"] == [1]

    # a directory read during the round is held, not answered stale
    harness.run_step(6, Step("c1", "open", ("/d/f1", "r")))
    snap = dump()
    assert snap["pending_rounds"][0]["queued"] == 1
    assert snap["files"][str(f0_fid)]["mode"] & 0o777 == 0o644
    opens = [op for op in harness.trace.ops if op.kind == "open"]
    assert opens[1].outcome == "", "held GetDir was answered early"

    harness.run_step(7, Step("net", "deliver_ack"))
    harness.finish()

    snap = json.loads(server.dump_json())
    assert snap["files"][str(f0_fid)]["mode"] & 0o777 == 0o600
    assert snap["pending_rounds"] == []
    chmods = [op for op in harness.trace.ops if op.kind == "chmod"]
    assert chmods[0].outcome == "admit"
    assert opens[1].outcome == "admit"  # f1 was untouched
    verdict = check_linearizable(harness.trace, harness.files, harness.owners)
    assert verdict.ok, verdict.reason
    return harness
