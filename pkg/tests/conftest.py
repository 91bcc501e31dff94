import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from icsmon import topogen  # noqa: E402
from icsmon.model import Kind, TopologyBuilder  # noqa: E402

MBPS = 10**6


@pytest.fixture(scope="session")
def cesnet():
    return topogen.generate_instance(topogen.load_backbone("cesnet"), 0.7)


@pytest.fixture
def line():
    """h0 - a - b - h1, with the IDS hanging off b. Capacities 10 Mbps."""
    b = TopologyBuilder()
    h0 = b.add(Kind.DEVICE, "h0")
    sa = b.add(Kind.SWITCH, "a")
    sb = b.add(Kind.SWITCH, "b")
    h1 = b.add(Kind.DEVICE, "h1")
    d = b.add(Kind.DEVICE, "ids")
    b.link(h0, sa, 10 * MBPS)
    b.link(sa, sb, 10 * MBPS)
    b.link(sb, h1, 10 * MBPS)
    b.link(sb, d, 10 * MBPS)
    return b.topology(ids=d, name="line")
