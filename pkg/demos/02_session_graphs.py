"""
What a session looks like as a graph
====================================

A clicked sequence becomes a small directed graph: one node per distinct
item, one edge per observed transition.  The two normalized adjacency
matrices (incoming and outgoing) are what the propagation layer reads.
This script builds a few graphs and prints their pieces.
"""

import numpy as np

from casif import build_session_graph

np.set_printoptions(precision=3, suppress=True)


def show(prefix):
    g = build_session_graph(prefix)
    print(f"prefix {prefix}")
    print(f"  nodes (first-occurrence order): {g.nodes}")
    print(f"  alias (position -> node row):   {g.alias.tolist()}")
    print("  m_in:")
    print("    " + str(g.m_in).replace("\n", "\n    "))
    print("  m_out:")
    print("    " + str(g.m_out).replace("\n", "\n    "))
    print()


# The canonical revisit pattern: item 2 is clicked twice, so the graph has
# three nodes for four clicks.  Node 2 has two incoming edges (from 1 and
# from 3), so its m_in row splits mass half and half.
show([1, 2, 3, 2])

# Back-and-forth between two items.  Each node ends up with one distinct
# predecessor and one distinct successor; repeated transitions between the
# same pair count once per occurrence before normalizing, which still
# yields a single full-weight entry here.
show([1, 2, 1, 2])

# A self-loop: clicking the same item twice in a row produces an edge from
# a node to itself.
show([4, 4, 7])

# Rows normalize by the node's total degree on that side.  A node with no
# incoming edges keeps an all-zero m_in row; every other row sums to one.
g = build_session_graph([0, 1, 2, 0, 3])
print("row sums for [0, 1, 2, 0, 3]:")
print(f"  m_in:  {g.m_in.sum(axis=1)}")
print(f"  m_out: {g.m_out.sum(axis=1)}")
