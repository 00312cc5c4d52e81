"""Session graphs: one directed graph per session prefix.

A prefix [v1 .. vn] becomes a graph whose nodes are the distinct items in
first-occurrence order and whose edges are the consecutive-click pairs
(v_{t-1} -> v_t), kept with multiplicity; an immediate repeat produces a
self-loop.  Two q x q weight matrices summarize the edges:

* ``m_out[i][j]`` = count(i -> j) / total outgoing occurrences of i
* ``m_in[i][j]``  = count(j -> i) / total incoming occurrences of i

so each row sums to 1 where the node has any outgoing (resp. incoming)
edge and is all zeros otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SessionGraph:
    nodes: list[int]        # distinct items, first-occurrence order
    alias: np.ndarray       # session position -> node position, length n
    m_in: np.ndarray        # q x q incoming weights
    m_out: np.ndarray       # q x q outgoing weights

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)


def build_session_graph(prefix) -> SessionGraph:
    """Build the directed graph of one session prefix.

    Raises ValueError on an empty prefix.
    """
    if len(prefix) == 0:
        raise ValueError("cannot build a session graph from an empty prefix")
    node_of: dict[int, int] = {}
    nodes: list[int] = []
    alias = np.empty(len(prefix), dtype=np.int64)
    for t, item in enumerate(prefix):
        item = int(item)
        if item not in node_of:
            node_of[item] = len(nodes)
            nodes.append(item)
        alias[t] = node_of[item]

    q = len(nodes)
    counts = np.zeros((q, q))
    for t in range(1, len(prefix)):
        counts[alias[t - 1], alias[t]] += 1.0

    out_deg = counts.sum(axis=1, keepdims=True)   # outgoing occurrences per start node
    in_deg = counts.sum(axis=0, keepdims=True)    # incoming occurrences per end node
    with np.errstate(invalid="ignore"):
        m_out = np.where(out_deg > 0, counts / np.where(out_deg > 0, out_deg, 1.0), 0.0)
        m_in = np.where(in_deg.T > 0, counts.T / np.where(in_deg.T > 0, in_deg.T, 1.0), 0.0)
    return SessionGraph(nodes=nodes, alias=alias, m_in=m_in, m_out=m_out)
