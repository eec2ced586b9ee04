"""Hypothesis strategies shared across the property tests."""
import hypothesis.strategies as st

from formctl.graph import build_graph


@st.composite
def comm_graphs(draw, max_followers=7):
    """Connected follower graphs with at least one leader link."""
    n = draw(st.integers(1, max_followers))
    edges = set()
    for i in range(2, n + 1):  # random spanning tree keeps it connected
        j = draw(st.integers(1, i - 1))
        edges.add((j, i))
    for _ in range(draw(st.integers(0, 4))):
        a = draw(st.integers(1, n))
        b = draw(st.integers(1, n))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    links = [draw(st.integers(0, 1)) for _ in range(n)]
    if not any(links):
        links[draw(st.integers(0, n - 1))] = 1
    return build_graph(n, sorted(edges), links)


finite_vectors = lambda n, scale=10.0: st.lists(
    st.floats(-scale, scale, allow_nan=False, allow_infinity=False, width=64),
    min_size=n,
    max_size=n,
)
