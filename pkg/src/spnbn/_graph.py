"""Small DAG helpers shared by the SPN transforms."""
import heapq


def parents_of(children):
    """Invert a ``{node: [child, ...]}`` adjacency map."""
    parents = {v: [] for v in children}
    for v in sorted(children):
        for c in children[v]:
            parents.setdefault(c, []).append(v)
    return parents


def find_cycle(children, start):
    """Return a back edge ``(u, v)`` reachable from *start*, or ``None``."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {}
    stack = [(start, iter(children.get(start, ())))]
    color[start] = GREY
    while stack:
        node, it = stack[-1]
        for c in it:
            state = color.get(c, WHITE)
            if state == GREY:
                return node, c
            if state == WHITE:
                color[c] = GREY
                stack.append((c, iter(children.get(c, ()))))
                break
        else:
            color[node] = BLACK
            stack.pop()
    return None


def reachable(children, root):
    seen = {root}
    stack = [root]
    while stack:
        v = stack.pop()
        for c in children.get(v, ()):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return seen


def bottom_up_order(children, nodes=None):
    """Children-before-parents ordering, smallest ready id first.

    This is an inverse topological ordering: every ancestor of ``v`` comes
    after ``v``.  Ties are broken by ascending node id so the result is
    reproducible.
    """
    if nodes is None:
        nodes = list(children)
    nodes = set(nodes)
    pending = {v: len([c for c in children.get(v, ()) if c in nodes]) for v in nodes}
    parents = {v: [] for v in nodes}
    for v in nodes:
        for c in children.get(v, ()):
            if c in nodes:
                parents[c].append(v)
    heap = [v for v, k in pending.items() if k == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for p in parents[v]:
            pending[p] -= 1
            if pending[p] == 0:
                heapq.heappush(heap, p)
    if len(order) != len(nodes):
        raise ValueError("graph has a cycle")
    return order


def top_down_order(children, root):
    """Parents-before-children ordering of the nodes reachable from *root*."""
    nodes = reachable(children, root)
    parents = {v: 0 for v in nodes}
    for v in nodes:
        for c in children.get(v, ()):
            parents[c] += 1
    heap = [v for v, k in parents.items() if k == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in children.get(v, ()):
            parents[c] -= 1
            if parents[c] == 0:
                heapq.heappush(heap, c)
    return order
