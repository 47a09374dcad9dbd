"""Space-time lattice geometry.

Sites live on Z^d (d = 1 or 2 throughout this package), space-time points are
``(u, i)`` with ``u`` a spatial tuple and ``i >= 0`` an integer time index.
A *window sequence* is a nested family B_0 c= B_1 c= ... of finite space-time
sets with B_0 = {(0, 0)}; stopping rules read field values on windows centred
at a site, and the transport engine walks window points in a fixed canonical
order.

Canonical order: points are ranked by the first window index that contains
them (their *layer*), ties broken by time coordinate, then lexicographically
by spatial coordinates.  Within that rule the enumeration of B_infinity is a
bijection with the naturals, and ``successor`` steps through it.
"""

from __future__ import annotations

from typing import Iterator, List, Sequence, Tuple

Spatial = Tuple[int, ...]
Point = Tuple[Spatial, int]


def l1_norm(u: Sequence[int]) -> int:
    return sum(abs(c) for c in u)


def l1_ball(d: int, radius: int) -> List[Spatial]:
    """All u in Z^d with ||u||_1 <= radius, lexicographic order."""
    if radius < 0:
        return []
    if d == 1:
        return [(x,) for x in range(-radius, radius + 1)]
    if d == 2:
        out = []
        for x in range(-radius, radius + 1):
            r = radius - abs(x)
            for y in range(-r, r + 1):
                out.append((x, y))
        return out
    raise ValueError(f"unsupported dimension {d}")


def origin(d: int) -> Spatial:
    return (0,) * d


class WindowError(ValueError):
    pass


class WindowSequence:
    """A nested window family with a canonical point enumeration.

    Parameters are normally supplied through the constructors ``cone``,
    ``simple_window``, ``cube`` and ``custom`` below.
    """

    def __init__(self, d: int, kind: str, delta: int = 0,
                 layers: Sequence[Sequence[Point]] | None = None):
        if d not in (1, 2):
            raise WindowError(f"unsupported dimension {d}")
        self.d = d
        self.kind = kind
        self.delta = delta
        self._layers = None
        if kind == "custom":
            if not layers:
                raise WindowError("custom window needs at least one layer")
            self._layers = [self._normalize_layer(n, layer)
                            for n, layer in enumerate(layers)]
            first = self._layers[0]
            if first != [(origin(d), 0)]:
                raise WindowError("layer 0 must be exactly {(origin, 0)}")
            self._check_disjoint()
        elif kind in ("cone", "cube"):
            if delta < 1:
                raise WindowError("cone/cube windows need delta >= 1")
        elif kind != "simple":
            raise WindowError(f"unknown window kind {kind!r}")

    # -- construction helpers

    def _normalize_layer(self, n: int, layer: Sequence[Point]) -> List[Point]:
        pts = []
        for u, i in layer:
            u = tuple(int(c) for c in u)
            if len(u) != self.d:
                raise WindowError(f"point {u} has wrong dimension")
            if i < 0:
                raise WindowError("time coordinates must be >= 0")
            pts.append((u, int(i)))
        pts.sort(key=lambda p: (p[1], p[0]))
        return pts

    def _check_disjoint(self) -> None:
        seen = set()
        for layer in self._layers:
            for pt in layer:
                if pt in seen:
                    raise WindowError(f"point {pt} appears in two layers")
                seen.add(pt)

    # -- the window family

    def max_index(self) -> int | None:
        """Largest usable window index (None when unbounded)."""
        if self._layers is not None:
            return len(self._layers) - 1
        return None

    def _require(self, n: int) -> None:
        if n < 0:
            raise WindowError("window index must be >= 0")
        top = self.max_index()
        if top is not None and n > top:
            raise WindowError(
                f"custom window defines layers up to {top}, asked for {n}")

    def layer(self, n: int) -> List[Point]:
        """Points whose first containing window is B_n, canonical order."""
        self._require(n)
        if self._layers is not None:
            return list(self._layers[n])
        if self.kind == "simple":
            return [(origin(self.d), n)]
        if self.kind == "cone":
            return [(u, n) for u in l1_ball(self.d, self.delta * n)]
        # cube: the i = n slice plus the widened shell at earlier times
        pts = []
        lo = self.delta * (n - 1)
        for i in range(n):
            for u in l1_ball(self.d, self.delta * n):
                if l1_norm(u) > lo:
                    pts.append((u, i))
        pts.extend((u, n) for u in l1_ball(self.d, self.delta * n))
        pts.sort(key=lambda p: (p[1], p[0]))
        return pts

    def ball(self, n: int) -> List[Point]:
        """All points of B_n in canonical order."""
        self._require(n)
        out: List[Point] = []
        for m in range(n + 1):
            out.extend(self.layer(m))
        return out

    def size(self, n: int) -> int:
        return sum(len(self.layer(m)) for m in range(n + 1))

    def min_index(self, pt: Point) -> int | None:
        """Least n with pt in B_n, or None if pt is never covered."""
        u, i = pt
        if len(u) != self.d or i < 0:
            return None
        if self._layers is not None:
            for n, layer in enumerate(self._layers):
                if (tuple(u), i) in layer:
                    return n
            return None
        r = l1_norm(u)
        if self.kind == "simple":
            return i if r == 0 else None
        if self.kind == "cone":
            return i if r <= self.delta * i else None
        # cube
        n = max(i, -(-r // self.delta))  # ceil(r / delta)
        return n

    def contains(self, pt: Point, n: int) -> bool:
        m = self.min_index(pt)
        return m is not None and m <= n

    def successor(self, pt: Point) -> Point:
        """The next point after pt in the canonical enumeration."""
        n = self.min_index(pt)
        if n is None:
            raise WindowError(f"{pt} is not in the window family")
        layer = self.layer(n)
        k = layer.index((tuple(pt[0]), pt[1]))
        if k + 1 < len(layer):
            return layer[k + 1]
        nxt = self.layer(n + 1)
        if not nxt:
            raise WindowError(f"layer {n + 1} is empty")
        return nxt[0]

    def points(self) -> Iterator[Point]:
        """Canonical enumeration of B_infinity (or of all custom layers)."""
        n = 0
        while True:
            try:
                self._require(n)
            except WindowError:
                return
            yield from self.layer(n)
            n += 1

    def slope(self) -> int:
        """Smallest D with B_n inside the l1-ball of radius D*n for all n.

        For custom windows this is measured over the given layers.
        """
        if self.kind == "simple":
            return 0
        if self.kind in ("cone", "cube"):
            return self.delta
        best = 0
        for n, layer in enumerate(self._layers):
            for u, _ in layer:
                r = l1_norm(u)
                if r > 0:
                    best = max(best, -(-r // max(n, 1)))
        return best

    def __repr__(self) -> str:
        if self.kind == "custom":
            return f"WindowSequence(custom, d={self.d}, layers={len(self._layers)})"
        return f"WindowSequence({self.kind}, d={self.d}, delta={self.delta})"


def cone(d: int, delta: int) -> WindowSequence:
    """B_n = all (u, i) with 0 <= i <= n and ||u||_1 <= delta * i."""
    return WindowSequence(d, "cone", delta)


def simple_window(d: int) -> WindowSequence:
    """B_n = the time column {origin} x {0..n}."""
    return WindowSequence(d, "simple")


def cube(d: int, delta: int) -> WindowSequence:
    """B_n = the full box (l1 radius delta*n) x {0..n}."""
    return WindowSequence(d, "cube", delta)


def custom(d: int, layers: Sequence[Sequence[Point]]) -> WindowSequence:
    return WindowSequence(d, "custom", layers=layers)
