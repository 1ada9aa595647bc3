"""Triangulated quotient-surface meshes with antipodal seam welding.

The fundamental domain of I(z) = -1/conj(z) is the annulus 1 <= |z| <= rho_max
with the identification z ~ -z on the unit circle (I restricted to |z| = 1 is
the antipodal map).  A structured polar grid is triangulated, the seam
vertices at angles theta and theta + pi are merged (their images agree for an
I-invariant immersion), and the result is a Moebius-strip mesh: chi = 0,
edge-manifold, non-orientable.  Exports are deterministic ASCII OBJ/PLY.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "Region",
    "fundamental_domain",
    "QuotientMesh",
    "triangulate_and_weld",
    "export_obj",
    "export_ply",
]


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    """Annular fundamental domain spec with antipodal seam on |z| = 1."""

    rho_max: float
    punctures: tuple = ()  # (center, hole_radius) pairs inside the region
    seam_map: str = "z -> -z on |z| = 1"

    def contains_orbit_representative(self, z) -> np.ndarray:
        """Exactly one of {z, I(z)} lies here for 1 < |I-orbit| < rho_max."""
        z = np.asarray(z, dtype=complex)
        return (np.abs(z) >= 1.0) & (np.abs(z) <= self.rho_max)


def fundamental_domain(domain, rho_max: float) -> Region:
    """Region {1 <= |z| <= rho_max} with z ~ -z on the unit circle.

    Punctures of the domain falling inside the region become holes with the
    loop exclusion radius.
    """
    if rho_max <= 1.0:
        raise MeshError("rho_max must exceed 1")
    holes = []
    for q in np.asarray(getattr(domain, "punctures", ()), dtype=complex):
        if 1.0 < abs(q) < rho_max:
            holes.append((complex(q), 0.25 * abs(abs(q) - 1.0)))
    return Region(rho_max=float(rho_max), punctures=tuple(holes))


@dataclass
class QuotientMesh:
    vertices_domain: np.ndarray  # (V,) complex
    vertices_image: np.ndarray  # (V, n) float
    triangles: np.ndarray  # (F, 3) int
    seam_pairs: list  # identified (i_original, j_original) grid pairs
    projection: tuple | None  # coordinate choice used for n > 3
    n: int

    @property
    def positions(self) -> np.ndarray:
        """3D positions (projected when n > 3)."""
        if self.n == 3:
            return self.vertices_image
        return self.vertices_image[:, list(self.projection)]

    def edges(self) -> dict:
        """Undirected edge -> list of incident triangle indices."""
        out: dict = {}
        for t, (a, b, c) in enumerate(self.triangles):
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                out.setdefault(key, []).append(t)
        return out

    def is_edge_manifold(self) -> bool:
        return all(len(ts) <= 2 for ts in self.edges().values())

    def euler_characteristic(self) -> int:
        V = len(self.vertices_domain)
        E = len(self.edges())
        F = len(self.triangles)
        return V - E + F

    def is_orientable(self, skip_edges=()) -> bool:
        """Propagate orientation parity across the dual graph; a parity
        conflict on any non-tree edge means non-orientable."""
        edges = self.edges()
        skip = {(min(e), max(e)) for e in skip_edges}
        adj: dict = {}
        directed: dict = {}
        for t, (a, b, c) in enumerate(self.triangles):
            for e in ((a, b), (b, c), (c, a)):
                directed.setdefault(t, set()).add(e)
        for key, ts in edges.items():
            if len(ts) == 2 and key not in skip:
                adj.setdefault(ts[0], []).append((ts[1], key))
                adj.setdefault(ts[1], []).append((ts[0], key))
        sign = {}
        for start in range(len(self.triangles)):
            if start in sign:
                continue
            sign[start] = 1
            stack = [start]
            while stack:
                t = stack.pop()
                for t2, key in adj.get(t, ()):
                    # consistent orientation: the shared edge is traversed in
                    # opposite directions by the two triangles (when signs equal)
                    a, b = key
                    fwd_t = (a, b) in directed[t]
                    fwd_t2 = (a, b) in directed[t2]
                    rel = 1 if fwd_t != fwd_t2 else -1
                    want = sign[t] * rel
                    if t2 not in sign:
                        sign[t2] = want
                        stack.append(t2)
                    elif sign[t2] != want:
                        return False
        return True

    def seam_edge_keys(self) -> set:
        welded = {min(i, j) for i, j in self.seam_pairs}
        keys = set()
        for key in self.edges():
            if key[0] in welded and key[1] in welded:
                keys.add(key)
        return keys


def triangulate_and_weld(
    region: Region,
    X,
    n_rho: int,
    n_theta: int,
    projection: tuple | None = None,
    seam_tol: float = 1e-8,
    grading: float = 1.5,
) -> QuotientMesh:
    """Structured polar triangulation of the region with seam welding.

    Radial spacing is graded finer near the seam (power-law ``grading``).
    Seam vertices at theta and theta + pi on |z| = 1 merge after verifying
    that the immersion values agree; disagreement signals non-invariant data
    and raises.  Grid cells inside puncture holes are dropped.
    """
    if n_rho < 8 or n_theta < 8:
        raise MeshError("resolution must be at least 8x8")
    if n_theta % 2:
        raise MeshError("n_theta must be even (antipodal seam)")
    u = np.linspace(0.0, 1.0, n_rho) ** grading
    rho = 1.0 + (region.rho_max - 1.0) * u
    theta = np.arange(n_theta) * (2.0 * np.pi / n_theta)
    Z = rho[:, None] * np.exp(1j * theta[None, :])

    vals = X.eval_points(Z.ravel())
    n = vals.shape[1]
    vals = vals.reshape(n_rho, n_theta, n)

    half = n_theta // 2
    scale = max(1.0, float(np.max(np.abs(vals))))
    seam_gap = np.linalg.norm(vals[0] - np.roll(vals[0], -half, axis=0), axis=1)
    worst = float(np.max(seam_gap))
    if worst > seam_tol * scale:
        raise MeshError(
            f"seam weld rejected: max ||X(z) - X(-z)|| = {worst:.3e} on |z|=1 "
            "(immersion is not I-invariant)"
        )

    # vertex ids: seam ring keeps only theta in [0, pi)
    ids = -np.ones((n_rho, n_theta), dtype=int)
    seam_pairs = []
    counter = 0
    for j in range(n_theta):
        if j < half:
            ids[0, j] = counter
            counter += 1
        else:
            ids[0, j] = ids[0, j - half]
            seam_pairs.append((j - half, j))
    for i in range(1, n_rho):
        for j in range(n_theta):
            ids[i, j] = counter
            counter += 1

    verts_domain = np.empty(counter, dtype=complex)
    verts_image = np.empty((counter, n), dtype=float)
    for i in range(n_rho):
        for j in range(n_theta):
            verts_domain[ids[i, j]] = Z[i, j]
            verts_image[ids[i, j]] = vals[i, j]

    def in_hole(z):
        return any(abs(z - c) < r for c, r in region.punctures)

    tris = []
    for i in range(n_rho - 1):
        for j in range(n_theta):
            j2 = (j + 1) % n_theta
            corners = (Z[i, j], Z[i, j2], Z[i + 1, j], Z[i + 1, j2])
            if any(in_hole(z) for z in corners):
                continue
            a, b = ids[i, j], ids[i, j2]
            c, d = ids[i + 1, j], ids[i + 1, j2]
            tris.append((a, b, d))
            tris.append((a, d, c))
    if not tris:
        raise MeshError("triangulation is empty")

    proj = projection
    if n > 3 and proj is None:
        proj = tuple(range(1, n))  # drop the first coordinate (figure convention)
    if n > 3 and len(proj) != 3:
        raise MeshError("projection must pick exactly 3 coordinates")

    return QuotientMesh(
        vertices_domain=verts_domain,
        vertices_image=verts_image,
        triangles=np.asarray(tris, dtype=int),
        seam_pairs=seam_pairs,
        projection=proj,
        n=n,
    )


def export_obj(mesh: QuotientMesh, path) -> None:
    """ASCII OBJ: 'v x y z' with 9 significant digits, 1-based faces.
    Byte-stable for identical meshes."""
    if len(mesh.triangles) == 0:
        raise MeshError("refusing to export an empty mesh")
    lines = ["o quotient_surface"]
    for p in mesh.positions:
        lines.append("v " + " ".join(f"{c:.9g}" for c in p))
    for a, b, c in mesh.triangles:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    _write_text(path, "\n".join(lines) + "\n")


def export_ply(mesh: QuotientMesh, path) -> None:
    """ASCII PLY with vertex/face elements; deterministic output."""
    if len(mesh.triangles) == 0:
        raise MeshError("refusing to export an empty mesh")
    pos = mesh.positions
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pos)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for p in pos:
        lines.append(" ".join(f"{c:.9g}" for c in p))
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise MeshError(f"cannot write mesh to {path}: {exc}") from exc
