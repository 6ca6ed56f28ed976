"""Shared fixtures and independent reference implementations.

The reference functions here are deliberately written from scratch (plain
loops, no shortcuts through the package internals) so that test expectations
do not inherit bugs from the code under test.
"""

import io
import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image

from jigsawlab.compat import compatibility_table
from jigsawlab.masks import BinaryMask
from jigsawlab.puzzlegen import (
    FRAME,
    GridSpec,
    Piece,
    gradient_image,
    make_puzzle,
    shuffle,
    square_mask_provider,
)
from jigsawlab.raster import RasterImage


def gradient_puzzle(seed, k=3, inset=0):
    """Shuffled synthetic-gradient puzzle, the standard solver fixture."""
    rng = np.random.default_rng(seed)
    grid = GridSpec.default(k)
    img = gradient_image(grid.canvas, rng)
    puz = shuffle(make_puzzle(img, grid, square_mask_provider(inset), rng), rng)
    return puz, grid


def gradient_table(seed, k=3):
    puz, grid = gradient_puzzle(seed, k)
    return puz, grid, compatibility_table(puz.pieces)


def solid_piece(piece_id, color, side=FRAME):
    """Fully opaque square piece of one uniform RGB color."""
    rgba = np.zeros((side, side, 4), dtype=np.uint8)
    rgba[:, :, :3] = np.asarray(color, dtype=np.uint8)
    rgba[:, :, 3] = 255
    mask = BinaryMask(np.ones((side, side), dtype=bool))
    return Piece(piece_id=piece_id, image=RasterImage(rgba), mask=mask)


def reference_edge_cost(side_a, side_b, p=0.3, q=0.0625):
    """Seam cost between two aligned Lab sequences, plain-Python.

    side_a and side_b are equal-length lists of (L, a, b) triples already in
    matching order along the seam. Endpoint indices clamp.
    """
    n = len(side_a)
    if len(side_b) != n:
        raise ValueError("sides must be aligned")
    total = 0.0
    for k in range(n):
        km = max(k - 1, 0)
        kp = min(k + 1, n - 1)
        ta = sum(
            abs(2.0 * side_a[k][c] - side_a[km][c] - side_b[k][c]) for c in range(3)
        )
        tb = sum(
            abs(2.0 * side_b[k][c] - side_b[kp][c] - side_a[k][c]) for c in range(3)
        )
        total += (ta**p + tb**p) ** (q / p)
    return total


def reference_cross_entropy(logits_row, target_index):
    """Softmax cross-entropy of one row, via explicit log-sum-exp."""
    m = max(logits_row)
    lse = m + math.log(sum(math.exp(v - m) for v in logits_row))
    return lse - logits_row[target_index]


def jacobi_eigenvalues(matrix, sweeps=100, tol=1e-14):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Independent of LAPACK: plain 2x2 rotations until off-diagonal mass is
    negligible. Returns eigenvalues sorted descending.
    """
    a = np.array(matrix, dtype=np.float64, copy=True)
    d = a.shape[0]
    if a.shape != (d, d):
        raise ValueError("square matrix required")
    for _ in range(sweeps):
        off = 0.0
        for i in range(d):
            for j in range(i + 1, d):
                off += a[i, j] * a[i, j]
        if off < tol:
            break
        for i in range(d):
            for j in range(i + 1, d):
                if abs(a[i, j]) < 1e-300:
                    continue
                theta = 0.5 * math.atan2(2.0 * a[i, j], a[j, j] - a[i, i])
                c, s = math.cos(theta), math.sin(theta)
                rot = np.eye(d)
                rot[i, i] = c
                rot[j, j] = c
                rot[i, j] = s
                rot[j, i] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


def disk_structure(radius):
    """Boolean disk of the given radius, for morphology cross-checks."""
    span = np.arange(-radius, radius + 1)
    return (span[:, None] ** 2 + span[None, :] ** 2) <= radius * radius


def tiny_png():
    buf = io.BytesIO()
    Image.fromarray(np.full((4, 4, 3), 200, dtype=np.uint8), mode="RGB").save(
        buf, format="PNG"
    )
    return buf.getvalue()


class _StubHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_GET(self):
        entry = self.server.routes.get(self.path)
        if callable(entry):
            entry = entry()
        if entry is None:
            entry = (404, "text/plain", b"not found")
        status, ctype, body = entry
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class MetStub:
    """Local stand-in for the collection API, route table per test."""

    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self.server.routes = {}
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        self.base = f"http://127.0.0.1:{self.server.server_address[1]}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()

    def set_listing(self, ids):
        body = json.dumps({"total": len(ids), "objectIDs": ids}).encode()
        self.server.routes["/public/collection/v1/objects"] = (
            200,
            "application/json",
            body,
        )

    def add_object(self, oid, title="Landscape", public=True, image=True):
        doc = {
            "objectID": oid,
            "title": title,
            "isPublicDomain": public,
            "primaryImage": f"{self.base}/images/{oid}.png" if image else "",
            "artistDisplayName": f"artist {oid}",
            "objectDate": "1850",
            "department": "Paintings",
            "culture": "testware",
            "medium": "oil",
            "dimensions": "1 x 1",
        }
        self.server.routes[f"/public/collection/v1/objects/{oid}"] = (
            200,
            "application/json",
            json.dumps(doc).encode(),
        )
        if image:
            self.server.routes[f"/images/{oid}.png"] = (200, "image/png", tiny_png())
