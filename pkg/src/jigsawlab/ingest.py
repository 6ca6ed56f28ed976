"""Museum open-access client: filtered metadata retrieval and image collection."""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from urllib.parse import urlparse

import requests

DEFAULT_BASE_URL = "https://collectionapi.metmuseum.org"
BASE_URL_ENV = "GAP_MET_BASE_URL"
DEFAULT_TIMEOUT = 30.0
BACKOFF_BASE = 0.5


class TransportError(RuntimeError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class SchemaError(ValueError):
    pass


class EmptyCorpusError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetObjectRecord:
    object_id: int
    title: str
    is_public_domain: bool
    primary_image_url: str
    artist: str = ""
    date: str = ""
    department: str = ""
    culture: str = ""
    medium: str = ""
    dimensions: str = ""

    def __post_init__(self):
        if self.object_id <= 0:
            raise ValueError("object_id must be positive")


def accepts(record: MetObjectRecord) -> bool:
    """Collection filter: public domain, not a catalogued fragment, has an image."""
    return (
        record.is_public_domain
        and "fragment" not in record.title.lower()
        and bool(record.primary_image_url)
    )


def base_url(override: str | None = None) -> str:
    return override or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL


def _with_retries(fn, retries: int, sleep=time.sleep):
    """Run fn; on failure retry up to `retries` extra times with doubling delay."""
    delay = BACKOFF_BASE
    for attempt in range(retries + 1):
        try:
            return fn()
        except (TransportError, requests.RequestException):
            if attempt == retries:
                raise
            sleep(delay)
            delay *= 2


def fetch_object(
    object_id: int,
    base: str | None = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> MetObjectRecord:
    """Single metadata record from /public/collection/v1/objects/{id}."""
    if object_id < 1:
        raise ValueError("object_id must be >= 1")
    url = f"{base_url(base)}/public/collection/v1/objects/{object_id}"
    resp = requests.get(url, timeout=timeout)
    if resp.status_code != 200:
        raise TransportError(
            f"GET {url} returned {resp.status_code}", status=resp.status_code
        )
    try:
        doc = resp.json()
    except ValueError as exc:
        raise SchemaError(f"non-JSON response for object {object_id}") from exc
    if not isinstance(doc, dict) or "objectID" not in doc:
        raise SchemaError(f"response for object {object_id} lacks objectID")
    return MetObjectRecord(
        object_id=int(doc["objectID"]),
        title=str(doc.get("title") or ""),
        is_public_domain=bool(doc.get("isPublicDomain", False)),
        primary_image_url=str(doc.get("primaryImage") or ""),
        artist=str(doc.get("artistDisplayName") or ""),
        date=str(doc.get("objectDate") or ""),
        department=str(doc.get("department") or ""),
        culture=str(doc.get("culture") or ""),
        medium=str(doc.get("medium") or ""),
        dimensions=str(doc.get("dimensions") or ""),
    )


def list_object_ids(base: str | None = None, timeout: float = DEFAULT_TIMEOUT) -> list[int]:
    """All object ids exposed by /public/collection/v1/objects."""
    url = f"{base_url(base)}/public/collection/v1/objects"
    resp = requests.get(url, timeout=timeout)
    if resp.status_code != 200:
        raise TransportError(
            f"GET {url} returned {resp.status_code}", status=resp.status_code
        )
    doc = resp.json()
    ids = doc.get("objectIDs")
    if ids is None:
        raise SchemaError("objects listing lacks objectIDs")
    return [int(i) for i in ids]


def _download(url: str, timeout: float) -> bytes:
    resp = requests.get(url, timeout=timeout)
    if resp.status_code != 200:
        raise TransportError(
            f"GET {url} returned {resp.status_code}", status=resp.status_code
        )
    return resp.content


def _image_filename(record: MetObjectRecord) -> str:
    ext = os.path.splitext(urlparse(record.primary_image_url).path)[1] or ".jpg"
    return f"{record.object_id}{ext}"


CSV_COLUMNS = (
    "object_id",
    "title",
    "artist",
    "date",
    "department",
    "culture",
    "medium",
    "dimensions",
)


@dataclass(frozen=True, eq=False)
class CorpusManifest:
    records: tuple[MetObjectRecord, ...]  # sorted by object_id
    image_dir: str
    csv_path: str
    image_files: tuple[str, ...]


def collect(
    ids: list[int],
    n_target: int,
    out_dir: str,
    workers: int = 20,
    retries: int = 3,
    base: str | None = None,
    timeout: float = DEFAULT_TIMEOUT,
    sleep=time.sleep,
) -> CorpusManifest:
    """Download images for accepted records until n_target is reached.

    Deterministic given the server's responses: metadata is fetched in
    parallel but acceptance is evaluated in input order, and downloads run in
    waves sized to the remaining need, so a failed download promotes the next
    accepted candidate rather than reshuffling. Output files and CSV rows are
    sorted by object_id.
    """
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    resolved = base_url(base)

    def meta_task(oid: int):
        try:
            return _with_retries(
                lambda: fetch_object(oid, resolved, timeout), retries, sleep
            )
        except (TransportError, SchemaError, requests.RequestException):
            return None

    with ThreadPoolExecutor(max_workers=workers) as pool:
        fetched = list(pool.map(meta_task, ids))
    accepted = [r for r in fetched if r is not None and accepts(r)]
    if not accepted:
        raise EmptyCorpusError("no object passed the collection filter")

    os.makedirs(out_dir, exist_ok=True)
    stored: list[tuple[MetObjectRecord, str, bytes]] = []
    cursor = 0
    while len(stored) < n_target and cursor < len(accepted):
        wave = accepted[cursor : cursor + (n_target - len(stored))]
        cursor += len(wave)

        def img_task(rec: MetObjectRecord):
            try:
                data = _with_retries(
                    lambda: _download(rec.primary_image_url, timeout), retries, sleep
                )
                return rec, data
            except (TransportError, requests.RequestException):
                return None

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(img_task, wave))
        for item in results:
            if item is None:
                continue
            rec, data = item
            stored.append((rec, _image_filename(rec), data))

    if not stored:
        raise EmptyCorpusError("every accepted download failed")
    stored.sort(key=lambda item: item[0].object_id)

    files = []
    for rec, fname, data in stored:
        path = os.path.join(out_dir, fname)
        with open(path, "wb") as fh:
            fh.write(data)
        files.append(fname)
    csv_path = os.path.join(out_dir, "metadata.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec, _, _ in stored:
            writer.writerow(
                [
                    rec.object_id,
                    rec.title,
                    rec.artist,
                    rec.date,
                    rec.department,
                    rec.culture,
                    rec.medium,
                    rec.dimensions,
                ]
            )
    return CorpusManifest(
        records=tuple(rec for rec, _, _ in stored),
        image_dir=out_dir,
        csv_path=csv_path,
        image_files=tuple(files),
    )
