"""Persistent state behind the skill gateway.

Everything lives under one state directory as JSON/JSONL plus a rooted file
sandbox, so a test can hash the directory to prove an endpoint mutated
nothing. Each store serializes its own writers; skills never need a
cross-store transaction.
"""
from __future__ import annotations

import hashlib
import json
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..memory import MemoryStore

DEFAULT_DEVICES = {
    "light": {"on": False, "color": "white"},
    "speaker": {"on": False, "color": None},
    "thermostat": {"on": True, "color": None},
}


class StoreError(ValueError):
    pass


class JsonDocStore:
    """A single JSON document on disk with a writer lock."""

    def __init__(self, path: Path, default: Any):
        self.path = path
        self._lock = threading.Lock()
        if not self.path.exists():
            self._write(default)

    def read(self) -> Any:
        with self.path.open(encoding="utf-8") as fh:
            return json.load(fh)

    def _write(self, doc: Any) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                       encoding="utf-8")
        tmp.replace(self.path)

    def update(self, fn) -> Any:
        """Apply fn(doc) -> doc under the lock and persist the result."""
        with self._lock:
            doc = self.read()
            doc = fn(doc)
            self._write(doc)
            return doc


class JsonlStore:
    """Append-only JSONL with a writer lock."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()

    def append(self, obj: dict[str, Any]) -> None:
        line = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def read_all(self) -> list[dict[str, Any]]:
        if not self.path.exists():
            return []
        return [json.loads(line) for line in self.path.read_text(encoding="utf-8").splitlines()
                if line.strip()]


@dataclass
class Product:
    id: str
    title: str
    price: float
    rating: float
    keywords: list[str]


DEFAULT_PRODUCTS = [
    {"id": "book-field-guide", "title": "The Systems Field Guide (Hardcover)",
     "price": 27.50, "rating": 4.7, "keywords": ["systems", "field", "guide", "book"]},
    {"id": "book-night-harbor", "title": "Night Harbor: A Novel",
     "price": 14.99, "rating": 4.2, "keywords": ["night", "harbor", "novel", "book"]},
    {"id": "earbuds-nc", "title": "Quietline Noise-Cancelling Earbuds",
     "price": 89.00, "rating": 4.6, "keywords": ["earbuds", "noise", "cancelling", "headphones"]},
    {"id": "grocery-eggs", "title": "Free-Range Eggs, Dozen",
     "price": 4.29, "rating": 4.8, "keywords": ["eggs", "grocery"]},
]

DEFAULT_PAGES = {
    "https://example.local/ferry-schedule": {
        "title": "Harbor Ferry Schedule",
        "text": "Ferries depart every 30 minutes from Pier 41 between 07:00 and 21:30.",
    },
    "https://example.local/weather": {
        "title": "Local Weather",
        "text": "Today: sunny, high 71F, light west wind. Tonight: clear, low 55F.",
    },
    "https://example.local/rice-cooker-manual": {
        "title": "RC-500 Rice Cooker Manual",
        "text": "If the lid sticks, hold the release latch for three seconds while "
                "lifting. Do not force the hinge.",
    },
}


class WebFixtures:
    """Canned product and page data standing in for the live web."""

    def __init__(self, fixtures_dir: Path | None):
        products = DEFAULT_PRODUCTS
        pages = DEFAULT_PAGES
        if fixtures_dir is not None:
            product_file = fixtures_dir / "products.json"
            page_file = fixtures_dir / "pages.json"
            if product_file.exists():
                products = json.loads(product_file.read_text(encoding="utf-8"))
            if page_file.exists():
                pages = json.loads(page_file.read_text(encoding="utf-8"))
        self.products = [Product(**p) for p in products]
        self.pages = pages

    def find_product(self, terms: set[str]) -> Product | None:
        """Best keyword-overlap match; ties go to the earlier fixture."""
        best: Product | None = None
        best_hits = 0
        for product in self.products:
            hits = len(terms & set(product.keywords))
            if hits > best_hits:
                best, best_hits = product, hits
        return best

    def search_pages(self, terms: set[str]) -> tuple[str, dict[str, str]] | None:
        best_url, best_hits = None, 0
        for url, page in self.pages.items():
            page_terms = set((page["title"] + " " + page["text"]).lower().split())
            hits = len(terms & page_terms)
            if hits > best_hits:
                best_url, best_hits = url, hits
        if best_url is None:
            return None
        return best_url, self.pages[best_url]


class GatewayState:
    """All gateway stores rooted in one directory."""

    def __init__(self, state_dir: str | Path, fixtures_dir: str | Path | None = None,
                 allow_net: bool = False):
        self.root = Path(state_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.allow_net = allow_net
        self.notes = JsonlStore(self.root / "notes.jsonl")
        self.calendar = JsonDocStore(self.root / "calendar.json", {"events": []})
        self.cart = JsonDocStore(self.root / "cart.json", {"items": []})
        self.devices = JsonDocStore(self.root / "devices.json", DEFAULT_DEVICES)
        self.steps = JsonlStore(self.root / "steps.jsonl")
        self.memory = MemoryStore(self.root / "memory.jsonl")
        self.files_root = self.root / "files"
        self.files_root.mkdir(exist_ok=True)
        self.web = WebFixtures(Path(fixtures_dir) if fixtures_dir else None)
        self._memory_lock = threading.Lock()

    def memory_append(self, entry) -> str:
        with self._memory_lock:
            return self.memory.append(entry)

    def sandbox_path(self, relative: str) -> Path:
        """Resolve a path inside the file sandbox; escapes are rejected."""
        candidate = (self.files_root / relative).resolve()
        root = self.files_root.resolve()
        if candidate != root and root not in candidate.parents:
            raise StoreError(f"path {relative!r} escapes the file sandbox")
        return candidate

    def dump(self, store: str) -> Any:
        if store == "notes":
            return self.notes.read_all()
        if store == "calendar":
            return self.calendar.read()
        if store == "cart":
            return self.cart.read()
        if store == "devices":
            return self.devices.read()
        if store == "memory":
            return [e.to_dict() for e in self.memory.entries]
        if store == "steps":
            return self.steps.read_all()
        raise StoreError(f"no store named {store!r}")

    def digest(self) -> str:
        """Stable hash over every persisted file (used to assert no mutation)."""
        h = hashlib.sha256()
        for path in sorted(p for p in self.root.rglob("*") if p.is_file()):
            h.update(str(path.relative_to(self.root)).encode())
            h.update(path.read_bytes())
        return h.hexdigest()


def new_record_id(prefix: str) -> str:
    return f"{prefix}-{uuid.uuid4().hex[:12]}"
