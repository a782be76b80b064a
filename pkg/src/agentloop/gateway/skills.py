"""Task parsing and the skill executors.

parse_task maps free-text tasks onto one of the eight skills with a
first-match keyword cascade; each executor then runs a fixed multi-step plan
against the gateway stores, emitting one StepRecord per step. Failures keep
whatever already mutated (real agents don't roll back half-done work) and
identify the failing step.
"""
from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Callable

from ..memory import MemoryEntry, RetrievalQuery
from ..tools import STATUS_ERROR, STATUS_OK, StepRecord
from .stores import GatewayState, StoreError, new_record_id

SKILL_NAMES = ("notes", "email_draft", "calendar", "cart", "device", "memory",
               "web_lookup", "files")

# Skills whose actions are outward-facing enough to sit behind the operator
# approval gate by default.
DEFAULT_SENSITIVE_SKILLS = ("email_draft", "cart")

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")


class SkillError(ValueError):
    pass


@dataclass
class ExecutionResult:
    status: str
    summary: str
    steps: list[StepRecord] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)


def _terms(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


_RATING_RE = re.compile(
    r"(?:rating|review(?:s| score)?|score)\b.{0,60}?"
    r"(?:above|over|exceeds?|more than|at least|better than)\s+([0-9]+(?:\.[0-9]+)?)",
    re.IGNORECASE | re.DOTALL)
_ITEM_RE = re.compile(r"\badd\s+(?:a\s+|an\s+|some\s+)?(.+?)\s+to\s+(?:my|the)\b", re.IGNORECASE)
_BUY_RE = re.compile(r"\b(?:buy|order|purchase)\s+(?:a\s+|an\s+|some\s+)?([\w' -]+)", re.IGNORECASE)
_DEVICE_STATE_RE = re.compile(r"\bturn\s+(on|off)\b", re.IGNORECASE)
_DEVICE_COLOR_RE = re.compile(
    r"\b(?:to|color)\s+(red|green|blue|white|warm|cool|purple|orange|yellow)\b", re.IGNORECASE)
_TIME_RE = re.compile(r"\b(\d{1,2})(?::(\d{2}))?\s*(am|pm)\b", re.IGNORECASE)
_EMAIL_TO_RE = re.compile(r"\bto\s+((?:the\s+)?[\w'. -]+?)(?:\s+(?:about|regarding|asking|requesting)\b|[,.]|$)",
                          re.IGNORECASE)
_FILENAME_RE = re.compile(r"(?:file|folder|document)\s+(?:named\s+|called\s+)?([\w./-]+)",
                          re.IGNORECASE)


def parse_task(task: str) -> tuple[str, dict[str, Any]]:
    """Route a task to (skill name, normalized args). First match wins."""
    if not task or not task.strip():
        raise SkillError("task must be non-empty")
    text = task.strip()
    lowered = text.lower()

    if re.search(r"\be-?mail\b|\bgmail\b|\binbox\b", lowered):
        match = _EMAIL_TO_RE.search(text)
        return "email_draft", {"to": match.group(1).strip() if match else "unspecified recipient",
                               "source_text": text}

    # "schedule" is only a calendar verb when it leads the request; "the ferry
    # schedule" is a lookup, not an event.
    if re.search(r"\bcalendar\b|\bappointment\b", lowered) \
            or re.search(r"(?:^|\b(?:please|then|and|now)\s+)schedule\b", lowered):
        weekday = next((d for d in WEEKDAYS if d in lowered), None)
        tmatch = _TIME_RE.search(lowered)
        title = text
        cut = re.search(r"\bschedule\s+(?:a\s+|an\s+|the\s+)?(.+)", text, re.IGNORECASE)
        if cut:
            title = cut.group(1)
        for day in WEEKDAYS:
            title = re.sub(rf"\b(?:on\s+)?{day}\b.*", "", title, flags=re.IGNORECASE)
        title = title.strip(" ,.") or text
        return "calendar", {"title": title, "weekday": weekday,
                            "time": tmatch.group(0) if tmatch else None, "source_text": text}

    if re.search(r"\bcart\b|\bbuy\b|\bpurchase\b|\brestock\b|\bwishlist\b", lowered) \
            or _ITEM_RE.search(lowered):
        item_match = _ITEM_RE.search(text) or _BUY_RE.search(text)
        item = item_match.group(1).strip() if item_match else text
        rating = _RATING_RE.search(text)
        args: dict[str, Any] = {"item": item, "quantity": 1, "task_text": text}
        if rating:
            args["rating_threshold"] = float(rating.group(1))
        return "cart", args

    if _DEVICE_STATE_RE.search(lowered) or re.search(
            r"\b(light|lamp|thermostat|speaker)\b", lowered):
        state_match = _DEVICE_STATE_RE.search(lowered)
        color_match = _DEVICE_COLOR_RE.search(lowered)
        target_match = re.search(r"\b(light|lamp|thermostat|speaker|fan|heater|tv)\b", lowered)
        return "device", {"target": target_match.group(1) if target_match else "light",
                          "state": state_match.group(1) if state_match else None,
                          "color": color_match.group(1) if color_match else None}

    if re.search(r"\bnote\b|\bnotes\b|\bnotion\b|\bwrite down\b|\bjot\b", lowered):
        return "notes", {"source_text": text}

    if re.search(r"\bsave\b|\bremember\b|\bmemorize\b", lowered):
        cleaned = re.sub(r"^(please\s+)?(save|remember|memorize)\s*(that\s+|this\s+)?", "",
                         text, flags=re.IGNORECASE).strip(" .")
        return "memory", {"mode": "save", "text": cleaned or text}

    if re.search(r"\b(what|when|where|who)\b.*\b(did|have)\s+i\b", lowered) \
            or re.search(r"\bwhat happened\b", lowered):
        return "memory", {"mode": "search", "query": text}

    if re.search(r"\bfile\b|\bfiles\b|\bfolder\b|\bdownload\b|\bupload\b|\borganize\b", lowered):
        name_match = _FILENAME_RE.search(text)
        download = re.search(r"\bdownload\s+([\w./-]+)", lowered)
        name = None
        if name_match:
            name = name_match.group(1)
        elif download:
            name = download.group(1)
        op = "list" if re.search(r"\blist\b|\borganize\b", lowered) else "write"
        return "files", {"op": op, "name": name, "source_text": text}

    return "web_lookup", {"query": text}


class _StepLog:
    """Collects StepRecords with wall-clock durations."""

    def __init__(self) -> None:
        self.steps: list[StepRecord] = []

    def add(self, kind: str, detail: str, body: Callable[[], Any] | None = None) -> Any:
        started = time.perf_counter()
        value = body() if body is not None else None
        elapsed = int((time.perf_counter() - started) * 1000)
        self.steps.append(StepRecord(step_kind=kind, detail=detail, duration_ms=elapsed))
        return value


def _execute_cart(args: dict[str, Any], state: GatewayState, log: _StepLog) -> ExecutionResult:
    item = args["item"]

    def lookup():
        product = state.web.find_product(_terms(item))
        if product is None:
            # Pronoun-ish items ("add it to my cart") carry no searchable
            # terms; fall back to the whole task text.
            product = state.web.find_product(_terms(args.get("task_text", "")))
        return product

    product = log.add("web_search", f"searched the catalog for {item!r}", lookup)
    if product is not None:
        log.add("browser", f"opened product page for {product.id} "
                           f"(rating {product.rating}, ${product.price})")
    else:
        log.add("browser", f"no catalog match for {item!r}; using a generic listing")

    threshold = args.get("rating_threshold")
    if threshold is not None:
        if product is None:
            return ExecutionResult(
                status=STATUS_ERROR, steps=log.steps,
                summary=f"step 2 failed: no catalog entry for {item!r}, so there is "
                        f"no rating to compare against {threshold}")
        if product.rating <= threshold:
            return ExecutionResult(
                status=STATUS_OK, steps=log.steps,
                summary=f"{product.title} is rated {product.rating}, not above "
                        f"{threshold}; left it out of the cart")

    record_id = new_record_id("cart")
    title = product.title if product is not None else item
    price = product.price if product is not None else None

    def add_item(doc):
        doc["items"].append({"id": record_id, "item": title, "qty": args.get("quantity", 1),
                             "product_id": product.id if product else None, "price": price})
        return doc

    log.add("browser", f"added {title!r} to the cart", lambda: state.cart.update(add_item))
    rating_note = ""
    if threshold is not None and product is not None:
        rating_note = f" (rating {product.rating} is above {threshold})"
    return ExecutionResult(status=STATUS_OK, steps=log.steps, artifacts=[record_id],
                           summary=f"Added {title} to the cart{rating_note}.")


def _execute_device(args: dict[str, Any], state: GatewayState, log: _StepLog) -> ExecutionResult:
    target = args["target"]
    devices = log.add("shell", f"resolved device {target!r} in the device registry",
                      lambda: state.devices.read())
    if target not in devices:
        log.steps[-1].detail = f"device {target!r} not found in the device registry"
        return ExecutionResult(status=STATUS_ERROR, steps=log.steps,
                               summary=f"step 1 failed: no device named {target!r}")
    changes = {}
    if args.get("state") is not None:
        changes["on"] = args["state"] == "on"
    if args.get("color"):
        changes["color"] = args["color"]
    if not changes:
        changes["on"] = not devices[target].get("on", False)

    def apply(doc):
        doc[target].update(changes)
        return doc

    desc = ", ".join(f"{k}={v}" for k, v in changes.items())
    log.add("shell", f"applied {desc} to {target}", lambda: state.devices.update(apply))
    return ExecutionResult(status=STATUS_OK, steps=log.steps, artifacts=[f"device:{target}"],
                           summary=f"Set {target}: {desc}.")


def _next_weekday(now: datetime, weekday: str, hour: int, minute: int) -> datetime:
    target = WEEKDAYS.index(weekday)
    days_ahead = (target - now.weekday()) % 7
    candidate = (now + timedelta(days=days_ahead)).replace(hour=hour, minute=minute,
                                                           second=0, microsecond=0)
    if candidate <= now:
        candidate += timedelta(days=7)
    return candidate


def _execute_calendar(args: dict[str, Any], state: GatewayState, log: _StepLog,
                      now_ms: int) -> ExecutionResult:
    weekday = args.get("weekday")
    time_text = args.get("time")
    if weekday is None or time_text is None:
        log.add("shell", f"could not parse a weekday and time out of {args['source_text']!r}")
        return ExecutionResult(
            status=STATUS_ERROR, steps=log.steps,
            summary="step 1 failed: I can schedule things like 'friday 3pm' - "
                    "please include a weekday and a time")
    match = _TIME_RE.search(time_text)
    assert match is not None
    hour = int(match.group(1)) % 12
    if match.group(3).lower() == "pm":
        hour += 12
    minute = int(match.group(2) or 0)
    now = datetime.fromtimestamp(now_ms / 1000, tz=timezone.utc)
    start = log.add("shell", f"parsed {weekday} {time_text} from the request",
                    lambda: _next_weekday(now, weekday, hour, minute))
    event_id = new_record_id("event")

    def add_event(doc):
        doc["events"].append({"id": event_id, "title": args["title"], "weekday": weekday,
                              "start": start.isoformat()})
        return doc

    log.add("file_io", f"wrote calendar event {event_id}", lambda: state.calendar.update(add_event))
    return ExecutionResult(status=STATUS_OK, steps=log.steps, artifacts=[event_id],
                           summary=f"Scheduled {args['title']} for {weekday} at "
                                   f"{start.strftime('%H:%M')} ({start.date().isoformat()}).")


_TOTAL_RE = re.compile(r"\btotal\b\s*[:$]?\s*\$?([0-9]+(?:\.[0-9]{2})?)", re.IGNORECASE)


def _execute_notes(args: dict[str, Any], state: GatewayState, log: _StepLog,
                   now_ms: int) -> ExecutionResult:
    source = args["source_text"]
    body = source
    split = re.split(r"\breceipt\s*:\s*", source, maxsplit=1, flags=re.IGNORECASE)
    if len(split) == 2:
        body = split[1]

    def parse():
        lines = [ln.strip() for ln in body.splitlines() if ln.strip()]
        store_name = lines[0] if lines else None
        total_match = _TOTAL_RE.search(body)
        return store_name, (total_match.group(1) if total_match else None), lines

    store_name, total, lines = log.add("file_io", "parsed the source text", parse)
    note_id = new_record_id("note")
    note = {"id": note_id, "created_at": now_ms, "title": store_name or "note",
            "text": body, "store": store_name, "total": total}
    log.add("file_io", f"appended note {note_id}", lambda: state.notes.append(note))
    bits = [f"Saved note {note_id}"]
    if store_name:
        bits.append(f"store {store_name}")
    if total:
        bits.append(f"total ${total}")
    return ExecutionResult(status=STATUS_OK, steps=log.steps, artifacts=[note_id],
                           summary="; ".join(bits) + ".")


def _execute_email(args: dict[str, Any], state: GatewayState, log: _StepLog,
                   now_ms: int) -> ExecutionResult:
    to = args["to"]
    subject_match = re.search(r"\b(?:about|regarding)\s+(.+)$", args["source_text"],
                              re.IGNORECASE)
    subject = subject_match.group(1).strip(" .") if subject_match else "Follow-up"
    draft_id = new_record_id("draft")
    log.add("message", f"composed a draft to {to} (subject: {subject})")

    def save():
        path = state.sandbox_path(f"drafts/{draft_id}.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        import json
        path.write_text(json.dumps({"id": draft_id, "to": to, "subject": subject,
                                    "body": args["source_text"], "created_at": now_ms},
                                   indent=2, ensure_ascii=False), encoding="utf-8")
        return path

    path = log.add("file_io", f"saved draft {draft_id} for review", save)
    return ExecutionResult(status=STATUS_OK, steps=log.steps,
                           artifacts=[str(path.relative_to(state.files_root))],
                           summary=f"Drafted an email to {to} (subject: {subject}); "
                                   f"it is saved for review, not sent.")


def _execute_memory(args: dict[str, Any], state: GatewayState, log: _StepLog,
                    now_ms: int) -> ExecutionResult:
    if args["mode"] == "save":
        entry = MemoryEntry(text=args["text"], created_at=now_ms, source="voice")
        entry_id = log.add("memory", "stored one memory entry",
                           lambda: state.memory_append(entry))
        return ExecutionResult(status=STATUS_OK, steps=log.steps, artifacts=[entry_id],
                               summary=f"Saved to memory: {args['text'][:120]}")
    query = RetrievalQuery(text=args["query"], now=now_ms, k=3)
    hits = log.add("memory", f"searched memory for {args['query']!r}",
                   lambda: state.memory.retrieve(query))
    if not hits:
        return ExecutionResult(status=STATUS_OK, steps=log.steps,
                               summary="Nothing in memory matches that yet.")
    lines = [f"{h.entry.text} (score {h.score:.2f})" for h in hits]
    return ExecutionResult(status=STATUS_OK, steps=log.steps,
                           artifacts=[h.entry.id for h in hits],
                           summary="Found: " + " | ".join(lines))


def _execute_web(args: dict[str, Any], state: GatewayState, log: _StepLog) -> ExecutionResult:
    query = args["query"]
    url_match = re.search(r"https?://\S+", query)
    if url_match and state.allow_net:
        url = url_match.group(0)

        def fetch():
            import httpx
            return httpx.get(url, timeout=10, follow_redirects=True)

        try:
            response = log.add("web_search", f"fetched {url}", fetch)
        except Exception as exc:
            return ExecutionResult(status=STATUS_ERROR, steps=log.steps,
                                   summary=f"step 1 failed: could not fetch {url}: {exc}")
        return ExecutionResult(status=STATUS_OK, steps=log.steps, artifacts=[url],
                               summary=response.text[:300])
    if url_match:
        log.add("web_search", f"refused live fetch of {url_match.group(0)} "
                              f"(network egress disabled)")
        return ExecutionResult(status=STATUS_ERROR, steps=log.steps,
                               summary="step 1 failed: live web access is disabled; "
                                       "start the gateway with --allow-net to permit it")
    terms = _terms(query)
    page_hit = log.add("web_search", f"searched fixture pages for {query!r}",
                       lambda: state.web.search_pages(terms))
    if page_hit is not None:
        url, page = page_hit
        return ExecutionResult(status=STATUS_OK, steps=log.steps, artifacts=[url],
                               summary=f"{page['title']}: {page['text']}")
    product = state.web.find_product(terms)
    if product is not None:
        log.add("browser", f"opened product page for {product.id}")
        return ExecutionResult(status=STATUS_OK, steps=log.steps, artifacts=[product.id],
                               summary=f"{product.title}: ${product.price}, "
                                       f"rated {product.rating}/5.")
    return ExecutionResult(status=STATUS_OK, steps=log.steps,
                           summary=f"No fixture content matched {query!r}.")


def _execute_files(args: dict[str, Any], state: GatewayState, log: _StepLog,
                   now_ms: int) -> ExecutionResult:
    if args["op"] == "list":
        listing = log.add("file_io", "listed the file sandbox",
                          lambda: sorted(str(p.relative_to(state.files_root))
                                         for p in state.files_root.rglob("*") if p.is_file()))
        return ExecutionResult(status=STATUS_OK, steps=log.steps,
                               summary=f"{len(listing)} file(s): " + ", ".join(listing[:10]))
    name = args.get("name") or f"note-{now_ms}.txt"
    try:
        path = state.sandbox_path(name)
    except StoreError as exc:
        log.add("file_io", str(exc))
        return ExecutionResult(status=STATUS_ERROR, steps=log.steps,
                               summary=f"step 1 failed: {exc}")

    def write():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(f"saved from task: {args['source_text']}\n", encoding="utf-8")
        return path

    log.add("file_io", f"wrote {name} in the sandbox", write)
    return ExecutionResult(status=STATUS_OK, steps=log.steps,
                           artifacts=[str(path.relative_to(state.files_root))],
                           summary=f"Saved {name} in the workspace.")


def execute(task: str, context: dict[str, Any] | None, state: GatewayState,
            now_ms: int | None = None) -> ExecutionResult:
    """Parse and run one task against the gateway stores."""
    now_ms = now_ms if now_ms is not None else int(time.time() * 1000)
    skill, args = parse_task(task)
    log = _StepLog()
    if skill == "cart":
        return _execute_cart(args, state, log)
    if skill == "device":
        return _execute_device(args, state, log)
    if skill == "calendar":
        return _execute_calendar(args, state, log, now_ms)
    if skill == "notes":
        return _execute_notes(args, state, log, now_ms)
    if skill == "email_draft":
        return _execute_email(args, state, log, now_ms)
    if skill == "memory":
        return _execute_memory(args, state, log, now_ms)
    if skill == "files":
        return _execute_files(args, state, log, now_ms)
    return _execute_web(args, state, log)
