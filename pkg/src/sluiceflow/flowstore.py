"""Flow log parsing, daily instance bucketing, and flow-window construction.

A flow log is a JSONL or CSV file with one network flow per line.  Flows are
grouped into per-client and per-domain 24-hour instances (fixed UTC calendar
days), and each flow can be expanded into a window of the client's surrounding
flows for classification.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

SECONDS_PER_DAY = 86400


class Label(str, Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"
    UNLABELED = "unlabeled"


class FlowLogError(ValueError):
    """Raised when a flow log line is malformed or violates an invariant."""


@dataclass(frozen=True)
class FlowRecord:
    """One logged network flow between a client and a host domain."""

    client_id: str
    domain: str
    ts_start: float
    duration: float
    bytes_sent: int
    bytes_received: int
    flow_label: Label = Label.UNLABELED
    domain_label: Label = Label.UNLABELED
    family_tag: str | None = None
    app_id: str | None = None

    def __post_init__(self):
        if not math.isfinite(self.ts_start):
            raise FlowLogError(f"ts_start must be finite, got {self.ts_start}")
        if self.duration < 0:
            raise FlowLogError(f"duration must be >= 0, got {self.duration}")
        if self.bytes_sent < 0:
            raise FlowLogError(f"bytes_sent must be >= 0, got {self.bytes_sent}")
        if self.bytes_received < 0:
            raise FlowLogError(
                f"bytes_received must be >= 0, got {self.bytes_received}"
            )

    @property
    def day(self) -> int:
        return int(math.floor(self.ts_start / SECONDS_PER_DAY))


class EntityKind(str, Enum):
    CLIENT = "client"
    DOMAIN = "domain"


@dataclass(frozen=True, order=True)
class InstanceKey:
    """One client (or domain) within one UTC calendar day."""

    kind: EntityKind
    entity: str
    day: int


@dataclass(frozen=True)
class FlowWindow:
    """A (2k+1)-flow context of one client, centered on the flow to classify.

    ``flows`` holds ``None`` in padding slots; ``pad_mask[i]`` is True exactly
    where ``flows[i]`` is None.  The center slot is never padding.
    """

    flows: tuple[FlowRecord | None, ...]
    pad_mask: tuple[bool, ...]
    flow_index: int = field(default=0)  # index of the center flow in the input

    @property
    def k(self) -> int:
        return (len(self.flows) - 1) // 2

    @property
    def center(self) -> FlowRecord:
        flow = self.flows[len(self.flows) // 2]
        assert flow is not None
        return flow


_REQUIRED_JSON_KEYS = ("client", "domain", "ts", "dur", "tx", "rx")


def _record_from_mapping(obj: dict, lineno: int) -> FlowRecord:
    for key in _REQUIRED_JSON_KEYS:
        if key not in obj or obj[key] is None or obj[key] == "":
            if key == "domain" and obj.get(key) == "":
                continue  # empty domain is legal
            raise FlowLogError(f"line {lineno}: missing required field '{key}'")
    try:
        record = FlowRecord(
            client_id=str(obj["client"]),
            domain=str(obj["domain"]),
            ts_start=float(obj["ts"]),
            duration=float(obj["dur"]),
            bytes_sent=int(obj["tx"]),
            bytes_received=int(obj["rx"]),
            flow_label=Label(obj.get("flow_label") or "unlabeled"),
            domain_label=Label(obj.get("domain_label") or "unlabeled"),
            family_tag=obj.get("family") or None,
            app_id=obj.get("app") or None,
        )
    except FlowLogError as exc:
        raise FlowLogError(f"line {lineno}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise FlowLogError(f"line {lineno}: {exc}") from None
    return record


def parse_flow_log(path, format: str = "jsonl") -> list[FlowRecord]:
    """Parse a JSONL or CSV flow log into FlowRecords, preserving file order.

    Missing label fields default to unlabeled.  Malformed lines raise
    FlowLogError naming the line number.
    """
    records: list[FlowRecord] = []
    if format == "jsonl":
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FlowLogError(f"line {lineno}: invalid JSON: {exc}") from None
                records.append(_record_from_mapping(obj, lineno))
    elif format == "csv":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise FlowLogError("empty CSV file (header row required)")
            for lineno, row in enumerate(reader, start=2):
                obj = {key: val for key, val in row.items() if val not in (None, "")}
                obj.setdefault("domain", row.get("domain", ""))
                records.append(_record_from_mapping(obj, lineno))
    else:
        raise ValueError(f"unknown flow log format: {format!r}")
    return records


def write_flow_log(path, flows: Iterable[FlowRecord]) -> None:
    """Write flows as JSONL in the schema parse_flow_log reads."""
    with open(path, "w", encoding="utf-8") as fh:
        for flow in flows:
            obj = {
                "client": flow.client_id,
                "domain": flow.domain,
                "ts": flow.ts_start,
                "dur": flow.duration,
                "tx": flow.bytes_sent,
                "rx": flow.bytes_received,
            }
            if flow.flow_label != Label.UNLABELED:
                obj["flow_label"] = flow.flow_label.value
            if flow.domain_label != Label.UNLABELED:
                obj["domain_label"] = flow.domain_label.value
            if flow.family_tag:
                obj["family"] = flow.family_tag
            if flow.app_id:
                obj["app"] = flow.app_id
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def bucket_instances(
    flows: Sequence[FlowRecord],
) -> dict[InstanceKey, list[int]]:
    """Group flow indices into per-client and per-domain daily instances.

    Every flow lands in exactly one client bucket and one domain bucket; a
    client active on several days yields one instance per day.
    """
    buckets: dict[InstanceKey, list[int]] = {}
    for i, flow in enumerate(flows):
        ckey = InstanceKey(EntityKind.CLIENT, flow.client_id, flow.day)
        dkey = InstanceKey(EntityKind.DOMAIN, flow.domain, flow.day)
        buckets.setdefault(ckey, []).append(i)
        buckets.setdefault(dkey, []).append(i)
    return buckets


def _client_order(flows: Sequence[FlowRecord]) -> dict[str, list[int]]:
    """Indices per client, sorted by ts_start with stable input-order ties."""
    per_client: dict[str, list[int]] = {}
    for i, flow in enumerate(flows):
        per_client.setdefault(flow.client_id, []).append(i)
    for indices in per_client.values():
        indices.sort(key=lambda i: flows[i].ts_start)  # sort() is stable
    return per_client


def build_windows(
    flows: Sequence[FlowRecord], k: int, causal: bool = False
) -> list[FlowWindow]:
    """Build one (2k+1)-flow window per input flow, in input order.

    Windows take the k previous and k next flows of the same client ordered by
    ts_start; missing neighbors become padding slots.  With ``causal=True``
    the k following flows are replaced by padding (no future context).
    """
    if k < 0:
        raise ValueError("window radius k must be >= 0")
    windows: list[FlowWindow | None] = [None] * len(flows)
    for indices in _client_order(flows).values():
        for pos, i in enumerate(indices):
            slots: list[FlowRecord | None] = []
            for offset in range(-k, k + 1):
                j = pos + offset
                in_range = 0 <= j < len(indices)
                if offset > 0 and causal:
                    in_range = False
                slots.append(flows[indices[j]] if in_range else None)
            windows[i] = FlowWindow(
                flows=tuple(slots),
                pad_mask=tuple(slot is None for slot in slots),
                flow_index=i,
            )
    assert all(w is not None for w in windows)
    return windows  # type: ignore[return-value]


def gap_seconds(flows: Sequence[FlowRecord]) -> list[float]:
    """Time gap from each flow to the same client's preceding flow (0 if none)."""
    gaps = [0.0] * len(flows)
    for indices in _client_order(flows).values():
        for pos in range(1, len(indices)):
            gaps[indices[pos]] = (
                flows[indices[pos]].ts_start - flows[indices[pos - 1]].ts_start
            )
    return gaps
