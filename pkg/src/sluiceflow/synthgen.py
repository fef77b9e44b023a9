"""Deterministic synthetic flow logs with planted malware and lexical signals.

Infected clients run a malware app that beacons periodically to malicious
domains whose names come from a high-entropy, digit-heavy character model;
benign traffic uses dictionary-syllable names and broad, irregular timing.
``signal_strength`` interpolates between the two regimes so separability is
controllable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .flowstore import FlowRecord, Label, SECONDS_PER_DAY

_SYLLABLES = [
    "ba", "co", "da", "fi", "go", "ha", "ki", "lo", "ma", "ne",
    "pa", "ro", "sa", "ti", "vo", "we", "ze", "mi", "tu", "ler",
]
_TLDS = ["com", "net", "org", "io"]
_DGA_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789"
_FAMILIES = ["famA", "famB", "famC"]


@dataclass(frozen=True)
class SynthConfig:
    n_clients: int = 200
    n_days: int = 5
    infection_rate: float = 0.1
    n_benign_domains: int = 400
    n_malicious_domains: int = 30
    benign_flows_per_day: float = 45.0  # Poisson mean per client-day
    malware_flows_per_day: float = 12.0  # Poisson mean per infected client-day
    signal_strength: float = 0.9
    domain_label_fraction: float = 1.0
    seed: int = 7

    def __post_init__(self):
        for name in ("infection_rate", "signal_strength", "domain_label_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        for name in ("n_clients", "n_days", "n_benign_domains", "n_malicious_domains"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def target_malicious_fraction(self) -> float:
        """Expected fraction of malware-generated flows."""
        malicious = self.infection_rate * self.malware_flows_per_day
        return malicious / (self.benign_flows_per_day + malicious)


@dataclass
class GroundTruth:
    infected_clients: set[str] = field(default_factory=set)
    malicious_domains: set[str] = field(default_factory=set)
    flow_apps: list[str] = field(default_factory=list)  # per emitted flow
    client_family: dict[str, str] = field(default_factory=dict)
    domain_family: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "infected_clients": sorted(self.infected_clients),
                "malicious_domains": sorted(self.malicious_domains),
                "client_family": dict(sorted(self.client_family.items())),
                "domain_family": dict(sorted(self.domain_family.items())),
            },
            sort_keys=True,
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        obj = json.loads(text)
        return cls(
            infected_clients=set(obj["infected_clients"]),
            malicious_domains=set(obj["malicious_domains"]),
            client_family=obj.get("client_family", {}),
            domain_family=obj.get("domain_family", {}),
        )


def _benign_name(rng: np.random.Generator) -> str:
    n_syll = int(rng.integers(2, 5))
    stem = "".join(rng.choice(_SYLLABLES) for _ in range(n_syll))
    return f"{stem}.{rng.choice(_TLDS)}"


def _dga_name(rng: np.random.Generator) -> str:
    length = int(rng.integers(14, 22))
    # digit-heavy, near-uniform character draws
    weights = np.ones(len(_DGA_CHARS))
    weights[26:] = 2.5
    weights /= weights.sum()
    stem = "".join(rng.choice(list(_DGA_CHARS), p=weights) for _ in range(length))
    return f"{stem}.{rng.choice(_TLDS)}"


def _malicious_name(rng: np.random.Generator, signal: float) -> str:
    return _dga_name(rng) if rng.random() < signal else _benign_name(rng)


def generate(cfg: SynthConfig) -> tuple[list[FlowRecord], GroundTruth]:
    """Emit labeled flows sorted by start time, plus the ground truth.

    Deterministic per cfg.seed: per-client streams use spawned seeds and the
    merged output is sorted by (ts_start, client, domain).
    """
    root = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    truth = GroundTruth()

    benign_domains = []
    seen = set()
    while len(benign_domains) < cfg.n_benign_domains:
        name = _benign_name(root)
        if name not in seen:
            seen.add(name)
            benign_domains.append(name)
    malicious_domains = []
    while len(malicious_domains) < cfg.n_malicious_domains:
        name = _malicious_name(root, cfg.signal_strength)
        if name not in seen:
            seen.add(name)
            malicious_domains.append(name)
            truth.malicious_domains.add(name)
            truth.domain_family[name] = _FAMILIES[
                len(malicious_domains) % len(_FAMILIES)
            ]

    clients = [f"org1/c{i:04d}" for i in range(cfg.n_clients)]
    infected = root.random(cfg.n_clients) < cfg.infection_rate
    for i, client in enumerate(clients):
        if infected[i]:
            truth.infected_clients.add(client)
            truth.client_family[client] = _FAMILIES[i % len(_FAMILIES)]

    flows: list[tuple] = []  # (record, app)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_clients)
    for i, client in enumerate(clients):
        rng = np.random.default_rng(seeds[i])
        family = truth.client_family.get(client)
        for day in range(cfg.n_days):
            day_start = day * SECONDS_PER_DAY
            n_benign = rng.poisson(cfg.benign_flows_per_day)
            for _ in range(n_benign):
                ts = day_start + rng.uniform(0, SECONDS_PER_DAY)
                domain = str(rng.choice(benign_domains))
                flows.append(
                    (
                        FlowRecord(
                            client_id=client,
                            domain=domain,
                            ts_start=round(ts, 3),
                            duration=round(float(rng.lognormal(0.0, 1.5)), 3),
                            bytes_sent=int(rng.lognormal(6.0, 2.0)) + 1,
                            bytes_received=int(rng.lognormal(8.0, 2.0)) + 1,
                            flow_label=Label.BENIGN,
                            domain_label=Label.BENIGN,
                        ),
                        "browser",
                    )
                )
            if infected[i]:
                n_malware = rng.poisson(cfg.malware_flows_per_day)
                if n_malware == 0:
                    continue
                # beaconing: near-periodic schedule with signal-scaled jitter
                period = SECONDS_PER_DAY / max(n_malware, 1)
                jitter = (1.0 - cfg.signal_strength) * period + 1.0
                targets = rng.choice(malicious_domains, size=3, replace=True)
                for j in range(n_malware):
                    ts = day_start + j * period + rng.uniform(0, jitter)
                    ts = min(ts, day_start + SECONDS_PER_DAY - 0.001)
                    domain = str(targets[int(rng.integers(0, len(targets)))])
                    # narrow payload profile scaled by signal strength
                    spread = 0.3 + (1.0 - cfg.signal_strength) * 1.7
                    flows.append(
                        (
                            FlowRecord(
                                client_id=client,
                                domain=domain,
                                ts_start=round(ts, 3),
                                duration=round(float(rng.lognormal(-1.0, 0.2)), 3),
                                bytes_sent=int(rng.lognormal(5.0, spread)) + 1,
                                bytes_received=int(rng.lognormal(4.5, spread)) + 1,
                                flow_label=Label.MALICIOUS,
                                domain_label=Label.MALICIOUS,
                                family_tag=family,
                                app_id="malware",
                            ),
                            "malware",
                        )
                    )

    flows.sort(key=lambda fa: (fa[0].ts_start, fa[0].client_id, fa[0].domain))
    records = [fa[0] for fa in flows]
    truth.flow_apps = [fa[1] for fa in flows]
    # truth covers entities that actually appear in the log
    contacted = {r.domain for r, app in zip(records, truth.flow_apps) if app == "malware"}
    truth.malicious_domains &= contacted
    truth.domain_family = {
        d: fam for d, fam in truth.domain_family.items() if d in contacted
    }
    records = _apply_label_masking(records, truth, cfg)
    return records, truth


def _apply_label_masking(records, truth: GroundTruth, cfg: SynthConfig):
    """Hide the domain label of a fraction of truly malicious domains.

    Masked domains become unlabeled (not benign); ground truth is unchanged.
    """
    if cfg.domain_label_fraction >= 1.0:
        return records
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xD0)))
    ordered = sorted(truth.malicious_domains)
    revealed = set(
        d for d in ordered if rng.random() < cfg.domain_label_fraction
    )
    if not revealed and ordered:
        revealed = {ordered[0]}  # keep at least one labeled positive
    out = []
    for rec in records:
        if rec.domain in truth.malicious_domains and rec.domain not in revealed:
            rec = FlowRecord(
                client_id=rec.client_id,
                domain=rec.domain,
                ts_start=rec.ts_start,
                duration=rec.duration,
                bytes_sent=rec.bytes_sent,
                bytes_received=rec.bytes_received,
                flow_label=rec.flow_label,
                domain_label=Label.UNLABELED,
                family_tag=rec.family_tag,
                app_id=rec.app_id,
            )
        out.append(rec)
    return out


def transfer_benchmark(cfg: SynthConfig) -> tuple[list[FlowRecord], GroundTruth]:
    """Low-resource domain-task setup: full client labels, masked domain labels.

    Requires domain_label_fraction < 1 (otherwise nothing is masked).
    """
    if cfg.domain_label_fraction >= 1.0:
        raise ValueError("transfer_benchmark requires domain_label_fraction < 1")
    return generate(cfg)


def config_to_json(cfg: SynthConfig) -> str:
    return json.dumps(asdict(cfg), sort_keys=True, indent=2)


def config_from_dict(obj: dict) -> SynthConfig:
    return SynthConfig(**obj)
