"""Configuration: radar hardware, network topology, and target ground truth.

Everything here is immutable after load and safe to share across worker
processes. The scenario file grammar is line oriented: three section kinds
([radar], [network], [target]), key = value lines, '#' comments. Timeline
level keys (n_cpis, t_max, m_acq, n_acq) live in [network].
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "RadarParams",
    "TargetEvent",
    "NetworkConfig",
    "ScenarioTimeline",
    "load_scenario",
    "dump_scenario",
    "active_targets",
]

FUSION_MODES = ("centralized", "decentralized", "none")


@dataclass(frozen=True)
class RadarParams:
    """Hardware and detection-design knobs shared by every radar in a network.

    n is the per-CPI sample count n_tx*n_rx*pulses_per_cpi. kappa sets the
    covariance truncation lag l = ceil(n^min(kappa, kappa_cap)); kappa_cap
    keeps the lag o(sqrt(n)) unless explicitly lifted.
    """

    n_tx: int = 4
    n_rx: int = 4
    pulses_per_cpi: int = 32
    n_bins: int = 20
    kappa: float = 0.8
    total_power: float = 1.0
    pri_seconds: float = 5e-6
    pfa_nominal: float = 1e-4
    kappa_cap: float = 0.5

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "pulses_per_cpi", "n_bins"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.n < 2:
            raise ValueError("n_tx*n_rx*pulses_per_cpi must be at least 2")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie strictly inside (0,1), got {self.kappa}")
        if not 0.0 < self.pfa_nominal < 1.0:
            raise ValueError(
                f"pfa_nominal must lie strictly inside (0,1), got {self.pfa_nominal}"
            )
        if self.total_power <= 0:
            raise ValueError("total_power must be positive")
        if self.pri_seconds <= 0:
            raise ValueError("pri_seconds must be positive")
        if not 0.0 < self.kappa_cap <= 1.0:
            raise ValueError("kappa_cap must lie in (0,1]")

    @property
    def n(self) -> int:
        return self.n_tx * self.n_rx * self.pulses_per_cpi


@dataclass(frozen=True)
class TargetEvent:
    """One target occupying one bin over an inclusive CPI interval.

    Each snr_db_per_radar entry is either a constant dB value or a tuple of
    (cpi, db) knots interpolated piecewise-linearly, clamped outside.
    """

    cpi_start: int
    cpi_end: int
    bin: int
    snr_db_per_radar: tuple

    def __post_init__(self):
        if self.cpi_start < 0 or self.cpi_end < self.cpi_start:
            raise ValueError(
                f"event interval [{self.cpi_start}, {self.cpi_end}] is not valid"
            )
        if self.bin < 0:
            raise ValueError("bin index must be nonnegative")
        if not self.snr_db_per_radar:
            raise ValueError("snr_db_per_radar must name at least one radar")
        for entry in self.snr_db_per_radar:
            if isinstance(entry, tuple):
                if len(entry) < 1:
                    raise ValueError("empty SNR knot list")
                last = None
                for knot in entry:
                    if len(knot) != 2:
                        raise ValueError(f"bad SNR knot {knot!r}")
                    cpi, _db = knot
                    if last is not None and cpi <= last:
                        raise ValueError("SNR knots must have increasing cpi")
                    last = cpi

    def snr_db_at(self, radar: int, p: int) -> float:
        """SNR in dB seen by `radar` at CPI p, piecewise-linear between knots."""
        entry = self.snr_db_per_radar[radar]
        if not isinstance(entry, tuple):
            return float(entry)
        knots = entry
        if p <= knots[0][0]:
            return float(knots[0][1])
        if p >= knots[-1][0]:
            return float(knots[-1][1])
        for (c0, d0), (c1, d1) in zip(knots, knots[1:]):
            if c0 <= p <= c1:
                t = (p - c0) / (c1 - c0)
                return float(d0 + t * (d1 - d0))
        raise AssertionError("unreachable: knot scan fell through")


@dataclass(frozen=True)
class NetworkConfig:
    """Topology: radar count, per-radar bin permutations, fusion mode, seeds.

    bin_mapping[i][l] is radar i's local bin index for reference bin l.
    rng_seeds must be pairwise distinct so disturbance streams never collide.
    """

    n_radars: int = 1
    bin_mapping: tuple = ()
    fusion_mode: str = "none"
    rng_seeds: tuple = ()

    def __post_init__(self):
        if self.n_radars < 1:
            raise ValueError("n_radars must be at least 1")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(
                f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}"
            )
        if len(self.bin_mapping) != self.n_radars:
            raise ValueError("need one bin_mapping per radar")
        width = len(self.bin_mapping[0]) if self.bin_mapping else 0
        for i, perm in enumerate(self.bin_mapping):
            if len(perm) != width or sorted(perm) != list(range(width)):
                raise ValueError(f"bijection violated in bin_mapping for radar {i}")
        if len(self.rng_seeds) != self.n_radars:
            raise ValueError("need one rng seed per radar")
        if len(set(self.rng_seeds)) != self.n_radars:
            raise ValueError("rng_seeds must be pairwise distinct")

    @classmethod
    def identity(cls, n_radars: int, n_bins: int, fusion_mode: str = "none",
                 rng_seeds=None) -> "NetworkConfig":
        if rng_seeds is None:
            rng_seeds = tuple(1001 + i for i in range(n_radars))
        return cls(
            n_radars=n_radars,
            bin_mapping=tuple(tuple(range(n_bins)) for _ in range(n_radars)),
            fusion_mode=fusion_mode,
            rng_seeds=tuple(rng_seeds),
        )


@dataclass(frozen=True)
class ScenarioTimeline:
    """Ground truth over the whole simulation plus acquisition bookkeeping."""

    n_cpis: int
    events: tuple = ()
    t_max: int = 5
    m_acq: int = 3
    n_acq: int = 5

    def __post_init__(self):
        if self.n_cpis < 1:
            raise ValueError("n_cpis must be at least 1")
        if self.t_max < 0:
            raise ValueError("t_max must be nonnegative")
        if not 1 <= self.m_acq <= self.n_acq:
            raise ValueError("need 1 <= m_acq <= n_acq")
        for ev in self.events:
            if ev.cpi_end >= self.n_cpis:
                raise ValueError(
                    f"event on bin {ev.bin} ends at {ev.cpi_end} past n_cpis"
                )
        # Overlap sweep: simultaneous targets must sit in distinct bins and
        # never exceed t_max.
        marks = [0] * (self.n_cpis + 1)
        for ev in self.events:
            marks[ev.cpi_start] += 1
            marks[ev.cpi_end + 1] -= 1
        live = 0
        for p in range(self.n_cpis):
            live += marks[p]
            if live > self.t_max:
                raise ValueError(f"more than t_max={self.t_max} targets at cpi {p}")
        for a in self.events:
            for b in self.events:
                if a is b or a.bin != b.bin:
                    continue
                if a.cpi_start <= b.cpi_end and b.cpi_start <= a.cpi_end:
                    raise ValueError(
                        f"two events share bin {a.bin} on overlapping intervals"
                    )

    @property
    def target_bins(self) -> tuple:
        return tuple(sorted({ev.bin for ev in self.events}))


def active_targets(timeline: ScenarioTimeline, p: int):
    """Targets live at CPI p as a list of (bin, per-radar SNR dB tuple)."""
    if not 0 <= p < timeline.n_cpis:
        raise IndexError(f"cpi {p} outside [0, {timeline.n_cpis})")
    out = []
    for ev in timeline.events:
        if ev.cpi_start <= p <= ev.cpi_end:
            snrs = tuple(
                ev.snr_db_at(r, p) for r in range(len(ev.snr_db_per_radar))
            )
            out.append((ev.bin, snrs))
    out.sort(key=lambda item: item[0])
    return out


# ---------------------------------------------------------------------------
# Scenario file grammar


def _parse_scalar(key, raw, conv):
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"cannot parse {key} = {raw!r}") from exc


def _parse_snr_entry(raw: str):
    raw = raw.strip()
    if ":" not in raw:
        return _parse_scalar("snr_db_per_radar", raw, float)
    knots = []
    for piece in raw.split(","):
        cpi_s, db_s = piece.split(":")
        knots.append((int(cpi_s), float(db_s)))
    return tuple(knots)


def _format_snr_entry(entry) -> str:
    if isinstance(entry, tuple):
        return ", ".join(f"{c}:{d!r}" for c, d in entry)
    return repr(entry)


_RADAR_FIELDS = {
    "n_tx": int,
    "n_rx": int,
    "pulses_per_cpi": int,
    "n_bins": int,
    "kappa": float,
    "total_power": float,
    "pri_seconds": float,
    "pfa_nominal": float,
    "kappa_cap": float,
}

_NETWORK_INT_FIELDS = {"n_radars", "n_cpis", "t_max", "m_acq", "n_acq"}


def load_scenario(text: str):
    """Parse scenario text into (ScenarioTimeline, RadarParams, NetworkConfig).

    Raises ValueError naming the violated invariant on any malformed input.
    """
    sections = []
    current = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ValueError(f"line {lineno}: malformed section header {line!r}")
            name = line[1:-1].strip().lower()
            if name not in ("radar", "network", "target"):
                raise ValueError(f"line {lineno}: unknown section [{name}]")
            current = (name, [])
            sections.append(current)
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        if current is None:
            raise ValueError(f"line {lineno}: key outside any section")
        key, val = (part.strip() for part in line.split("=", 1))
        current[1].append((key, val))

    radar_kv = {}
    net_kv = {}
    mappings = []
    target_blocks = []
    for name, pairs in sections:
        if name == "radar":
            for k, v in pairs:
                if k not in _RADAR_FIELDS:
                    raise ValueError(f"unknown [radar] key {k!r}")
                radar_kv[k] = _parse_scalar(k, v, _RADAR_FIELDS[k])
        elif name == "network":
            for k, v in pairs:
                if k == "bin_mapping":
                    mappings.append(v)
                elif k == "rng_seeds":
                    net_kv[k] = tuple(
                        _parse_scalar(k, piece, int) for piece in v.split(",")
                    )
                elif k == "fusion_mode":
                    net_kv[k] = v
                elif k in _NETWORK_INT_FIELDS:
                    net_kv[k] = _parse_scalar(k, v, int)
                else:
                    raise ValueError(f"unknown [network] key {k!r}")
        else:
            target_blocks.append(dict_from_target(pairs))

    params = RadarParams(**radar_kv)
    n_bins = params.n_bins
    n_radars = net_kv.get("n_radars", 1)

    bin_mapping = []
    for spec in mappings:
        spec = spec.strip()
        if spec == "identity":
            bin_mapping.append(tuple(range(n_bins)))
        else:
            bin_mapping.append(
                tuple(_parse_scalar("bin_mapping", piece, int) for piece in spec.split(","))
            )
    while len(bin_mapping) < n_radars:
        bin_mapping.append(tuple(range(n_bins)))

    net = NetworkConfig(
        n_radars=n_radars,
        bin_mapping=tuple(bin_mapping),
        fusion_mode=net_kv.get("fusion_mode", "none"),
        rng_seeds=net_kv.get(
            "rng_seeds", tuple(1001 + i for i in range(n_radars))
        ),
    )

    events = []
    for block in target_blocks:
        snr_entries = tuple(
            _parse_snr_entry(piece) for piece in block["snr_db_per_radar"].split(";")
        )
        if len(snr_entries) != n_radars:
            raise ValueError(
                f"target on bin {block['bin']}: snr_db_per_radar names "
                f"{len(snr_entries)} radars, network has {n_radars}"
            )
        ev = TargetEvent(
            cpi_start=_parse_scalar("cpi_start", block["cpi_start"], int),
            cpi_end=_parse_scalar("cpi_end", block["cpi_end"], int),
            bin=_parse_scalar("bin", block["bin"], int),
            snr_db_per_radar=snr_entries,
        )
        if ev.bin >= n_bins:
            raise ValueError(f"target bin {ev.bin} outside [0, {n_bins})")
        events.append(ev)

    timeline = ScenarioTimeline(
        n_cpis=net_kv.get("n_cpis", 1),
        events=tuple(events),
        t_max=net_kv.get("t_max", 5),
        m_acq=net_kv.get("m_acq", 3),
        n_acq=net_kv.get("n_acq", 5),
    )
    return timeline, params, net


def dict_from_target(pairs):
    block = {}
    for k, v in pairs:
        if k not in ("cpi_start", "cpi_end", "bin", "snr_db_per_radar"):
            raise ValueError(f"unknown [target] key {k!r}")
        block[k] = v
    missing = {"cpi_start", "cpi_end", "bin", "snr_db_per_radar"} - set(block)
    if missing:
        raise ValueError(f"[target] section missing keys {sorted(missing)}")
    return block


def dump_scenario(timeline: ScenarioTimeline, params: RadarParams,
                  net: NetworkConfig) -> str:
    """Serialize to the file grammar; load_scenario round-trips exactly."""
    lines = ["[radar]"]
    for key in _RADAR_FIELDS:
        lines.append(f"{key} = {getattr(params, key)!r}")
    lines.append("")
    lines.append("[network]")
    lines.append(f"n_radars = {net.n_radars}")
    lines.append(f"fusion_mode = {net.fusion_mode}")
    lines.append(f"rng_seeds = {', '.join(str(s) for s in net.rng_seeds)}")
    for perm in net.bin_mapping:
        lines.append(f"bin_mapping = {', '.join(str(b) for b in perm)}")
    lines.append(f"n_cpis = {timeline.n_cpis}")
    lines.append(f"t_max = {timeline.t_max}")
    lines.append(f"m_acq = {timeline.m_acq}")
    lines.append(f"n_acq = {timeline.n_acq}")
    for ev in timeline.events:
        lines.append("")
        lines.append("[target]")
        lines.append(f"cpi_start = {ev.cpi_start}")
        lines.append(f"cpi_end = {ev.cpi_end}")
        lines.append(f"bin = {ev.bin}")
        snr = " ; ".join(_format_snr_entry(e) for e in ev.snr_db_per_radar)
        lines.append(f"snr_db_per_radar = {snr}")
    return "\n".join(lines) + "\n"
