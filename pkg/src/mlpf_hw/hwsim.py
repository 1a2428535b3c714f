"""Closed-form cost model of the hardware MLPF pipeline.

Latency and throughput come from cycle counts and clock rate; power is
leakage plus event rate times energy per event; host load follows from
bytes per event and the USB buffer size.  ``simulate_occupancy`` plays
an event stream against a single non-queueing pipeline stage.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np


@dataclass(frozen=True)
class PlatformProfile:
    name: str
    clock_hz: float
    cycles_e2mlp: int
    cycles_mlp: int
    energy_mlp_nj: float | None = None
    energy_sram_nj: float | None = None
    energy_e2mlp_nj: float | None = None
    leakage_mw: float | None = None

    def __post_init__(self):
        if self.cycles_e2mlp <= 0 or self.cycles_mlp <= 0 or self.clock_hz <= 0:
            raise ValueError("cycle counts and clock must be positive")

    @property
    def total_cycles(self) -> int:
        return self.cycles_e2mlp + self.cycles_mlp

    @property
    def has_energy_model(self) -> bool:
        return None not in (self.energy_mlp_nj, self.energy_sram_nj,
                            self.energy_e2mlp_nj, self.leakage_mw)


PROFILES = {
    "fpga_xc7z100": PlatformProfile("fpga_xc7z100", 100e6, 7, 3),
    "fpga_zu3cg": PlatformProfile("fpga_zu3cg", 236e6, 7, 3),
    "asic_65nm": PlatformProfile("asic_65nm", 833e6, 30, 3, 1.2, 2.4, 0.4, 35.0),
}

BYPASS, BLOCK = "bypass", "block"


def get_profile(name: str) -> PlatformProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown platform {name!r}; choose from {sorted(PROFILES)}") from None


def latency_ns(profile: PlatformProfile) -> float:
    return profile.total_cycles / profile.clock_hz * 1e9


def max_event_rate(profile: PlatformProfile) -> float:
    """Events per second when every event is processed back to back."""
    return profile.clock_hz / profile.total_cycles


def energy_per_event_nj(profile: PlatformProfile) -> float:
    if not profile.has_energy_model:
        raise ValueError(f"{profile.name} has no energy characterization")
    return profile.energy_mlp_nj + profile.energy_sram_nj + profile.energy_e2mlp_nj


def block_energy_nj(power_mw: float, clock_hz: float, cycles: int) -> float:
    """E = P * T * N for one block: power, clock period, cycles per event."""
    return power_mw * 1e-3 / clock_hz * cycles * 1e9


def power_mw(profile: PlatformProfile, event_rate_hz: float) -> float:
    if event_rate_hz < 0:
        raise ValueError("event rate must be >= 0")
    # nJ/event * events/s = nW; / 1e6 -> mW
    return profile.leakage_mw + event_rate_hz * energy_per_event_nj(profile) * 1e-6


@dataclass
class OccupancyStats:
    n_events: int
    n_processed: int
    n_affected: int          # bypassed or blocked, per policy
    policy: str
    busy_ns: float

    @property
    def affected_fraction(self) -> float:
        return self.n_affected / self.n_events if self.n_events else 0.0


def busy_mask(t_us, busy_ns: float) -> np.ndarray:
    """True for events arriving while the stage is still busy with an earlier one.

    Affected events never enter the stage, so they do not extend the busy
    period (zero-depth queue).
    """
    t_ns = np.asarray(t_us, dtype=np.float64) * 1e3
    busy = np.zeros(t_ns.size, dtype=bool)
    free_at = -np.inf
    for i, t in enumerate(t_ns.tolist()):
        if t < free_at:
            busy[i] = True
        else:
            free_at = t + busy_ns
    return busy


def simulate_occupancy(t_us, profile: PlatformProfile, policy: str = BYPASS) -> OccupancyStats:
    if policy not in (BYPASS, BLOCK):
        raise ValueError(f"policy must be {BYPASS!r} or {BLOCK!r}")
    b = latency_ns(profile)
    busy = busy_mask(t_us, b)
    n = busy.size
    return OccupancyStats(n, int(n - busy.sum()), int(busy.sum()), policy, b)


def output_mask(signal: np.ndarray, busy: np.ndarray, policy: str) -> np.ndarray:
    """Events leaving the pipeline: processed-and-kept, plus bypassed ones."""
    signal = np.asarray(signal, dtype=bool)
    kept = signal & ~busy
    return kept | busy if policy == BYPASS else kept


def erlang_loss(rate_hz: float, busy_s: float) -> float:
    """Blocking probability of a single server with no waiting room."""
    a = rate_hz * busy_s
    return a / (1.0 + a)


@dataclass
class HostLoad:
    raw_data_rate: float          # bytes/s
    denoised_data_rate: float
    raw_interrupt_hz: float
    denoised_interrupt_hz: float
    bytes_per_event: int
    buffer_events: int

    @property
    def data_reduction(self) -> float:
        return self.raw_data_rate / self.denoised_data_rate

    @property
    def interrupt_reduction(self) -> float:
        return self.raw_interrupt_hz / self.denoised_interrupt_hz


def host_load(raw_rate_eps: float, denoised_rate_eps: float, bytes_per_event: int = 4,
              buffer_events: int = 10_000) -> HostLoad:
    if min(raw_rate_eps, denoised_rate_eps, bytes_per_event, buffer_events) <= 0:
        raise ValueError("host-load parameters must be positive")
    return HostLoad(raw_rate_eps * bytes_per_event, denoised_rate_eps * bytes_per_event,
                    raw_rate_eps / buffer_events, denoised_rate_eps / buffer_events,
                    bytes_per_event, buffer_events)


# Quiet-scene scenario: 10 Mev/s raw, 100x fewer after denoising, 10k-event buffer.
FIG1_SCENARIO = dict(raw_rate_eps=1e7, denoised_rate_eps=1e5, buffer_events=10_000)


@dataclass
class PipelineStats:
    platform: str
    latency_ns: float
    max_event_rate_hz: float
    event_rate_hz: float
    power_mw: float | None
    energy_per_event_nj: float | None
    policy: str
    n_events: int = 0
    n_affected: int = 0
    host: HostLoad | None = None

    def report(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if k == "host":
                continue
            lines.append(f"{k}={'n/a' if v is None else _fmt(v)}")
        if self.host is not None:
            h = self.host
            lines += [f"bytes_per_event={h.bytes_per_event}",
                      f"buffer_events={h.buffer_events}",
                      f"host_raw_data_rate_Bps={_fmt(h.raw_data_rate)}",
                      f"host_denoised_data_rate_Bps={_fmt(h.denoised_data_rate)}",
                      f"host_raw_interrupt_hz={_fmt(h.raw_interrupt_hz)}",
                      f"host_denoised_interrupt_hz={_fmt(h.denoised_interrupt_hz)}",
                      f"data_reduction={_fmt(h.data_reduction)}",
                      f"interrupt_reduction={_fmt(h.interrupt_reduction)}"]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        pairs = [ln.split("=", 1) for ln in self.report().splitlines()]
        return "key,value\n" + "".join(f"{k},{v}\n" for k, v in pairs)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def pipeline_stats(profile: PlatformProfile, event_rate_hz: float, policy: str = BYPASS,
                   t_us=None, host: HostLoad | None = None) -> PipelineStats:
    power = energy = None
    if profile.has_energy_model:
        power = power_mw(profile, event_rate_hz)
        energy = energy_per_event_nj(profile)
    n = affected = 0
    if t_us is not None:
        occ = simulate_occupancy(t_us, profile, policy)
        n, affected = occ.n_events, occ.n_affected
    return PipelineStats(profile.name, latency_ns(profile), max_event_rate(profile), event_rate_hz,
                         power, energy, policy, n, affected, host)
