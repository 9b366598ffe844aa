"""Scenario configuration: loading, validation, and simulation assembly.

A scenario is one YAML file describing the clock, the device fleet with
its MAC/IP plan, the replayed profiles, the EMS policy, an optional
attack plan, and the export formats.  Times are written as clock
strings ("11:30:00"), powers in kW.  Two golden scenarios (normal and
attack) ship with the package under ``gridtwin/data/configs``.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass
from pathlib import Path

import yaml

from . import devices as dev
from .attack import AttackPlan, Attacker
from .capture import Capture, FORMATS
from .cosim import RunSummary, Scheduler, SimClock
from .ems import ControlPolicy, EmsController
from .grid import BssState, LoadState, PvState
from .netem import Endpoint, Network
from .profiles import ScalingRule, load_profile, scale


class ConfigError(ValueError):
    pass


_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2})(?::(\d{2}))?$")


def parse_time(text: str) -> float:
    """'HH:MM[:SS]' -> seconds since midnight."""
    m = _TIME_RE.match(str(text).strip())
    if not m:
        raise ConfigError(f"bad time-of-day {text!r} (expected HH:MM[:SS])")
    h, mnt, s = int(m.group(1)), int(m.group(2)), int(m.group(3) or 0)
    if h > 23 or mnt > 59 or s > 59:
        raise ConfigError(f"bad time-of-day {text!r}")
    return h * 3600.0 + mnt * 60.0 + s


_MAC_RE = re.compile(r"^([0-9a-f]{2}:){5}[0-9a-f]{2}$")

DEVICE_ROLES = ("ems", "pv", "bss", "load", "meter")


@dataclass
class ScenarioConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls(raw=data, base_dir=path.parent)

    # convenience accessors ------------------------------------------------

    @property
    def name(self) -> str:
        return str(self.raw.get("name", "scenario"))

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def clock(self) -> dict:
        return self.raw.get("clock", {})

    @property
    def start_s(self) -> float:
        return parse_time(self.clock.get("start", "09:15:00"))

    @property
    def end_s(self) -> float:
        return parse_time(self.clock.get("end", "15:00:00"))

    @property
    def step_s(self) -> float:
        return float(self.clock.get("step_s", 1.0))

    @property
    def devices(self) -> dict:
        return self.raw.get("devices", {})

    @property
    def attack(self) -> dict | None:
        return self.raw.get("attack")

    def profile_path(self, which: str) -> Path:
        entry = self.raw.get("profiles", {}).get(which, {})
        return (self.base_dir / str(entry.get("file", f"{which}.csv"))).resolve()


def validate(cfg: ScenarioConfig) -> list[str]:
    """All invariant violations, as 'path: reason' strings; empty if valid."""
    issues: list[str] = []

    def check(cond: bool, path: str, reason: str) -> None:
        if not cond:
            issues.append(f"{path}: {reason}")

    try:
        start, end, step = cfg.start_s, cfg.end_s, cfg.step_s
        check(start < end, "clock", "start must precede end")
        check(step > 0, "clock.step_s", "must be > 0")
    except ConfigError as exc:
        issues.append(f"clock: {exc}")
        start = end = 0.0

    subnet_str = cfg.raw.get("network", {}).get("subnet", "192.168.10.0/24")
    try:
        subnet = ipaddress.IPv4Network(subnet_str)
    except ValueError:
        issues.append(f"network.subnet: invalid subnet {subnet_str!r}")
        subnet = None

    seen_ip: dict[str, str] = {}
    seen_mac: dict[str, str] = {}
    nodes = {role: cfg.devices.get(role) for role in DEVICE_ROLES}
    if cfg.attack is not None:
        nodes["attack"] = cfg.attack
    for role, node in nodes.items():
        path = f"devices.{role}" if role in DEVICE_ROLES else "attack"
        if not isinstance(node, dict):
            issues.append(f"{path}: missing section")
            continue
        ip, mac = str(node.get("ip", "")), str(node.get("mac", "")).lower()
        check(_MAC_RE.match(mac) is not None, f"{path}.mac",
              f"invalid MAC {mac!r}")
        try:
            addr = ipaddress.IPv4Address(ip)
            if subnet is not None:
                check(addr in subnet, f"{path}.ip",
                      f"{ip} outside subnet {subnet}")
        except ValueError:
            issues.append(f"{path}.ip: invalid IPv4 address {ip!r}")
        check(ip not in seen_ip, f"{path}.ip",
              f"duplicate IP {ip} (also {seen_ip.get(ip)})")
        check(mac not in seen_mac, f"{path}.mac",
              f"duplicate MAC {mac} (also {seen_mac.get(mac)})")
        seen_ip.setdefault(ip, path)
        seen_mac.setdefault(mac, path)

    for which in ("load", "pv"):
        p = cfg.profile_path(which)
        check(p.is_file(), f"profiles.{which}.file", f"{p} does not exist")
        entry = cfg.raw.get("profiles", {}).get(which, {})
        check(float(entry.get("factor", 1.0)) > 0,
              f"profiles.{which}.factor", "must be > 0")

    ems = cfg.raw.get("ems", {})
    period = float(ems.get("period_s", 5.0))
    check(period >= cfg.step_s if not issues else True,
          "ems.period_s", "must be >= clock.step_s")
    check(float(ems.get("deadband_kw", 0.1)) >= 0,
          "ems.deadband_kw", "must be >= 0")

    bss = cfg.devices.get("bss") or {}
    soc0 = float(bss.get("initial_soc_pct", 50.0))
    check(0 <= soc0 <= 100, "devices.bss.initial_soc_pct", "must be in [0, 100]")
    check(0 < float(bss.get("efficiency", 1.0)) <= 1,
          "devices.bss.efficiency", "must be in (0, 1]")

    if cfg.attack is not None and isinstance(cfg.attack, dict):
        try:
            a_start = parse_time(cfg.attack.get("start", "11:30:00"))
            a_end = parse_time(cfg.attack.get("end", "14:15:00"))
            check(a_start < a_end, "attack", "start must precede end")
            check(a_start >= start and a_end <= end, "attack",
                  "attack window must lie within the run window")
        except ConfigError as exc:
            issues.append(f"attack: {exc}")
        charge = float(cfg.attack.get("bss_charge_kw", 14.0))
        rated = float(bss.get("rated_kw", 15.0))
        check(abs(charge) <= rated, "attack.bss_charge_kw",
              f"|{charge}| exceeds BSS rating {rated}")
        check(float(cfg.attack.get("pv_limit_kw", 3.5)) >= 0,
              "attack.pv_limit_kw", "must be >= 0")

    for f in cfg.raw.get("output", {}).get("formats", list(FORMATS)):
        check(f in FORMATS, "output.formats", f"unsupported format {f!r}")

    return issues


@dataclass
class Simulation:
    config: ScenarioConfig
    scheduler: Scheduler
    network: Network
    capture: Capture
    grid: dev.GridSimulator
    ems: EmsController
    attacker: Attacker | None = None
    formats: tuple[str, ...] = FORMATS

    def run(self, until_s: float | None = None,
            realtime: bool = False) -> RunSummary:
        return self.scheduler.run(
            self.config.end_s if until_s is None else until_s,
            realtime=realtime)

    def export(self, outdir: str | Path) -> dict:
        return self.capture.export(outdir, self.formats)


def build(cfg: ScenarioConfig) -> Simulation:
    """Wire up all simulators for a validated scenario config."""
    issues = validate(cfg)
    if issues:
        raise ConfigError("; ".join(issues))

    step_s = cfg.step_s
    clock = SimClock(epoch_s=cfg.start_s, step_s=step_s)
    scheduler = Scheduler(clock)

    net_cfg = cfg.raw.get("network", {})
    expiry_s = net_cfg.get("arp_cache_expiry_s")
    network = Network(
        subnet=net_cfg.get("subnet", "192.168.10.0/24"),
        cache_expiry_steps=(None if expiry_s is None
                            else max(1, round(float(expiry_s) / step_s))))

    d = cfg.devices
    hosts = {}
    for role in DEVICE_ROLES:
        node = d[role]
        hosts[role] = network.attach(Endpoint(
            id=role, mac=str(node["mac"]).lower(), ip=str(node["ip"])))

    prof = {}
    for which in ("load", "pv"):
        entry = cfg.raw.get("profiles", {}).get(which, {})
        with cfg.profile_path(which).open("rb") as fh:
            p = load_profile(fh, interpolation=entry.get("interpolation", "hold"))
        clamp = entry.get("clamp_max_kw")
        prof[which] = scale(p, ScalingRule(
            factor=float(entry.get("factor", 1.0)),
            clamp_max_kw=None if clamp is None else float(clamp)))

    bss_cfg = d["bss"]
    capacity = float(bss_cfg.get("capacity_kwh", 22.0))
    grid = dev.GridSimulator(
        pv=PvState(rated_kw=float(d["pv"].get("rated_kw", 36.0))),
        bss=BssState(
            capacity_kwh=capacity,
            rated_kw=float(bss_cfg.get("rated_kw", 15.0)),
            soc_kwh=capacity * float(bss_cfg.get("initial_soc_pct", 50.0)) / 100,
            efficiency=float(bss_cfg.get("efficiency", 1.0))),
        load=LoadState(rated_kw=float(d["load"].get("rated_kw", 20.0))),
        load_profile=prof["load"], pv_profile=prof["pv"], step_s=step_s,
        transformer_rated_kva=float(d["meter"].get("transformer_rated_kva",
                                                   630.0)))

    ems_cfg = cfg.raw.get("ems", {})
    policy = ControlPolicy(
        period_s=float(ems_cfg.get("period_s", 5.0)),
        deadband_kw=float(ems_cfg.get("deadband_kw", 0.1)),
        bss_rated_kw=float(bss_cfg.get("rated_kw", 15.0)),
        manages_pv_limit=bool(ems_cfg.get("manages_pv_limit", False)),
        request_timeout_steps=int(ems_cfg.get("request_timeout_steps", 5)))
    ems = EmsController(hosts["ems"], policy, meter_ip=hosts["meter"].ip,
                        pv_ip=hosts["pv"].ip, bss_ip=hosts["bss"].ip,
                        step_s=step_s)

    attacker = None
    window = None
    if cfg.attack is not None:
        a = cfg.attack
        plan = AttackPlan(
            start_s=parse_time(a.get("start", "11:30:00")),
            end_s=parse_time(a.get("end", "14:15:00")),
            pv_limit_kw=float(a.get("pv_limit_kw", 3.5)),
            bss_charge_kw=float(a.get("bss_charge_kw", 14.0)),
            repoison_period_s=float(a.get("repoison_period_s", 10.0)),
            recon_lead_s=float(a.get("recon_lead_s", 60.0)))
        atk_host = network.attach(Endpoint(
            id="attacker", mac=str(a["mac"]).lower(), ip=str(a["ip"]),
            promiscuous=True, accept_foreign=True))
        attacker = Attacker(atk_host, plan, step_s)
        window = (plan.start_s, plan.end_s)

    role_names = {"ems": "EMS", "pv": "PV", "bss": "BSS",
                  "load": "LoadBank", "meter": "Meter"}
    roles_by_ip = {hosts[r].ip: (role_names[r], hosts[r].mac)
                   for r in DEVICE_ROLES}
    if attacker is not None:
        roles_by_ip[attacker.host.ip] = ("Attacker", attacker.host.mac)
    capture = Capture(step_s=step_s, epoch_s=cfg.start_s,
                      attack_window=window, roles_by_ip=roles_by_ip,
                      date=str(cfg.clock.get("date", "2021-06-15")))
    capture.deadband_kw = policy.deadband_kw
    network.frame_sink = capture.record_frame

    scheduler.register(grid.handle())
    pv_dev = dev.PvDevice(hosts["pv"])
    bss_dev = dev.BssDevice(hosts["bss"], capacity)
    scheduler.register(pv_dev.handle())
    scheduler.register(bss_dev.handle())
    scheduler.register(dev.LoadDevice(hosts["load"]).handle())
    scheduler.register(dev.MeterDevice(hosts["meter"]).handle())
    scheduler.register(ems.handle())
    if attacker is not None:
        scheduler.register(attacker.handle())

    scheduler.add_hook(network.transport)

    def sample_hook(step: int) -> None:
        soc_kwh = scheduler.value(dev.SIG_BSS_SOC, 0.0)
        capture.record_sample(
            step,
            pv_kw=scheduler.value(dev.SIG_PV_OUTPUT, 0.0),
            bss_kw=scheduler.value(dev.SIG_BSS_ACTUAL, 0.0),
            load_kw=scheduler.value(dev.SIG_LOAD_DEMAND, 0.0),
            transformer_kw=scheduler.value(dev.SIG_TRANSFORMER, 0.0),
            soc_pct=100.0 * soc_kwh / capacity,
            pv_available_kw=scheduler.value(dev.SIG_PV_AVAILABLE, 0.0))

    scheduler.add_hook(sample_hook)

    formats = tuple(cfg.raw.get("output", {}).get("formats", list(FORMATS)))
    return Simulation(config=cfg, scheduler=scheduler, network=network,
                      capture=capture, grid=grid, ems=ems, attacker=attacker,
                      formats=formats)
