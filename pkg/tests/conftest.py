import pytest
import yaml

from gridtwin import data_path
from gridtwin.scenario import ScenarioConfig, build

GOLDEN_NAMES = ("normal", "attack")


def load_golden(name: str) -> ScenarioConfig:
    return ScenarioConfig.load(data_path("configs", f"{name}.yaml"))


def run_golden(name: str):
    sim = build(load_golden(name))
    summary = sim.run()
    return sim, summary


@pytest.fixture(scope="session")
def golden_runs(tmp_path_factory):
    """One completed run + export per golden scenario, shared by tests."""
    out = {}
    for name in GOLDEN_NAMES:
        sim, summary = run_golden(name)
        outdir = tmp_path_factory.mktemp(f"golden-{name}")
        sim.export(outdir)
        out[name] = {"sim": sim, "summary": summary, "outdir": outdir}
    return out


TINY_LOAD = "t_s,value_kw\n0,5.0\n60,6.0\n120,5.4\n180,6.2\n240,5.6\n"
TINY_PV = "t_s,value_kw\n0,4.0\n90,4.6\n210,4.1\n"


def write_tiny_config(tmp_path, attack=False, **overrides):
    """A 5-minute scenario on 1-minute profiles, for fast integration tests."""
    (tmp_path / "load.csv").write_text(TINY_LOAD)
    (tmp_path / "pv.csv").write_text(TINY_PV)
    cfg = {
        "name": "tiny-attack" if attack else "tiny",
        "seed": 1,
        "clock": {"start": "09:15:00", "end": "09:20:00", "step_s": 1.0,
                  "date": "2021-06-15"},
        "network": {"subnet": "192.168.10.0/24"},
        "devices": {
            "ems": {"ip": "192.168.10.10", "mac": "02:4d:73:00:00:10"},
            "pv": {"ip": "192.168.10.21", "mac": "02:4d:73:00:00:21",
                   "rated_kw": 36.0},
            "bss": {"ip": "192.168.10.22", "mac": "02:4d:73:00:00:22",
                    "rated_kw": 15.0, "capacity_kwh": 22.0,
                    "initial_soc_pct": 50.0},
            "load": {"ip": "192.168.10.23", "mac": "02:4d:73:00:00:23",
                     "rated_kw": 20.0},
            "meter": {"ip": "192.168.10.30", "mac": "02:4d:73:00:00:30"},
        },
        "profiles": {
            "load": {"file": "load.csv", "interpolation": "hold"},
            "pv": {"file": "pv.csv", "interpolation": "hold"},
        },
        "ems": {"period_s": 5.0, "deadband_kw": 0.1},
        "attack": None,
        "output": {"formats": ["process", "flows", "pcap", "graph", "summary"]},
    }
    if attack:
        cfg["attack"] = {
            "ip": "192.168.10.66", "mac": "02:4d:73:00:00:66",
            "start": "09:17:00", "end": "09:19:00",
            "pv_limit_kw": 3.5, "bss_charge_kw": 14.0,
            "repoison_period_s": 10.0, "recon_lead_s": 30.0,
        }
    for key, value in overrides.items():
        cfg[key] = value
    path = tmp_path / ("attack.yaml" if attack else "normal.yaml")
    path.write_text(yaml.safe_dump(cfg))
    return path
