"""gridtwin: a deterministic cyber-physical twin of a small smart-grid
segment, with an emulated Modbus TCP network, an ARP-spoof MITM
attacker, and labeled process/communication dataset export."""

from importlib.resources import files as _files

__version__ = "0.1.0"


def data_path(*parts: str):
    """Path to a bundled data file (golden configs, demo profiles)."""
    return _files(__name__).joinpath("data", *parts)
