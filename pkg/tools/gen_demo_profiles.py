#!/usr/bin/env python3
"""Regenerate the bundled demo profiles.

Synthetic day curves for 09:15-15:00: a morning load peak near 10:00
with smaller bumps early afternoon, and a midday PV hump. Knots are
240 s apart per profile, interleaved 120 s, with an alternating +/-0.3 kW
offset so every knot moves the residual by more than the EMS deadband.
The script checks the properties the golden scenarios rely on and
prints the resulting ranges.
"""

import math
from pathlib import Path

RUN_S = 20700          # 09:15 -> 15:00
KNOT_SPACING = 240
ZIGZAG = 0.4

OUT = Path(__file__).resolve().parent.parent / "src/gridtwin/data/profiles"


def load_trend(t: float) -> float:
    v = 4.5
    v += 3.5 * math.exp(-(((t - 2700) / 1800) ** 2))    # 10:00 peak
    v += 1.2 * math.exp(-(((t - 15300) / 1500) ** 2))   # 13:30 bump
    v += 1.0 * math.exp(-(((t - 18900) / 1500) ** 2))   # 14:30 bump
    return v


def pv_trend(t: float) -> float:
    return 7.5 * math.exp(-(((t - 11700) / 9000) ** 2))  # 12:30 hump


def knots(trend, offset: int):
    pts = []
    for i, t in enumerate(range(offset, RUN_S + 1, KNOT_SPACING)):
        v = trend(t) + (ZIGZAG if i % 2 == 0 else -ZIGZAG)
        pts.append((t, round(max(v, 0.0), 2)))
    return pts


def write_csv(path: Path, pts):
    lines = ["t_s,value_kw"] + [f"{t},{v:.2f}" for t, v in pts]
    path.write_text("\n".join(lines) + "\n")


def sample_hold(pts, t):
    v = pts[0][1]
    for tt, vv in pts:
        if tt <= t:
            v = vv
        else:
            break
    return v


def main():
    load_pts = knots(load_trend, 0)
    pv_pts = knots(pv_trend, 120)

    for name, pts in (("load", load_pts), ("pv", pv_pts)):
        diffs = [abs(b[1] - a[1]) for a, b in zip(pts, pts[1:])]
        assert min(diffs) > 0.3, f"{name}: knot change {min(diffs)} too small"
        print(f"{name}: {len(pts)} knots, values "
              f"{min(v for _, v in pts):.2f}..{max(v for _, v in pts):.2f}, "
              f"min knot change {min(diffs):.2f}")

    # residual within the BSS rating, and SOC interior under ideal balancing
    soc, soc_min, soc_max, res_max = 11.0, 11.0, 11.0, 0.0
    for t in range(0, RUN_S):
        res = sample_hold(load_pts, t) - sample_hold(pv_pts, t)
        res_max = max(res_max, abs(res))
        soc -= res / 3600.0
        soc_min, soc_max = min(soc_min, soc), max(soc_max, soc)
    print(f"residual max {res_max:.2f} kW; ideal-balancing SOC range "
          f"{soc_min:.2f}..{soc_max:.2f} kWh (start 11.0)")
    assert res_max < 15.0
    assert 1.0 < soc_min and soc_max < 21.0

    # PV availability exceeds the 3.5 kW attack limit through the window
    for t in range(8100, 18000, 60):
        assert sample_hold(pv_pts, t) > 3.5, f"pv <= 3.5 at t={t}"
    assert any(sample_hold(pv_pts, t) < 3.5 for t in range(18000, RUN_S, 60))

    OUT.mkdir(parents=True, exist_ok=True)
    write_csv(OUT / "load.csv", load_pts)
    write_csv(OUT / "pv.csv", pv_pts)
    print(f"wrote {OUT / 'load.csv'} and {OUT / 'pv.csv'}")


if __name__ == "__main__":
    main()
