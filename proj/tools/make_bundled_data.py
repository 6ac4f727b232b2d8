#!/usr/bin/env python3
"""Regenerate the synthetic datasets under data/.

Every file written here is a synthetic stand-in with realistic magnitudes,
not measured data. Run from the repository root:

    python3 tools/make_bundled_data.py
"""
import json
import math
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parent.parent / "data"

# Lorentz-Drude parameters for evaporated gold (Rakic et al., Appl. Opt. 37, 5271).
AU_WP = 9.03
AU_F0, AU_G0 = 0.760, 0.053
AU_OSC = [  # f, Gamma (eV), omega (eV)
    (0.024, 0.241, 0.415),
    (0.010, 0.345, 0.830),
    (0.071, 0.870, 2.969),
    (0.601, 2.494, 4.304),
    (4.384, 2.214, 13.32),
]


def gold_eps2(w):
    eps = 1.0 - AU_F0 * AU_WP**2 / (w * (w + 1j * AU_G0))
    for f, g, w0 in AU_OSC:
        eps += f * AU_WP**2 / (w0**2 - w**2 - 1j * w * g)
    return eps.imag


def write_eps2(path, energies, label):
    with open(path, "w") as fh:
        fh.write(f"# {label}\n")
        fh.write("energy_eV,eps2\n")
        for e in energies:
            fh.write(f"{e:.9g},{gold_eps2(e):.9g}\n")


def gold():
    low = np.round(np.arange(0.73, 6.3 + 1e-9, 0.01), 6)
    write_eps2(DATA / "gold_ellipsometry.csv", low,
               "synthetic stand-in for ellipsometry of evaporated gold, Lorentz-Drude model")
    high = np.geomspace(6.32, 100.0, 160)
    write_eps2(DATA / "gold_high_energy.csv", high,
               "synthetic stand-in for handbook gold data above 6.3 eV, Lorentz-Drude model")
    model = {
        "kind": "tabulated",
        "label": "gold",
        "datasets": [
            {"file": "gold_ellipsometry.csv", "label": "ellipsometry (synthetic)"},
            {"file": "gold_high_energy.csv", "label": "high energy (synthetic)"},
        ],
        "drude": {"omega_p": 8.84, "omega_tau": 0.042},
        "drude_sets": {
            "a": {"omega_p": 8.84, "omega_tau": 0.042},
            "b": {"omega_p": 7.50, "omega_tau": 0.061},
        },
        "crossover_eV": 0.73,
        "high_energy_tail": True,
        "points_per_decade": 400,
    }
    (DATA / "gold.json").write_text(json.dumps(model, indent=2) + "\n")


def water():
    # Debye + infrared + ultraviolet oscillators in the damped-oscillator
    # form used for water in the colloid literature; approximate values.
    uv = [  # omega (eV), f (eV^2), g (eV)
        (8.25, 2.68, 0.51), (10.0, 5.67, 0.88), (11.4, 12.0, 1.54),
        (13.6, 26.3, 2.05), (17.8, 33.8, 2.80), (25.2, 92.8, 4.54),
    ]
    ir = [  # omega (eV), strength, damping (eV)
        (0.0207, 1.43, 0.0190), (0.069, 0.38, 0.0440), (0.092, 0.51, 0.0430),
        (0.200, 0.09, 0.0065), (0.420, 0.04, 0.0160),
    ]
    osc = [{"strength": s, "omega_eV": w, "damping_eV": g} for w, s, g in ir]
    osc += [{"strength": f / (w * w), "omega_eV": w, "damping_eV": g} for w, f, g in uv]
    model = {
        "kind": "oscillator",
        "label": "water",
        "debye": {"strength": 72.4, "omega_eV": 7.93e-5},
        "oscillators": osc,
        "static_eps": 77.0,
    }
    (DATA / "water.json").write_text(json.dumps(model, indent=2) + "\n")


def patch():
    rng = np.random.default_rng(20170101)
    hbar, c = 1.054571817e-34, 299792458.0
    R = 40e-6
    d = np.geomspace(40e-9, 2e-6, 60)
    ideal = hbar * c * math.pi**3 * R / (120 * d**4)
    # Patch gradients near 1% of a gold Casimir gradient (about half the ideal one).
    base = 0.005 * ideal * (1 + d / 300e-9) ** -0.5
    scales = 1.0 + 0.25 * rng.standard_normal(4)
    with open(DATA / "patch_gradients.csv", "w") as fh:
        fh.write("# synthetic patch-potential force gradients (N/m), four sample realizations\n")
        fh.write("d_m,dFdd_1,dFdd_2,dFdd_3,dFdd_4\n")
        for i, di in enumerate(d):
            vals = ",".join(f"{base[i] * s:.9g}" for s in scales)
            fh.write(f"{di:.9g},{vals}\n")


def perimeter():
    rng = np.random.default_rng(32540)
    theta = np.linspace(0.0, 2 * math.pi, 720, endpoint=False)
    r = 32.54e-6 + 0.27e-6 * np.cos(2 * theta + 0.4) + 0.02e-6 * rng.standard_normal(theta.size)
    with open(DATA / "sphere_perimeter.csv", "w") as fh:
        fh.write("# synthetic sphere perimeter profile, radius vs angle\n")
        fh.write("theta_rad,radius_m\n")
        for t, ri in zip(theta, r):
            fh.write(f"{t:.9g},{ri:.9g}\n")


if __name__ == "__main__":
    DATA.mkdir(exist_ok=True)
    gold()
    water()
    patch()
    perimeter()
