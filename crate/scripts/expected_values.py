"""Closed-form flux periods for the built-in fixtures.

Writes scripts/expected_values.json. The relative cycle runs across each
annulus (s from 0 to 1 at fixed th), the absolute cycle around it (th from 0
to 1 at fixed s). With z_k = x_k + i y_k, omega = sum dx_k ^ dy_k and
Omega = dz_1 ^ ... ^ dz_n.
"""

import json
from pathlib import Path

import sympy as sp

t, s, th = sp.symbols("t s th", real=True)
u, u1, u2, c = sp.symbols("u u1 u2 c", real=True)
NAMES = {"t": t, "s": s, "th": th, "u": u, "u1": u1, "u2": u2, "c": c}


def omega(a, b):
    n = len(a) // 2
    return sum(a[2 * k] * b[2 * k + 1] - a[2 * k + 1] * b[2 * k] for k in range(n))


def im_omega(vectors):
    n = len(vectors[0]) // 2
    m = sp.Matrix([[v[2 * k] + sp.I * v[2 * k + 1] for v in vectors] for k in range(n)])
    return sp.im(sp.expand(m.det()))


def periods(position, params, path):
    """RF over s in [0, 1] and |SF| over th in [0, 1] for a straight-line path."""
    sub = dict(zip(params, path))
    f = [sp.sympify(p, locals=NAMES).subs(sub) for p in position]
    ft = [sp.diff(c, t) for c in f]
    fs = [sp.diff(c, s) for c in f]
    rf = sp.integrate(sp.integrate(omega(ft, fs), (s, 0, 1)), (t, 0, 1))
    if len(f) == 2:
        sf = sp.integrate(im_omega([ft]), (t, 0, 1))
    else:
        fth = [sp.diff(c, th) for c in f]
        sf = sp.integrate(sp.integrate(im_omega([ft, fth]), (th, 0, 1)), (t, 0, 1))
    return sp.nsimplify(rf), sp.Abs(sp.nsimplify(sf))


def main():
    out = {}

    rf, sf = periods(["0.5*s", "u"], [u], [sp.Rational(3, 10) * t])
    out["interval_c1"] = {"path": "straight", "rf": [float(rf)], "sf_abs": [float(sf)]}

    rf, sf = periods(["0.5*s", "u", "th", "0.25"], [u], [sp.Rational(3, 10) * t])
    out["cylinder_translation"] = {"path": "straight", "rf": [float(rf)], "sf_abs": [float(sf)]}

    handle = [
        "(0.5 - 0.2*c)*s",
        "(1 - c)*(u1 + 0.5*u2) + c*(u2 - 0.3*u1 + 0.2*u1**2)",
        "th + 0.2*s",
        "0.25 + 0.5*c",
    ]
    path = [sp.Rational(1, 5) * t, sp.Rational(1, 10) * t]
    rfs, sfs = [], []
    for comp in (0, 1):
        pos = [sp.sympify(p, locals=NAMES).subs(c, comp) for p in handle]
        rf, sf = periods(pos, [u1, u2], path)
        rfs.append(float(rf))
        sfs.append(float(sf))
    out["two_handle"] = {"path": "straight", "rf": rfs, "sf_abs": sfs}

    dest = Path(__file__).with_suffix(".json")
    dest.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
