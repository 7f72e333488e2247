#!/usr/bin/env python3
"""Calibrate the dimensional constant c1(n) over the frozen battery.

c1 is the largest ratio forced by any battery case, both in the global bound
directly and in the principal-part subproblem arising inside the local bound;
the result is stored in hermlab.certify.C1_FROZEN (times C1_SAFETY at use).

Run:  python scripts/calibrate_c1.py
"""
import numpy as np

from hermlab import certify as C


def main():
    bat = C.load_battery()
    needs = []
    for case in bat["firstmax"]:
        xs, ts, u, f, a, b, c = C.battery_case_fields(case)
        bounds = C.battery_bounds(case, a, b, c)
        cert = C.check_firstmax(xs, ts, u, f, b, c, a, bounds, c1=0.0)
        coeff = cert.extras["c1_coefficient"]
        gap = cert.extras["sup_u"] - np.exp(bounds.k * bounds.T) * cert.extras["sup_pb_u_plus"]
        if coeff > 0 and gap > 0:
            needs.append((case["id"], gap / coeff))
        else:
            needs.append((case["id"], 0.0))
    for case in bat["parmax"]:
        xs, ts, u, f, a, b, c = C.battery_case_fields(case)
        # parmax runs on [-T, 0]
        ts = ts - ts[-1]
        bounds = C.battery_bounds(case, a, b, c)
        chain = C.parmax_chain(xs, ts, u, f, bounds)
        Ct = bounds.C_tilde()
        denom = chain["f_norm"] + Ct * chain["vz_norm"]
        if denom > 0 and chain["sup_v"] > 0:
            needs.append((case["id"] + "-inner", chain["sup_v"] / denom))
    needs.sort(key=lambda kv: -kv[1])
    for cid, v in needs[:10]:
        print(f"{cid:>12s}: c1 needed {v:.10f}")
    c1 = max(v for _, v in needs)
    print(f"\ncalibrated c1(1) = {c1:.10f}")
    print(f"frozen in certify.C1_FROZEN: {c1:.10f} (applied with safety {C.C1_SAFETY})")


if __name__ == "__main__":
    main()
