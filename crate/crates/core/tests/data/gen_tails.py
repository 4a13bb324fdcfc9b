"""Regenerates tail_reference.json (F and t tail probabilities) with mpmath
at 40 significant digits.

    python3 gen_tails.py
"""
import json

import mpmath as mp

mp.mp.dps = 40


def f_sf(x, d1, d2):
    x, d1, d2 = mp.mpf(x), mp.mpf(d1), mp.mpf(d2)
    return float(mp.betainc(d2 / 2, d1 / 2, 0, d2 / (d2 + d1 * x), regularized=True))


def t_two_sided(t, df):
    t, df = mp.mpf(t), mp.mpf(df)
    return float(mp.betainc(df / 2, mp.mpf(1) / 2, 0, df / (df + t * t), regularized=True))


def main():
    f_rows = [
        [x, d1, d2, f_sf(x, d1, d2)]
        for x in [0.05, 0.31, 1.0, 1.93, 4.1, 9.5, 30.0]
        for d1 in [1, 2, 3, 7.5]
        for d2 in [1, 4.2, 10, 56.7, 362, 1000, 5000]
    ]
    t_rows = [
        [x, df, t_two_sided(x, df)]
        for x in [0.2, 1.5, 2.7, 6.0]
        for df in [1, 3.3, 12, 120, 2000]
    ]
    with open("tail_reference.json", "w") as fh:
        json.dump({"f_sf": f_rows, "t_two_sided": t_rows}, fh, indent=0)


if __name__ == "__main__":
    main()
