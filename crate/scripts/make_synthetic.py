"""Builds data/aids_synthetic.csv from `pge1 sample` output.

    pge1 sample --fix a=10.5 --fix delta=1.9 --fix lambda=0.004 --fix q=0.5 \
        --fix eta1=10.5 --fix eta2=3 --n1 38 --n2 256 --seed 1986 --out raw.csv
    python3 scripts/make_synthetic.py raw.csv data/aids_synthetic.csv

Group x becomes ages 1..16 and group y ages 17..86, assigned cyclically.
Latent times are rounded to 0.01 month and one zero-time row is appended so
the exclusion rule is exercised.
"""

import csv
import sys

src, dst = sys.argv[1], sys.argv[2]
with open(src) as f:
    rows = list(csv.DictReader(f))

out = []
teen = adult = 0
for r in rows:
    incu = round(float(r["value"]), 2)
    if r["group"] == "x":
        age = 1 + teen % 16
        teen += 1
    else:
        age = 17 + adult % 70
        adult += 1
    out.append((incu, age))
out.append((0, 40))

with open(dst, "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["incu", "age"])
    for incu, age in out:
        w.writerow([incu, age])
