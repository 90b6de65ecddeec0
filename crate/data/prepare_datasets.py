#!/usr/bin/env python3
"""Build the five benchmark datasets shipped under data/.

Two datasets are real data taken from the KEEL repository as bundled in the
`keel-ds` wheel on PyPI:

  * bupa.csv - BUPA liver disorders (345 rows, 6 numeric features).
  * wine.csv - red wine quality (1599 rows, 11 numeric features), binarised
    as quality >= 6 ("good"). KEEL only ships binary subsets of this table, so
    the quality grade is recovered by matching rows across subsets.

The other three are seeded synthetic surrogates. The originals are Kaggle
downloads that are not reachable from the build environment, so each
surrogate reproduces the published column layout, row count, class balance and
approximate linear separability of its original:

  * graduate.csv - graduate admissions (500 rows, 6 numeric + 1 binary).
  * bank.csv     - personal-loan marketing (7636 rows, 7 numeric + 4 binary).
  * movie.csv    - film award nominations (505 rows, 17 numeric + 1 binary).

Usage:
    pip download --no-deps -d /tmp/wheels keel-ds
    python3 data/prepare_datasets.py --keel-wheel /tmp/wheels/keel_ds-*.whl
"""

import argparse
import csv
import json
import zipfile
from collections import Counter
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent


def write(name, header, rows, schema):
    with open(HERE / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    with open(HERE / f"{name}.schema.json", "w") as fh:
        json.dump(schema, fh, indent=2)
        fh.write("\n")


def keel_rows(wheel, member):
    text = zipfile.ZipFile(wheel).read(member).decode()
    return [
        [v.strip() for v in line.split(",")]
        for line in text.splitlines()
        if line.strip() and not line.startswith("@")
    ]


def fmt(v, digits):
    return f"{v:.{digits}f}" if digits else str(int(round(v)))


def build_bupa(wheel):
    rows = keel_rows(wheel, "keel_ds/data/balanced/raw/bupa.dat")
    header = ["mcv", "alkphos", "sgpt", "sgot", "gammagt", "drinks", "selector"]
    out = [[fmt(float(v), 1 if c == 5 else 0) for c, v in enumerate(r[:6])] + [r[6]] for r in rows]
    write("bupa", header, out, {
        "label": "selector",
        "categorical": [],
        "protected": [],
        "positive_class": "2",
    })


def build_wine(wheel):
    base = "keel_ds/data/imbalanced/raw/"
    full = keel_rows(wheel, base + "winequality-red-4.dat")
    # The 8 vs 6-7 subset holds exactly the rows graded 6, 7 or 8.
    good = Counter(tuple(r[:11]) for r in keel_rows(wheel, base + "winequality-red-8_vs_6-7.dat"))
    header = [
        "fixed_acidity", "volatile_acidity", "citric_acid", "residual_sugar",
        "chlorides", "free_sulfur_dioxide", "total_sulfur_dioxide", "density",
        "pH", "sulphates", "alcohol", "quality_class",
    ]
    out = []
    for r in full:
        key = tuple(r[:11])
        label = "bad"
        if good[key] > 0:
            good[key] -= 1
            label = "good"
        out.append(list(key) + [label])
    assert sum(good.values()) == 0
    write("wine", header, out, {
        "label": "quality_class",
        "categorical": [],
        "protected": [],
        "positive_class": "good",
    })


def build_graduate(rng):
    n = 500
    gre = np.clip(np.round(rng.normal(316.5, 11.3, n)), 290, 340)
    z = (gre - 316.5) / 11.3
    toefl = np.clip(np.round(107.2 + 6.0 * (0.8 * z + 0.6 * rng.normal(size=n))), 92, 120)
    rating = np.clip(np.round(3.1 + 1.1 * (0.65 * z + 0.76 * rng.normal(size=n))), 1, 5)
    sop = np.clip(np.round(2 * (3.4 + 1.0 * (0.6 * z + 0.8 * rng.normal(size=n)))) / 2, 1, 5)
    lor = np.clip(np.round(2 * (3.5 + 0.9 * (0.55 * z + 0.83 * rng.normal(size=n)))) / 2, 1, 5)
    cgpa = np.clip(8.58 + 0.6 * (0.83 * z + 0.56 * rng.normal(size=n)), 6.8, 9.92)
    research = (rng.random(n) < 1 / (1 + np.exp(-(0.25 + 1.2 * z)))).astype(int)
    score = (
        0.35 * (gre - 316.5) / 11.3 + 0.25 * (toefl - 107.2) / 6.0 + 0.1 * (rating - 3.1)
        + 0.05 * (sop - 3.4) + 0.15 * (lor - 3.5) + 1.1 * (cgpa - 8.58) / 0.6 + 0.2 * research
    )
    score = score + rng.normal(0, 1.25, n)
    admit = (score > np.quantile(score, 0.19)).astype(int)
    header = ["gre_score", "toefl_score", "university_rating", "sop", "lor", "cgpa", "research", "admit"]
    rows = [
        [fmt(gre[i], 0), fmt(toefl[i], 0), fmt(rating[i], 0), fmt(sop[i], 1), fmt(lor[i], 1),
         fmt(cgpa[i], 2), research[i], admit[i]]
        for i in range(n)
    ]
    write("graduate", header, rows, {
        "label": "admit",
        "categorical": ["research"],
        "protected": [],
        "positive_class": "1",
    })


def build_bank(rng):
    n = 7636
    loan = (rng.random(n) < 0.41).astype(int)
    age = rng.integers(23, 68, n).astype(float)
    experience = np.clip(np.round(age - 25 + rng.normal(0, 1.2, n)), 0, 43)
    income = np.where(
        loan == 1,
        rng.normal(165.0, 30.0, n),
        np.exp(rng.normal(np.log(50.0), 0.5, n)),
    )
    income = np.clip(np.round(income), 8, 224)
    family = np.where(
        loan == 1,
        rng.choice([1, 2, 3, 4], n, p=[0.2, 0.22, 0.3, 0.28]),
        rng.choice([1, 2, 3, 4], n, p=[0.31, 0.27, 0.19, 0.23]),
    )
    education = np.where(
        loan == 1,
        rng.choice([1, 2, 3], n, p=[0.2, 0.38, 0.42]),
        rng.choice([1, 2, 3], n, p=[0.45, 0.27, 0.28]),
    )
    ccavg = np.clip(np.round(income / 38.0 + rng.normal(0, 0.9, n) + 0.8 * loan, 1), 0, 10)
    has_mortgage = rng.random(n) < 0.33
    mortgage = np.where(has_mortgage, np.clip(np.round(1.4 * income + rng.normal(0, 40, n)), 75, 635), 0)
    securities = (rng.random(n) < 0.1 + 0.03 * loan).astype(int)
    cd = (rng.random(n) < np.where(loan == 1, 0.3, 0.035)).astype(int)
    online = (rng.random(n) < 0.6).astype(int)
    card = (rng.random(n) < 0.29 + 0.3 * cd).astype(int)
    header = [
        "Age", "Experience", "Income", "Family", "CCAvg", "Education", "Mortgage",
        "SecuritiesAccount", "CDAccount", "Online", "CreditCard", "PersonalLoan",
    ]
    rows = [
        [fmt(age[i], 0), fmt(experience[i], 0), fmt(income[i], 0), family[i], fmt(ccavg[i], 1),
         education[i], fmt(mortgage[i], 0), securities[i], cd[i], online[i], card[i], loan[i]]
        for i in range(n)
    ]
    write("bank", header, rows, {
        "label": "PersonalLoan",
        "categorical": ["SecuritiesAccount", "CDAccount", "Online", "CreditCard"],
        "protected": ["Family"],
        "positive_class": "1",
    })


def build_movie(rng):
    n = 505
    budget = np.clip(rng.normal(34900, 3900, n), 19800, 48800)
    marketing = np.clip(np.exp(rng.normal(np.log(30), 0.6, n)), 20, 1800)
    production = np.clip(rng.normal(77, 13, n), 55, 110)
    coverage = np.clip(rng.normal(0.45, 0.12, n), 0.13, 0.62)
    length = np.clip(rng.normal(142, 28, n), 76, 173)
    actor = np.clip(rng.normal(8.0, 1.1, n), 3.8, 9.4)
    actress = np.clip(actor + rng.normal(0, 0.15, n), 4.0, 9.5)
    director = np.clip(actor + rng.normal(0, 0.12, n), 3.8, 9.4)
    producer = np.clip(actor + rng.normal(0, 0.15, n), 4.0, 9.6)
    critic = np.clip(rng.normal(7.8, 0.66, n), 6.6, 9.4)
    trailer = np.clip(rng.normal(449800, 68000, n), 212900, 567800)
    time_taken = np.clip(rng.normal(157, 31, n), 0, 217)
    twitter = np.clip(rng.normal(260, 100, n), 201, 2022)
    genre = rng.choice([1, 2, 3, 4], n)
    avg_age = rng.integers(3, 61, n).astype(float)
    multiplex = np.clip(np.round(rng.normal(546, 107, n)), 333, 868)
    collection = np.clip(rng.normal(45000 + 0.25 * (trailer - 449800) / 68000 * 18000, 14000, n), 10000, 100000)
    three_d = (rng.random(n) < 0.6).astype(int)
    score = (
        0.45 * (critic - 7.8) / 0.66 + 0.35 * (budget - 34900) / 3900
        + 0.3 * (trailer - 449800) / 68000 - 0.25 * (actor - 8.0) / 1.1
        + 0.2 * (collection - 45000) / 14000 + 0.15 * three_d
    )
    score = score + rng.normal(0, 1.15, n)
    label = (score > np.quantile(score, 0.46)).astype(int)
    header = [
        "Marketing_expense", "Production_expense", "Multiplex_coverage", "Budget", "Movie_length",
        "Lead_Actor_Rating", "Lead_Actress_rating", "Director_rating", "Producer_rating",
        "Critic_rating", "Trailer_views", "Time_taken", "Twitter_hastags", "Genre",
        "Avg_age_actors", "Num_multiplex", "Collection", "3D_available", "Start_Tech_Oscar",
    ]
    rows = [
        [fmt(marketing[i], 2), fmt(production[i], 2), fmt(coverage[i], 3), fmt(budget[i], 1),
         fmt(length[i], 1), fmt(actor[i], 3), fmt(actress[i], 3), fmt(director[i], 3),
         fmt(producer[i], 3), fmt(critic[i], 2), fmt(trailer[i], 0), fmt(time_taken[i], 2),
         fmt(twitter[i], 3), genre[i], fmt(avg_age[i], 0), fmt(multiplex[i], 0),
         fmt(collection[i], 0), three_d[i], label[i]]
        for i in range(n)
    ]
    write("movie", header, rows, {
        "label": "Start_Tech_Oscar",
        "categorical": ["3D_available"],
        "protected": [],
        "positive_class": "1",
    })


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--keel-wheel", required=True, type=Path)
    ap.add_argument("--seed", type=int, default=20240131)
    args = ap.parse_args()
    build_bupa(args.keel_wheel)
    build_wine(args.keel_wheel)
    build_graduate(np.random.default_rng(args.seed))
    build_bank(np.random.default_rng(args.seed + 1))
    build_movie(np.random.default_rng(args.seed + 2))


if __name__ == "__main__":
    main()
