"""Synthetic emergency-department-style sample for integration tests and demos.

Mimics the shape of a triage extract: demographics as covariates, vitals and
treatment time as proxies driven by a latent severity score, a binary
disposition treatment, and a binary 30-day outcome. Values are plausible but
entirely synthetic; missingness is injected so the ingestion policy has work
to do.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

__all__ = ["write_ehr_sample", "EHR_COLUMNS"]

EHR_COLUMNS = (
    "age",
    "gender",
    "race",
    "insurance",
    "marital_status",
    "heart_rate",
    "systolic_bp",
    "diastolic_bp",
    "resp_rate",
    "o2_sat",
    "temperature",
    "treatment_time",
    "acuity",
    "disposition",
    "outcome_30d",
)

_ROLE_MAP = {
    "roles": {
        "age": "covariate",
        "gender": "covariate",
        "race": "covariate",
        "insurance": "covariate",
        "marital_status": "covariate",
        "heart_rate": "proxy",
        "systolic_bp": "proxy",
        "diastolic_bp": "proxy",
        "resp_rate": "proxy",
        "o2_sat": "proxy",
        "temperature": "proxy",
        "treatment_time": "proxy",
        "acuity": "proxy",
        "disposition": "treatment",
        "outcome_30d": "outcome",
    },
    "categorical": ["gender", "race", "insurance", "marital_status"],
    "treatment_coding": {"ADMITTED": 1, "HOME": 0},
    "outcome_coding": {"yes": 1, "no": 0},
    "reference_levels": {"race": "White"},
}

# (level, probability) tables for the categorical covariates.
_RACE = (("White", 0.66), ("Black", 0.18), ("Hispanic", 0.07), ("Asian", 0.05), ("Other", 0.04))
_INSURANCE = (("Medicare", 0.49), ("Other", 0.33), ("Medicaid", 0.18))
_MARITAL = (("Married", 0.45), ("Widowed", 0.25), ("Single", 0.18), ("Divorced", 0.12))


def _draw_levels(rng, table, n):
    levels = [lv for lv, _ in table]
    probs = np.asarray([p for _, p in table])
    return rng.choice(levels, size=n, p=probs / probs.sum())


def write_ehr_sample(
    out_dir, n: int = 800, seed: int = 0, missing_rate: float = 0.02
) -> tuple[Path, Path]:
    """Write ``sample.csv`` and ``roles.json`` under ``out_dir``; returns both paths.

    A handful of rows get a missing treatment/outcome and a handful exceed
    the three-missing-cells exclusion, exercising every drop rule.
    """
    rng = np.random.default_rng(seed)
    severity = rng.standard_normal(n)

    age = 74.0 + 4.0 * severity + rng.normal(0, 6.0, n)
    heart_rate = 78.0 + 8.0 * severity + rng.normal(0, 12.0, n)
    systolic = 143.0 - 6.0 * severity + rng.normal(0, 22.0, n)
    diastolic = 74.0 - 4.0 * severity + rng.normal(0, 13.0, n)
    resp = 17.9 + 1.2 * severity + rng.normal(0, 2.0, n)
    o2 = 97.9 - 1.0 * severity + rng.normal(0, 2.0, n)
    temp = 98.0 + 0.2 * severity + rng.normal(0, 0.8, n)
    treat_time = np.maximum(0.5, 10.0 - 3.0 * severity + rng.normal(0, 5.0, n))
    acuity = np.where(severity + rng.normal(0, 0.8, n) > 0.8, 2, 3)
    admitted = (0.9 * severity + rng.normal(0, 1.0, n) > 0.1).astype(int)
    outcome_prob = 1.0 / (1.0 + np.exp(-(0.8 * severity - 0.1 * admitted - 1.6)))
    outcome = (rng.uniform(size=n) < outcome_prob).astype(int)

    gender = rng.choice(["Female", "Male"], size=n)
    race = _draw_levels(rng, _RACE, n)
    insurance = _draw_levels(rng, _INSURANCE, n)
    marital = _draw_levels(rng, _MARITAL, n)

    rows = []
    for i in range(n):
        rows.append(
            {
                "age": f"{age[i]:.1f}",
                "gender": gender[i],
                "race": race[i],
                "insurance": insurance[i],
                "marital_status": marital[i],
                "heart_rate": f"{heart_rate[i]:.1f}",
                "systolic_bp": f"{systolic[i]:.1f}",
                "diastolic_bp": f"{diastolic[i]:.1f}",
                "resp_rate": f"{resp[i]:.1f}",
                "o2_sat": f"{o2[i]:.1f}",
                "temperature": f"{temp[i]:.1f}",
                "treatment_time": f"{treat_time[i]:.1f}",
                "acuity": str(int(acuity[i])),
                "disposition": "ADMITTED" if admitted[i] else "HOME",
                "outcome_30d": "yes" if outcome[i] else "no",
            }
        )

    # Inject missingness: scattered cells, some demographic holes, plus rows
    # hitting each exclusion rule.
    maskable = ["insurance", "marital_status", "race", "temperature", "o2_sat", "resp_rate"]
    for i in range(n):
        for col in maskable:
            if rng.uniform() < missing_rate:
                rows[i][col] = ""
    for i in rng.choice(n, size=max(2, n // 200), replace=False):
        rows[i]["outcome_30d"] = "NA"
    for i in rng.choice(n, size=max(2, n // 200), replace=False):
        for col in ("heart_rate", "systolic_bp", "diastolic_bp"):
            rows[i][col] = ""

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sample.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=EHR_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    roles_path = out_dir / "roles.json"
    roles_path.write_text(json.dumps(_ROLE_MAP, indent=2) + "\n")
    return csv_path, roles_path
