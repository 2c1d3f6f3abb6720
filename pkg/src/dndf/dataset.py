"""Patient cohorts: CSV ingestion, validation, summaries and a seeded generator.

The generator stands in for the private hospital cohort. It reproduces the
published marginals (recovery rate by test result, no deaths below an age
knee, better female recovery, longer stays for deceased patients) and samples
every symptom flag independently given the outcome.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, RowParseError, SchemaError, ValidationError

SEXES = ("male", "female")
TEST_RESULTS = ("positive", "negative")
METHODS = ("clinical", "rtpcr")
OUTCOMES = ("recovered", "deceased")

FLAG_FIELDS = (
    "ventilator",
    "cough",
    "apnea",
    "carcinoma",
    "healthcare_staff",
    "icu_hospitalization",
)
REQUIRED_COLUMNS = (
    "id",
    "age",
    "sex",
    "test_result",
    "confirmation_method",
    *FLAG_FIELDS,
    "hospitalization_days",
    "outcome",
)

_ENUMS = {
    "sex": SEXES,
    "test_result": TEST_RESULTS,
    "confirmation_method": METHODS,
    "outcome": OUTCOMES,
}


@dataclass(frozen=True)
class PatientRecord:
    id: str
    age: int
    sex: str
    test_result: str
    confirmation_method: str
    ventilator: bool
    cough: bool
    apnea: bool
    carcinoma: bool
    healthcare_staff: bool
    icu_hospitalization: bool
    outcome: str
    hospitalization_days: int | None = None
    extra_symptoms: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.age <= 120:
            raise ValidationError(f"record {self.id}: age {self.age} outside [0, 120]")
        if self.hospitalization_days is not None and self.hospitalization_days < 0:
            raise ValidationError(f"record {self.id}: negative hospitalization_days")
        for name, allowed in _ENUMS.items():
            value = getattr(self, name)
            if value not in allowed:
                raise ValidationError(f"record {self.id}: {name}={value!r} not in {allowed}")

    def flag(self, name: str) -> bool:
        if name in FLAG_FIELDS:
            return getattr(self, name)
        return bool(self.extra_symptoms.get(name, False))


@dataclass(frozen=True)
class Cohort:
    records: tuple
    provenance: str = "loaded"
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.provenance not in ("loaded", "synthetic"):
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise ValidationError(f"duplicate record id {r.id!r}")
            seen.add(r.id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def extra_columns(self) -> list:
        names = set()
        for r in self.records:
            names.update(r.extra_symptoms)
        return sorted(names)

    def to_csv(self) -> str:
        extras = self.extra_columns
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([*REQUIRED_COLUMNS, *extras])
        for r in self.records:
            row = [
                r.id,
                r.age,
                r.sex,
                r.test_result,
                r.confirmation_method,
                *(int(getattr(r, f)) for f in FLAG_FIELDS),
                "" if r.hospitalization_days is None else r.hospitalization_days,
                r.outcome,
                *(int(r.flag(name)) for name in extras),
            ]
            writer.writerow(row)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


# --- ingestion --------------------------------------------------------------

def _parse_bool(value, row, column):
    if value in ("0", "1"):
        return value == "1"
    raise RowParseError(f"row {row}: column {column!r} expects 0/1, got {value!r}", row, column)


def _parse_int(value, row, column):
    try:
        return int(value)
    except ValueError:
        raise RowParseError(f"row {row}: column {column!r} expects an integer, got {value!r}",
                            row, column) from None


def parse_cohort(text: str) -> Cohort:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty file: missing header row") from None
    if len(set(header)) != len(header):
        dup = next(h for h in header if header.count(h) > 1)
        raise SchemaError(f"duplicate column {dup!r}", dup)
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise SchemaError(f"missing required column {col!r}", col)
    extras = [h for h in header if h not in REQUIRED_COLUMNS]

    records = []
    seen = set()
    for row_no, cells in enumerate(reader, start=1):
        if not cells:
            continue
        if len(cells) != len(header):
            raise RowParseError(f"row {row_no}: expected {len(header)} cells, got {len(cells)}", row_no)
        raw = dict(zip(header, (c.strip() for c in cells)))
        for name, allowed in _ENUMS.items():
            if raw[name] not in allowed:
                raise RowParseError(f"row {row_no}: column {name!r} expects one of {allowed}, "
                                    f"got {raw[name]!r}", row_no, name)
        age = _parse_int(raw["age"], row_no, "age")
        if not 0 <= age <= 120:
            raise RowParseError(f"row {row_no}: age {age} outside [0, 120]", row_no, "age")
        days = raw["hospitalization_days"]
        days = None if days == "" else _parse_int(days, row_no, "hospitalization_days")
        if days is not None and days < 0:
            raise RowParseError(f"row {row_no}: negative hospitalization_days", row_no,
                                "hospitalization_days")
        if raw["id"] in seen:
            raise ValidationError(f"row {row_no}: duplicate id {raw['id']!r}")
        seen.add(raw["id"])
        records.append(PatientRecord(
            id=raw["id"],
            age=age,
            sex=raw["sex"],
            test_result=raw["test_result"],
            confirmation_method=raw["confirmation_method"],
            **{f: _parse_bool(raw[f], row_no, f) for f in FLAG_FIELDS},
            outcome=raw["outcome"],
            hospitalization_days=days,
            extra_symptoms={e: _parse_bool(raw[e], row_no, e) for e in extras},
        ))
    return Cohort(tuple(records), "loaded", None)


def load_cohort(path) -> Cohort:
    """Read a cohort from a comma-separated file with a header row."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"cohort file not found: {path}")
    return parse_cohort(path.read_text(encoding="utf-8"))


# --- synthetic generation ---------------------------------------------------

DEFAULT_RARE_SYMPTOMS = (
    ("chest_pain", 0.06),
    ("diarrhea", 0.045),
    ("headache", 0.08),
    ("loss_of_taste", 0.03),
)

# P(flag | recovered), P(flag | deceased)
DEFAULT_FLAG_RATES = (
    ("ventilator", 0.06, 0.45),
    ("cough", 0.45, 0.55),
    ("apnea", 0.10, 0.40),
    ("carcinoma", 0.10, 0.25),
    ("healthcare_staff", 0.18, 0.08),
    ("icu_hospitalization", 0.10, 0.60),
)


@dataclass(frozen=True)
class SyntheticCohortSpec:
    n_total: int = 2875
    n_clinical: int = 1787
    seed: int = 7
    recovery_rate_negative: float = 0.85
    recovery_rate_positive: float = 0.75
    age_death_knee: int = 40
    female_recovery_boost: float = 0.3
    rare_symptom_columns: tuple = DEFAULT_RARE_SYMPTOMS
    positive_rate: float = 0.6
    male_rate: float = 0.55
    age_mean: float = 55.0
    age_sd: float = 18.0
    flag_rates: tuple = DEFAULT_FLAG_RATES
    clinical_death_shift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rare_symptom_columns",
                           tuple((str(n), float(f)) for n, f in self.rare_symptom_columns))
        object.__setattr__(self, "flag_rates",
                           tuple((str(n), float(a), float(b)) for n, a, b in self.flag_rates))
        if self.n_total < 1:
            raise ValidationError("n_total must be >= 1")
        if not 0 <= self.n_clinical <= self.n_total:
            raise ValidationError("n_clinical must lie in [0, n_total]")
        fractions = {
            "recovery_rate_negative": self.recovery_rate_negative,
            "recovery_rate_positive": self.recovery_rate_positive,
            "female_recovery_boost": self.female_recovery_boost,
            "positive_rate": self.positive_rate,
            "male_rate": self.male_rate,
        }
        for name, value in fractions.items():
            if not 0 <= value <= 1:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")
        if not 0 <= self.age_death_knee <= 120:
            raise ValidationError("age_death_knee must lie in [0, 120]")
        if self.age_sd < 0:
            raise ValidationError("age_sd must be >= 0")
        for name, freq in self.rare_symptom_columns:
            if not 0 <= freq < 0.1:
                raise ValidationError(f"rare symptom {name!r} frequency {freq} not in [0, 0.1)")
            if name in REQUIRED_COLUMNS:
                raise ValidationError(f"rare symptom {name!r} clashes with a core column")
        if {n for n, _, _ in self.flag_rates} != set(FLAG_FIELDS):
            raise ValidationError(f"flag_rates must cover exactly {FLAG_FIELDS}")
        for name, a, b in self.flag_rates:
            if not (0 <= a <= 1 and 0 <= b <= 1):
                raise ValidationError(f"flag rate for {name!r} outside [0, 1]")
        if not -1 < self.clinical_death_shift < 1:
            raise ValidationError("clinical_death_shift must lie in (-1, 1)")


def _death_risk(ages, female, spec):
    """Relative hazard: zero below the knee, growing with age, damped for women."""
    excess = np.maximum(ages - spec.age_death_knee, 0).astype(np.float64)
    risk = np.where(ages >= spec.age_death_knee, np.exp(excess / 15.0), 0.0)
    return risk * np.where(female, 1.0 - spec.female_recovery_boost, 1.0)


def _pick_deaths(rng, risk, k):
    """Choose exactly ``k`` indices without replacement, weighted by ``risk``."""
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    eligible = np.flatnonzero(risk > 0)
    if eligible.size < k:
        raise ValidationError(
            f"cannot place {k} deaths among {eligible.size} patients above the age knee")
    w = risk[eligible] / risk[eligible].sum()
    return eligible[rng.choice(eligible.size, size=k, replace=False, p=w)]


def generate_synthetic(spec: SyntheticCohortSpec) -> Cohort:
    """Draw a cohort deterministically from ``spec``.

    Deaths per test-result group are placed exactly at
    ``round((1 - recovery_rate) * group_size)``, so empirical recovery rates
    match their targets up to one patient per group.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_total

    clinical = np.zeros(n, dtype=bool)
    clinical[rng.permutation(n)[:spec.n_clinical]] = True
    positive = rng.random(n) < spec.positive_rate
    female = rng.random(n) >= spec.male_rate
    ages = np.clip(np.rint(rng.normal(spec.age_mean, spec.age_sd, n)), 1, 100).astype(np.int64)

    risk = _death_risk(ages, female, spec)
    risk = risk * np.where(clinical, 1.0 - spec.clinical_death_shift, 1.0 + spec.clinical_death_shift)
    deceased = np.zeros(n, dtype=bool)
    for group, recovery in ((positive, spec.recovery_rate_positive),
                            (~positive, spec.recovery_rate_negative)):
        idx = np.flatnonzero(group)
        k = int(math.floor((1.0 - recovery) * idx.size + 0.5))
        deceased[idx[_pick_deaths(rng, risk[idx], k)]] = True

    flags = {}
    for name, p_rec, p_dec in spec.flag_rates:
        p = np.where(deceased, p_dec, p_rec)
        flags[name] = rng.random(n) < p

    extras = {}
    for name, freq in spec.rare_symptom_columns:
        col = np.zeros(n, dtype=bool)
        col[rng.permutation(n)[:int(math.floor(freq * n))]] = True
        extras[name] = col

    # stays beyond a week are dominated by deaths
    days = np.where(deceased, 5 + rng.poisson(5.0, n), rng.poisson(3.0, n))

    width = len(str(n))
    records = []
    for i in range(n):
        records.append(PatientRecord(
            id=f"P{i:0{width}d}",
            age=int(ages[i]),
            sex="female" if female[i] else "male",
            test_result="positive" if positive[i] else "negative",
            confirmation_method="clinical" if clinical[i] else "rtpcr",
            **{name: bool(flags[name][i]) for name in FLAG_FIELDS},
            outcome="deceased" if deceased[i] else "recovered",
            hospitalization_days=int(days[i]),
            extra_symptoms={name: bool(col[i]) for name, col in extras.items()},
        ))
    return Cohort(tuple(records), "synthetic", spec.seed)


# --- summaries and filters ----------------------------------------------------

@dataclass
class CohortSummary:
    n: int
    joint: Counter  # (outcome, test_result, method, sex) -> count
    by_outcome: dict
    by_test_result: dict
    by_method: dict
    by_sex: dict
    age_histogram: dict  # decade start -> {outcome: count}
    stay_histogram: dict  # hospitalization days -> {outcome: count}

    def recovery_rate(self, test_result: str) -> float:
        rec = sum(v for (o, t, _, _), v in self.joint.items() if t == test_result and o == "recovered")
        tot = sum(v for (_, t, _, _), v in self.joint.items() if t == test_result)
        return rec / tot if tot else float("nan")

    def deaths_below(self, age: int) -> int:
        return sum(c.get("deceased", 0) for start, c in self.age_histogram.items() if start + 10 <= age)


def cohort_summary(c: Cohort) -> CohortSummary:
    if len(c) == 0:
        raise EmptyInputError("cannot summarize an empty cohort")
    joint = Counter((r.outcome, r.test_result, r.confirmation_method, r.sex) for r in c)

    def marginal(pos, values):
        out = dict.fromkeys(values, 0)
        for key, v in joint.items():
            out[key[pos]] += v
        return out

    ages = {}
    stays = {}
    for r in c:
        bucket = ages.setdefault(10 * (r.age // 10), dict.fromkeys(OUTCOMES, 0))
        bucket[r.outcome] += 1
        if r.hospitalization_days is not None:
            s = stays.setdefault(r.hospitalization_days, dict.fromkeys(OUTCOMES, 0))
            s[r.outcome] += 1
    return CohortSummary(
        n=len(c),
        joint=joint,
        by_outcome=marginal(0, OUTCOMES),
        by_test_result=marginal(1, TEST_RESULTS),
        by_method=marginal(2, METHODS),
        by_sex=marginal(3, SEXES),
        age_histogram=dict(sorted(ages.items())),
        stay_histogram=dict(sorted(stays.items())),
    )


def filter_by_method(c: Cohort, method: str) -> Cohort:
    if method not in METHODS:
        raise ValidationError(f"unknown confirmation method {method!r}")
    return Cohort(tuple(r for r in c if r.confirmation_method == method), c.provenance, c.seed)
