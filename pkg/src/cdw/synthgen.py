"""Deterministic synthetic source generator.

Writes the exact ingest formats (three CSVs plus a medical-file directory)
with configurable dirt: duplicate patient rows, malformed rows and orphan
events. The same config always produces byte-identical files, so the written
summary's intended counts are an exact oracle for ETL assertions:

  - duplicates   -> extra patient rows for existing national IDs (merged later)
  - malformed    -> patients/treatments rows that fail validation;
                    medical files with an unknown test type (parse failures)
  - orphans      -> treatments/lab files referencing nonexistent patients

Randomness comes from splitmix64 (Steele, Lea, Flood 2014): the state advances
by the golden-gamma constant 0x9E3779B97F4A7C15 and each output is finalized
with xor-shift multiplies by 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB. No
platform RNG is involved, so output is stable across Python versions and OSes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import IoFailure
from .schema import CSV_COLUMNS, TEST_TYPES

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + self.next_u64() % (hi - lo + 1)

    def choice(self, seq):
        return seq[self.next_u64() % len(seq)]

    def chance(self, numerator: int, denominator: int) -> bool:
        return self.next_u64() % denominator < numerator

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]


@dataclass
class SynthConfig:
    seed: int = 42
    n_patients: int = 100
    duplicate_rate: float = 0.0
    malformed_rate: float = 0.0
    orphan_rate: float = 0.0
    year_start: int = 2010
    year_end: int = 2014
    events_min: int = 3  # treatments and lab tests each, per patient
    events_max: int = 7

    def __post_init__(self):
        for name in ("duplicate_rate", "malformed_rate", "orphan_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        if self.year_start > self.year_end:
            raise ValueError("year range is empty")
        if self.events_min > self.events_max or self.events_min < 0:
            raise ValueError("events-per-patient range is empty")


FIRST_NAMES = ["ahmed", "mona", "omar", "salma", "khaled", "laila", "tarek",
               "heba", "youssef", "nour", "hassan", "dina", "karim", "aya",
               "mostafa", "rania", "sami", "farida", "adel", "yasmin"]
LAST_NAMES = ["ibrahim", "hassan", "mahmoud", "said", "farouk", "aziz",
              "nasser", "sharif", "kamel", "zaki", "mansour", "radwan",
              "selim", "badawi", "ghanem", "shalaby"]
LOCATIONS = [
    ("Cairo", ["Nasr City", "Maadi", "Helwan"]),
    ("Giza", ["Dokki", "Haram"]),
    ("Sharkia", ["Zagazig", "Belbeis", "Abu Hammad"]),
    ("Alexandria", ["Montaza", "Amreya"]),
    ("Aswan", ["Aswan City", "Kom Ombo"]),
]
OCCUPATIONS = ["teacher", "farmer", "engineer", "nurse", "driver", "clerk",
               "merchant", "tailor", "retired", ""]
RACES = ["arab", "nubian", "amazigh", "other"]
MARITAL = ["single", "married", "divorced", "widowed", "unknown"]
BLOOD = ["A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-"]

CANCER_TAXONOMY = [
    ("lymphoid", ["hodgkin lymphoma", "non-hodgkin lymphoma"]),
    ("breast", ["ductal carcinoma", "lobular carcinoma"]),
    ("lung", ["small cell", "non-small cell", "mesothelioma"]),
    ("digestive", ["colorectal", "gastric", "hepatic", "pancreatic"]),
]
STAGES = ["I", "II", "III", "IV"]

DRUGS = [
    ("chemotherapy", "DOX", "doxorubicin", (800, 3500)),
    ("chemotherapy", "CIS", "cisplatin", (600, 2800)),
    ("chemotherapy", "5FU", "fluorouracil", (400, 2000)),
    ("chemotherapy", "PXL", "paclitaxel", (900, 4200)),
    ("radiotherapy", "XRT", "external beam session", (1500, 6000)),
    ("radiotherapy", "BRT", "brachytherapy session", (2000, 7500)),
    ("biological", "RTX", "rituximab", (3000, 12000)),
    ("biological", "TRZ", "trastuzumab", (3500, 14000)),
    ("biological", "BVZ", "bevacizumab", (2800, 11000)),
]

TEST_UNITS = {"blood": "g/dl", "urine": "mg/dl", "xray": "score", "ct_scan": "score"}

# Outcome draw: roughly 60% ongoing, 25% remission, 15% death per event.
_OUTCOMES = ["ongoing"] * 12 + ["remission"] * 5 + ["death"] * 3


def generate(config: SynthConfig, out_dir: Path | str) -> dict:
    """Write source files and a summary JSON; returns the summary dict."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        medical_dir = out_dir / "medical_files"
        medical_dir.mkdir(exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out_dir}: {exc}")

    rng = SplitMix64(config.seed)
    y0, y1 = config.year_start, config.year_end

    patients = []
    used_ids: set[str] = set()
    for i in range(config.n_patients):
        national_id = _fresh_id(rng, used_ids, prefix="2")
        first, last = rng.choice(FIRST_NAMES), rng.choice(LAST_NAMES)
        governorate, cities = rng.choice(LOCATIONS)
        dob = _date(rng, y0 - 80, y0 - 1)
        patients.append({
            "national_id": national_id,
            "full_name": f"{first} {last}",
            "gender": rng.choice(["M", "F"]),
            "date_of_birth": dob,
            "marital_status": rng.choice(MARITAL),
            "city": rng.choice(cities),
            "governorate": governorate,
            "occupation": rng.choice(OCCUPATIONS),
            "blood_group": rng.choice(BLOOD),
            "race": rng.choice(RACES),
            "updated_at": _timestamp(rng, y0, y1),
        })

    # Duplicate master rows: a later-updated copy with some fields blanked so
    # the field-level merge has something to backfill from the original.
    n_duplicates = int(config.n_patients * config.duplicate_rate)
    duplicate_rows = []
    for i in range(n_duplicates):
        base = patients[i % len(patients)]
        dup = dict(base)
        dup["updated_at"] = _bump_timestamp(base["updated_at"])
        dup["occupation"] = ""
        if rng.chance(1, 2):
            dup["marital_status"] = rng.choice(MARITAL)
        if rng.chance(1, 3):
            dup["city"] = ""
        duplicate_rows.append(dup)

    diagnoses = []
    doctor_pool = [f"D{n:03d}" for n in range(1, 21)]
    patient_diag: dict[str, str] = {}
    for p in patients:
        site, types = rng.choice(CANCER_TAXONOMY)
        diag_date = _date(rng, y0, y0)
        diagnoses.append({
            "national_id": p["national_id"],
            "diagnosis_date": diag_date,
            "cancer_site": site,
            "cancer_type": rng.choice(types),
            "stage": rng.choice(STAGES),
            "doctor_id": rng.choice(doctor_pool),
        })
        patient_diag[p["national_id"]] = diag_date

    treatments = []
    for p in patients:
        n_events = rng.randint(config.events_min, config.events_max)
        used_keys: set[tuple] = set()
        for _ in range(n_events):
            category, code, name, (lo, hi) = rng.choice(DRUGS)
            event_date = _date(rng, min(y0 + 1, y1), y1)
            while (event_date, code) in used_keys:  # keep natural event keys unique
                event_date = _date(rng, min(y0 + 1, y1), y1)
            used_keys.add((event_date, code))
            treatments.append({
                "national_id": p["national_id"],
                "treatment_date": event_date,
                "treatment_category": category,
                "drug_code": code,
                "drug_name": name,
                "cost": f"{rng.randint(lo * 100, hi * 100) / 100:.2f}",
                "outcome": rng.choice(_OUTCOMES),
                "doctor_id": rng.choice(doctor_pool),
                "updated_at": _timestamp(rng, y0, y1),
            })

    labs = []
    for p in patients:
        n_events = rng.randint(config.events_min, config.events_max)
        used_keys = set()
        for _ in range(n_events):
            test_type = rng.choice(TEST_TYPES)
            event_date = _date(rng, y0, y1)
            while (event_date, test_type) in used_keys:
                event_date = _date(rng, y0, y1)
            used_keys.add((event_date, test_type))
            labs.append({
                "national_id": p["national_id"],
                "test_type": test_type,
                "test_date": event_date,
                "value": _lab_value(rng, test_type),
                "unit": TEST_UNITS[test_type],
                "abnormal": str(rng.randint(0, 1)),
            })

    # Orphans: syntactically valid events for patients that do not exist.
    n_orphan_treatments = int(len(treatments) * config.orphan_rate)
    n_orphan_labs = int(len(labs) * config.orphan_rate)
    orphan_treatments, orphan_labs = [], []
    for _ in range(n_orphan_treatments):
        category, code, name, (lo, hi) = rng.choice(DRUGS)
        orphan_treatments.append({
            "national_id": _fresh_id(rng, used_ids, prefix="9"),
            "treatment_date": _date(rng, y0, y1),
            "treatment_category": category,
            "drug_code": code,
            "drug_name": name,
            "cost": f"{rng.randint(lo * 100, hi * 100) / 100:.2f}",
            "outcome": rng.choice(_OUTCOMES),
            "doctor_id": rng.choice(doctor_pool),
            "updated_at": _timestamp(rng, y0, y1),
        })
    for _ in range(n_orphan_labs):
        test_type = rng.choice(TEST_TYPES)
        orphan_labs.append({
            "national_id": _fresh_id(rng, used_ids, prefix="9"),
            "test_type": test_type,
            "test_date": _date(rng, y0, y1),
            "value": _lab_value(rng, test_type),
            "unit": TEST_UNITS[test_type],
            "abnormal": str(rng.randint(0, 1)),
        })

    # Malformed rows: fail validation (patients/treatments) or parse (labs).
    n_malformed_patients = int(config.n_patients * config.malformed_rate)
    malformed_patients = []
    for i in range(n_malformed_patients):
        bad = dict(patients[i % len(patients)])
        kind = i % 3
        if kind == 0:
            bad["national_id"] = f"BAD{i:05d}"
        elif kind == 1:
            bad["date_of_birth"] = "31-02-1999"
        else:
            bad["gender"] = "X"
        malformed_patients.append(bad)

    n_malformed_treatments = int(len(treatments) * config.malformed_rate)
    malformed_treatments = []
    for i in range(n_malformed_treatments):
        bad = dict(treatments[i % len(treatments)])
        kind = i % 3
        if kind == 0:
            bad["cost"] = "-50.00"
        elif kind == 1:
            bad["treatment_date"] = "not-a-date"
        else:
            bad["treatment_category"] = "homeopathy"
        malformed_treatments.append(bad)

    n_malformed_labs = int(len(labs) * config.malformed_rate)
    malformed_labs = []
    for i in range(n_malformed_labs):
        bad = dict(labs[i % len(labs)])
        bad["test_type"] = "tarot"
        malformed_labs.append(bad)

    patient_rows = patients + duplicate_rows + malformed_patients
    treatment_rows = treatments + orphan_treatments + malformed_treatments
    lab_records = labs + orphan_labs + malformed_labs
    rng.shuffle(patient_rows)
    rng.shuffle(treatment_rows)
    rng.shuffle(lab_records)

    _write_csv(out_dir / "patients.csv", "patients", patient_rows)
    _write_csv(out_dir / "diagnoses.csv", "diagnoses", diagnoses)
    _write_csv(out_dir / "treatments.csv", "treatments", treatment_rows)
    for i, record in enumerate(lab_records, start=1):
        lines = [f"{key}: {record[key]}" for key in
                 ("national_id", "test_type", "test_date", "value", "unit", "abnormal")]
        (medical_dir / f"test_{i:06d}.txt").write_text("\n".join(lines) + "\n")

    summary = {
        "seed": config.seed,
        "config": {
            "n_patients": config.n_patients,
            "duplicate_rate": config.duplicate_rate,
            "malformed_rate": config.malformed_rate,
            "orphan_rate": config.orphan_rate,
            "years": [y0, y1],
            "events_per_patient": [config.events_min, config.events_max],
        },
        "files": {
            "patients.csv": len(patient_rows),
            "diagnoses.csv": len(diagnoses),
            "treatments.csv": len(treatment_rows),
            "medical_files": len(lab_records),
        },
        "expected": {
            "staged": {
                "patients": len(patient_rows),
                "diagnoses": len(diagnoses),
                "treatments": len(treatment_rows),
                "lab_results": len(lab_records) - n_malformed_labs,
            },
            "parse_failures": {"lab_results": n_malformed_labs},
            "validate_rejects": {
                "patients": n_malformed_patients,
                "treatments": n_malformed_treatments,
            },
            "conform_rejects": {
                "treatments": n_orphan_treatments,
                "lab_results": n_orphan_labs,
            },
            "master_records": config.n_patients,
            "duplicate_extra_rows": n_duplicates,
            "merge_log_entries": min(n_duplicates, config.n_patients),
            "facts": {
                "fact_treatment_event": len(treatments),
                "fact_lab_result": len(labs),
            },
        },
    }
    (out_dir / "synth_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _fresh_id(rng: SplitMix64, used: set[str], prefix: str) -> str:
    # prefix 2 = real patients, 9 = orphan references; the sets never collide
    while True:
        candidate = prefix + "".join(str(rng.randint(0, 9)) for _ in range(13))
        if candidate not in used:
            used.add(candidate)
            return candidate


def _date(rng: SplitMix64, year_lo: int, year_hi: int) -> str:
    year = rng.randint(year_lo, year_hi)
    month = rng.randint(1, 12)
    day = rng.randint(1, 28)
    return f"{year:04d}-{month:02d}-{day:02d}"


def _timestamp(rng: SplitMix64, year_lo: int, year_hi: int) -> str:
    return (f"{_date(rng, year_lo, year_hi)}T"
            f"{rng.randint(0, 23):02d}:{rng.randint(0, 59):02d}:{rng.randint(0, 59):02d}Z")


def _bump_timestamp(ts: str) -> str:
    # strictly later than the original: push the year out by one
    year = int(ts[:4])
    return f"{year + 1:04d}{ts[4:]}"


def _lab_value(rng: SplitMix64, test_type: str) -> str:
    ranges = {"blood": (50, 200), "urine": (0, 5000), "xray": (0, 100), "ct_scan": (0, 100)}
    lo, hi = ranges[test_type]
    return f"{rng.randint(lo * 10, hi * 10) / 10:.1f}"


def _write_csv(path: Path, kind: str, rows: list[dict]) -> None:
    columns = CSV_COLUMNS[kind]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")
