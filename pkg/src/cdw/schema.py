"""Source schemas, closed vocabularies and canonical-form helpers.

The operational sources are three CSV exports plus a directory of
line-oriented medical-file records. Column lists are exact and ordered;
extraction rejects files whose header deviates.
"""

from __future__ import annotations

import re
from datetime import date, datetime, timezone

SOURCE_KINDS = ("patients", "diagnoses", "treatments", "lab_results")

CSV_COLUMNS = {
    "patients": [
        "national_id", "full_name", "gender", "date_of_birth",
        "marital_status", "city", "governorate", "occupation",
        "blood_group", "race", "updated_at",
    ],
    "diagnoses": [
        "national_id", "diagnosis_date", "cancer_site", "cancer_type",
        "stage", "doctor_id",
    ],
    "treatments": [
        "national_id", "treatment_date", "treatment_category", "drug_code",
        "drug_name", "cost", "outcome", "doctor_id", "updated_at",
    ],
}

# Medical-file records: UTF-8 text, one "key: value" per line.
MEDICAL_FILE_KEYS = ["national_id", "test_type", "test_date", "value", "unit", "abnormal"]

TEST_TYPES = ("blood", "urine", "xray", "ct_scan")
GENDERS = ("M", "F")
MARITAL_STATUSES = ("single", "married", "divorced", "widowed", "unknown")
BLOOD_GROUPS = ("A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-", "unknown")
TREATMENT_CATEGORIES = ("chemotherapy", "radiotherapy", "biological")
OUTCOMES = ("ongoing", "remission", "death")
CANCER_STAGES = ("I", "II", "III", "IV")

DEFAULT_NATIONAL_ID_PATTERN = r"^[0-9]{14}$"

# (label, lowest age, highest age or None for open-ended); ages are at event.
AGE_BANDS = (
    ("0-17", 0, 17),
    ("18-39", 18, 39),
    ("40-59", 40, 59),
    ("60-74", 60, 74),
    ("75+", 75, None),
)


def age_band_label(age_years: int) -> str:
    for label, lo, hi in AGE_BANDS:
        if age_years >= lo and (hi is None or age_years <= hi):
            return label
    raise ValueError(f"no age band for age {age_years}")


def age_at_event_years(date_of_birth: date, event_date: date) -> int:
    """Whole calendar years elapsed from birth to the event (floor)."""
    years = event_date.year - date_of_birth.year
    if (event_date.month, event_date.day) < (date_of_birth.month, date_of_birth.day):
        years -= 1
    return years


_ISO_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def parse_iso_date(text: str) -> date:
    """Strict YYYY-MM-DD; raises ValueError on anything else."""
    if not _ISO_DATE_RE.match(text):
        raise ValueError(f"not an ISO-8601 date: {text!r}")
    return date.fromisoformat(text)


def parse_rfc3339(text: str) -> datetime:
    """RFC 3339 timestamp; 'Z' accepted; result normalized to UTC."""
    cleaned = text.strip()
    if cleaned.endswith(("Z", "z")):
        cleaned = cleaned[:-1] + "+00:00"
    dt = datetime.fromisoformat(cleaned)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_rfc3339(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc).replace(microsecond=0)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def canonical_enum(value: str, vocabulary: tuple[str, ...]) -> str | None:
    """Case-normalize ``value`` onto its vocabulary; None when not a member."""
    folded = value.strip().casefold()
    for member in vocabulary:
        if member.casefold() == folded:
            return member
    return None
