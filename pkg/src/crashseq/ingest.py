"""Load crash/vehicle/event tables, subset, derive attributes, build sequences.

Also hosts the synthetic corpus generator used for desk-scale runs: it
draws crash configurations, representative sequence patterns (with small
mutations), and outcome/human/environment attributes from conditional
tables calibrated against published marginal shares, then writes the
three raw CSV files in the same dialect the loader expects.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from crashseq.event_codec import (
    Alphabet,
    AmbiguousFirstEvent,
    CrashSequence,
    EventToken,
    Phase,
    RenumberRules,
    Role,
    assemble_sequence,
    parse,
    render,
)

logger = logging.getLogger(__name__)


class IngestError(Exception):
    pass


class MissingColumn(IngestError):
    def __init__(self, table: str, column: str):
        self.table, self.column = table, column
        super().__init__(f"{table} table is missing required column {column}")


# --------------------------------------------------------------------------
# raw tables

CRASH_COLUMNS = (
    "CASENUM", "VE_TOTAL", "VE_FORMS", "PVH_INVL", "RELJCT2_IM", "WRK_ZONE",
    "ALCHL_IM", "WEIGHT", "MAXSEV_IM", "MANCOL_IM", "URBANICITY", "HOUR_IM",
    "LGTCON_IM", "WEATHR_IM", "TYP_INT", "SUR_COND",
)
VEHICLE_COLUMNS = (
    "CASENUM", "VEH_NO", "ACC_TYPE", "P_CRASH1", "P_CRASH2", "P_CRASH3",
    "BDYTYP_IM", "TOW_VEH", "BUS_USE", "SPEC_USE", "EMER_USE",
    "VSPD_LIM", "VTRAFCON", "SPEEDREL", "DR_SF1", "DR_SF2", "DR_SF3", "DR_SF4",
)
EVENT_COLUMNS = ("CASENUM", "EVENTNUM", "VNUMBER1", "SOE")


@dataclass
class RawTables:
    """Crash, vehicle, and event rows keyed by crash id."""

    crashes: dict[str, dict[str, str]]
    vehicles: dict[str, dict[int, dict[str, str]]]
    events: dict[str, list[dict[str, str]]]

    def validate_links(self):
        for crash_id in self.vehicles:
            if crash_id not in self.crashes:
                raise IngestError(f"vehicle rows reference unknown crash {crash_id}")
        for crash_id in self.events:
            if crash_id not in self.crashes:
                raise IngestError(f"event rows reference unknown crash {crash_id}")


def load_tables(accident_path, vehicle_path, event_path) -> RawTables:
    """Read the three RFC-4180 CSV files (UTF-8, header row required)."""
    crashes = {}
    with open(accident_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if "CASENUM" not in row:
                raise MissingColumn("crash", "CASENUM")
            crashes[row["CASENUM"]] = row
    vehicles: dict[str, dict[int, dict[str, str]]] = {}
    with open(vehicle_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            for col in ("CASENUM", "VEH_NO"):
                if col not in row:
                    raise MissingColumn("vehicle", col)
            vehicles.setdefault(row["CASENUM"], {})[int(row["VEH_NO"])] = row
    events: dict[str, list[dict[str, str]]] = {}
    with open(event_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            for col in ("CASENUM", "EVENTNUM"):
                if col not in row:
                    raise MissingColumn("event", col)
            events.setdefault(row["CASENUM"], []).append(row)
    for rows in events.values():
        rows.sort(key=lambda r: int(r["EVENTNUM"]))
    raw = RawTables(crashes, vehicles, events)
    raw.validate_links()
    return raw


# --------------------------------------------------------------------------
# subsetting

_CRASH_CRITERIA = (
    ("VE_TOTAL", lambda v: v == 2),
    ("VE_FORMS", lambda v: v == 2),
    ("PVH_INVL", lambda v: v == 0),
    ("RELJCT2_IM", lambda v: v in (2, 3)),
    ("WRK_ZONE", lambda v: v == 0),
    ("ALCHL_IM", lambda v: v != 1),
)
_VEHICLE_CRITERIA = (
    ("BDYTYP_IM", lambda v: v < 50),
    ("TOW_VEH", lambda v: v == 0),
    ("BUS_USE", lambda v: v == 0),
    ("SPEC_USE", lambda v: v == 0),
    ("EMER_USE", lambda v: v == 0),
)


def _int_of(row, table, column):
    if column not in row:
        raise MissingColumn(table, column)
    try:
        return int(float(row[column]))
    except (TypeError, ValueError):
        return None


def subset(raw: RawTables) -> RawTables:
    """Keep crashes passing all eleven criteria (vehicle ones for both rows)."""
    kept: dict[str, dict[str, str]] = {}
    for crash_id, crash in raw.crashes.items():
        ok = True
        for column, pred in _CRASH_CRITERIA:
            value = _int_of(crash, "crash", column)
            if value is None or not pred(value):
                ok = False
                break
        if not ok:
            continue
        vehicle_rows = raw.vehicles.get(crash_id, {})
        if len(vehicle_rows) != 2:
            continue
        for vrow in vehicle_rows.values():
            for column, pred in _VEHICLE_CRITERIA:
                value = _int_of(vrow, "vehicle", column)
                if value is None or not pred(value):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            kept[crash_id] = crash
    return RawTables(
        kept,
        {cid: raw.vehicles[cid] for cid in kept},
        {cid: raw.events.get(cid, []) for cid in kept},
    )


# --------------------------------------------------------------------------
# attribute schema and derivation

@dataclass(frozen=True)
class AttributeSchema:
    name: str
    levels: tuple[str, ...]
    source: str
    note: str = ""
    paired: bool = False


_MAXSEV_CODES = {
    0: "No apparent injury", 1: "Possible injury", 2: "Suspected minor injury",
    3: "Suspected serious injury", 4: "Fatal", 5: "Injured, severity unknown",
    9: "Unknown",
}
_MOC_CODES = {
    1: "Front-to-rear", 2: "Front-to-front", 6: "Angle",
    7: "Sideswipe, same direction", 8: "Sideswipe, opposite direction", 98: "Other",
    99: "Unknown",
}
_URBAN_CODES = {1: "Urban", 2: "Rural", 9: "Unknown"}
_LIGHT_CODES = {
    1: "Daylight", 2: "Dark-Not Lighted", 3: "Dark-Lighted", 4: "Dawn",
    5: "Dusk", 6: "Dark-Unknown Lighting", 97: "Other", 98: "Unknown", 99: "Unknown",
}
_WEATHER_CODES = {
    1: "Clear", 2: "Rain", 3: "Sleet or Hail", 4: "Snow",
    5: "Fog, Smog, Smoke", 10: "Cloudy", 98: "Other", 99: "Unknown",
}
_TYPINT_CODES = {2: "4-Legged", 3: "3-Legged", 6: "Roundabout", 97: "Other",
                 98: "Unknown", 99: "Unknown"}
_SURCON_CODES = {
    1: "Dry", 2: "Wet", 3: "Snow", 4: "Ice/frost",
    6: "Non-trafficway or driveway access", 98: "Other", 99: "Unknown",
}
_TCD_CODES = {0: "No TCD", 1: "Signal", 20: "Sign", 97: "Other", 99: "Unknown"}
_SPEEDREL_CODES = {0: "N", 2: "Y", 3: "Y", 4: "Y", 5: "Y", 8: "U", 9: "U"}
_FACTOR_CODES = {"careless": 6, "didnotsee": 13, "reckless": 36, "impropctrl": 44}

#: pair labels kept verbatim for speed limits; everything else becomes Other
DEFAULT_SPDLIM_KEEP = ("45+45", "35+35", "40+40", "25+25", "30+30")


def _pairs(sides):
    return tuple(f"{a}+{b}" for a in sides for b in sides)


SCHEMA: tuple[AttributeSchema, ...] = (
    AttributeSchema("maxsev", tuple(dict.fromkeys(list(_MAXSEV_CODES.values()) + ["Unknown"])),
                    "crash.MAXSEV_IM", "maximum injury severity in crash"),
    AttributeSchema("moc", tuple(dict.fromkeys(list(_MOC_CODES.values()) + ["Unknown"])),
                    "crash.MANCOL_IM", "manner of collision"),
    AttributeSchema("speeding", _pairs(("N", "Y", "U")), "vehicle.SPEEDREL",
                    "driver speeding, vehicle-1 side + vehicle-2 side", paired=True),
    AttributeSchema("careless", _pairs(("N", "Y")), "vehicle.DR_SF1..4",
                    "careless driving factor code", paired=True),
    AttributeSchema("didnotsee", _pairs(("N", "Y")), "vehicle.DR_SF1..4",
                    "driver did not see factor code", paired=True),
    AttributeSchema("reckless", _pairs(("N", "Y")), "vehicle.DR_SF1..4",
                    "reckless driving factor code", paired=True),
    AttributeSchema("impropctrl", _pairs(("N", "Y")), "vehicle.DR_SF1..4",
                    "improper control factor code", paired=True),
    AttributeSchema("urbrur", ("Urban", "Rural", "Unknown"), "crash.URBANICITY"),
    AttributeSchema("tod", ("Day", "Night", "Unknown"), "crash.HOUR_IM",
                    "Day = 06:00-17:59"),
    AttributeSchema("light", tuple(dict.fromkeys(list(_LIGHT_CODES.values()) + ["Unknown"])),
                    "crash.LGTCON_IM"),
    AttributeSchema("weather", tuple(dict.fromkeys(list(_WEATHER_CODES.values()) + ["Unknown"])),
                    "crash.WEATHR_IM"),
    AttributeSchema("typint", tuple(dict.fromkeys(list(_TYPINT_CODES.values()) + ["Unknown"])),
                    "crash.TYP_INT", "type of intersection"),
    AttributeSchema("spdlim", DEFAULT_SPDLIM_KEEP + ("Other", "Unknown"),
                    "vehicle.VSPD_LIM", "paired posted limits, top pairs kept",
                    paired=True),
    AttributeSchema("surcon", tuple(dict.fromkeys(list(_SURCON_CODES.values()) + ["Unknown"])),
                    "crash.SUR_COND", "road surface condition"),
    AttributeSchema("tcd", _pairs(("Signal", "Sign", "No TCD", "Other", "Unknown")),
                    "vehicle.VTRAFCON", "traffic control device", paired=True),
)

SCHEMA_BY_NAME = {s.name: s for s in SCHEMA}


def _code_label(row, table, column, codes, crash_id, warnings):
    value = _int_of(row, table, column)
    if value is None or value not in codes:
        if value is not None:
            warnings.append((crash_id, column, row.get(column, "")))
        return "Unknown"
    return codes[value]


def _factor_side(vrow, factor):
    code = _FACTOR_CODES[factor]
    for col in ("DR_SF1", "DR_SF2", "DR_SF3", "DR_SF4"):
        try:
            if int(float(vrow.get(col, 0) or 0)) == code:
                return "Y"
        except ValueError:
            continue
    return "N"


def _spdlim_side(vrow):
    value = _int_of(vrow, "vehicle", "VSPD_LIM")
    if value is None or value >= 98 or value <= 0:
        return None
    return str(value)


def role_assignments(raw: RawTables, rules: RenumberRules | None = None):
    """Per-crash original-vehicle-number -> role map via the rule table.

    Returns (mapping, fallback_flags): crashes whose crash-type pair has no
    rule keep original numbering and are flagged.
    """
    rules = rules or RenumberRules.load()
    roles: dict[str, dict[int, Role]] = {}
    fallback: dict[str, bool] = {}
    for crash_id, vrows in raw.vehicles.items():
        numbers = sorted(vrows)
        positions = tuple(
            _int_of(vrows[n], "vehicle", "ACC_TYPE") or 0 for n in numbers
        )
        mapping, warned = rules.assignment_or_keep(positions)
        roles[crash_id] = {numbers[0]: mapping[1], numbers[1]: mapping[2]}
        fallback[crash_id] = warned
    flagged = sum(fallback.values())
    if flagged:
        logger.warning("%d crashes had no renumbering rule; kept original numbering",
                       flagged)
    return roles, fallback


def derive_attributes(
    raw: RawTables,
    roles: dict[str, dict[int, Role]],
    spdlim_keep=DEFAULT_SPDLIM_KEEP,
) -> dict[str, dict[str, str]]:
    """Outcome/human/environment attribute map per crash.

    Paired variables read vehicle-1-side from the renumbered role V1.
    Unknown raw codes map to the explicit "Unknown" level with a logged
    warning.
    """
    warnings: list = []
    out: dict[str, dict[str, str]] = {}
    for crash_id, crash in raw.crashes.items():
        vrows = raw.vehicles[crash_id]
        by_role = {roles[crash_id][num]: row for num, row in vrows.items()}
        v1, v2 = by_role[Role.V1], by_role[Role.V2]
        attrs = {
            "maxsev": _code_label(crash, "crash", "MAXSEV_IM", _MAXSEV_CODES,
                                  crash_id, warnings),
            "moc": _code_label(crash, "crash", "MANCOL_IM", _MOC_CODES,
                               crash_id, warnings),
            "urbrur": _code_label(crash, "crash", "URBANICITY", _URBAN_CODES,
                                  crash_id, warnings),
            "light": _code_label(crash, "crash", "LGTCON_IM", _LIGHT_CODES,
                                 crash_id, warnings),
            "weather": _code_label(crash, "crash", "WEATHR_IM", _WEATHER_CODES,
                                   crash_id, warnings),
            "typint": _code_label(crash, "crash", "TYP_INT", _TYPINT_CODES,
                                  crash_id, warnings),
            "surcon": _code_label(crash, "crash", "SUR_COND", _SURCON_CODES,
                                  crash_id, warnings),
        }
        hour = _int_of(crash, "crash", "HOUR_IM")
        if hour is None or not 0 <= hour <= 23:
            attrs["tod"] = "Unknown"
        else:
            attrs["tod"] = "Day" if 6 <= hour <= 17 else "Night"
        sides = []
        for row in (v1, v2):
            value = _int_of(row, "vehicle", "SPEEDREL")
            sides.append(_SPEEDREL_CODES.get(value, "U") if value is not None else "U")
        attrs["speeding"] = f"{sides[0]}+{sides[1]}"
        for factor in _FACTOR_CODES:
            attrs[factor] = f"{_factor_side(v1, factor)}+{_factor_side(v2, factor)}"
        tcd_sides = [
            _code_label(row, "vehicle", "VTRAFCON", _TCD_CODES, crash_id, warnings)
            for row in (v1, v2)
        ]
        attrs["tcd"] = f"{tcd_sides[0]}+{tcd_sides[1]}"
        s1, s2 = _spdlim_side(v1), _spdlim_side(v2)
        if s1 is None or s2 is None:
            attrs["spdlim"] = "Unknown"
        else:
            pair = f"{s1}+{s2}"
            attrs["spdlim"] = pair if pair in spdlim_keep else "Other"
        out[crash_id] = attrs
    for crash_id, column, value in warnings[:20]:
        logger.warning("crash %s: unknown %s value %r mapped to Unknown",
                       crash_id, column, value)
    if len(warnings) > 20:
        logger.warning("...and %d more unknown-level warnings", len(warnings) - 20)
    return out


# --------------------------------------------------------------------------
# crash configuration grouping (data file)

@dataclass(frozen=True)
class ConfigGroup:
    config: str
    category: str
    description: str
    code_min: int
    code_max: int
    count_share: float


def load_config_groups(path=None) -> tuple[ConfigGroup, ...]:
    if path is None:
        text = resources.files("crashseq.data").joinpath("crash_configs.csv").read_text()
    else:
        text = Path(path).read_text()
    groups = []
    for row in csv.DictReader(text.splitlines()):
        groups.append(
            ConfigGroup(
                row["config"], row["category"], row["description"],
                int(row["code_min"]), int(row["code_max"]),
                float(row["count_share"]),
            )
        )
    return tuple(groups)


def config_of_code(groups, acc_type: int) -> str | None:
    for g in groups:
        if g.code_min <= acc_type <= g.code_max:
            return g.config
    return None


# --------------------------------------------------------------------------
# sequence building

def build_sequences(
    raw: RawTables,
    alphabet: Alphabet | None = None,
    rules: RenumberRules | None = None,
    groups=None,
    weight_column: str = "WEIGHT",
) -> list[CrashSequence]:
    """Renumber, encode, and assemble one CrashSequence per crash."""
    alphabet = alphabet or Alphabet.load()
    groups = groups or load_config_groups()
    roles, _ = role_assignments(raw, rules)
    attributes = derive_attributes(raw, roles)
    sequences = []
    for crash_id, crash in raw.crashes.items():
        vrows = raw.vehicles[crash_id]
        role_of = roles[crash_id]
        by_role = {role_of[num]: row for num, row in vrows.items()}
        triples = {}
        for role, row in by_role.items():
            triples[role] = []
            for phase, col in (
                (Phase.PCRASH1, "P_CRASH1"),
                (Phase.PCRASH2, "P_CRASH2"),
                (Phase.PCRASH3, "P_CRASH3"),
            ):
                code = _int_of(row, "vehicle", col)
                triples[role].append(
                    alphabet.encode(phase, role, -1 if code is None else code)
                )
        soe_tokens: list[EventToken] = []
        for pos, event in enumerate(raw.events.get(crash_id, [])):
            number = _int_of(event, "event", "VNUMBER1")
            if number not in role_of:
                raise AmbiguousFirstEvent(
                    f"crash {crash_id} event {pos}: vehicle number {number!r} "
                    "does not identify a participant"
                )
            soe_code = _int_of(event, "event", "SOE")
            soe_tokens.append(
                alphabet.encode(Phase.SOE, role_of[number],
                                -1 if soe_code is None else soe_code)
            )
        acc = _int_of(by_role[Role.V1], "vehicle", "ACC_TYPE") or 0
        config = config_of_code(groups, acc)
        other = config_of_code(groups, _int_of(by_role[Role.V2], "vehicle", "ACC_TYPE") or 0)
        if config is None:
            raise IngestError(f"crash {crash_id}: crash type {acc} maps to no configuration")
        if other != config:
            logger.warning("crash %s: vehicles map to configs %s/%s, using %s",
                           crash_id, config, other, config)
        try:
            weight = float(crash.get(weight_column, 1.0) or 1.0)
        except ValueError:
            weight = 1.0
        sequences.append(
            assemble_sequence(
                triples[Role.V1], triples[Role.V2], soe_tokens,
                crash_id=crash_id, weight=weight, crash_config=config,
                attributes=attributes[crash_id],
            )
        )
    return sequences


def weighted_count(sequences) -> float:
    return float(sum(s.weight for s in sequences))


def write_sequences_jsonl(sequences, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(
                json.dumps(
                    {
                        "crash_id": seq.crash_id,
                        "sequence": render(seq),
                        "weight": seq.weight,
                        "crash_config": seq.crash_config,
                        "attributes": seq.attributes,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_sequences_jsonl(path, alphabet: Alphabet | None = None) -> list[CrashSequence]:
    alphabet = alphabet or Alphabet.load()
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            doc = json.loads(line)
            out.append(
                parse(
                    doc["sequence"], alphabet, crash_id=doc["crash_id"],
                    weight=doc["weight"], crash_config=doc["crash_config"],
                    attributes=doc["attributes"],
                )
            )
    return out


# --------------------------------------------------------------------------
# synthetic generator

@dataclass
class SynthConfig:
    noise: float = 0.08
    weight_mu: float = 4.7
    weight_sigma: float = 0.7
    swap_share: float = 0.5  # J crashes stored with original numbering swapped


def load_seed_patterns(path=None):
    if path is None:
        text = resources.files("crashseq.data").joinpath("seed_sequences.csv").read_text()
    else:
        text = Path(path).read_text()
    patterns: dict[str, list[tuple[str, str, float]]] = {}
    for row in csv.DictReader(text.splitlines()):
        patterns.setdefault(row["config"], []).append(
            (row["pattern_id"], row["pattern"], float(row["weight"]))
        )
    return patterns


# conditional attribute tables; implied marginals sit within +-3 points of
# the published shares (checked in the acceptance suite at n = 10,000)
_TOD = (("Day", 0.807), ("Night", 0.193))
_SPEEDING = {
    "Day": (("N+N", 0.9135), ("Y+N", 0.050), ("U+N", 0.022), ("N+Y", 0.0055),
            ("N+U", 0.005), ("U+U", 0.0035), ("Y+Y", 0.0005)),
    "Night": (("N+N", 0.8725), ("Y+N", 0.085), ("U+N", 0.022), ("N+Y", 0.008),
              ("N+U", 0.005), ("U+U", 0.006), ("Y+Y", 0.0015)),
}
_CARELESS_D = (("N+N", 0.858), ("Y+N", 0.125), ("N+Y", 0.012), ("Y+Y", 0.005))
_CARELESS_OTHER = (("N+N", 0.926), ("Y+N", 0.060), ("N+Y", 0.012), ("Y+Y", 0.002))
_DIDNOTSEE = (("N+N", 0.99), ("Y+N", 0.008), ("N+Y", 0.001), ("Y+Y", 0.001))
_RECKLESS = (("N+N", 0.967), ("Y+N", 0.030), ("N+Y", 0.003))
_IMPROPCTRL = (("N+N", 0.995), ("Y+N", 0.005))
_URBRUR = (("Urban", 0.802), ("Rural", 0.198))
_WEATHER = (("Clear", 0.732), ("Cloudy", 0.159), ("Rain", 0.091), ("Snow", 0.014),
            ("Fog, Smog, Smoke", 0.002), ("Sleet or Hail", 0.001), ("Other", 0.001))
_WETISH = {"Rain", "Snow", "Fog, Smog, Smoke", "Sleet or Hail"}
_SURCON = {
    "Clear": (("Dry", 0.955), ("Wet", 0.025), ("Unknown", 0.011), ("Ice/frost", 0.003),
              ("Non-trafficway or driveway access", 0.005), ("Other", 0.001)),
    "Cloudy": (("Dry", 0.88), ("Wet", 0.10), ("Unknown", 0.011), ("Ice/frost", 0.003),
               ("Snow", 0.001), ("Non-trafficway or driveway access", 0.004),
               ("Other", 0.001)),
    "Rain": (("Wet", 0.93), ("Dry", 0.05), ("Unknown", 0.011),
             ("Non-trafficway or driveway access", 0.004), ("Other", 0.005)),
    "Snow": (("Snow", 0.55), ("Ice/frost", 0.22), ("Wet", 0.15), ("Dry", 0.05),
             ("Unknown", 0.02), ("Other", 0.01)),
    "Fog, Smog, Smoke": (("Wet", 0.5), ("Dry", 0.4), ("Unknown", 0.05), ("Other", 0.05)),
    "Sleet or Hail": (("Ice/frost", 0.5), ("Wet", 0.3), ("Snow", 0.15), ("Unknown", 0.05)),
    "Other": (("Dry", 0.5), ("Unknown", 0.3), ("Other", 0.2)),
}
_LIGHT = {
    ("Day", False): (("Daylight", 0.965), ("Dawn", 0.014), ("Dusk", 0.021)),
    ("Day", True): (("Daylight", 0.76), ("Dawn", 0.11), ("Dusk", 0.13)),
    ("Night", False): (("Dark-Lighted", 0.805), ("Dark-Not Lighted", 0.175),
                       ("Dark-Unknown Lighting", 0.015), ("Dusk", 0.005)),
    ("Night", True): (("Dark-Lighted", 0.55), ("Dark-Not Lighted", 0.41),
                      ("Dark-Unknown Lighting", 0.025), ("Dusk", 0.015)),
}
_TYPINT_L = (("4-Legged", 0.72), ("3-Legged", 0.05), ("Unknown", 0.218),
             ("Roundabout", 0.005), ("Other", 0.007))
_TYPINT_OTHER = (("4-Legged", 0.52), ("3-Legged", 0.25), ("Unknown", 0.218),
                 ("Roundabout", 0.002), ("Other", 0.010))
_TCD = {
    "4-Legged": (("Signal+Signal", 0.62), ("No TCD+No TCD", 0.13), ("Sign+No TCD", 0.10),
                 ("Sign+Sign", 0.08), ("No TCD+Sign", 0.04), ("Unknown+Unknown", 0.015),
                 ("Sign+Signal", 0.005), ("Signal+Sign", 0.005), ("Signal+No TCD", 0.003),
                 ("No TCD+Signal", 0.002)),
    "3-Legged": (("Signal+Signal", 0.28), ("No TCD+No TCD", 0.32), ("Sign+No TCD", 0.20),
                 ("Sign+Sign", 0.08), ("No TCD+Sign", 0.08), ("Unknown+Unknown", 0.025),
                 ("Signal+No TCD", 0.005), ("Sign+Signal", 0.005), ("No TCD+Signal", 0.005)),
    "Unknown": (("Signal+Signal", 0.42), ("No TCD+No TCD", 0.22), ("Sign+No TCD", 0.10),
                ("Sign+Sign", 0.07), ("No TCD+Sign", 0.06), ("Unknown+Unknown", 0.06),
                ("Sign+Other", 0.01), ("Other+Other", 0.02), ("Unknown+Sign", 0.02),
                ("Sign+Unknown", 0.02)),
    "Roundabout": (("No TCD+No TCD", 0.5), ("Sign+Sign", 0.2), ("Signal+Signal", 0.1),
                   ("Unknown+Unknown", 0.1), ("Other+Other", 0.1)),
    "Other": (("No TCD+No TCD", 0.5), ("Sign+Sign", 0.2), ("Signal+Signal", 0.1),
              ("Unknown+Unknown", 0.1), ("Other+Other", 0.1)),
}
_SPDLIM = {
    "Urban": (("45+45", 0.19), ("35+35", 0.20), ("Unknown", 0.134), ("40+40", 0.11),
              ("25+25", 0.088), ("30+30", 0.070), ("Other", 0.208)),
    "Rural": (("45+45", 0.275), ("35+35", 0.10), ("Unknown", 0.134), ("40+40", 0.065),
              ("25+25", 0.035), ("30+30", 0.025), ("Other", 0.366)),
}
_MAXSEV = {
    "D": (("No apparent injury", 0.560), ("Possible injury", 0.270),
          ("Suspected minor injury", 0.100), ("Suspected serious injury", 0.061),
          ("Fatal", 0.002), ("Injured, severity unknown", 0.007)),
    "opposite": (("No apparent injury", 0.46), ("Possible injury", 0.28),
                 ("Suspected minor injury", 0.15), ("Suspected serious injury", 0.095),
                 ("Fatal", 0.010), ("Injured, severity unknown", 0.005)),
    "JK": (("No apparent injury", 0.50), ("Possible injury", 0.28),
           ("Suspected minor injury", 0.125), ("Suspected serious injury", 0.085),
           ("Fatal", 0.005), ("Injured, severity unknown", 0.005)),
    "L": (("No apparent injury", 0.48), ("Possible injury", 0.29),
          ("Suspected minor injury", 0.13), ("Suspected serious injury", 0.088),
          ("Fatal", 0.007), ("Injured, severity unknown", 0.005)),
    "ME": (("No apparent injury", 0.75), ("Possible injury", 0.17),
           ("Suspected minor injury", 0.05), ("Suspected serious injury", 0.027),
           ("Fatal", 0.001), ("Injured, severity unknown", 0.002)),
}
_MAXSEV_GROUP = {"D": "D", "E": "ME", "F": "opposite", "G": "opposite", "H": "opposite",
                 "I": "opposite", "J": "JK", "K": "JK", "L": "L", "M": "ME"}
_MOC = {
    "D": (("Front-to-rear", 0.93), ("Angle", 0.03), ("Sideswipe, same direction", 0.03),
          ("Front-to-front", 0.002), ("Other", 0.008)),
    "E": (("Front-to-rear", 0.3), ("Angle", 0.4), ("Other", 0.3)),
    "F": (("Sideswipe, opposite direction", 0.35), ("Angle", 0.40),
          ("Front-to-front", 0.15), ("Sideswipe, same direction", 0.05), ("Other", 0.05)),
    "G": (("Front-to-front", 0.85), ("Angle", 0.10),
          ("Sideswipe, opposite direction", 0.04), ("Other", 0.01)),
    "H": (("Front-to-front", 0.60), ("Angle", 0.35), ("Other", 0.05)),
    "I": (("Sideswipe, opposite direction", 0.40), ("Angle", 0.45),
          ("Front-to-front", 0.10), ("Other", 0.05)),
    "J": (("Angle", 0.74), ("Front-to-front", 0.16), ("Sideswipe, same direction", 0.06),
          ("Front-to-rear", 0.03), ("Other", 0.01)),
    "K": (("Angle", 0.83), ("Sideswipe, same direction", 0.09), ("Front-to-rear", 0.05),
          ("Front-to-front", 0.02), ("Other", 0.01)),
    "L": (("Angle", 0.84), ("Front-to-rear", 0.07), ("Sideswipe, same direction", 0.05),
          ("Front-to-front", 0.02), ("Other", 0.02)),
    "M": (("Angle", 0.45), ("Other", 0.30), ("Sideswipe, same direction", 0.15),
          ("Front-to-rear", 0.10)),
}

_CONFIG_ACC = {"D": 20, "E": 34, "F": 44, "G": 50, "H": 54, "I": 60,
               "J": 68, "K": 76, "L": 86, "M": 92}

_INV_MAXSEV = {v: k for k, v in _MAXSEV_CODES.items()}
_INV_MOC = {v: k for k, v in _MOC_CODES.items()}
_INV_URBAN = {v: k for k, v in _URBAN_CODES.items()}
_INV_LIGHT = {v: k for k, v in _LIGHT_CODES.items()}
_INV_WEATHER = {v: k for k, v in _WEATHER_CODES.items()}
_INV_TYPINT = {v: k for k, v in _TYPINT_CODES.items()}
_INV_SURCON = {v: k for k, v in _SURCON_CODES.items()}
_INV_TCD = {v: k for k, v in _TCD_CODES.items()}
_INV_SPEEDREL = {"N": 0, "Y": 3, "U": 9}
_OTHER_SPDLIM_PAIRS = ((50, 50), (55, 55), (20, 20), (15, 15), (60, 60),
                       (45, 35), (35, 45), (40, 35), (30, 25), (45, 40))


def _draw(rng, table):
    labels = [t[0] for t in table]
    probs = np.asarray([t[1] for t in table])
    probs = probs / probs.sum()
    return labels[int(rng.choice(len(labels), p=probs))]


def _mutate_pattern(tokens, alphabet, rng):
    """Small within-type variations: maneuver swaps and post-collision tails."""
    tokens = list(tokens)
    kind = rng.random()
    if kind < 0.45:
        pos = 2 if rng.random() < 0.5 else 5
        role = tokens[pos].vehicle_role
        tags = [t for t in alphabet.tags(Phase.PCRASH3, role) if t != tokens[pos].code]
        tokens[pos] = alphabet.token(Phase.PCRASH3, role, tags[int(rng.integers(len(tags)))])
    elif kind < 0.75:
        role = tokens[6].vehicle_role
        run = "ROR" if rng.random() < 0.5 else "ROL"
        tokens.append(alphabet.token(Phase.SOE, role, run))
        tokens.append(alphabet.token(Phase.SOE, role, "XF"))
        if rng.random() < 0.3:
            tokens.append(alphabet.token(Phase.SOE, role, "XF"))
    elif kind < 0.90:
        pos = 0 if rng.random() < 0.5 else 3
        role = tokens[pos].vehicle_role
        tags = [t for t in alphabet.tags(Phase.PCRASH1, role) if t != tokens[pos].code]
        tokens[pos] = alphabet.token(Phase.PCRASH1, role, tags[int(rng.integers(len(tags)))])
    else:
        role = Role.V1 if rng.random() < 0.5 else Role.V2
        tokens.append(alphabet.token(Phase.SOE, role, "NCH"))
    return tokens


def _raw_code_for(alphabet, token, rng) -> int:
    codes = sorted(alphabet.entry(token.phase, token.code).crss_codes)
    return int(codes[int(rng.integers(len(codes)))])


def generate_synthetic(seed: int, n_crashes: int, config: SynthConfig | None = None) -> RawTables:
    """Deterministic synthetic corpus in the shape the loader expects."""
    if n_crashes < 1:
        raise ValueError("n_crashes must be >= 1")
    config = config or SynthConfig()
    rng = np.random.default_rng(seed)
    alphabet = Alphabet.load()
    groups = load_config_groups()
    patterns = load_seed_patterns()
    config_table = tuple((g.config, g.count_share) for g in groups)

    crashes, vehicles, events = {}, {}, {}
    for i in range(n_crashes):
        crash_id = f"C{i + 1:06d}"
        cc = _draw(rng, config_table)
        pats = patterns[cc]
        weights_arr = np.asarray([p[2] for p in pats])
        pat_idx = int(rng.choice(len(pats), p=weights_arr / weights_arr.sum()))
        base = parse(pats[pat_idx][1], alphabet)
        tokens = list(base.tokens)
        if rng.random() < config.noise:
            tokens = _mutate_pattern(tokens, alphabet, rng)

        tod = _draw(rng, _TOD)
        wetish_weather = _draw(rng, _WEATHER)
        light = _draw(rng, _LIGHT[(tod, wetish_weather in _WETISH)])
        surcon = _draw(rng, _SURCON[wetish_weather])
        urbrur = _draw(rng, _URBRUR)
        typint = _draw(rng, _TYPINT_L if cc == "L" else _TYPINT_OTHER)
        tcd = _draw(rng, _TCD[typint])
        spdlim = _draw(rng, _SPDLIM[urbrur])
        maxsev = _draw(rng, _MAXSEV[_MAXSEV_GROUP[cc]])
        moc = _draw(rng, _MOC[cc])
        speeding = _draw(rng, _SPEEDING[tod])
        careless = _draw(rng, _CARELESS_D if cc == "D" else _CARELESS_OTHER)
        didnotsee = _draw(rng, _DIDNOTSEE)
        reckless = _draw(rng, _RECKLESS)
        impropctrl = _draw(rng, _IMPROPCTRL)

        if tod == "Day":
            hour = int(rng.integers(6, 18))
        else:
            hour = [0, 1, 2, 3, 4, 5, 18, 19, 20, 21, 22, 23][int(rng.integers(12))]
        weight = round(float(np.exp(rng.normal(config.weight_mu, config.weight_sigma))), 2)
        crashes[crash_id] = {
            "CASENUM": crash_id, "VE_TOTAL": "2", "VE_FORMS": "2", "PVH_INVL": "0",
            "RELJCT2_IM": "2" if rng.random() < 0.7 else "3", "WRK_ZONE": "0",
            "ALCHL_IM": "2", "WEIGHT": repr(weight),
            "MAXSEV_IM": str(_INV_MAXSEV[maxsev]), "MANCOL_IM": str(_INV_MOC[moc]),
            "URBANICITY": str(_INV_URBAN[urbrur]), "HOUR_IM": str(hour),
            "LGTCON_IM": str(_INV_LIGHT[light]),
            "WEATHR_IM": str(_INV_WEATHER[wetish_weather]),
            "TYP_INT": "99" if typint == "Unknown" else str(_INV_TYPINT[typint]),
            "SUR_COND": "99" if surcon == "Unknown" else str(_INV_SURCON[surcon]),
        }

        # original numbering: J crashes may store the canonical V2 as vehicle 1
        if cc == "J":
            acc_by_role = {Role.V1: 68, Role.V2: 69}
            swapped = rng.random() < config.swap_share
        else:
            acc_by_role = {Role.V1: _CONFIG_ACC[cc], Role.V2: _CONFIG_ACC[cc]}
            swapped = False
        number_of_role = {Role.V1: 2, Role.V2: 1} if swapped else {Role.V1: 1, Role.V2: 2}

        def side(pair_label, role):
            return pair_label.split("+")[0 if role is Role.V1 else 1]

        vrows = {}
        for role in (Role.V1, Role.V2):
            triple = tokens[0:3] if tokens[0].vehicle_role is role else tokens[3:6]
            spd_side = side(spdlim, role) if spdlim not in ("Unknown", "Other") else None
            if spdlim == "Unknown":
                vspd = "98" if role is Role.V1 else str(int(rng.integers(25, 56) // 5 * 5))
            elif spdlim == "Other":
                pair = _OTHER_SPDLIM_PAIRS[int(rng.integers(len(_OTHER_SPDLIM_PAIRS)))]
                vspd = str(pair[0 if role is Role.V1 else 1])
            else:
                vspd = spd_side
            tcd_side = side(tcd, role)
            factors = []
            for factor, label in (("careless", careless), ("didnotsee", didnotsee),
                                  ("reckless", reckless), ("impropctrl", impropctrl)):
                factors.append(
                    str(_FACTOR_CODES[factor]) if side(label, role) == "Y" else "0"
                )
            vrows[role] = {
                "CASENUM": crash_id, "VEH_NO": str(number_of_role[role]),
                "ACC_TYPE": str(acc_by_role[role]),
                "P_CRASH1": str(_raw_code_for(alphabet, triple[0], rng)),
                "P_CRASH2": str(_raw_code_for(alphabet, triple[1], rng)),
                "P_CRASH3": str(_raw_code_for(alphabet, triple[2], rng)),
                "BDYTYP_IM": str([4, 14, 20, 31, 49][int(rng.integers(5))]),
                "TOW_VEH": "0", "BUS_USE": "0", "SPEC_USE": "0", "EMER_USE": "0",
                "VSPD_LIM": vspd,
                "VTRAFCON": "99" if tcd_side == "Unknown" else str(_INV_TCD[tcd_side]),
                "SPEEDREL": str(_INV_SPEEDREL[side(speeding, role)]),
                "DR_SF1": factors[0], "DR_SF2": factors[1],
                "DR_SF3": factors[2], "DR_SF4": factors[3],
            }
        vehicles[crash_id] = {
            int(vrows[role]["VEH_NO"]): vrows[role] for role in (Role.V1, Role.V2)
        }

        erows = []
        for pos, tok in enumerate(tokens[6:], start=1):
            erows.append(
                {
                    "CASENUM": crash_id, "EVENTNUM": str(pos),
                    "VNUMBER1": str(number_of_role[tok.vehicle_role]),
                    "SOE": str(_raw_code_for(alphabet, tok, rng)),
                }
            )
        events[crash_id] = erows
    return RawTables(crashes, vehicles, events)


def write_raw_csv(raw: RawTables, directory) -> dict[str, Path]:
    """accident.csv / vehicle.csv / event.csv with fixed column order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    specs = (
        ("accident.csv", CRASH_COLUMNS, [raw.crashes[c] for c in raw.crashes]),
        ("vehicle.csv", VEHICLE_COLUMNS,
         [row for cid in raw.vehicles for _, row in sorted(raw.vehicles[cid].items())]),
        ("event.csv", EVENT_COLUMNS,
         [row for cid in raw.events for row in raw.events[cid]]),
    )
    for name, columns, rows in specs:
        path = directory / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(columns))
            writer.writeheader()
            for row in rows:
                writer.writerow({c: row.get(c, "") for c in columns})
        paths[name] = path
    return paths
