"""Event token alphabet, vehicle renumbering, and crash sequence assembly.

The 71-token alphabet and the vehicle renumbering table ship as CSV data
files (``crashseq/data/``) so coding corrections never require a rebuild.
A rendered token is the vehicle role digit plus an uppercase tag, e.g.
``1ST`` = vehicle 1 going straight. A full sequence is hyphen-joined:
six pre-crash tokens (one PCRASH1/2/3 triple per vehicle, first-acting
vehicle first) followed by one or more chronological collision events.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

TOKEN_RE = re.compile(r"^([12])([A-Z]+)$")

#: tokens per phase in the shipped alphabet; checked at load time
PHASE_SIZES = {"PCRASH1": 14, "PCRASH2": 29, "PCRASH3": 11, "SOE": 17}


class Phase(str, Enum):
    PCRASH1 = "PCRASH1"
    PCRASH2 = "PCRASH2"
    PCRASH3 = "PCRASH3"
    SOE = "SOE"


class Role(str, Enum):
    V1 = "V1"
    V2 = "V2"

    @property
    def digit(self) -> str:
        return "1" if self is Role.V1 else "2"

    @property
    def other(self) -> "Role":
        return Role.V2 if self is Role.V1 else Role.V1

    @classmethod
    def from_digit(cls, digit: str) -> "Role":
        if digit == "1":
            return Role.V1
        if digit == "2":
            return Role.V2
        raise ValueError(f"not a role digit: {digit!r}")


class CodecError(Exception):
    """Base class for encoding/assembly failures."""


class UnknownCode(CodecError):
    def __init__(self, phase: Phase, raw_code: int, role: Role | None = None):
        self.phase = phase
        self.raw_code = raw_code
        self.role = role
        extra = f" for {role.value}" if role is not None else ""
        super().__init__(f"no {phase.value} alphabet row covers code {raw_code}{extra}")


class MissingRule(CodecError):
    def __init__(self, positions: tuple[int, int]):
        self.positions = positions
        super().__init__(f"no renumbering rule for crash type pair {positions[0]}-{positions[1]}")


class EmptySOE(CodecError):
    pass


class AmbiguousFirstEvent(CodecError):
    pass


class ParseError(CodecError):
    def __init__(self, text: str, position: int, reason: str):
        self.position = position
        super().__init__(f"bad token at position {position} in {text!r}: {reason}")


@dataclass(frozen=True)
class EventToken:
    """One encoded crash event attributed to a vehicle role."""

    vehicle_role: Role
    phase: Phase
    code: str

    def __post_init__(self):
        if not self.code or not self.code.isalpha() or not self.code.isupper():
            raise ValueError(f"bad event code tag {self.code!r}")

    @property
    def rendered(self) -> str:
        return self.vehicle_role.digit + self.code

    def with_role(self, role: Role) -> "EventToken":
        return EventToken(role, self.phase, self.code)


@dataclass(frozen=True)
class AlphabetEntry:
    phase: Phase
    code: str
    crss_codes: frozenset[int]
    roles: frozenset[Role]
    description: str


class Alphabet:
    """Token alphabet mapping raw CRSS codes to consolidated tags."""

    def __init__(self, entries: Iterable[AlphabetEntry]):
        self._by_tag: dict[tuple[Phase, str], AlphabetEntry] = {}
        self._by_code: dict[tuple[Phase, int], AlphabetEntry] = {}
        for entry in entries:
            key = (entry.phase, entry.code)
            if key in self._by_tag:
                raise ValueError(f"duplicate alphabet tag {entry.code} in {entry.phase.value}")
            self._by_tag[key] = entry
            for raw in entry.crss_codes:
                ckey = (entry.phase, raw)
                if ckey in self._by_code:
                    raise ValueError(f"CRSS code {raw} mapped twice in {entry.phase.value}")
                self._by_code[ckey] = entry
        sizes = {p: 0 for p in Phase}
        for entry in self._by_tag.values():
            sizes[entry.phase] += 1
        for phase, expected in PHASE_SIZES.items():
            if sizes[Phase(phase)] != expected:
                raise ValueError(
                    f"{phase} alphabet has {sizes[Phase(phase)]} tags, expected {expected}"
                )

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Alphabet":
        if path is None:
            text = resources.files("crashseq.data").joinpath("event_alphabet.csv").read_text()
        else:
            text = Path(path).read_text()
        entries = []
        for row in csv.DictReader(text.splitlines()):
            tag = row["code_tag"].strip()
            # role-restricted rows carry the role digit, e.g. 1AIA, 2XPV
            m = re.match(r"^([12]?)([A-Z]+)$", tag)
            if not m:
                raise ValueError(f"bad code_tag {tag!r} in alphabet file")
            digit, bare = m.groups()
            roles = frozenset({Role.from_digit(digit)}) if digit else frozenset(Role)
            codes = frozenset(int(c) for c in row["crss_codes"].split(";") if c.strip())
            entries.append(
                AlphabetEntry(Phase(row["phase"].strip()), bare, codes, roles, row["description"])
            )
        return cls(entries)

    def tags(self, phase: Phase, role: Role | None = None) -> tuple[str, ...]:
        return tuple(
            sorted(
                e.code
                for (p, _), e in self._by_tag.items()
                if p is phase and (role is None or role in e.roles)
            )
        )

    def entry(self, phase: Phase, code_tag: str) -> AlphabetEntry:
        return self._by_tag[(phase, code_tag)]

    def size(self, phase: Phase | None = None) -> int:
        if phase is None:
            return len(self._by_tag)
        return sum(1 for p, _ in self._by_tag if p is phase)

    def encode(self, phase: Phase, role: Role, raw_code: int) -> EventToken:
        """Map a raw CRSS event code to its consolidated token."""
        entry = self._by_code.get((phase, raw_code))
        if entry is None or role not in entry.roles:
            raise UnknownCode(phase, raw_code, role if entry is not None else None)
        return EventToken(role, phase, entry.code)

    def token(self, phase: Phase, role: Role, code_tag: str) -> EventToken:
        """Validated token constructor from a consolidated tag."""
        entry = self._by_tag.get((phase, code_tag))
        if entry is None or role not in entry.roles:
            raise KeyError(f"{code_tag} is not a {phase.value} tag for {role.value}")
        return EventToken(role, phase, code_tag)


_PCRASH_PHASES = (Phase.PCRASH1, Phase.PCRASH2, Phase.PCRASH3)


@dataclass(frozen=True)
class CrashSequence:
    """Ordered encoded events of one crash plus its sampling weight.

    The first six tokens are the PCRASH1-3 triple of the vehicle that acted
    first in the collision event record, then the other vehicle's triple;
    everything after position five is a chronological collision-phase event.
    """

    crash_id: str
    tokens: tuple[EventToken, ...]
    weight: float = 1.0
    crash_config: str = ""
    attributes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError(f"weight must be positive, got {self.weight}")
        toks = self.tokens
        if len(toks) < 7:
            raise ValueError(f"sequence needs >= 7 tokens, got {len(toks)}")
        first_role = toks[0].vehicle_role
        for offset, role in ((0, first_role), (3, first_role.other)):
            for i, phase in enumerate(_PCRASH_PHASES):
                tok = toks[offset + i]
                if tok.phase is not phase or tok.vehicle_role is not role:
                    raise ValueError(
                        f"token {offset + i} must be {role.value} {phase.value}, "
                        f"got {tok.vehicle_role.value} {tok.phase.value}"
                    )
        for i, tok in enumerate(toks[6:], start=6):
            if tok.phase is not Phase.SOE:
                raise ValueError(f"token {i} must be SOE phase, got {tok.phase.value}")
        if self.crash_config and self.crash_config not in "DEFGHIJKLM":
            raise ValueError(f"bad crash configuration {self.crash_config!r}")

    @property
    def first_role(self) -> Role:
        return self.tokens[0].vehicle_role


def assemble_sequence(
    v1_pcrash: Sequence[EventToken],
    v2_pcrash: Sequence[EventToken],
    soe: Sequence[EventToken],
    *,
    crash_id: str = "",
    weight: float = 1.0,
    crash_config: str = "",
    attributes: dict[str, str] | None = None,
) -> CrashSequence:
    """Join the two PCRASH triples and the collision events into one sequence.

    The triple of the vehicle whose event comes first in the collision
    record leads. Tokens passed here always carry a definite role; a raw
    event row without one fails earlier with AmbiguousFirstEvent in the
    ingest path.
    """
    for triple, role in ((v1_pcrash, Role.V1), (v2_pcrash, Role.V2)):
        if len(triple) != 3:
            raise ValueError(f"{role.value} pre-crash triple must have 3 tokens")
        for tok, phase in zip(triple, _PCRASH_PHASES):
            if tok.vehicle_role is not role or tok.phase is not phase:
                raise ValueError(f"bad {role.value} pre-crash triple token {tok.rendered}")
    if not soe:
        raise EmptySOE(f"crash {crash_id!r} has no collision events")
    first = soe[0].vehicle_role
    ordered = (v1_pcrash, v2_pcrash) if first is Role.V1 else (v2_pcrash, v1_pcrash)
    tokens = tuple(ordered[0]) + tuple(ordered[1]) + tuple(soe)
    return CrashSequence(
        crash_id=crash_id,
        tokens=tokens,
        weight=weight,
        crash_config=crash_config,
        attributes=dict(attributes or {}),
    )


def render(seq: CrashSequence) -> str:
    return "-".join(tok.rendered for tok in seq.tokens)


def parse(
    text: str,
    alphabet: Alphabet,
    *,
    crash_id: str = "",
    weight: float = 1.0,
    crash_config: str = "",
    attributes: dict[str, str] | None = None,
) -> CrashSequence:
    """Inverse of render: position decides each token's phase."""
    pieces = text.split("-") if text else []
    if len(pieces) < 7:
        raise ParseError(text, len(pieces), "sequence needs at least 7 tokens")
    tokens = []
    for i, piece in enumerate(pieces):
        m = TOKEN_RE.match(piece)
        if not m:
            raise ParseError(text, i, f"{piece!r} does not match [12][A-Z]+")
        role = Role.from_digit(m.group(1))
        phase = _PCRASH_PHASES[i % 3] if i < 6 else Phase.SOE
        try:
            tokens.append(alphabet.token(phase, role, m.group(2)))
        except KeyError as exc:
            raise ParseError(text, i, str(exc)) from exc
    try:
        return CrashSequence(
            crash_id=crash_id,
            tokens=tuple(tokens),
            weight=weight,
            crash_config=crash_config,
            attributes=dict(attributes or {}),
        )
    except ValueError as exc:
        raise ParseError(text, 0, str(exc)) from exc


class RuleRole(str, Enum):
    V1 = "V1"
    V2 = "V2"
    KEEP = "Keep"


@dataclass(frozen=True)
class RenumberRule:
    """Role assignment for one crash-type position pair."""

    positions: tuple[int, int]
    assignment: dict[int, RuleRole]

    def __post_init__(self):
        a, b = self.positions
        if a == b:
            if any(r is not RuleRole.KEEP for r in self.assignment.values()):
                raise ValueError(f"same-position pair {a}-{b} can only Keep")
            return
        roles = [self.assignment[a], self.assignment[b]]
        if RuleRole.KEEP in roles:
            if roles != [RuleRole.KEEP, RuleRole.KEEP]:
                raise ValueError(f"rule {a}-{b} mixes Keep with a role")
        elif roles[0] is roles[1]:
            raise ValueError(f"rule {a}-{b} maps both positions to {roles[0].value}")


class RenumberRules:
    """Crash-type position pair -> vehicle role table."""

    def __init__(self, rules: Iterable[RenumberRule]):
        self._rules: dict[tuple[int, int], RenumberRule] = {}
        for rule in rules:
            key = tuple(sorted(rule.positions))
            if key in self._rules:
                raise ValueError(f"duplicate renumbering rule for {key}")
            self._rules[key] = rule

    @classmethod
    def load(cls, path: str | Path | None = None) -> "RenumberRules":
        if path is None:
            text = resources.files("crashseq.data").joinpath("renumber_rules.csv").read_text()
        else:
            text = Path(path).read_text()
        rules = []
        for row in csv.DictReader(text.splitlines()):
            pos_a, pos_b = int(row["position_a"]), int(row["position_b"])
            if pos_a == pos_b:
                assignment = {pos_a: RuleRole(row["role_a"])}
            else:
                assignment = {pos_a: RuleRole(row["role_a"]), pos_b: RuleRole(row["role_b"])}
            rules.append(RenumberRule(tuple(sorted((pos_a, pos_b))), assignment))
        return cls(rules)

    def __contains__(self, positions: tuple[int, int]) -> bool:
        return tuple(sorted(positions)) in self._rules

    def assignment(self, positions_by_vehicle: tuple[int, int]) -> dict[int, Role]:
        """Roles for original vehicles 1 and 2 given their crash-type positions.

        Raises MissingRule when the pair has no table row; callers may fall
        back to assignment_or_keep.
        """
        key = tuple(sorted(positions_by_vehicle))
        rule = self._rules.get(key)
        if rule is None:
            raise MissingRule(key)
        out = {}
        for vehicle, pos in zip((1, 2), positions_by_vehicle):
            role = rule.assignment[pos]
            if role is RuleRole.KEEP:
                out[vehicle] = Role.V1 if vehicle == 1 else Role.V2
            else:
                out[vehicle] = Role(role.value)
        if out[1] == out[2]:
            raise ValueError(f"rule {key} assigned both vehicles to {out[1].value}")
        return out

    def assignment_or_keep(
        self, positions_by_vehicle: tuple[int, int]
    ) -> tuple[dict[int, Role], bool]:
        """Like assignment() but unlisted pairs keep original numbering.

        Returns the mapping plus a flag that is True when the fallback fired.
        """
        try:
            return self.assignment(positions_by_vehicle), False
        except MissingRule:
            return {1: Role.V1, 2: Role.V2}, True


def renumber_vehicles(
    rules: RenumberRules, positions_by_vehicle: tuple[int, int]
) -> dict[int, Role]:
    """Deterministic swap-or-keep of the two vehicles' roles."""
    return rules.assignment(positions_by_vehicle)
