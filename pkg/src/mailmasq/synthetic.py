"""Deterministic synthetic email corpora.

Real mail archives cannot ship with this repository, so demos and tests run
on templated corpora instead: "legitimate" bodies read like workplace
scheduling/report chatter, "phishing" bodies like credential-fishing alerts.
The two styles share filler words but have distinct content vocabularies,
which keeps them linearly separable for the detector sanity checks.  All
sampling flows from RngStream, so a (kind, n, seed) triple always regenerates
the identical corpus.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import InputError
from .numerics import RngStream, derive_seed

NAMES = [
    "Sarah", "John", "Michael", "Karen", "David", "Linda", "Robert", "Susan",
    "James", "Jennifer", "Kenneth", "Marcus", "Elena", "Priya", "Tomas",
]
DAYS = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"]
TIMES = ["9am", "10am", "11am", "noon", "2pm", "3pm", "4pm"]
TOPICS = [
    "budget", "forecast", "audit", "roadmap", "staffing", "quarterly",
    "vendor", "pipeline", "onboarding", "compliance",
]
ARTIFACTS = ["report", "summary", "agenda", "slides", "minutes", "draft", "spreadsheet"]
LEGIT_VERBS = ["review", "finalize", "circulate", "update", "confirm", "discuss", "prepare"]

ACCOUNT_WORDS = ["account", "mailbox", "profile", "membership", "subscription"]
THREAT_WORDS = ["suspended", "locked", "deactivated", "restricted", "terminated"]
CRED_WORDS = ["password", "credentials", "identity", "billing details", "card number"]
URGENCY = ["immediately", "within 24 hours", "right away", "before midnight", "today"]
PHISH_DOMAINS = [
    "secure-verify.example", "account-alerts.example", "billing-update.example",
    "login-check.example", "mail-support.example",
]

LEGIT_MIDDLE = [
    "Can we {verb} the {topic} {artifact} on {day} at {time}?",
    "I attached the {topic} {artifact} so you can {verb} it before {day}.",
    "The {topic} numbers moved again and we should {verb} the {artifact} together.",
    "Please {verb} the {artifact} and send your notes to {name} by {day}.",
    "We pushed the {topic} meeting to {day} at {time} in the usual room.",
    "Quick reminder that the {topic} {artifact} is due {day} morning.",
    "I spoke with {name} about the {topic} plan and we want to {verb} it this week.",
    "The shared folder is at http://intranet.corp/{topic} if you need the {artifact}.",
    "Could you loop in {name} so we {verb} the {topic} figures once?",
    "Nothing urgent, just checking whether the {artifact} is ready to {verb}.",
]
LEGIT_CLOSE = [
    "Thanks, {name}.",
    "Best, {name}.",
    "Talk {day}, {name}.",
    "Appreciate the help, {name}.",
]

PHISH_OPEN = [
    "Dear customer, your {account} has been {threat}.",
    "Security alert: unusual sign-in activity was detected on your {account}.",
    "Warning: your {account} will be {threat} {urgency}.",
    "Our system flagged a payment problem with your {account}.",
]
PHISH_MIDDLE = [
    "You must verify your {cred} {urgency} to restore access.",
    "Click http://{domain}/confirm and enter your {cred} to avoid suspension.",
    "Failure to confirm your {cred} {urgency} will result in your {account} being {threat}.",
    "To keep your {account} active, validate your {cred} at http://{domain}/login now.",
    "We could not process your last payment, so update your {cred} {urgency}.",
    "Download the attached form and reply with your {cred} to unlock your {account}.",
    "Your access remains {threat} until you confirm this request at http://{domain}/secure.",
]
PHISH_CLOSE = [
    "Thank you, the security team.",
    "Regards, account services.",
    "This is an automated warning, do not ignore it.",
]


def _choice(rng: RngStream, seq: list[str]) -> str:
    return seq[rng.below(len(seq))]


def _fill(rng: RngStream, template: str) -> str:
    return template.format(
        name=_choice(rng, NAMES),
        day=_choice(rng, DAYS),
        time=_choice(rng, TIMES),
        topic=_choice(rng, TOPICS),
        artifact=_choice(rng, ARTIFACTS),
        verb=_choice(rng, LEGIT_VERBS),
        account=_choice(rng, ACCOUNT_WORDS),
        threat=_choice(rng, THREAT_WORDS),
        cred=_choice(rng, CRED_WORDS),
        urgency=_choice(rng, URGENCY),
        domain=_choice(rng, PHISH_DOMAINS),
    )


def make_legit_body(rng: RngStream) -> str:
    parts = [f"Hi {_choice(rng, NAMES)},"]
    for _ in range(2 + rng.below(4)):
        parts.append(_fill(rng, _choice(rng, LEGIT_MIDDLE)))
    parts.append(_fill(rng, _choice(rng, LEGIT_CLOSE)))
    return " ".join(parts)


def make_phish_body(rng: RngStream) -> str:
    parts = [_fill(rng, _choice(rng, PHISH_OPEN))]
    for _ in range(2 + rng.below(3)):
        parts.append(_fill(rng, _choice(rng, PHISH_MIDDLE)))
    parts.append(_fill(rng, _choice(rng, PHISH_CLOSE)))
    return " ".join(parts)


def make_corpus(kind: str, n: int, seed: int) -> list[dict]:
    """n synthetic email records of the given kind ("legitimate"/"phishing")."""
    if kind == "legitimate":
        prefix, make_body = "legit", make_legit_body
    elif kind == "phishing":
        prefix, make_body = "phish", make_phish_body
    else:
        raise InputError(f"unknown corpus kind {kind!r}")
    if n < 1:
        raise InputError(f"corpus size must be positive, got {n}")
    records = []
    for i in range(n):
        rng = RngStream(derive_seed(seed, f"synthetic-{kind}", i))
        records.append(
            {
                "id": f"{prefix}-{i:04d}",
                "label": kind,
                "source": "synthetic",
                "body": make_body(rng),
            }
        )
    return records


def write_corpus(path: str | Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
