#!/usr/bin/env python3
"""Regenerates the normalized-log fixtures in this directory.

Run from anywhere: python3 generate.py
"""
import hashlib
import json
import os
from datetime import datetime, timedelta, timezone

HERE = os.path.dirname(os.path.abspath(__file__))

PEOPLE = {
    "alice": ("Alice Example", "alice@example.org"),
    "bob": ("Bob Example", "bob@example.org"),
    "charlotte": ("Charlotte Example", "charlotte@example.org"),
    "dave": ("Dave Example", "dave@example.org"),
    "eve": ("Eve Example", "eve@example.org"),
    "gus": ("Gus Example", "gus@example.org"),
    "hana": ("Hana Example", "hana@example.org"),
    "ivan": ("Ivan Example", "ivan@example.org"),
    "jo": ("Jo Example", "jo@example.org"),
}


def ts(s):
    return datetime.fromisoformat(s).replace(tzinfo=timezone.utc)


class Log:
    def __init__(self, name):
        self.name = name
        self.lines = []

    def commit(self, who, when, changes):
        name, email = PEOPLE[who]
        seed = f"{self.name}:{len(self.lines)}:{when.isoformat()}"
        self.lines.append({
            "id": hashlib.sha1(seed.encode()).hexdigest(),
            "author_name": name,
            "author_email": email,
            "ts": when.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "changes": [{"kind": k, "path": p} for k, p in changes],
        })

    def preamble(self, who, start, step):
        """A README plus 20 edits to it, so early commits add few paths."""
        self.commit(who, start, [("A", "README")])
        for k in range(1, 21):
            self.commit(who, start + step * k, [("M", "README")])
        return start + step * 21

    def write(self):
        with open(os.path.join(HERE, self.name + ".jsonl"), "w") as f:
            for line in self.lines:
                f.write(json.dumps(line, sort_keys=True) + "\n")


def satis():
    # Alice founds the project, Bob joins, both leave, Charlotte takes over.
    log = Log("satis")
    start = ts("2014-01-10T09:00:00")
    for i in range(1, 5):
        log.commit("alice", start + timedelta(days=7 * (i - 1)), [("A", f"src/a{i}.php")])
    day = start + timedelta(days=40)
    while day < ts("2015-08-20T00:00:00"):
        log.commit("alice", day, [("M", f"src/a{(day.day % 4) + 1}.php")])
        day += timedelta(days=45)
    log.commit("alice", ts("2015-08-20T10:00:00"), [("M", "src/a1.php")])
    for i in range(1, 5):
        log.commit("bob", ts(f"2015-0{i + 1}-03T12:00:00"), [("A", f"src/b{i}.php")])
    for i, month in enumerate(["06", "08", "09", "11"]):
        log.commit("bob", ts(f"2015-{month}-14T12:00:00"), [("M", f"src/b{i + 1}.php")])
    log.commit("bob", ts("2015-12-15T16:30:00"), [("M", "src/b2.php")])
    log.commit("charlotte", ts("2016-02-01T08:00:00"), [("A", "lib/c1.php")])
    for i in range(2, 11):
        log.commit("charlotte", ts("2016-02-01T08:00:00") + timedelta(days=20 * i),
                   [("A", f"lib/c{i}.php")])
    log.commit("dave", ts("2016-06-06T11:00:00"), [("M", "lib/c1.php")])
    day = ts("2016-09-01T08:00:00")
    while day <= ts("2017-06-30T08:00:00"):
        log.commit("charlotte", day, [("M", f"lib/c{(day.month % 10) + 1}.php")])
        day += timedelta(days=30)
    log.commit("charlotte", ts("2017-06-30T18:00:00"), [("M", "lib/c3.php")])
    log.write()


def orphaned():
    # Eve leaves; Gus keeps touching files but never becomes a main author.
    log = Log("orphaned")
    start = log.preamble("eve", ts("2013-01-01T10:00:00"), timedelta(days=2))
    for i in range(1, 6):
        log.commit("eve", start + timedelta(days=i - 1), [("A", f"core/e{i}.c")])
    for i in range(1, 6):
        log.commit("eve", ts(f"2013-0{i + 4}-15T10:00:00"), [("M", f"core/e{i}.c")])
    log.commit("eve", ts("2014-06-01T10:00:00"), [("M", "README")])
    for i in range(1, 6):
        log.commit("gus", ts(f"201{5 if i < 4 else 6}-0{i + 1}-20T10:00:00"), [("M", f"core/e{i}.c")])
    log.commit("gus", ts("2016-09-01T10:00:00"), [("M", "README")])
    log.write()


def steady():
    # Two developers active throughout; no detachment.
    log = Log("steady")
    day = log.preamble("hana", ts("2011-12-01T09:00:00"), timedelta(days=1))
    for i in range(1, 4):
        log.commit("hana", day + timedelta(hours=i), [("A", f"pkg/h{i}.go")])
        log.commit("ivan", day + timedelta(hours=10 + i), [("A", f"pkg/i{i}.go")])
    day += timedelta(days=30)
    n = 0
    while day < ts("2015-01-05T00:00:00"):
        who = "hana" if n % 2 == 0 else "ivan"
        prefix = "h" if who == "hana" else "i"
        log.commit(who, day, [("M", f"pkg/{prefix}{n % 3 + 1}.go")])
        day += timedelta(days=23)
        n += 1
    log.write()


def young():
    log = Log("young")
    log.preamble("jo", ts("2019-12-01T00:00:00"), timedelta(days=1))
    log.commit("jo", ts("2020-01-01T00:00:00"), [("A", "main.rs")])
    log.commit("jo", ts("2020-06-01T00:00:00"), [("M", "main.rs")])
    log.commit("jo", ts("2021-01-01T00:00:00"), [("M", "main.rs")])
    log.write()


def migrated():
    # Imported from another system: the first commit brings in everything.
    log = Log("migrated")
    log.commit("jo", ts("2010-01-01T00:00:00"), [("A", f"old/f{i}.py") for i in range(30)])
    for k in range(1, 30):
        log.commit("jo", ts("2010-01-01T00:00:00") + timedelta(days=40 * k), [("M", f"old/f{k}.py")])
    log.write()


if __name__ == "__main__":
    satis()
    orphaned()
    steady()
    young()
    migrated()
