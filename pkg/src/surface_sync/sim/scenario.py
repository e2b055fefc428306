"""Scenario files: a timed action script for named actors (schema v1).

Six actions keep traces reviewable: join, view_update, query, interaction,
disconnect, wait. Example::

    {"v": 1,
     "actors": [{"name": "sd", "role": "SHARED_DISPLAY"},
                {"name": "ar1", "role": "AR_CLIENT",
                 "qr_pose": {"origin": [0,0,0], "yaw_deg": 0, "normal": [0,0,1]}}],
     "actions": [{"t": 0.0, "actor": "sd", "action": "join"},
                 {"t": 0.1, "actor": "sd", "action": "view_update",
                  "params": {"center": [0,0], "zoom": 2}}]}
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from surface_sync.protocol import ROLES

from .replica import QrPose

SCENARIO_VERSION = 1
ACTIONS = ("join", "view_update", "query", "interaction", "disconnect", "wait")


@dataclass(frozen=True, slots=True)
class Actor:
    name: str
    role: str
    qr_pose: QrPose = QrPose()
    screen: tuple[float, float] = (512.0, 512.0)
    subscribe_view: bool = True

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True, slots=True)
class Action:
    t: float
    actor: str
    action: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}")


@dataclass(frozen=True, slots=True)
class Scenario:
    actors: tuple[Actor, ...]
    actions: tuple[Action, ...]

    def __post_init__(self) -> None:
        names = {a.name for a in self.actors}
        if len(names) != len(self.actors):
            raise ValueError("duplicate actor names")
        last_t = float("-inf")
        for action in self.actions:
            if action.actor not in names:
                raise ValueError(f"action references undeclared actor {action.actor!r}")
            if action.t < last_t:
                raise ValueError("action times must be non-decreasing")
            last_t = action.t


def _pose_from(doc: dict) -> QrPose:
    origin = doc.get("origin", [0.0, 0.0, 0.0])
    normal = doc.get("normal", [0.0, 0.0, 1.0])
    return QrPose(
        (float(origin[0]), float(origin[1]), float(origin[2])),
        float(doc.get("yaw_deg", 0.0)),
        (float(normal[0]), float(normal[1]), float(normal[2])),
    )


def scenario_from_json(doc: dict) -> Scenario:
    if doc.get("v") != SCENARIO_VERSION:
        raise ValueError(f"unsupported scenario version {doc.get('v')!r}")
    actors = []
    for a in doc.get("actors", []):
        screen = a.get("screen", [512.0, 512.0])
        actors.append(
            Actor(
                a["name"],
                a["role"],
                _pose_from(a.get("qr_pose", {})),
                (float(screen[0]), float(screen[1])),
                bool(a.get("subscribe_view", True)),
            )
        )
    actions = [
        Action(
            float(item.get("t", 0.0)),
            item["actor"],
            item["action"],
            item.get("params", {}),
        )
        for item in doc.get("actions", [])
    ]
    return Scenario(tuple(actors), tuple(actions))


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_json(json.load(fh))


def scenario_to_json(s: Scenario) -> dict:
    return {
        "v": SCENARIO_VERSION,
        "actors": [
            {
                "name": a.name,
                "role": a.role,
                "qr_pose": {
                    "origin": list(a.qr_pose.origin_world),
                    "yaw_deg": a.qr_pose.yaw_deg,
                    "normal": list(a.qr_pose.table_normal),
                },
                "screen": list(a.screen),
                "subscribe_view": a.subscribe_view,
            }
            for a in s.actors
        ],
        "actions": [
            {"t": x.t, "actor": x.actor, "action": x.action, "params": x.params}
            for x in s.actions
        ],
    }


def generate_scenario(
    seed: int,
    events: int = 100,
    ar_clients: int = 3,
    queries: tuple[str, ...] = (),
) -> Scenario:
    """Seeded mixed-event scenario: 1 SD, N AR clients, 1 external device.

    Includes mid-stream leaves/rejoins, view updates, queries, menu opens,
    grabs/releases and region selections; deterministic for a given seed.
    """
    rng = random.Random(seed)
    actors = [Actor("sd", "SHARED_DISPLAY")]
    for i in range(1, ar_clients + 1):
        actors.append(
            Actor(
                f"ar{i}",
                "AR_CLIENT",
                QrPose((0.0, 0.0, 0.0), 0.0, (0.0, 0.0, 1.0)),
            )
        )
    actors.append(Actor("ext", "EXTERNAL_DEVICE"))

    actions: list[Action] = []
    t = 0.0

    def step(actor: str, action: str, params: dict | None = None) -> None:
        nonlocal t
        t += 0.001
        actions.append(Action(t, actor, action, params or {}))

    step("sd", "join")
    for i in range(1, ar_clients + 1):
        step(f"ar{i}", "join")
    step("ext", "join")

    query_pool = list(queries) or [
        'SELECT * WHERE { ?s :lat ?lat ; :lon ?lon . FILTER(?lat >= -60 && ?lat <= 60 && ?lon >= -120 && ?lon <= 120) }',
        '{"preds":[],"proj":["*"],"regions":[{"nw":[50,-40],"se":[-50,40]}],"v":1}',
        'SELECT * WHERE { ?s :type ?type . FILTER(?type = "cargo") }',
    ]
    ar_names = [f"ar{i}" for i in range(1, ar_clients + 1)]
    joined = {"sd", "ext", *ar_names}
    request_n = 0
    grabbed: dict[str, str] = {}

    while sum(1 for a in actions if a.action != "wait") < events:
        choice = rng.random()
        if choice < 0.3:
            zoom = rng.uniform(0.5, 5.0)
            lat = rng.uniform(-60.0, 60.0)
            lon = rng.uniform(-150.0, 150.0)
            bearing = rng.choice([0.0, 90.0, 37.5, 180.0])
            step("sd", "view_update", {"center": [lat, lon], "zoom": zoom, "orientation_deg": bearing})
        elif choice < 0.5:
            requester = rng.choice(["sd", "ext", *ar_names])
            if requester not in joined:
                continue
            request_n += 1
            text = rng.choice(query_pool)
            dialect = "VISUAL-JSON" if text.startswith("{") else "SPARQL"
            step(requester, "query", {
                "dialect": dialect, "text": text, "request_id": f"q{request_n}",
                "spawn": rng.random() < 0.85,
            })
        elif choice < 0.65:
            actor = rng.choice(ar_names)
            if actor not in joined:
                continue
            step(actor, "interaction", {"kind": "MENU_OPEN", "data": {"screen_px": [rng.uniform(0, 512), rng.uniform(0, 512)]}})
        elif choice < 0.8:
            actor = rng.choice(ar_names)
            if actor not in joined:
                continue
            if actor in grabbed:
                step(actor, "interaction", {"kind": "RELEASE", "target": grabbed.pop(actor)})
            else:
                target = f"marker:@sd:v{rng.randrange(50):03d}"
                step(actor, "interaction", {"kind": "GRAB", "target": target})
        elif choice < 0.9:
            actor = rng.choice([*ar_names, "ext"])
            if actor not in joined:
                continue
            lat = rng.uniform(-50.0, 50.0)
            lon = rng.uniform(-120.0, 120.0)
            step(actor, "interaction", {
                "kind": "SELECT_REGION",
                "data": {
                    "region": {"nw": [lat + 5.0, lon - 5.0], "se": [lat - 5.0, lon + 5.0]},
                    "widget_px": [rng.uniform(0, 512), rng.uniform(0, 512)],
                },
            })
        else:
            # mid-stream churn: one AR client leaves and rejoins later
            actor = rng.choice(ar_names)
            if actor in joined and len(joined) > 3:
                joined.discard(actor)
                grabbed.pop(actor, None)
                step(actor, "disconnect")
            elif actor not in joined:
                joined.add(actor)
                step(actor, "join")
    return Scenario(tuple(actors), tuple(actions))
