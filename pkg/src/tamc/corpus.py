"""The pedestrian / traffic light / car crossing case study.

Files live under ``tamc/corpus/crossing``.  The two mechanism predicates
classify a replayed counter-example of ``A[] not (P.Crossing and C.Crossing)``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .oracle import replay
from .syntax import load_model, parse_plan, parse_property
from .tree import build_tree

CORPUS = "crossing"
MODEL_FILES = ("pedestrian0_1.ta", "pedestrian0_2.ta", "car.ta", "safecar.ta", "casestudy.ta")


def corpus_dir() -> Path:
    return Path(str(resources.files("tamc") / "corpus" / CORPUS))


def read(name: str) -> str:
    return (corpus_dir() / name).read_text()


def model(name: str):
    return load_model(read(name), name)


def corpus_models() -> dict:
    """Every model file of the corpus, parsed."""
    return {name: model(name) for name in MODEL_FILES}


def collision():
    return parse_property(read("collision.prop"), "collision.prop")


def plan():
    return parse_plan(read("crossing.plan"), "crossing.plan")


def load_bases(p, base_dir: Path | None = None) -> dict:
    base_dir = base_dir or corpus_dir()
    out = {}
    for step in p.steps:
        if step.rule == "base":
            path = base_dir / step.parameters
            out[step.output] = load_model(path.read_text(), str(path.name))
    return out


def crossing_tree():
    p = plan()
    return build_tree(load_bases(p), p)


def faulty_car():
    return model("car.ta")


# ---------------------------------------------------------------------------
# mechanism predicates on replayed witnesses


def _locations(network, cex):
    res = replay(network, cex.witness)
    names = [a.name for a in network.automata]
    return [dict(zip(names, s.locations)) for s in res.states]


def red_light_crossing(network, cex) -> bool:
    """The pedestrian steps onto the crossing while its light is not green and the car is crossing."""
    states = _locations(network, cex)
    for before, after in zip(states, states[1:]):
        if (before["P"] != "Crossing" and after["P"] == "Crossing"
                and after["L"] != "PedGreen" and after["C"] == "Crossing"):
            return True
    return False


def green_green_switch(network, cex) -> bool:
    """Both enter under their own green light and the light switches while the pedestrian is crossing."""
    states = _locations(network, cex)
    for i in range(1, len(states)):
        if not (states[i - 1]["P"] != "Crossing" and states[i]["P"] == "Crossing"
                and states[i]["L"] == "PedGreen"):
            continue
        for j in range(i + 1, len(states)):
            if states[j]["P"] != "Crossing":
                break
            if (states[j - 1]["C"] != "Crossing" and states[j]["C"] == "Crossing"
                    and states[j]["L"] == "CarGreen"):
                lights = {s["L"] for s in states[i:j + 1]}
                if len(lights) > 1:
                    return True
    return False
