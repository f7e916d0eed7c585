"""Game files and machine-readable output.

Game file (JSON)::

    {"states": 4, "mass": 1.0,
     "hyperarcs": [{"state": 1, "action": "a",
                    "heads": [{"state": 2, "prob": 1.0}],
                    "cost": {"a": 9, "b": 1}}, ...],
     "perturbation": [0, 0, 0, 0, 0, 0]}

States are 1-based in files and 0-based in memory.  The order of
``hyperarcs`` is the order of every output vector.
"""
from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from mdpcg.errors import KernelNotStochastic, ParseError
from mdpcg.model import AffineCost, GameSpec, Hyperarc

FILE_PROB_TOL = 1e-9


def load_game(source) -> tuple[GameSpec, np.ndarray]:
    """Parse a game file (path, JSON text or already-decoded dict).

    Returns the spec and the perturbation vector (zeros when absent).
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else source
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    return parse_game(doc)


def _number(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ParseError(f"{what} must be finite")
    return float(value)


def parse_game(doc: dict) -> tuple[GameSpec, np.ndarray]:
    if not isinstance(doc, dict):
        raise ParseError("game file must be a JSON object")
    for key in ("states", "mass", "hyperarcs"):
        if key not in doc:
            raise ParseError(f"missing key {key!r}")
    S = doc["states"]
    if isinstance(S, bool) or not isinstance(S, int) or S < 1:
        raise ParseError(f"'states' must be a positive integer, got {S!r}")
    mass = _number(doc["mass"], "'mass'")
    if mass <= 0:
        raise ParseError("'mass' must be positive")
    raw = doc["hyperarcs"]
    if not isinstance(raw, list) or not raw:
        raise ParseError("'hyperarcs' must be a non-empty array")

    arcs, slope, intercept = [], [], []
    for i, item in enumerate(raw, start=1):
        where = f"hyperarc {i}"
        if not isinstance(item, dict):
            raise ParseError(f"{where}: expected an object")
        try:
            state = item["state"]
            heads = item["heads"]
            cost = item["cost"]
        except KeyError as exc:
            raise ParseError(f"{where}: missing key {exc.args[0]!r}") from None
        if isinstance(state, bool) or not isinstance(state, int) or not 1 <= state <= S:
            raise ParseError(f"{where}: state {state!r} outside 1..{S}")
        action = str(item.get("action", f"a{i}"))
        if not isinstance(heads, list) or not heads:
            raise ParseError(f"{where}: 'heads' must be a non-empty array")
        parsed_heads = []
        for h in heads:
            if not isinstance(h, dict) or "state" not in h or "prob" not in h:
                raise ParseError(f"{where}: each head needs 'state' and 'prob'")
            hs = h["state"]
            if isinstance(hs, bool) or not isinstance(hs, int) or not 1 <= hs <= S:
                raise ParseError(f"{where}: head state {hs!r} outside 1..{S}")
            p = _number(h["prob"], f"{where}: probability")
            if p < 0:
                raise ParseError(f"{where}: negative probability {p!r}")
            parsed_heads.append((hs - 1, p))
        total = math.fsum(p for _, p in parsed_heads)
        if abs(total - 1.0) > FILE_PROB_TOL:
            raise ParseError(f"{where}: head probabilities sum to {total!r}, not 1")
        if not isinstance(cost, dict) or "a" not in cost or "b" not in cost:
            raise ParseError(f"{where}: 'cost' needs keys 'a' and 'b'")
        slope.append(_number(cost["a"], f"{where}: cost slope"))
        intercept.append(_number(cost["b"], f"{where}: cost intercept"))
        arcs.append(Hyperarc(state - 1, action, tuple(parsed_heads)))

    states_with_actions = {a.state for a in arcs}
    missing = sorted(set(range(S)) - states_with_actions)
    if missing:
        raise ParseError(f"states without hyperarcs: {[s + 1 for s in missing]}")
    try:
        spec = GameSpec(S, tuple(arcs), AffineCost(slope, intercept), mass)
    except KernelNotStochastic:
        # sums within the file tolerance: renormalize explicitly
        arcs = [
            Hyperarc(a.state, a.action, tuple((s, p / math.fsum(q for _, q in a.heads)) for s, p in a.heads))
            for a in arcs
        ]
        spec = GameSpec(S, tuple(arcs), AffineCost(slope, intercept), mass)

    eps = np.zeros(len(arcs))
    if doc.get("perturbation") is not None:
        pert = doc["perturbation"]
        if not isinstance(pert, list) or len(pert) != len(arcs):
            raise ParseError(f"'perturbation' must be an array of {len(arcs)} numbers")
        eps = np.array([_number(v, "perturbation entry") for v in pert])
    return spec, eps


def game_to_dict(spec: GameSpec, eps=None) -> dict:
    if spec.costs.kind != "affine":
        raise ValueError("only affine games can be written to a game file")
    doc = {
        "states": spec.num_states,
        "mass": spec.mass,
        "hyperarcs": [
            {
                "state": arc.state + 1,
                "action": arc.action,
                "heads": [{"state": s + 1, "prob": p} for s, p in arc.heads],
                "cost": {"a": float(a), "b": float(b)},
            }
            for arc, a, b in zip(spec.arcs, spec.costs.slope, spec.costs.intercept)
        ],
    }
    if eps is not None and np.any(eps != 0):
        doc["perturbation"] = [float(v) for v in eps]
    return doc


def dump_game(spec: GameSpec, eps=None) -> str:
    return json.dumps(game_to_dict(spec, eps), indent=2) + "\n"


def fixture_path(name: str) -> Path:
    """Path of a bundled game file, e.g. ``fixture_path("wheatstone.json")``."""
    return Path(str(resources.files("mdpcg") / "data" / name))


def fixture_names() -> list[str]:
    return sorted(p.name for p in (resources.files("mdpcg") / "data").iterdir()
                  if p.name.endswith(".json"))


def _format(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _format(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_format(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(_format(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _format(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_result(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _format(obj, indent, 0) + "\n"


def csv_float(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) else "nan"
