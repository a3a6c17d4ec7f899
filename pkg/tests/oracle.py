"""Independent path-enumeration reference for attribute propagation.

For every (node, data item) pair this oracle enumerates each delivery path
from the item's declaring node, walks one attribute vector per path through
every node on that path, and only merges across paths at the observation
node, attribute-wise to the most exposed value. The engine instead merges
incrementally per node in topological order; agreement between the two is
what the acceptance suite checks. Representations here are plain dicts on
purpose.
"""

from __future__ import annotations

RAWNESS = ("raw", "secondary", "aggregate")
GRAIN = ("fine", "medium", "coarse")
CHANNEL_ORDER = ("plaintext", "link-encrypted", "tls", "onion", "local")
PHASES = ("cda", "dpp", "dpa", "ds", "dd")

# Relative order in which transforms apply within one phase (guideline order
# of the transforming capability kinds; all other kinds leave data alone).
_TRANSFORM_ORDER = (
    "secondary-context-conversion",
    "anonymize",
    "encrypt-rest",
    "granularity-reduction",
    "agg-knowledge",
    "agg-geography",
    "agg-chain",
    "agg-time-period",
    "agg-category",
)

_AGG = {
    "agg-knowledge",
    "agg-geography",
    "agg-chain",
    "agg-time-period",
    "agg-category",
}


def _vec(kind, personal, gran, enc, chan):
    return {
        "kind": kind,
        "personal": personal,
        "granularity": gran,
        "encrypted_at_rest": enc,
        "channel_in": chan,
    }


def _most_exposed(vectors):
    first = vectors[0]
    out = dict(first)
    for v in vectors[1:]:
        if RAWNESS.index(v["kind"]) < RAWNESS.index(out["kind"]):
            out["kind"] = v["kind"]
        out["personal"] = out["personal"] or v["personal"]
        if GRAIN.index(v["granularity"]) < GRAIN.index(out["granularity"]):
            out["granularity"] = v["granularity"]
        out["encrypted_at_rest"] = out["encrypted_at_rest"] and v["encrypted_at_rest"]
        if CHANNEL_ORDER.index(v["channel_in"]) < CHANNEL_ORDER.index(out["channel_in"]):
            out["channel_in"] = v["channel_in"]
    return out


def _transform(vec, cap_kind, params, phase):
    vec = dict(vec)
    if cap_kind == "secondary-context-conversion" and phase == "dpp":
        if vec["kind"] == "raw":
            vec["kind"] = "secondary"
    elif cap_kind in _AGG:
        vec["kind"] = "aggregate"
        vec["granularity"] = "coarse"
    elif cap_kind == "granularity-reduction":
        target = params.get("to")
        if target in GRAIN:
            if GRAIN.index(target) > GRAIN.index(vec["granularity"]):
                vec["granularity"] = target
        else:
            idx = GRAIN.index(vec["granularity"])
            vec["granularity"] = GRAIN[min(idx + 1, len(GRAIN) - 1)]
    elif cap_kind == "anonymize":
        vec["personal"] = False
    elif cap_kind == "encrypt-rest" and phase == "ds":
        vec["encrypted_at_rest"] = True
    return vec


def _ordered_caps(node):
    caps = [
        (c.kind.value, {p.value for p in c.at_phases}, dict(c.params))
        for c in node.capabilities
    ]
    caps.sort(
        key=lambda c: _TRANSFORM_ORDER.index(c[0]) if c[0] in _TRANSFORM_ORDER else 99
    )
    return caps


def _walk(node, entry):
    """Per utilised phase, the vector after that phase's transforms."""
    node_phases = {p.value for p in node.phases}
    states = {}
    vec = entry
    for phase in PHASES:
        if phase not in node_phases:
            continue
        for cap_kind, at, params in _ordered_caps(node):
            if phase in at:
                vec = _transform(vec, cap_kind, params, phase)
        states[phase] = vec
    return states


def oracle_flowstate(model):
    """{(node id, phase value, item name): vector dict} by path enumeration."""
    by_id = {n.id: n for n in model.nodes}
    inbound = {n.id: [] for n in model.nodes}
    for flow in model.flows:
        inbound[flow.dst].append(flow)
    item_names = sorted({d.name for n in model.nodes for d in n.data})

    def entry_vectors(nid, item):
        vectors = []
        for d in by_id[nid].data:
            if d.name == item:
                vectors.append(
                    _vec(d.kind.value, d.personal, d.granularity.value, False, "local")
                )
        for flow in inbound[nid]:
            if item not in flow.data:
                continue
            for upstream_entry in entry_vectors(flow.src, item):
                exit_vec = _walk(by_id[flow.src], upstream_entry).get("dd")
                if exit_vec is None:
                    raise AssertionError(
                        f"oracle: {item} cannot exit {flow.src} (no dd phase)"
                    )
                arrived = dict(exit_vec)
                arrived["channel_in"] = flow.channel.value
                arrived["encrypted_at_rest"] = False
                vectors.append(arrived)
        return vectors

    state = {}
    for node in model.nodes:
        for item in item_names:
            entries = entry_vectors(node.id, item)
            if not entries:
                continue
            walks = [_walk(node, e) for e in entries]
            for phase in walks[0]:
                state[(node.id, phase, item)] = _most_exposed([w[phase] for w in walks])
    return state


def engine_state_as_dicts(flowstate):
    """Convert the engine's FlowState to the oracle's representation."""
    return {
        (nid, phase.value, item): _vec(
            attrs.kind.value,
            attrs.personal,
            attrs.granularity.value,
            attrs.encrypted_at_rest,
            attrs.channel_in.value,
        )
        for (nid, phase, item), attrs in flowstate.items()
    }
