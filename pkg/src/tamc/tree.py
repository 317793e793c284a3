"""Abstraction trees of environment models and their breadth-first verification.

A tree is materialized from base models and a plan of rule applications.
Exactly one environment automaton is abstracted per tree; every other
environment automaton is held fixed across all nodes.  Traversal checks the
root against a system model and descends only below violated nodes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .checker import CounterExample, ResourceError, SafetyProperty, Verdict, check_safety
from .model import ModelError, Network, check_applicability, same_structure
from .rules import (DeltaVector, RuleApplication, RuleError, apply_r1, apply_r2, apply_r3,
                    r3_eligible, subtract_models)


class TreeError(ModelError):
    pass


class NodeResourceError(ResourceError):
    """A resource limit hit while checking one tree node."""

    def __init__(self, node: str, cause: ResourceError):
        Exception.__init__(self, f"node {node}: {cause}")
        self.cap = cause.cap
        self.what = cause.what
        self.node = node
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.node, self.cause)


@dataclass(frozen=True)
class Plan:
    steps: tuple            # RuleApplication records in declaration order
    abstract: str | None = None
    lines: tuple = ()       # source line of each step, parallel to steps


@dataclass
class TreeNode:
    id: str
    model: Network          # environment fragment
    provenance: RuleApplication
    children: tuple = ()
    index: int = 0          # plan declaration index
    verdict: str | None = None
    counterexample: CounterExample | None = None


@dataclass
class AbstractionTree:
    nodes: dict             # id -> TreeNode, in plan order
    root: str
    abstract: str

    def node(self, node_id: str) -> TreeNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TreeError(f"no node {node_id!r} in the tree") from None

    def parents(self, node_id: str) -> list[str]:
        return [n.id for n in self.nodes.values() if node_id in n.children]

    def leaves(self) -> list[str]:
        return [n.id for n in self.nodes.values() if not n.children]

    def automaton(self, node_id: str):
        return self.node(node_id).model.automaton(self.abstract)


def _infer_abstract(bases: dict) -> str:
    nets = list(bases.values())
    names = [a.name for a in nets[0].environment()]
    differing = [x for x in names
                 if any(x not in [a.name for a in n.automata] or n.automaton(x) != nets[0].automaton(x)
                        for n in nets[1:])]
    if len(differing) == 1:
        return differing[0]
    if not differing and len(names) == 1:
        return names[0]
    raise TreeError("cannot tell which environment automaton is abstracted; "
                    "name it with an 'abstract' line in the plan")


def _fixed_parts(n: Network, abstract: str):
    return [a for a in n.automata if a.name != abstract], n.channels, n.observable, n.system


def build_tree(bases: dict, plan: Plan, abstract: str | None = None) -> AbstractionTree:
    """Execute ``plan`` over ``bases`` (node id -> environment network)."""
    if not plan.steps:
        raise TreeError("empty plan")
    abstract = abstract or plan.abstract
    if abstract is None:
        abstract = _infer_abstract({s.output: bases[s.output] for s in plan.steps
                                    if s.rule == "base" and s.output in bases})
    nodes: dict[str, TreeNode] = {}
    used: set = set()
    fixed = None
    for k, step in enumerate(plan.steps, start=1):
        where = f"step {k} ({step.describe()})"
        if step.output in nodes:
            raise TreeError(f"{where}: node {step.output} is defined twice")
        for inp in step.inputs:
            if inp not in nodes:
                raise TreeError(f"{where}: unknown node {inp}")
        if len(set(step.inputs)) != len(step.inputs):
            raise TreeError(f"{where}: children of a node must be distinct")
        try:
            if step.rule == "base":
                if step.output not in bases:
                    raise TreeError(f"no model supplied for base {step.output}")
                net = bases[step.output]
                net.automaton(abstract)
                _, diags = check_applicability(net)
                if diags:
                    raise TreeError("; ".join(str(d) for d in diags))
                parts = _fixed_parts(net, abstract)
                if fixed is None:
                    fixed = parts
                elif parts != fixed:
                    raise TreeError(f"base {step.output} changes environment components "
                                    f"other than {abstract}")
            elif step.rule == "r1":
                src = nodes[step.inputs[0]].model
                net = src.replace_automaton(apply_r1(src.automaton(abstract), step.parameters))
            elif step.rule == "r2":
                m1, m2 = (nodes[i].model for i in step.inputs)
                net = m1.replace_automaton(apply_r2(m1.automaton(abstract), m2.automaton(abstract)))
            elif step.rule == "r3":
                net = apply_r3(nodes[step.inputs[0]].model, step.parameters, only={abstract})
            else:
                raise TreeError(f"unknown rule {step.rule}")
        except (ModelError, KeyError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            raise TreeError(f"{where}: {msg}") from None
        used.update(step.inputs)
        nodes[step.output] = TreeNode(step.output, net, step, tuple(step.inputs), k - 1)
    roots = [nid for nid in nodes if nid not in used]
    if len(roots) != 1:
        raise TreeError(f"the plan must produce exactly one root, found {len(roots)}: {', '.join(roots)}")
    return AbstractionTree(nodes, roots[0], abstract)


# ---------------------------------------------------------------------------
# traversal


@dataclass
class TraversalReport:
    tree: AbstractionTree
    property: SafetyProperty
    visited: tuple
    verdicts: dict                       # node id -> Verdict, visited nodes only
    counterexamples: tuple               # ((node id, CounterExample), ...)
    skipped: tuple
    forced: dict = field(default_factory=dict)  # node id -> Verdict, skipped nodes when forced

    @property
    def satisfied(self) -> bool:
        return self.verdicts[self.tree.root].satisfied

    def status(self, node_id: str) -> str | None:
        v = self.verdicts.get(node_id) or self.forced.get(node_id)
        return None if v is None else v.status


def _check(args):
    node_id, net, prop, max_states = args
    try:
        return check_safety(net, prop, max_states=max_states)
    except ResourceError as exc:
        raise NodeResourceError(node_id, exc) from None


def _check_all(tree, ids, system, prop, jobs, max_states):
    tasks = [(i, tree.node(i).model.compose(system), prop, max_states) for i in ids]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_check, tasks))
    else:
        results = [_check(t) for t in tasks]
    return dict(zip(ids, results))


def traverse_bfs(tree: AbstractionTree, system: Network, prop: SafetyProperty, jobs: int = 1,
                 force_all: bool = False, max_states: int | None = None) -> TraversalReport:
    """Level-order verification over the violated frontier."""
    order = {nid: n.index for nid, n in tree.nodes.items()}
    verdicts: dict[str, Verdict] = {}
    visited: list[str] = []
    level = [tree.root]
    while level:
        verdicts.update(_check_all(tree, level, system, prop, jobs, max_states))
        visited += level
        nxt = []
        for nid in level:
            if verdicts[nid].satisfied:
                continue
            for c in tree.node(nid).children:
                if c not in verdicts and c not in nxt:
                    nxt.append(c)
        level = sorted(nxt, key=order.__getitem__)
    returned = []
    for nid in visited:
        v = verdicts[nid]
        if v.satisfied:
            continue
        kids = tree.node(nid).children
        if all(verdicts[c].satisfied for c in kids):
            v.counterexample.node = nid
            returned.append((nid, v.counterexample))
    skipped = tuple(nid for nid in tree.nodes if nid not in verdicts)
    forced = _check_all(tree, list(skipped), system, prop, jobs, max_states) if force_all else {}
    return TraversalReport(tree, prop, tuple(visited), verdicts, tuple(returned), skipped, forced)


def annotate(tree: AbstractionTree, report: TraversalReport) -> AbstractionTree:
    """A copy of ``tree`` with verdicts and returned counter-examples attached."""
    ces = dict(report.counterexamples)
    nodes = {}
    for nid, n in tree.nodes.items():
        nodes[nid] = replace(n, verdict=report.status(nid), counterexample=ces.get(nid))
    return replace(tree, nodes=nodes)


# ---------------------------------------------------------------------------
# refinement


@dataclass(frozen=True)
class Proposal:
    id: str
    parent: str
    model: Network          # environment fragment with the refined automaton
    intervals: tuple        # ((edge address, clock, lo, hi), ...)


def refine_node(tree: AbstractionTree, node_id: str) -> list[Proposal]:
    """Candidate base models covering the parts of a violated node its satisfied children miss.

    Uses the verdicts attached to the tree (see :func:`annotate`); without
    verdicts every child is treated as satisfied.
    """
    node = tree.node(node_id)
    if not node.children:
        raise TreeError(f"node {node_id} is a leaf; there is nothing to subtract")
    if node.verdict == "satisfied":
        raise TreeError(f"node {node_id} is satisfied; only violated nodes are refined")
    kids = [tree.node(c) for c in node.children]
    if any(k.verdict is not None for k in kids):
        kids = [k for k in kids if k.verdict == "satisfied"]
    if not kids:
        raise TreeError(f"node {node_id} has no satisfied child to subtract")
    prov = node.provenance
    children = []
    for k in kids:
        net = k.model
        # compare like with like: children of an r3 node still carry the receptions
        if prov.rule == "r3":
            net = apply_r3(net, prov.parameters, only={tree.abstract})
        children.append(net.automaton(tree.abstract))
    try:
        models = subtract_models(tree.automaton(node_id), children)
    except RuleError as exc:
        raise TreeError(f"node {node_id}: {exc}") from None
    return [Proposal(f"{node_id}_sub{i}", node_id, node.model.replace_automaton(m.automaton), m.intervals)
            for i, m in enumerate(models, start=1)]


# ---------------------------------------------------------------------------
# automatic plans


def auto_plan(bases: dict, abstract: str, guard_delta: int = 0, inv_delta: int = 0) -> Plan:
    """Widen every base uniformly, drop eligible receptions, then merge left to right.

    ``bases`` maps node ids to environment networks in the order to use.
    """
    steps = []
    tops = []
    for name, net in bases.items():
        steps.append(RuleApplication("base", (), name, name))
        a = net.automaton(abstract)
        cur, cur_net = name, net
        d = DeltaVector.uniform(a, guard_delta, inv_delta)
        if d.guard or d.inv:
            out = f"{name}_r1"
            steps.append(RuleApplication("r1", (cur,), out, d))
            cur_net = cur_net.replace_automaton(apply_r1(a, d))
            cur = out
        for ch in r3_eligible(cur_net, abstract):
            out = f"{cur}_r3{ch}"
            steps.append(RuleApplication("r3", (cur,), out, ch))
            cur_net = apply_r3(cur_net, ch, only={abstract})
            cur = out
        tops.append((cur, cur_net.automaton(abstract)))
    if len(tops) > 1:
        first = tops[0][1]
        for nid, a in tops[1:]:
            if not same_structure(first, a):
                raise TreeError(f"{nid} does not have the structure of {tops[0][0]}; cannot merge")
        acc = tops[0][0]
        for k, (nid, _) in enumerate(tops[1:], start=1):
            out = "root" if k == len(tops) - 1 else f"merge{k}"
            steps.append(RuleApplication("r2", (acc, nid), out))
            acc = out
    return Plan(tuple(steps), abstract)
