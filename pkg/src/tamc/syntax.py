"""Text formats: models (.ta), properties (.prop), plans (.plan), reports and trees (.json).

Model grammar::

    model     := decl*
    decl      := chandecl | automaton | sysdecl
    chandecl  := ["broadcast"] "chan" ["observable"] NAME ";"
    sysdecl   := "system" NAME ("," NAME)* ";"
    automaton := "automaton" NAME "{" ["clock" NAME ("," NAME)* ";"] "init" NAME ";"
                 locdef* edgedef* "}" [";"]
    locdef    := "loc" NAME ["{" "inv" conj ";" "}"] ";"
    edgedef   := "edge" NAME "->" NAME "{" ["guard" conj ";"] ["sync" NAME ("!"|"?") ";"]
                 ["reset" NAME ("," NAME)* ";"] "}" ";"
    conj      := atom ("&&" atom)*
    atom      := NAME ("<="|">=") NAT

``#`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction

from . import REPORT_SCHEMA
from .checker import CounterExample, SafetyProperty, Verdict
from .model import (BINARY, BROADCAST, GE, INTERNAL, LE, RECEIVE, SEND, Action, Automaton,
                    ClockAtom, Diagnostic, Edge, Location, ModelError, Network,
                    normalize_network, validate_network)
from .rules import DeltaVector, RuleApplication
from .tree import AbstractionTree, Plan, TraversalReport, TreeNode


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    start: int
    end: int

    def __str__(self):
        return f"{self.file}:{self.line}:{self.start}"


class ParseError(ModelError):
    """Raised by the strict loaders; carries every error diagnostic."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class UnsupportedFragment(ParseError):
    pass


# ---------------------------------------------------------------------------
# lexer

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<neg>-\d+)
  | (?P<nat>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>->|&&|<=|>=|[{};,!?])
""", re.VERBOSE)

DECL_KEYWORDS = ("chan", "broadcast", "automaton", "system")


@dataclass(frozen=True)
class Token:
    kind: str   # name | nat | sym | error | eof
    text: str
    span: SourceSpan


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    out = []
    line, col0, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - col0 + 1
        if m is None:
            ch = text[pos]
            out.append(Token("error", f"unexpected character {ch!r}",
                             SourceSpan(file, line, col, col)))
            pos += 1
            continue
        kind = m.lastgroup
        tok = m.group()
        span = SourceSpan(file, line, col, col + len(tok) - 1)
        if kind == "nl":
            line += 1
            col0 = m.end()
        elif kind == "neg":
            out.append(Token("error", f"negative number {tok}; a natural number is required", span))
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, tok, span))
        pos = m.end()
    col = pos - col0 + 1
    out.append(Token("eof", "", SourceSpan(file, line, col, col)))
    return out


# ---------------------------------------------------------------------------
# model parser


class _Fail(Exception):
    def __init__(self, message, span, address=""):
        super().__init__(message)
        self.diag = Diagnostic("error", address, message, span)


@dataclass
class ParsedModel:
    network: Network | None
    diagnostics: list
    spans: dict = field(default_factory=dict)   # address -> SourceSpan

    @property
    def errors(self):
        return [d for d in self.diagnostics if d.is_error]


class _ModelParser:
    def __init__(self, tokens, file):
        self.toks = tokens
        self.i = 0
        self.file = file
        self.spans: dict = {}
        self.channels = []
        self.observable = set()
        self.system = []
        self.automata = []
        self.diags = []

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind == "error":
            raise _Fail(f"lexical error: {t.text}", t.span)
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text) -> bool:
        t = self.peek()
        return t.kind in ("name", "sym") and t.text == text

    def expect(self, text) -> Token:
        t = self.next()
        if t.kind not in ("name", "sym") or t.text != text:
            raise _Fail(f"expected {text!r}, found {_show(t)}", t.span)
        return t

    def name(self, what="name") -> Token:
        t = self.next()
        if t.kind != "name":
            raise _Fail(f"expected {what}, found {_show(t)}", t.span)
        return t

    def nat(self) -> int:
        t = self.next()
        if t.kind != "nat":
            raise _Fail(f"expected a natural number, found {_show(t)}", t.span)
        return int(t.text)

    def names(self, what) -> list[Token]:
        out = [self.name(what)]
        while self.at(","):
            self.next()
            out.append(self.name(what))
        return out

    def parse(self):
        while self.peek().kind != "eof":
            start = self.i
            try:
                self.decl()
            except _Fail as f:
                self.diags.append(f.diag)
                self.recover(start)

    def recover(self, start):
        self.i = max(self.i, start + 1)
        while True:
            t = self.toks[self.i]
            if t.kind == "eof" or (t.kind == "name" and t.text in DECL_KEYWORDS):
                return
            self.i += 1

    def decl(self):
        t = self.peek()
        if t.kind == "error":
            self.next()
        if self.at("chan") or self.at("broadcast"):
            kind = BINARY
            if self.at("broadcast"):
                self.next()
                kind = BROADCAST
            self.expect("chan")
            obs = False
            if self.at("observable"):
                self.next()
                obs = True
            n = self.name("channel name")
            self.expect(";")
            self.channels.append((n.text, kind))
            self.spans.setdefault(n.text, n.span)
            if obs:
                self.observable.add(n.text)
        elif self.at("automaton"):
            self.automaton()
        elif self.at("system"):
            self.next()
            for n in self.names("automaton name"):
                self.system.append(n.text)
                self.spans.setdefault(f"system {n.text}", n.span)
            self.expect(";")
        else:
            raise _Fail(f"expected a declaration, found {_show(self.next())}", t.span)

    def conj(self) -> tuple:
        atoms = [self.atom()]
        while self.at("&&"):
            self.next()
            atoms.append(self.atom())
        return tuple(atoms)

    def atom(self) -> ClockAtom:
        c = self.name("clock name")
        op = self.next()
        if op.kind != "sym" or op.text not in (GE, LE):
            raise _Fail(f"expected '<=' or '>=', found {_show(op)}", op.span)
        return ClockAtom(c.text, op.text, self.nat())

    def automaton(self):
        self.expect("automaton")
        nt = self.name("automaton name")
        aname = nt.text
        self.spans.setdefault(aname, nt.span)
        self.expect("{")
        clocks = []
        if self.at("clock"):
            self.next()
            clocks = [t.text for t in self.names("clock name")]
            self.expect(";")
        self.expect("init")
        init = self.name("location name").text
        self.expect(";")
        locs = []
        while self.at("loc"):
            self.next()
            ln = self.name("location name")
            inv = ()
            if self.at("{"):
                self.next()
                self.expect("inv")
                inv = self.conj()
                self.expect(";")
                self.expect("}")
            self.expect(";")
            locs.append(Location(ln.text, inv))
            self.spans.setdefault(f"{aname}.{ln.text}", ln.span)
        edges = []
        counts: dict = {}
        while self.at("edge"):
            et = self.next()
            src = self.name("location name").text
            self.expect("->")
            dst = self.name("location name").text
            self.expect("{")
            guard, action, resets = (), Action(), ()
            if self.at("guard"):
                self.next()
                guard = self.conj()
                self.expect(";")
            if self.at("sync"):
                self.next()
                ch = self.name("channel name").text
                mark = self.next()
                if mark.text not in ("!", "?"):
                    raise _Fail(f"expected '!' or '?', found {_show(mark)}", mark.span)
                action = Action(SEND if mark.text == "!" else RECEIVE, ch)
                self.expect(";")
            if self.at("reset"):
                self.next()
                resets = tuple(t.text for t in self.names("clock name"))
                self.expect(";")
            self.expect("}")
            self.expect(";")
            k = counts.get((src, dst), 0)
            counts[(src, dst)] = k + 1
            edges.append(Edge(src, dst, action, resets, guard))
            self.spans.setdefault(f"{aname}.{src}->{dst}#{k}", et.span)
        end = self.peek()
        if not self.at("}"):
            raise _Fail(f"expected 'loc', 'edge' or '}}', found {_show(end)}", end.span)
        self.next()
        if self.at(";"):
            self.next()
        self.automata.append(Automaton(aname, tuple(locs), init, tuple(clocks), tuple(edges)))


def _show(t: Token) -> str:
    if t.kind == "eof":
        return "end of input"
    if t.kind == "error":
        return t.text
    return repr(t.text)


def _span_for(spans: dict, address: str, file: str) -> SourceSpan:
    if address in spans:
        return spans[address]
    # fall back to the enclosing automaton or location
    head = address
    while "." in head or "->" in head:
        head = head.rsplit("->", 1)[0] if "->" in head else head.rsplit(".", 1)[0]
        if head in spans:
            return spans[head]
    return SourceSpan(file, 1, 1, 1)


def parse_model(text: str, file: str = "<input>") -> ParsedModel:
    """Parse and validate a model; ``network`` is None when errors were found."""
    p = _ModelParser(tokenize(text, file), file)
    p.parse()
    if p.diags:
        return ParsedModel(None, p.diags, p.spans)
    n = Network(tuple(p.automata), tuple(p.channels), frozenset(p.observable), frozenset(p.system))
    diags = []
    for d in validate_network(n):
        diags.append(Diagnostic(d.severity, d.address, d.message, _span_for(p.spans, d.address, file)))
    if any(d.is_error for d in diags):
        return ParsedModel(None, diags, p.spans)
    n, _ = normalize_network(n)
    return ParsedModel(n, diags, p.spans)


def load_model(text: str, file: str = "<input>") -> Network:
    res = parse_model(text, file)
    if res.network is None:
        raise ParseError(res.errors)
    return res.network


def _conj(atoms) -> str:
    return " && ".join(str(at) for at in atoms)


def unparse_model(n: Network) -> str:
    lines = []
    for name, kind in n.channels:
        head = "broadcast chan" if kind == BROADCAST else "chan"
        obs = " observable" if name in n.observable else ""
        lines.append(f"{head}{obs} {name};")
    for a in n.automata:
        if lines:
            lines.append("")
        lines.append(f"automaton {a.name} {{")
        if a.clocks:
            lines.append(f"  clock {', '.join(a.clocks)};")
        lines.append(f"  init {a.initial};")
        for loc in a.locations:
            inv = f" {{ inv {_conj(loc.invariant)}; }}" if loc.invariant else ""
            lines.append(f"  loc {loc.name}{inv};")
        for e in a.edges:
            body = []
            if e.guard:
                body.append(f"guard {_conj(e.guard)};")
            if e.action.kind != INTERNAL:
                body.append(f"sync {e.action};")
            if e.resets:
                body.append(f"reset {', '.join(e.resets)};")
            inner = " " + " ".join(body) + " " if body else " "
            lines.append(f"  edge {e.source} -> {e.target} {{{inner}}};")
        lines.append("}")
    system = [a.name for a in n.automata if a.name in n.system]
    system += sorted(n.system - set(system))
    if system:
        if lines:
            lines.append("")
        lines.append(f"system {', '.join(system)};")
    return "\n".join(lines) + "\n" if lines else ""


# ---------------------------------------------------------------------------
# properties

_PROP_TOKEN = re.compile(r"\s*(A\[\]|E<>|A<>|E\[\]|-->|[A-Za-z_][A-Za-z0-9_]*|\S)")


_UNSUPPORTED = ("E<>", "A<>", "E[]", "-->", "or", "imply")


def parse_property(text: str, file: str = "<input>") -> SafetyProperty:
    """``A[] not (X.l and Y.m ...)``; every other temporal form is rejected."""
    body = "\n".join(line.split("#", 1)[0] for line in text.splitlines())
    toks = []
    pos = 0
    while True:
        m = _PROP_TOKEN.match(body, pos)
        if m is None or not m.group(1):
            break
        line = body.count("\n", 0, m.start(1)) + 1
        col = m.start(1) - (body.rfind("\n", 0, m.start(1)) + 1) + 1
        toks.append((m.group(1), SourceSpan(file, line, col, col + len(m.group(1)) - 1)))
        pos = m.end()
    toks.append(("", SourceSpan(file, body.count("\n") + 1, 1, 1)))
    i = 0

    def fail(msg, span, cls=ParseError):
        raise cls([Diagnostic("error", "property", msg, span)])

    def take(want=None):
        nonlocal i
        tok, span = toks[i]
        if want is not None and tok != want:
            if tok == "A[]":
                fail("nested temporal operators are not supported", span, UnsupportedFragment)
            fail(f"expected {want!r}, found {tok!r}" if tok else f"expected {want!r}, found end of input",
                 span)
        i += 1
        return tok, span

    for tok, span in toks:
        if tok in _UNSUPPORTED:
            fail(f"unsupported property fragment {tok!r}; only 'A[] not (...)' is supported",
                 span, UnsupportedFragment)
    tok, span = toks[0]
    if tok != "A[]":
        fail(f"expected 'A[]', found {tok!r}" if tok else "empty property", span)
    take()
    take("not")
    take("(")
    preds = []
    while True:
        aut, span = take()
        if not re.fullmatch(r"[A-Za-z_]\w*", aut or "-"):
            fail(f"expected an automaton name, found {aut!r}", span)
        take(".")
        loc, span = take()
        if not re.fullmatch(r"[A-Za-z_]\w*", loc or "-"):
            fail(f"expected a location name, found {loc!r}", span)
        preds.append((aut, loc))
        tok, span = toks[i]
        if tok == "and":
            take()
            continue
        take(")")
        break
    tok, span = toks[i]
    if tok:
        fail(f"unexpected {tok!r} after the property", span)
    return SafetyProperty(tuple(preds))


# ---------------------------------------------------------------------------
# plans

_NAME = r"[A-Za-z_]\w*"
_PLAN_LINE = re.compile(rf"^\s*({_NAME})\s*=\s*(base|r1|r2|r3)\s*\((.*?)\)\s*(.*)$")
_EDGE_ADDR = re.compile(rf"^{_NAME}\.{_NAME}->{_NAME}(#\d+)?$")
_LOC_ADDR = re.compile(rf"^({_NAME})\.({_NAME})$")
# "#" inside an edge address is not a comment
_COMMENT = re.compile(r"(^|\s)#.*$")


def parse_plan(text: str, file: str = "<input>") -> Plan:
    """Line-oriented plan; see the README for the syntax."""
    steps, lines = [], []
    abstract = None
    defined: set = set()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = _COMMENT.sub("", raw).rstrip()
        if not line.strip():
            continue

        def fail(msg, col=1):
            span = SourceSpan(file, ln, col, max(col, len(raw)))
            raise ParseError([Diagnostic("error", f"line {ln}", msg, span)])

        words = line.split()
        if words[0] == "abstract":
            if len(words) != 2 or not re.fullmatch(_NAME, words[1]):
                fail("expected 'abstract NAME'")
            abstract = words[1]
            continue
        m = _PLAN_LINE.match(line)
        if m is None:
            fail(f"cannot parse plan line {line.strip()!r}")
        node, rule, args, rest = m.groups()
        if node in defined:
            fail(f"node {node} is defined twice")
        args = [x.strip() for x in args.split(",")] if args.strip() else []
        if rule == "base":
            if len(args) != 1 or not args[0]:
                fail("base(...) takes one file name")
            step = RuleApplication("base", (), node, args[0])
        else:
            want = {"r1": 1, "r2": 2, "r3": 2}[rule]
            if len(args) != want:
                fail(f"{rule}(...) takes {want} argument{'s' if want > 1 else ''}")
            inputs = tuple(args[:2] if rule == "r2" else args[:1])
            for inp in inputs:
                if inp not in defined:
                    fail(f"unknown node reference {inp!r}", line.find(inp) + 1)
            if rule == "r1":
                params = _plan_deltas(rest, fail)
            elif rule == "r3":
                if not re.fullmatch(_NAME, args[1]):
                    fail(f"malformed channel name {args[1]!r}")
                params = args[1]
            else:
                params = None
            if rule != "r1" and rest.strip():
                fail(f"unexpected text after {rule}(...): {rest.strip()!r}")
            step = RuleApplication(rule, inputs, node, params)
        defined.add(node)
        steps.append(step)
        lines.append(ln)
    return Plan(tuple(steps), abstract, tuple(lines))


def _plan_deltas(rest: str, fail) -> DeltaVector:
    words = rest.split()
    guard, inv = [], []
    section = None
    i = 0
    while i < len(words):
        w = words[i]
        if w in ("guard", "inv"):
            section = w
            i += 1
            continue
        if section is None:
            fail(f"expected 'guard' or 'inv', found {w!r}")
        if i + 2 >= len(words):
            fail(f"incomplete {section} delta starting at {w!r}")
        addr, clock, delta = words[i:i + 3]
        if not re.fullmatch(_NAME, clock):
            fail(f"malformed clock name {clock!r}")
        m = re.fullmatch(r"([+-]?)(\d+)", delta)
        if m is None:
            fail(f"malformed delta {delta!r}")
        sign, value = m.group(1), int(m.group(2))
        if section == "guard":
            if not _EDGE_ADDR.match(addr):
                fail(f"malformed edge address {addr!r} (expected AUTOMATON.SOURCE->TARGET#k)")
            if sign == "+" and value:
                fail(f"negative delta {delta}: guard deltas lower the bound and are written -D")
            guard.append((addr, clock, value))
        else:
            lm = _LOC_ADDR.match(addr)
            if lm is None:
                fail(f"malformed location address {addr!r} (expected AUTOMATON.LOCATION)")
            if sign == "-" and value:
                fail(f"negative delta {delta}: invariant deltas raise the bound and are written +D")
            inv.append((lm.group(1), lm.group(2), clock, value))
        i += 3
    return DeltaVector(tuple(guard), tuple(inv))


def unparse_plan(plan: Plan) -> str:
    out = []
    if plan.abstract:
        out.append(f"abstract {plan.abstract}")
    out += [s.describe() for s in plan.steps]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# reports


def _q(x) -> list:
    x = Fraction(x)
    return [x.numerator, x.denominator]


def _cex_json(cex: CounterExample, node=None) -> dict:
    tr = cex.symbolic
    out = {}
    if node is not None:
        out["node"] = node
    out["trace"] = [
        {"locations": list(locs), "zone": z.describe()}
        for locs, z in zip(tr.locations, tr.zones)
    ]
    out["witness"] = [
        {"delay": _q(s.delay), "edges": list(s.edges), "channel": s.channel}
        for s in cex.witness
    ]
    w = cex.word
    out["word"] = {"channels": list(w.channels), "sigma": [list(s) for s in w.sigma],
                   "tau": [_q(t) for t in w.tau]}
    return out


def _stats_json(v: Verdict) -> dict:
    s = v.statistics
    return {"states_explored": s.states_explored, "states_stored": s.states_stored,
            "peak_waiting": s.peak_waiting}


def verdict_json(v: Verdict, prop: SafetyProperty | None = None) -> dict:
    out = {"tamc-report": REPORT_SCHEMA, "kind": "check"}
    if prop is not None:
        out["property"] = str(prop)
    out["verdict"] = v.status
    out["statistics"] = _stats_json(v)
    if v.counterexample is not None:
        out["counterexample"] = _cex_json(v.counterexample)
    return out


def _provenance_json(p: RuleApplication) -> dict:
    out = {"rule": p.rule, "inputs": list(p.inputs)}
    if p.rule == "r1":
        out["guard"] = [list(x) for x in p.parameters.guard]
        out["inv"] = [list(x) for x in p.parameters.inv]
    elif p.rule in ("r3", "base"):
        out["parameter"] = p.parameters
    return out


def traversal_json(r: TraversalReport) -> dict:
    nodes = []
    for nid, n in r.tree.nodes.items():
        entry = {"id": nid, "provenance": _provenance_json(n.provenance),
                 "children": list(n.children)}
        v = r.verdicts.get(nid)
        entry["verdict"] = v.status if v is not None else "unchecked"
        if v is not None:
            entry["statistics"] = _stats_json(v)
        f = r.forced.get(nid)
        if f is not None:
            entry["forced_verdict"] = f.status
        nodes.append(entry)
    return {
        "tamc-report": REPORT_SCHEMA,
        "kind": "traversal",
        "property": str(r.property),
        "root": r.tree.root,
        "abstract": r.tree.abstract,
        "verdict": "satisfied" if r.satisfied else "violated",
        "visited": list(r.visited),
        "skipped": list(r.skipped),
        "nodes": nodes,
        "counterexamples": [_cex_json(c, nid) for nid, c in r.counterexamples],
    }


def _cex_text(cex: CounterExample) -> list[str]:
    out = ["  witness:"]
    if not cex.witness:
        out.append("    (initial state)")
    t = Fraction(0)
    for s in cex.witness:
        t += s.delay
        via = f" via {s.channel}" if s.channel else ""
        out.append(f"    delay {s.delay} -> t={t}: {', '.join(s.edges)}{via}")
    names = [a.name for a in cex.symbolic.network.automata]
    final = ", ".join(f"{a}.{l}" for a, l in zip(names, cex.symbolic.locations[-1]))
    out.append(f"  final: {final}")
    out.append(f"  observable word: {cex.word}")
    return out


def write_report(obj, fmt: str = "json", prop: SafetyProperty | None = None) -> str:
    """Render a :class:`Verdict` or :class:`TraversalReport` as ``json`` or ``text``."""
    if fmt not in ("json", "text"):
        raise ValueError(f"unknown report format {fmt!r}")
    if fmt == "json":
        data = traversal_json(obj) if isinstance(obj, TraversalReport) else verdict_json(obj, prop)
        return json.dumps(data, indent=2) + "\n"
    lines = []
    if isinstance(obj, TraversalReport):
        lines.append(f"property: {obj.property}")
        lines.append(f"root {obj.tree.root}: {'satisfied' if obj.satisfied else 'violated'}")
        for nid in obj.visited:
            lines.append(f"  {nid}: {obj.verdicts[nid].status}")
        if obj.skipped:
            lines.append(f"skipped: {', '.join(obj.skipped)}")
        for nid, cex in obj.counterexamples:
            lines.append(f"counter-example at {nid}:")
            lines += _cex_text(cex)
    else:
        if prop is not None:
            lines.append(f"property: {prop}")
        lines.append(f"verdict: {obj.status}")
        s = obj.statistics
        lines.append(f"states explored {s.states_explored}, stored {s.states_stored}, "
                     f"peak waiting {s.peak_waiting}")
        if obj.counterexample is not None:
            lines.append("counter-example:")
            lines += _cex_text(obj.counterexample)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# trees


def tree_json(tree: AbstractionTree) -> dict:
    return {
        "tamc-tree": REPORT_SCHEMA,
        "abstract": tree.abstract,
        "root": tree.root,
        "nodes": [
            {"id": nid, "step": n.provenance.describe(), "children": list(n.children),
             "model": unparse_model(n.model)}
            for nid, n in tree.nodes.items()
        ],
    }


def dump_tree(tree: AbstractionTree) -> str:
    return json.dumps(tree_json(tree), indent=2) + "\n"


def load_tree(text: str, file: str = "<tree>") -> AbstractionTree:
    try:
        data = json.loads(text)
        if data.get("tamc-tree") != REPORT_SCHEMA:
            raise ValueError("not a tree file (missing 'tamc-tree' version)")
        nodes = {}
        plan = parse_plan("\n".join(n["step"] for n in data["nodes"]), file)
        for k, (entry, step) in enumerate(zip(data["nodes"], plan.steps)):
            model = load_model(entry["model"], f"{file}#{entry['id']}")
            nodes[entry["id"]] = TreeNode(entry["id"], model, step, tuple(entry["children"]), k)
        tree = AbstractionTree(nodes, data["root"], data["abstract"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError([Diagnostic("error", file, f"malformed tree file: {exc}",
                                     SourceSpan(file, 1, 1, 1))]) from None
    return tree
