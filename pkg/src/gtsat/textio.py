"""Text formats: program/instance parsing, Datalog writing, proof traces.

Grammar: one statement per ``.``; ``body -> head``; atoms ``rel(t1,...,tn)``;
identifiers starting lowercase are constants/relations, uppercase are
variables; head variables absent from the body are existentially quantified;
``%`` starts a line comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .deps import Rule, TGD, is_guarded, normalize_variables, serialize
from .terms import Atom, Const, Term, Var, atom_is_base, atom_vars


@dataclass(frozen=True)
class ParseError:
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.message}"


class ProgramSyntaxError(ValueError):
    def __init__(self, errors: list[ParseError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors


@dataclass
class SourceProgram:
    tgds: list[TGD]
    positions: list[tuple[int, int]]
    arities: dict[str, int] = field(default_factory=dict)


_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|->|[(),.]|\S")


def _tokenize(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("%", 1)[0]
        for m in _TOKEN.finditer(body):
            yield (m.group(0), lineno, m.start() + 1)
    yield (None, -1, -1)


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.pos = 0
        self.errors: list[ParseError] = []
        self.arities: dict[str, int] = {}

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        if tok[0] is not None:
            self.pos += 1
        return tok

    def error(self, line: int, col: int, msg: str):
        self.errors.append(ParseError(line, col, msg))

    def expect(self, text: str) -> bool:
        tok, line, col = self.peek()
        if tok == text:
            self.take()
            return True
        self.error(line, col, f"expected '{text}', found {tok!r}")
        return False

    def skip_statement(self):
        while True:
            tok, _, _ = self.take()
            if tok in (None, "."):
                return

    def term(self) -> Term | None:
        tok, line, col = self.take()
        if tok is None or not tok[0].isalpha():
            self.error(line, col, f"expected a term, found {tok!r}")
            return None
        if tok[0].isupper():
            return Var(tok)
        return Const(tok)

    def atom(self) -> Atom | None:
        tok, line, col = self.take()
        if tok is None or not (tok[0].isalpha() and tok[0].islower()):
            self.error(line, col, f"expected a relation name, found {tok!r}")
            return None
        rel = tok
        args: list[Term] = []
        if self.peek()[0] == "(":
            self.take()
            if self.peek()[0] != ")":
                while True:
                    t = self.term()
                    if t is None:
                        return None
                    args.append(t)
                    if self.peek()[0] != ",":
                        break
                    self.take()
            if not self.expect(")"):
                return None
        known = self.arities.get(rel)
        if known is None:
            self.arities[rel] = len(args)
        elif known != len(args):
            self.error(line, col, f"arity conflict for '{rel}': {len(args)} vs {known}")
            return None
        return Atom(rel, tuple(args))

    def atom_list(self) -> list[Atom] | None:
        atoms = [self.atom()]
        while self.peek()[0] == ",":
            self.take()
            atoms.append(self.atom())
        if any(a is None for a in atoms):
            return None
        return atoms  # type: ignore[return-value]


def parse_program(text: str) -> SourceProgram:
    """Parse a dependency program; raises ProgramSyntaxError on any problem."""
    p = _Parser(text)
    out = SourceProgram([], [])
    while p.peek()[0] is not None:
        _, line, col = p.peek()
        body = p.atom_list()
        if body is None or not p.expect("->"):
            p.skip_statement()
            continue
        head = p.atom_list()
        if head is None or not p.expect("."):
            p.skip_statement()
            continue
        if not body:
            p.error(line, col, "empty body")
            continue
        tgd = TGD(body, head)
        if not is_guarded(tgd):
            missing = sorted(v.name for v in tgd.universals)
            p.error(line, col, f"unguarded TGD '{tgd}': no body atom covers {{{', '.join(missing)}}}")
            continue
        out.tgds.append(tgd)
        out.positions.append((line, col))
    if p.errors:
        raise ProgramSyntaxError(p.errors)
    out.arities = p.arities
    return out


def parse_instance(text: str) -> frozenset[Atom]:
    """Parse a base instance: facts over constants, one per statement."""
    p = _Parser(text)
    facts: set[Atom] = set()
    while p.peek()[0] is not None:
        _, line, col = p.peek()
        a = p.atom()
        if a is None or not p.expect("."):
            p.skip_statement()
            continue
        if not atom_is_base(a):
            bad = sorted(v.name for v in atom_vars(a))
            p.error(line, col, f"fact '{a}' contains variables: {', '.join(bad)}")
            continue
        facts.add(a)
    if p.errors:
        raise ProgramSyntaxError(p.errors)
    return frozenset(facts)


def _term_text(t: Term) -> str:
    if isinstance(t, Var):
        return t.name.upper()
    if isinstance(t, Const):
        return t.name
    raise ValueError(f"term {t} has no text form")


def _atom_text(a: Atom) -> str:
    if not a.args:
        return a.relation
    return f"{a.relation}({', '.join(_term_text(t) for t in a.args)})"


def write_statement(dep) -> str:
    if isinstance(dep, Rule):
        body, head = dep.body, [dep.head]
    else:
        body, head = dep.body, dep.head
    return (
        ", ".join(_atom_text(a) for a in body)
        + " -> "
        + ", ".join(_atom_text(a) for a in head)
        + "."
    )


def write_fact(a: Atom) -> str:
    return _atom_text(a) + "."


def write_datalog(program) -> str:
    """Serialize a Datalog program, variable-normalized and sorted."""
    rules = sorted((normalize_variables(r) for r in program), key=serialize)
    return "".join(write_statement(r) + "\n" for r in rules)


def write_instance(facts) -> str:
    return "".join(write_fact(a) + "\n" for a in sorted(facts, key=str))


def tgds_from_rules(rules) -> list[TGD]:
    return [TGD(r.body, [r.head]) for r in rules]


def rules_from_tgds(tgds) -> list[Rule]:
    out = []
    for t in tgds:
        if not t.is_full or len(t.head) != 1:
            raise ValueError(f"not a Datalog rule: {t}")
        out.append(Rule(t.body, t.head[0]))
    return out


def parse_datalog(text: str) -> list[Rule]:
    prog = parse_program(text)
    bad = [t for t in prog.tgds if not t.is_full or len(t.head) != 1]
    if bad:
        raise ProgramSyntaxError(
            [ParseError(0, 0, f"not a Datalog rule: {t}") for t in bad]
        )
    return rules_from_tgds(prog.tgds)


# ------------------------------------------------------------------ proof text

def proof_trace_text(proof) -> str:
    """Human-readable step list for a chase proof."""
    lines = [f"initial: {{{', '.join(sorted(str(f) for f in proof.initial))}}}"]
    for i, rec in enumerate(proof.steps, start=1):
        if rec.kind == "propagation":
            lines.append(
                f"step {i}: propagation v{rec.vertex} -> v{rec.target} copies {rec.fact}"
            )
        elif rec.kind == "full":
            lines.append(f"step {i}: full at v{rec.vertex} with [{rec.tgd}] derives {rec.fact}")
        else:
            lines.append(
                f"step {i}: nonfull at v{rec.vertex} with [{rec.tgd}] creates v{rec.child}"
            )
    lines.append(f"target: {proof.target}")
    return "\n".join(lines) + "\n"


def proof_graph_text(tree) -> str:
    """Graph description of a chase tree: one vertex per line, then edges."""
    lines = []
    for vid in sorted(tree.vertices):
        facts = ", ".join(sorted(str(f) for f in tree.vertices[vid].facts))
        lines.append(f"vertex v{vid} {{{facts}}}")
    for vid in sorted(tree.vertices):
        parent = tree.vertices[vid].parent
        if parent is not None:
            lines.append(f"edge v{parent} -> v{vid}")
    return "\n".join(lines) + "\n"
