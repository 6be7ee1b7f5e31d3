"""Clean program synthesis.

Programs follow a load -> validate -> analyze -> report flow, are built from
a weighted mix of constructs, and are tracked by a scope model so every name
is defined before use and every local is read at least once.  Each emitted
line carries tags describing which violation injectors may touch it.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Any

from ..core import count_tokens

MAX_CLEAN_LINE = 72

NOUNS = ["orders", "records", "samples", "readings", "events", "items",
         "scores", "batches", "entries", "metrics", "tickets", "parcels",
         "invoices", "signals", "packets", "votes"]
STAGE_VERBS = {
    "load": ["load", "read", "fetch", "collect", "gather"],
    "validate": ["validate", "check", "clean", "screen", "filter"],
    "analyze": ["analyze", "compute", "rank", "measure", "transform",
                "aggregate", "weigh", "bucket"],
    "report": ["report", "summarize", "publish", "display"],
}
ADJECTIVES = ["raw", "fresh", "peak", "scaled", "shifted", "valid", "final",
              "partial", "base", "extra", "net", "rough", "prime", "outer",
              "inner", "upper", "lower", "spare", "mixed", "early", "late"]
QUANTITIES = ["count", "value", "total", "level", "weight", "rate", "size",
              "score", "offset", "span", "delta", "ratio", "tally", "mark",
              "bound", "step"]
COLLECTIONS = ["values", "rows", "points", "chunks", "parts", "picks",
               "marks", "hits", "slots", "cells"]
DATA_PARAMS = ["raw_items", "input_rows", "data_points", "item_list",
               "source_values", "batch_rows", "value_list"]
INT_PARAMS = ["scale_factor", "min_level", "step_size", "cut_off",
              "base_offset", "max_gap"]
SEQ_PARAMS = ["weight_set", "bias_terms", "tag_codes", "mix_ratios"]
SHORT_NAMES = ["lo", "hi", "mid", "cap", "gap", "top", "cut", "dip", "ax",
               "bx", "nx", "kx"]
LOOP_VARS = ["value", "entry", "elem", "row", "unit", "piece"]
COMP_VARS = ["x", "v", "e", "u", "w"]
LABEL_WORDS = ["stage", "check", "pass", "summary", "result", "state",
               "info", "note", "tick", "status"]


@dataclass
class CodeLine:
    text: str
    indent: int = 0
    tags: dict[str, Any] = field(default_factory=dict)

    @property
    def rendered(self) -> str:
        return " " * self.indent + self.text if self.text else ""


@dataclass
class Function:
    name: str
    stage: str
    params: list[tuple[str, str, str | None]]  # (name, type, default source)
    body: list[CodeLine] = field(default_factory=list)
    vars: dict[str, str] = field(default_factory=dict)
    unused: list[str] = field(default_factory=list)
    short: list[str] = field(default_factory=list)
    assign_counts: dict[str, int] = field(default_factory=dict)
    returns: str = "list"


class ProgramBuilder:
    def __init__(self, rng: random.Random) -> None:
        self.rng = rng
        self.functions: list[Function] = []
        self._names: set[str] = set()

    # -- naming ---------------------------------------------------------
    def _fresh(self, fn: Function, pool_a: list[str], pool_b: list[str]) -> str:
        for _ in range(200):
            name = f"{self.rng.choice(pool_a)}_{self.rng.choice(pool_b)}"
            if name not in fn.vars and name not in self._names \
                    and all(name != p[0] for p in fn.params):
                return name
        raise RuntimeError("name space exhausted")

    def _fresh_short(self, fn: Function) -> str | None:
        free = [s for s in SHORT_NAMES if s not in fn.vars]
        return self.rng.choice(free) if free else None

    # -- skeleton ---------------------------------------------------------
    def make_functions(self, n_functions: int) -> None:
        noun = self.rng.choice(NOUNS)
        stages = ["load", "validate"] + ["analyze"] * (n_functions - 3) + ["report"]
        used_verbs: set[str] = set()
        for stage in stages:
            verb = self.rng.choice([v for v in STAGE_VERBS[stage] if v not in used_verbs])
            used_verbs.add(verb)
            name = f"{verb}_{noun}"
            self._names.add(name)
            if stage == "load":
                params = [("count", "int", None),
                          (self.rng.choice(INT_PARAMS), "int", str(self.rng.randint(3, 9)))]
            else:
                params = [(self.rng.choice(DATA_PARAMS), "list", None)]
                if self.rng.random() < 0.5:
                    params.append((self.rng.choice(INT_PARAMS), "int",
                                   str(self.rng.randint(2, 9))))
                else:
                    k = self.rng.randint(2, 4)
                    nums = ", ".join(str(self.rng.randint(1, 9)) for _ in range(k))
                    params.append((self.rng.choice(SEQ_PARAMS), "seq", f"({nums})"))
            fn = Function(name, stage, params,
                          returns="int" if stage == "report" else "list")
            for pname, ptype, _ in params:
                fn.vars[pname] = ptype
                fn.unused.append(pname)
            self.functions.append(fn)
        first = self.functions[0]
        data = self._fresh(first, ADJECTIVES, COLLECTIONS)
        k = first.params[1][0]
        c = self.rng.randint(1, 50)
        self._emit(first, f"{data} = [(i * {k} + {c}) % 97 for i in range(count)]",
                   data, "list", kind="assign", comp="list_map")
        self._use(first, "count", k)

    # -- bookkeeping --------------------------------------------------------
    def _use(self, fn: Function, *names: str) -> None:
        for n in names:
            if n in fn.unused:
                fn.unused.remove(n)

    def _use_in(self, fn: Function, text: str, *names: str) -> None:
        """Mark only the names that the emitted text actually reads."""
        self._use(fn, *[n for n in names if re.search(rf"\b{re.escape(n)}\b", text)])

    def _emit(self, fn: Function, text: str, target: str | None, vtype: str | None,
              indent: int = 4, **tags: Any) -> CodeLine:
        line = CodeLine(text, indent, dict(tags, func=fn.name))
        if target:
            line.tags["target"] = target
            fn.assign_counts[target] = fn.assign_counts.get(target, 0) + 1
        fn.body.append(line)
        if target and vtype:
            if target not in fn.vars:
                fn.unused.append(target)
            fn.vars[target] = vtype
        return line

    def _pick(self, fn: Function, *types: str, prefer_unused: bool = True) -> str | None:
        names = [n for n, t in fn.vars.items() if t in types]
        if not names:
            return None
        fresh = [n for n in names if n in fn.unused]
        if prefer_unused and fresh and self.rng.random() < 0.8:
            return self.rng.choice(fresh)
        return self.rng.choice(names)

    def _label(self) -> str:
        return f"{self.rng.choice(QUANTITIES)} {self.rng.choice(LABEL_WORDS)}"

    # -- constructs -----------------------------------------------------------
    def add_statement(self, fn: Function) -> bool:
        kinds = [("int_reduce", 4), ("int_arith", 3), ("list_map", 3),
                 ("list_filter", 2), ("set_comp", 1), ("dict_comp", 1),
                 ("bool_cmp", 2), ("short_alias", 1), ("short_ternary", 2),
                 ("loop_acc", 2), ("loop_collect", 1), ("if_block", 2),
                 ("print", 1)]
        names, weights = zip(*kinds)
        for _ in range(20):
            kind = self.rng.choices(names, weights)[0]
            mark = len(fn.body)
            snapshot = (dict(fn.vars), list(fn.unused), list(fn.short),
                        dict(fn.assign_counts))
            if getattr(self, f"_st_{kind}")(fn):
                if all(len(l.rendered) <= MAX_CLEAN_LINE for l in fn.body[mark:]):
                    return True
            del fn.body[mark:]
            fn.vars, fn.unused, fn.short, fn.assign_counts = (
                snapshot[0], snapshot[1], snapshot[2], snapshot[3])
        return False

    def _int_operand(self, fn: Function) -> str:
        name = self._pick(fn, "int")
        if name is None or self.rng.random() < 0.2:
            return str(self.rng.randint(2, 9))
        return name

    def _st_int_reduce(self, fn: Function) -> bool:
        src = self._pick(fn, "list", "set", "dict", "seq")
        if src is None:
            return False
        vtype = fn.vars[src]
        target = self._fresh(fn, ADJECTIVES, QUANTITIES)
        if vtype == "list":
            expr = self.rng.choice([f"sum({src}) % 1000", f"len({src})",
                                    f"max({src}, default=0)",
                                    f"min({src}, default=0)"])
        elif vtype == "dict":
            expr = self.rng.choice([f"len({src})", f"sum({src}.values()) % 1000"])
        else:
            expr = f"len({src})" if vtype == "set" else f"sum({src})"
        self._use(fn, src)
        self._emit(fn, f"{target} = {expr}", target, "int", kind="assign")
        return True

    def _st_int_arith(self, fn: Function) -> bool:
        a = self._pick(fn, "int")
        if a is None:
            return False
        b = self._int_operand(fn)
        k = self.rng.randint(2, 9)
        target = self._fresh(fn, ADJECTIVES, QUANTITIES)
        expr = self.rng.choice([f"({a} * {k} + {b}) % 997", f"({a} + {b}) % 1000",
                                f"abs({a} - {b})", f"({a} + {k}) // {k}"])
        self._use_in(fn, expr, a, b)
        self._emit(fn, f"{target} = {expr}", target, "int", kind="assign")
        return True

    def _st_list_map(self, fn: Function) -> bool:
        src = self._pick(fn, "list")
        if src is None:
            return False
        x = self.rng.choice(COMP_VARS)
        k = self.rng.randint(2, 9)
        a = self._int_operand(fn)
        expr = self.rng.choice([f"({x} * {k}) % 101", f"({x} + {a}) % 1000",
                                f"abs({x} - {a})"])
        target = self._fresh(fn, ADJECTIVES, COLLECTIONS)
        self._use_in(fn, f"{expr} {src}", src, a)
        self._emit(fn, f"{target} = [{expr} for {x} in {src}]", target, "list",
                   kind="assign", comp="list_map", comp_parts=(expr, x, src))
        return True

    def _st_list_filter(self, fn: Function) -> bool:
        src = self._pick(fn, "list")
        if src is None:
            return False
        x = self.rng.choice(COMP_VARS)
        a = self._int_operand(fn)
        cond = self.rng.choice([f"{x} > {a}", f"{x} % 2 == 0", f"{x} < {a}"])
        target = self._fresh(fn, ADJECTIVES, COLLECTIONS)
        self._use_in(fn, f"{src} {cond}", src, a)
        self._emit(fn, f"{target} = [{x} for {x} in {src} if {cond}]", target,
                   "list", kind="assign", comp="list_filter")
        return True

    def _st_set_comp(self, fn: Function) -> bool:
        src = self._pick(fn, "list")
        if src is None:
            return False
        x = self.rng.choice(COMP_VARS)
        k = self.rng.randint(3, 9)
        target = self._fresh(fn, ADJECTIVES, COLLECTIONS)
        self._use(fn, src)
        self._emit(fn, f"{target} = {{{x} % {k} for {x} in {src}}}", target, "set",
                   kind="assign", comp="set_comp", comp_parts=(f"{x} % {k}", x, src))
        return True

    def _st_dict_comp(self, fn: Function) -> bool:
        src = self._pick(fn, "list")
        if src is None:
            return False
        x = self.rng.choice(COMP_VARS)
        k = self.rng.randint(3, 9)
        target = self._fresh(fn, ADJECTIVES, COLLECTIONS)
        self._use(fn, src)
        self._emit(fn, f"{target} = {{{x}: {x} % {k} for {x} in {src}}}", target,
                   "dict", kind="assign", comp="dict_comp",
                   comp_parts=(x, f"{x} % {k}", x, src))
        return True

    def _st_bool_cmp(self, fn: Function) -> bool:
        a = self._pick(fn, "int")
        if a is None:
            return False
        b = self._int_operand(fn)
        if a == b:
            return False
        target = f"is_{self.rng.choice(ADJECTIVES)}"
        if target in fn.vars:
            return False
        self._use(fn, a, b)
        self._emit(fn, f"{target} = {a} > {b}", target, "bool", kind="assign",
                   bool_cmp=(a, b))
        return True

    def _st_short_alias(self, fn: Function) -> bool:
        a = self._pick(fn, "int")
        s = self._fresh_short(fn)
        if a is None or s is None:
            return False
        k = self.rng.randint(3, 9)
        self._use(fn, a)
        self._emit(fn, f"{s} = {a} % {k}", s, "int", kind="assign")
        fn.short.append(s)
        return True

    def _st_short_ternary(self, fn: Function) -> bool:
        shorts = [s for s in fn.short if s in fn.vars]
        if not shorts:
            return False
        a = self.rng.choice(shorts)
        others = [s for s in shorts if s != a]
        b = self.rng.choice(others) if others and self.rng.random() < 0.6 \
            else str(self.rng.randint(2, 9))
        t = self._fresh_short(fn)
        if t is None:
            return False
        op = self.rng.choice([">", "<"])
        self._use(fn, a, b)
        self._emit(fn, f"{t} = {a} if {a} {op} {b} else {b}", t, "int",
                   kind="assign", ternary=(t, a, op, b))
        fn.short.append(t)
        return True

    def _st_loop_acc(self, fn: Function) -> bool:
        src = self._pick(fn, "list", "seq")
        if src is None:
            return False
        acc = self._fresh(fn, ADJECTIVES, QUANTITIES)
        v = self.rng.choice(LOOP_VARS)
        if v in fn.vars:
            return False
        k = self.rng.randint(3, 11)
        self._use(fn, src)
        self._emit(fn, f"{acc} = 0", acc, "int", kind="assign")
        fn.assign_counts[acc] += 1  # the += below rebinds it
        self._emit(fn, f"for {v} in {src}:", None, None, kind="for")
        self._emit(fn, f"{acc} += {v} % {k}", None, None, indent=8, kind="aug")
        return True

    def _st_loop_collect(self, fn: Function) -> bool:
        src = self._pick(fn, "list")
        if src is None:
            return False
        target = self._fresh(fn, ADJECTIVES, COLLECTIONS)
        v = self.rng.choice(LOOP_VARS)
        if v in fn.vars:
            return False
        k = self.rng.randint(2, 5)
        r = self.rng.randint(0, k - 1)
        c = self.rng.randint(1, 20)
        self._use(fn, src)
        self._emit(fn, f"{target} = []", target, "list", kind="assign")
        fn.assign_counts[target] += 1
        self._emit(fn, f"for {v} in {src}:", None, None, kind="for")
        self._emit(fn, f"if {v} % {k} == {r}:", None, None, indent=8, kind="if")
        self._emit(fn, f"{target}.append({v} + {c})", None, None, indent=12,
                   kind="call")
        return True

    def _st_if_block(self, fn: Function) -> bool:
        flag = self._pick(fn, "bool")
        if flag is not None and self.rng.random() < 0.7:
            cond = flag
            self._use(fn, flag)
        else:
            a = self._pick(fn, "int")
            if a is None:
                return False
            b = self._int_operand(fn)
            if a == b:
                return False
            cond = f"{a} > {b}"
            self._use(fn, a, b)
        target_list = self._pick(fn, "list", prefer_unused=False)
        val = self._int_operand(fn)
        self._emit(fn, f"if {cond}:", None, None, kind="if")
        if target_list is not None and self.rng.random() < 0.5:
            self._emit(fn, f"{target_list}.append({val})", None, None, indent=8,
                       kind="call")
        else:
            self._emit(fn, f'print("{self._label()}", {val})', None, None,
                       indent=8, kind="print")
        self._use(fn, val)
        return True

    def _st_print(self, fn: Function) -> bool:
        args = []
        for _ in range(self.rng.randint(1, 3)):
            name = self._pick(fn, "int", "bool", "list", "set", "dict")
            if name is None:
                break
            args.append(self._printable(fn, name))
            self._use(fn, name)
        if not args:
            return False
        self._emit(fn, f'print("{self._label()}", {", ".join(args)})', None, None,
                   kind="print")
        return True

    @staticmethod
    def _printable(fn: Function, name: str) -> str:
        return f"len({name})" if fn.vars[name] in ("list", "set", "dict", "seq") \
            else name

    # -- finishing ----------------------------------------------------------
    def finish(self, fn: Function) -> None:
        if fn.returns == "list":
            ret = self._pick(fn, "list")
        else:
            ret = None
            ints = [n for n in fn.vars if fn.vars[n] == "int" and n in fn.unused]
            if ints:
                ret = ints[-1]
            else:
                ret = self._fresh(fn, ADJECTIVES, QUANTITIES)
                src = self._pick(fn, "list")
                self._emit(fn, f"{ret} = len({src})", ret, "int", kind="assign")
                self._use(fn, src)
        self._use(fn, ret)
        leftovers = [n for n in fn.unused if fn.vars.get(n) in
                     ("int", "bool", "list", "set", "dict", "seq")]
        while leftovers:
            label = self._label()
            chunk: list[str] = []
            while leftovers:
                candidate = chunk + [self._printable(fn, leftovers[0])]
                text = f'print("{label}", {", ".join(candidate)})'
                if chunk and 4 + len(text) > MAX_CLEAN_LINE - 8:
                    break
                chunk = candidate
                leftovers.pop(0)
            self._emit(fn, f'print("{label}", {", ".join(chunk)})', None,
                       None, kind="print")
        fn.unused.clear()
        self._emit(fn, f"return {ret}", None, None, kind="return")

    def def_line(self, fn: Function) -> CodeLine:
        parts = []
        for name, _, default in fn.params:
            parts.append(f"{name}={default}" if default is not None else name)
        return CodeLine(f"def {fn.name}({', '.join(parts)}):", 0,
                        {"kind": "def", "func": fn.name,
                         "params": [list(p) for p in fn.params]})

    def main_lines(self) -> list[CodeLine]:
        lines = [CodeLine("def main():", 0, {"kind": "def", "func": "main",
                                               "params": []})]
        prev = None
        for fn in self.functions:
            if fn.stage == "load":
                target = "data"
                call = f"{fn.name}({self.rng.randint(30, 60)})"
            else:
                target = "total" if fn.stage == "report" else f"stage_{len(lines)}"
                call = f"{fn.name}({prev})"
            lines.append(CodeLine(f"{target} = {call}", 4,
                                  {"kind": "assign", "func": "main",
                                   "target": target, "calls": fn.name}))
            prev = target
        lines.append(CodeLine(f'print("done", {prev})', 4,
                              {"kind": "print", "func": "main"}))
        return lines


def _assemble(builder: ProgramBuilder, *, finished: bool) -> list[CodeLine]:
    lines: list[CodeLine] = []
    for fn in builder.functions:
        if lines:
            lines.extend([CodeLine("", 0, {"kind": "blank"}),
                          CodeLine("", 0, {"kind": "blank"})])
        lines.append(builder.def_line(fn))
        lines.extend(fn.body)
    if finished:
        lines.extend([CodeLine("", 0, {"kind": "blank"}),
                      CodeLine("", 0, {"kind": "blank"})])
        lines.extend(builder.main_lines())
        lines.extend([CodeLine("", 0, {"kind": "blank"}),
                      CodeLine("", 0, {"kind": "blank"}),
                      CodeLine('if __name__ == "__main__":', 0, {"kind": "guard"}),
                      CodeLine("main()", 4, {"kind": "call", "func": None})])
    return lines


def render(lines: list[CodeLine]) -> str:
    return "\n".join(l.rendered for l in lines) + "\n"


def build_program(rng: random.Random, target_tokens: int,
                  n_functions: int | None = None,
                  fill: float = 0.97) -> list[CodeLine]:
    """Clean program whose token count lands near ``fill * target_tokens``.

    The finishing code (leftover prints, returns, main block) is only known
    after the body is built, so the body budget is corrected and the build
    replayed from the same rng state until the size settles.
    """
    n_functions = n_functions or rng.randint(4, 8)
    state = rng.getstate()
    goal = fill * target_tokens
    budget = goal
    lines: list[CodeLine] = []
    for _ in range(4):
        rng.setstate(state)
        lines = _build_once(rng, n_functions, budget)
        got = program_tokens(lines)
        if abs(got - goal) <= 0.02 * target_tokens:
            break
        budget += goal - got
    return lines


def _build_once(rng: random.Random, n_functions: int,
                budget_tokens: float) -> list[CodeLine]:
    builder = ProgramBuilder(rng)
    builder.make_functions(n_functions)
    budget_chars = max(0.0, budget_tokens * 4)
    size = len(render(_assemble(builder, finished=False)))
    stalled = 0
    while size < budget_chars and stalled < 50:
        fn = min(builder.functions, key=lambda f: len(f.body))
        before = sum(len(l.rendered) + 1 for l in fn.body)
        if builder.add_statement(fn):
            size += sum(len(l.rendered) + 1 for l in fn.body) - before
            stalled = 0
        else:
            stalled += 1
    for fn in builder.functions:
        builder.finish(fn)
    return _assemble(builder, finished=True)


def gen_clean_program(rng: random.Random, target_tokens: int,
                      n_functions: int | None = None) -> str:
    return render(build_program(rng, target_tokens, n_functions))


def program_tokens(lines: list[CodeLine]) -> int:
    return count_tokens(render(lines))
