"""Controlled style-violation injection with a ledger.

Injection sites are derived from the clean program's syntax tree, so any
clean program in the synthesized shape can be polluted.  Every edit is
behavior-preserving for the program's actual inputs:

* whitespace: padding comments (E501), operator/comma/bracket spacing,
  trailing whitespace, extra blank lines inside a block (E303);
* naming: camelCase renames applied consistently over their scope;
* logic: an unused ``spare_*`` local, comprehension rewrites, boolean
  ternaries, and an if/else expansion of a short ternary;
* bugbear: tuple default -> list default, literal default -> ``int(...)``.

Each injection lands on its own line and yields exactly one finding; the
ledger positions are read back from :func:`check_violations`.
"""

from __future__ import annotations

import ast
import random
import re
from dataclasses import dataclass
from typing import Callable, Optional

from .checker import CODE_CATEGORY, MAX_LINE_LENGTH, check_violations

CATEGORY_ORDER = ("whitespace", "naming", "logic", "bugbear")
PAD_TARGET = 88
_FILLER = ("note keep this step in sync with the reporting stage because "
           "downstream summaries depend on the exact values computed here").split()
_STRING = re.compile(r'"(?:[^"\\]|\\.)*"|\'(?:[^\'\\]|\\.)*\'')
_ASSIGN_HEAD = re.compile(r"^(\s*[A-Za-z_]\w*) = ")
_FLIP = {">": "<=", "<": ">=", ">=": "<", "<=": ">", "==": "!=", "!=": "=="}


class PollutionBudgetError(RuntimeError):
    """The program has too few usable sites for the requested error_lines."""


@dataclass(frozen=True)
class LedgerEntry:
    code: str
    line: int
    col: int
    description: str

    def to_dict(self) -> dict:
        return {"code": self.code, "line": self.line, "col": self.col,
                "description": self.description}

    @classmethod
    def from_dict(cls, data: dict) -> "LedgerEntry":
        return cls(data["code"], int(data["line"]), int(data["col"]),
                   data.get("description", ""))


class _Line:
    """Mutable program line; identity (not value) locates it after inserts."""

    __slots__ = ("text", "func", "consumed", "code", "padded")

    def __init__(self, text: str, func: Optional[str]) -> None:
        self.text = text
        self.func = func
        self.consumed = False
        self.code: Optional[str] = None
        self.padded = False

    @property
    def indent(self) -> int:
        return len(self.text) - len(self.text.lstrip(" "))


@dataclass
class _Site:
    code: str
    line: _Line
    data: tuple = ()


def _code_parts(text: str) -> list[tuple[bool, str]]:
    """Split into (is_code, chunk) so edits never touch string literals."""
    parts, pos = [], 0
    for m in _STRING.finditer(text):
        parts.append((True, text[pos:m.start()]))
        parts.append((False, m.group()))
        pos = m.end()
    parts.append((True, text[pos:]))
    return parts


def _sub_code(text: str, pattern: str, repl: str, count: int = 0) -> str:
    rx = re.compile(pattern)
    return "".join(rx.sub(repl, chunk, count=count) if is_code else chunk
                   for is_code, chunk in _code_parts(text))


def _first_code_match(text: str, pattern: str) -> Optional[re.Match]:
    pos = 0
    for is_code, chunk in _code_parts(text):
        if is_code:
            m = re.search(pattern, chunk)
            if m:
                return _Shifted(m, pos)
        pos += len(chunk)
    return None


class _Shifted:
    def __init__(self, m: re.Match, offset: int) -> None:
        self._m, self._o = m, offset

    def start(self) -> int:
        return self._m.start() + self._o

    def end(self) -> int:
        return self._m.end() + self._o


def _last_code_match(text: str, pattern: str):
    found, pos = None, 0
    for is_code, chunk in _code_parts(text):
        if is_code:
            for m in re.finditer(pattern, chunk):
                found = _Shifted(m, pos)
        pos += len(chunk)
    return found


def camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(p[:1].upper() + p[1:] for p in rest)


def _renamable(name: str, taken: set[str]) -> bool:
    """A camelCase rename must add an uppercase letter and stay unique."""
    new = camel(name)
    return new != new.lower() and new not in taken


class Polluter:
    def __init__(self, clean: str, rng: random.Random) -> None:
        self.rng = rng
        self.tree = ast.parse(clean)
        self.lines = [_Line(t, None) for t in clean.splitlines()]
        self.identifiers = {n.id for n in ast.walk(self.tree) if isinstance(n, ast.Name)}
        self.identifiers |= {a.arg for a in ast.walk(self.tree) if isinstance(a, ast.arg)}
        self.funcs: dict[str, ast.FunctionDef] = {}
        for node in self.tree.body:
            if isinstance(node, ast.FunctionDef):
                self.funcs[node.name] = node
                self.identifiers.add(node.name)
                for no in range(node.lineno, node.end_lineno + 1):
                    self.lines[no - 1].func = node.name
        self.injected: list[_Line] = []

    # -- helpers -----------------------------------------------------------
    def at(self, lineno: int) -> _Line:
        return self.lines[lineno - 1]

    def _fits(self, *texts: str) -> bool:
        return all(len(t) <= MAX_LINE_LENGTH for t in texts)

    def _mark(self, line: _Line, code: str) -> None:
        line.consumed = True
        line.code = code
        self.injected.append(line)

    def _index(self, line: _Line) -> int:
        for i, cand in enumerate(self.lines):
            if cand is line:
                return i
        raise LookupError("line vanished")

    def _rename(self, old: str, new: str, func: Optional[str]) -> None:
        pattern = rf"\b{re.escape(old)}\b"
        for line in self.lines:
            if func is None or line.func == func:
                line.text = _sub_code(line.text, pattern, new)

    # -- site discovery --------------------------------------------------------
    def sites(self) -> dict[str, list[_Site]]:
        found: dict[str, list[_Site]] = {c: [] for c in CATEGORY_ORDER}

        def add(code: str, line: _Line, *data) -> None:
            found[CODE_CATEGORY[code]].append(_Site(code, line, data))

        for line in self.lines:
            text = line.text
            if not text.strip():
                if line.func is None and not text:
                    add("W293", line)
                continue
            if "#" not in text:
                add("E501", line)
            add("W291", line)
            if _ASSIGN_HEAD.match(text):
                for code in ("E225", "E221", "E222"):
                    add(code, line)
            if _first_code_match(text, r", "):
                add("E231", line)
                add("E203", line)
            if _first_code_match(text, r"\([^ )]"):
                add("E201", line)
            if _last_code_match(text, r"[^ (]\)"):
                add("E202", line)
            if line.indent > 0:
                add("E303", line)

        for fname, fn in self.funcs.items():
            def_line = self.at(fn.lineno)
            if _renamable(fname, self.identifiers):
                add("N802", def_line, fname)
            for arg in fn.args.args:
                if _renamable(arg.arg, self.identifiers):
                    add("N803", def_line, arg.arg)
            defaults = fn.args.defaults
            if defaults:
                d = defaults[-1]
                if isinstance(d, ast.Tuple) and all(isinstance(e, ast.Constant)
                                                    for e in d.elts):
                    add("B006", def_line)
                elif isinstance(d, ast.Constant) and type(d.value) is int:
                    add("B008", def_line)
            if fname != "main":
                add("F841", def_line, fname)

            stores: dict[str, int] = {}
            for node in ast.walk(fn):
                if isinstance(node, ast.Name) and isinstance(node.ctx, ast.Store):
                    stores[node.id] = stores.get(node.id, 0) + 1
                elif isinstance(node, ast.AugAssign) and isinstance(node.target, ast.Name):
                    stores[node.target.id] = stores.get(node.target.id, 0) + 1
            for stmt in ast.walk(fn):
                if not (isinstance(stmt, ast.Assign) and len(stmt.targets) == 1
                        and isinstance(stmt.targets[0], ast.Name)
                        and stmt.lineno == stmt.end_lineno):
                    continue
                line = self.at(stmt.lineno)
                name = stmt.targets[0].id
                value = stmt.value
                if isinstance(value, ast.IfExp):
                    add("SIM108", line, name)
                elif isinstance(value, ast.ListComp) and not value.generators[0].ifs:
                    add("C400", line)
                    add("C411", line)
                elif isinstance(value, ast.SetComp):
                    add("C403", line)
                elif isinstance(value, ast.DictComp):
                    add("C404", line)
                elif isinstance(value, ast.Compare) and len(value.ops) == 1 \
                        and type(value.ops[0]) in (ast.Gt, ast.Lt):
                    add("SIM210", line)
                    add("SIM211", line)
                if stores.get(name) == 1 and not isinstance(value, ast.IfExp) \
                        and _renamable(name, self.identifiers):
                    add("N806", line, name)
        return found

    # -- injectors -------------------------------------------------------------
    def apply(self, site: _Site) -> bool:
        line = site.line
        if line.consumed:
            return False
        handler: Callable[[_Site], bool] = getattr(self, f"_inj_{site.code}")
        if handler(site):
            self._mark(line, site.code)
            return True
        return False

    def _edit(self, line: _Line, new: Optional[str]) -> bool:
        if new is None or new == line.text or not self._fits(new):
            return False
        line.text = new
        return True

    def _inj_E501(self, site: _Site) -> bool:
        site.line.padded = True
        site.line.text = _pad(site.line.text)
        return True

    def _inj_W291(self, site: _Site) -> bool:
        return self._edit(site.line, site.line.text + "  ")

    def _inj_W293(self, site: _Site) -> bool:
        if site.line.text:
            return False
        site.line.text = "    "
        return True

    def _inj_E225(self, site: _Site) -> bool:
        return self._edit(site.line, _ASSIGN_HEAD.sub(r"\1=", site.line.text, 1))

    def _inj_E221(self, site: _Site) -> bool:
        return self._edit(site.line, _ASSIGN_HEAD.sub(r"\1  = ", site.line.text, 1))

    def _inj_E222(self, site: _Site) -> bool:
        return self._edit(site.line, _ASSIGN_HEAD.sub(r"\1 =  ", site.line.text, 1))

    def _inj_E231(self, site: _Site) -> bool:
        return self._edit(site.line, _sub_code(site.line.text, r", ", ",", 1)
                          if _first_code_match(site.line.text, r", ") else None)

    def _inj_E203(self, site: _Site) -> bool:
        text = site.line.text
        m = _first_code_match(text, r", ")
        return self._edit(site.line, text[:m.start()] + " , " + text[m.end():]
                          if m else None)

    def _inj_E201(self, site: _Site) -> bool:
        text = site.line.text
        m = _first_code_match(text, r"\([^ )]")
        return self._edit(site.line, text[:m.start() + 1] + " " + text[m.start() + 1:]
                          if m else None)

    def _inj_E202(self, site: _Site) -> bool:
        text = site.line.text
        m = _last_code_match(text, r"[^ (]\)")
        return self._edit(site.line, text[:m.start() + 1] + " " + text[m.start() + 1:]
                          if m else None)

    def _inj_E303(self, site: _Site) -> bool:
        idx = self._index(site.line)
        prev = self.lines[idx - 1] if idx else None
        stripped = site.line.text.strip()
        if prev is None or prev.indent == 0 or not prev.text.strip() \
                or prev.text.rstrip().endswith(":") \
                or stripped.startswith(("else", "elif")):
            return False
        self.lines[idx:idx] = [_Line("", site.line.func), _Line("", site.line.func)]
        for blank in self.lines[idx:idx + 2]:
            blank.consumed = True
        return True

    def _inj_N802(self, site: _Site) -> bool:
        old = site.data[0]
        new = camel(old)
        if new in self.identifiers:
            return False
        self._rename(old, new, None)
        self.identifiers.add(new)
        return True

    def _inj_N803(self, site: _Site) -> bool:
        old = site.data[0]
        new = camel(old)
        if new in self.identifiers:
            return False
        self._rename(old, new, site.line.func)
        self.identifiers.add(new)
        return True

    _inj_N806 = _inj_N803

    def _inj_F841(self, site: _Site) -> bool:
        fn = self.funcs[site.data[0]]
        params = [a.arg for a in fn.args.args]
        base = f"spare_{fn.name.split('_')[0]}"
        name = base
        while name in self.identifiers:
            name += "_x"
        rhs = params[0]
        idx = self._index(site.line)
        # The def line stays untouched; the inserted line carries the finding
        # and sits inside the function so later parameter renames reach it.
        new = _Line(f"    {name} = {rhs}", site.line.func)
        self.lines.insert(idx + 1, new)
        self.identifiers.add(name)
        self._mark(new, "F841")
        return False  # finding recorded on the inserted line, not the def

    def _assign_parts(self, text: str) -> tuple[str, str, str]:
        m = _ASSIGN_HEAD.match(text)
        if not m:
            raise ValueError(text)
        head = m.group(1)
        indent = head[: len(head) - len(head.lstrip())]
        return indent, head.strip(), text[m.end():]

    def _inj_C400(self, site: _Site) -> bool:
        indent, target, rhs = self._assign_parts(site.line.text)
        if not (rhs.startswith("[") and rhs.endswith("]")):
            return False
        return self._edit(site.line, f"{indent}{target} = list({rhs[1:-1]})")

    def _inj_C411(self, site: _Site) -> bool:
        indent, target, rhs = self._assign_parts(site.line.text)
        if not (rhs.startswith("[") and rhs.endswith("]")):
            return False
        return self._edit(site.line, f"{indent}{target} = list({rhs})")

    def _inj_C403(self, site: _Site) -> bool:
        indent, target, rhs = self._assign_parts(site.line.text)
        if not (rhs.startswith("{") and rhs.endswith("}")):
            return False
        return self._edit(site.line, f"{indent}{target} = set([{rhs[1:-1]}])")

    def _inj_C404(self, site: _Site) -> bool:
        indent, target, rhs = self._assign_parts(site.line.text)
        node = ast.parse(rhs, mode="eval").body
        if not isinstance(node, ast.DictComp):
            return False
        key, value = ast.unparse(node.key), ast.unparse(node.value)
        gens = "".join(ast.unparse(g) for g in node.generators)
        return self._edit(site.line,
                          f"{indent}{target} = dict([({key}, {value}){gens}])")

    def _compare(self, site: _Site) -> Optional[tuple[str, str, str, str, str]]:
        indent, target, rhs = self._assign_parts(site.line.text)
        m = re.fullmatch(r"(\S+) ([<>]) (\S+)", rhs)
        if not m:
            return None
        return indent, target, m.group(1), m.group(2), m.group(3)

    def _inj_SIM210(self, site: _Site) -> bool:
        parts = self._compare(site)
        if parts is None:
            return False
        indent, target, a, op, b = parts
        return self._edit(site.line,
                          f"{indent}{target} = True if {a} {op} {b} else False")

    def _inj_SIM211(self, site: _Site) -> bool:
        parts = self._compare(site)
        if parts is None:
            return False
        indent, target, a, op, b = parts
        return self._edit(site.line,
                          f"{indent}{target} = False if {a} {_FLIP[op]} {b} else True")

    def _inj_SIM108(self, site: _Site) -> bool:
        indent, target, rhs = self._assign_parts(site.line.text)
        node = ast.parse(rhs, mode="eval").body
        if not isinstance(node, ast.IfExp):
            return False
        body, test, orelse = (ast.unparse(node.body), ast.unparse(node.test),
                              ast.unparse(node.orelse))
        message = (f"SIM108 Use ternary operator '{target} = {body} if {test} "
                   f"else {orelse}' instead of if-else-block")
        if len(message) > 79:
            return False
        inner = indent + "    "
        idx = self._index(site.line)
        new_lines = [_Line(f"{inner}{target} = {body}", site.line.func),
                     _Line(f"{indent}else:", site.line.func),
                     _Line(f"{inner}{target} = {orelse}", site.line.func)]
        if not self._fits(*(n.text for n in new_lines)):
            return False
        site.line.text = f"{indent}if {test}:"
        for extra in new_lines:
            extra.consumed = True
        self.lines[idx + 1:idx + 1] = new_lines
        return True

    def _inj_B006(self, site: _Site) -> bool:
        new = re.sub(r"=\(([^()]*)\)\):$", r"=[\1]):", site.line.text)
        return self._edit(site.line, new)

    def _inj_B008(self, site: _Site) -> bool:
        new = re.sub(r"=(\d+)\):$", r"=int(\1)):", site.line.text)
        return self._edit(site.line, new)

    # -- finishing ---------------------------------------------------------------
    def render(self) -> str:
        for line in self.lines:
            if line.padded:
                line.text = _pad(line.text.split("  # ")[0])
        return "\n".join(line.text for line in self.lines) + "\n"


def _pad(code: str) -> str:
    words = iter(_FILLER * 4)
    text = code + "  #"
    while len(text) < PAD_TARGET:
        text += " " + next(words)
    return text


def pollute(clean: str, violation_prob: float, error_lines: int,
            rng: random.Random | None = None) -> tuple[str, list[LedgerEntry]]:
    """Inject violations on ``error_lines`` distinct lines; return (text, ledger).

    Categories are visited round-robin; each visit offers the next unused
    site of that category, accepted with probability ``violation_prob``.
    """
    if not 0.0 <= violation_prob <= 1.0:
        raise ValueError("violation_prob must be in [0, 1]")
    if error_lines <= 0:
        return clean, []
    rng = rng or random.Random(0)
    pol = Polluter(clean, rng)
    queues = pol.sites()
    for cat in CATEGORY_ORDER:
        rng.shuffle(queues[cat])
    count = 0
    while count < error_lines:
        progressed = False
        for cat in CATEGORY_ORDER:
            if count >= error_lines:
                break
            queue = queues[cat]
            while queue:
                site = queue.pop()
                if site.line.consumed:
                    continue
                progressed = True
                if rng.random() < violation_prob:
                    before = len(pol.injected)
                    pol.apply(site)
                    count += len(pol.injected) - before
                break
        if not progressed:
            raise PollutionBudgetError(
                f"pollution budget exceeded: {count} of {error_lines} lines")
    polluted = pol.render()
    return polluted, _ledger(pol, polluted)


def _ledger(pol: Polluter, polluted: str) -> list[LedgerEntry]:
    findings = check_violations(polluted)
    by_key = {(f.line, f.code): f for f in findings}
    expected = {}
    for line in pol.injected:
        expected[(pol._index(line) + 1, line.code)] = line
    if len(findings) != len(expected) or set(by_key) != set(expected):
        extra = sorted(set(by_key) - set(expected))
        missing = sorted(set(expected) - set(by_key))
        raise AssertionError(
            f"injection/finding mismatch: unexpected={extra} missing={missing}")
    ledger = [LedgerEntry(f.code, f.line, f.col, f.message)
              for f in sorted(findings)]
    return ledger
