"""Offline detector for the supported style-rule subset.

Covers exactly the codes the polluter can inject.  Whitespace rules are
token-based, the rest walk the syntax tree.  Positions are 1-based and mirror
what the usual linter plugins report for the same constructs.
"""

from __future__ import annotations

import ast
import io
import re
import tokenize
from dataclasses import dataclass

MAX_LINE_LENGTH = 79

CATEGORIES = {
    "whitespace": ("E501", "E201", "E202", "E203", "E221", "E222", "E225",
                   "E231", "W291", "W293", "E303"),
    "naming": ("N802", "N803", "N806"),
    "logic": ("F841", "C400", "C403", "C404", "C411", "SIM108", "SIM210",
              "SIM211"),
    "bugbear": ("B006", "B008"),
}
CODE_CATEGORY = {code: cat for cat, codes in CATEGORIES.items() for code in codes}
SUPPORTED_CODES = frozenset(CODE_CATEGORY)

MESSAGES = {
    "E501": "line too long",
    "E201": "whitespace after bracket",
    "E202": "whitespace before bracket",
    "E203": "whitespace before ','",
    "E221": "multiple spaces before operator",
    "E222": "multiple spaces after operator",
    "E225": "missing whitespace around operator",
    "E231": "missing whitespace after ','",
    "W291": "trailing whitespace",
    "W293": "whitespace on blank line",
    "E303": "too many blank lines",
    "N802": "function name should be lowercase",
    "N803": "argument name should be lowercase",
    "N806": "variable in function should be lowercase",
    "F841": "local variable assigned but never used",
    "C400": "unnecessary generator inside list()",
    "C403": "unnecessary list comprehension inside set()",
    "C404": "unnecessary list comprehension inside dict()",
    "C411": "unnecessary list() around a list comprehension",
    "SIM108": "use a ternary operator instead of if-else assignment",
    "SIM210": "use bool(...) instead of 'True if ... else False'",
    "SIM211": "use 'not ...' instead of 'False if ... else True'",
    "B006": "mutable default argument",
    "B008": "function call in default argument",
    "PARSE": "source could not be parsed",
}


@dataclass(frozen=True, order=True)
class Finding:
    line: int
    col: int
    code: str
    message: str = ""

    def to_dict(self) -> dict:
        return {"code": self.code, "line": self.line, "col": self.col,
                "message": self.message}


def _f(code: str, line: int, col: int, detail: str = "") -> Finding:
    msg = MESSAGES[code] + (f" ({detail})" if detail else "")
    return Finding(line, col, code, msg)


def check_violations(source: str) -> list[Finding]:
    """All supported-rule findings in ``source``, sorted by position."""
    if not source.strip():
        return []
    try:
        tree = ast.parse(source)
        tokens = list(tokenize.generate_tokens(io.StringIO(source).readline))
    except (SyntaxError, tokenize.TokenError, ValueError):
        return [Finding(1, 1, "PARSE", MESSAGES["PARSE"])]
    findings: list[Finding] = []
    findings += _physical_line_checks(source)
    findings += _token_checks(tokens)
    findings += _blank_line_checks(source.splitlines())
    findings += _AstChecker().run(tree)
    return sorted(set(findings))


# -- physical lines -------------------------------------------------------
def _physical_line_checks(source: str) -> list[Finding]:
    out = []
    for no, line in enumerate(source.splitlines(), 1):
        if len(line) > MAX_LINE_LENGTH:
            out.append(_f("E501", no, MAX_LINE_LENGTH + 1,
                          f"{len(line)} > {MAX_LINE_LENGTH}"))
        stripped = line.rstrip(" \t\f\v")
        if stripped != line:
            if stripped:
                out.append(_f("W291", no, len(stripped) + 1))
            else:
                out.append(_f("W293", no, 1))
    return out


# -- token-level spacing --------------------------------------------------
_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=",
               "&=", "|=", "^=", "@=", ":="}
_COMPARE_OPS = {"==", "!=", "<", ">", "<=", ">=", "<>"}
_SKIP = {tokenize.NL, tokenize.NEWLINE, tokenize.COMMENT, tokenize.INDENT,
         tokenize.DEDENT, tokenize.ENDMARKER}


def _token_checks(tokens: list[tokenize.TokenInfo]) -> list[Finding]:
    out: list[Finding] = []
    depth = 0
    lambda_depth: list[int] = []
    sig = [t for t in tokens if t.type not in _SKIP]
    for i, tok in enumerate(sig):
        prev = sig[i - 1] if i else None
        nxt = sig[i + 1] if i + 1 < len(sig) else None
        if tok.type == tokenize.NAME and tok.string == "lambda":
            lambda_depth.append(depth)
        if tok.type != tokenize.OP:
            continue
        s = tok.string
        (row, col), (erow, ecol) = tok.start, tok.end
        same_prev = prev is not None and prev.end[0] == row
        same_next = nxt is not None and nxt.start[0] == erow
        if s in "([{":
            depth += 1
            if same_next and nxt.start[1] > ecol and nxt.string not in ")]}":
                out.append(_f("E201", row, ecol + 1, f"after '{s}'"))
        elif s in ")]}":
            depth -= 1
            if same_prev and prev.end[1] < col and prev.string not in ",([{":
                out.append(_f("E202", row, prev.end[1] + 1, f"before '{s}'"))
        elif s == ",":
            if same_prev and prev.end[1] < col and prev.string not in "([{,":
                out.append(_f("E203", row, prev.end[1] + 1))
            if same_next and nxt.start[1] == ecol and nxt.string not in ")]":
                out.append(_f("E231", row, col + 1))
        elif s == ":" and lambda_depth and lambda_depth[-1] == depth:
            lambda_depth.pop()
        elif s in _ASSIGN_OPS or s in _COMPARE_OPS:
            if s == "=" and (depth > 0 or lambda_depth):
                continue  # keyword argument / default value
            before = prev.end[1] if same_prev else None
            after = nxt.start[1] if same_next else None
            if before is not None and col - before > 1:
                out.append(_f("E221", row, before + 1))
            elif after is not None and after - ecol > 1:
                out.append(_f("E222", row, ecol + 1))
            elif before == col or after == ecol:
                out.append(_f("E225", row, col + 1 if before == col else ecol + 1))
    return out


# -- blank lines -----------------------------------------------------------
def _blank_line_checks(lines: list[str]) -> list[Finding]:
    out = []
    blanks = 0
    in_string = False
    for no, line in enumerate(lines, 1):
        if in_string:
            in_string = _toggles_triple_quote(line, in_string)
            continue
        if not line.strip():
            blanks += 1
            continue
        indented = line[0] in " \t"
        if (indented and blanks >= 2) or (not indented and blanks > 2):
            out.append(_f("E303", no, len(line) - len(line.lstrip()) + 1,
                          str(blanks)))
        blanks = 0
        in_string = _toggles_triple_quote(line, False)
    return out


def _toggles_triple_quote(line: str, state: bool) -> bool:
    for _ in re.finditer(r'"""|\'\'\'', line):
        state = not state
    return state


# -- syntax tree rules -------------------------------------------------------
def _is_const(node: ast.AST, value: object) -> bool:
    return isinstance(node, ast.Constant) and node.value is value


def _target_names(target: ast.AST) -> list[ast.Name]:
    if isinstance(target, ast.Name):
        return [target]
    if isinstance(target, (ast.Tuple, ast.List)):
        return [n for elt in target.elts for n in _target_names(
            elt.value if isinstance(elt, ast.Starred) else elt)]
    return []


_MUTABLE_CALLS = {"list", "dict", "set", "Counter", "OrderedDict",
                  "defaultdict", "deque", "collections.Counter",
                  "collections.OrderedDict", "collections.defaultdict",
                  "collections.deque"}
_IMMUTABLE_CALLS = {"tuple", "frozenset", "types.MappingProxyType",
                    "MappingProxyType", "re.compile", "operator.attrgetter",
                    "operator.itemgetter", "operator.methodcaller",
                    "attrgetter", "itemgetter", "methodcaller"}


class _AstChecker(ast.NodeVisitor):
    def __init__(self) -> None:
        self.out: list[Finding] = []
        self.func_stack: list[ast.AST] = []

    def run(self, tree: ast.AST) -> list[Finding]:
        self.visit(tree)
        return self.out

    def add(self, code: str, node: ast.AST, detail: str = "") -> None:
        col = node.col_offset + 1
        if code.startswith("N8"):
            col += 1  # the naming plugin reports one column further right
        self.out.append(_f(code, node.lineno, col, detail))

    # naming, defaults, unused locals
    def visit_FunctionDef(self, node: ast.FunctionDef) -> None:
        if node.name.lower() != node.name:
            keyword_len = 10 if isinstance(node, ast.AsyncFunctionDef) else 4
            self.out.append(_f("N802", node.lineno,
                               node.col_offset + keyword_len + 2, node.name))
        args = node.args
        for arg in args.posonlyargs + args.args + args.kwonlyargs:
            if arg.arg.lower() != arg.arg:
                self.add("N803", arg, arg.arg)
        for default in args.defaults + [d for d in args.kw_defaults if d]:
            self._check_default(default)
        self._check_unused(node)
        self.func_stack.append(node)
        self.generic_visit(node)
        self.func_stack.pop()

    visit_AsyncFunctionDef = visit_FunctionDef

    def _check_default(self, node: ast.AST) -> None:
        if isinstance(node, (ast.List, ast.Dict, ast.Set, ast.ListComp,
                             ast.DictComp, ast.SetComp)):
            self.add("B006", node)
        elif isinstance(node, ast.Call):
            name = ast.unparse(node.func)
            if name in _MUTABLE_CALLS:
                self.add("B006", node)
            elif name not in _IMMUTABLE_CALLS:
                self.add("B008", node)

    def _check_unused(self, fn: ast.FunctionDef) -> None:
        stores: dict[str, ast.Name] = {}
        loads: set[str] = set()
        declared: set[str] = set()
        for sub in ast.walk(fn):
            if isinstance(sub, (ast.Global, ast.Nonlocal)):
                declared.update(sub.names)
            elif isinstance(sub, ast.Name):
                if isinstance(sub.ctx, ast.Load):
                    loads.add(sub.id)
                elif isinstance(sub.ctx, ast.Del):
                    loads.add(sub.id)
            elif isinstance(sub, ast.Assign):
                for tgt in sub.targets:
                    if isinstance(tgt, ast.Name):
                        stores.setdefault(tgt.id, tgt)
            elif isinstance(sub, ast.AugAssign) and isinstance(sub.target, ast.Name):
                loads.add(sub.target.id)
            elif isinstance(sub, (ast.FunctionDef, ast.AsyncFunctionDef,
                                  ast.ClassDef, ast.Lambda)) and sub is not fn:
                # names read by nested scopes count as used
                for inner in ast.walk(sub):
                    if isinstance(inner, ast.Name) and isinstance(inner.ctx, ast.Load):
                        loads.add(inner.id)
        for name, node in stores.items():
            if name not in loads and name not in declared and name != "_" \
                    and name != "__tracebackhide__":
                self.add("F841", node, name)

    def _check_assign_target(self, target: ast.AST) -> None:
        if not self.func_stack:
            return
        for name in _target_names(target):
            if name.id.lower() != name.id:
                self.add("N806", name, name.id)

    def visit_Assign(self, node: ast.Assign) -> None:
        for target in node.targets:
            self._check_assign_target(target)
        self.generic_visit(node)

    def visit_AnnAssign(self, node: ast.AnnAssign) -> None:
        self._check_assign_target(node.target)
        self.generic_visit(node)

    def visit_NamedExpr(self, node: ast.NamedExpr) -> None:
        self._check_assign_target(node.target)
        self.generic_visit(node)

    def visit_For(self, node: ast.For) -> None:
        self._check_assign_target(node.target)
        self.generic_visit(node)

    visit_AsyncFor = visit_For

    def _visit_comp(self, node: ast.AST) -> None:
        for gen in node.generators:
            self._check_assign_target(gen.target)
        self.generic_visit(node)

    visit_ListComp = visit_SetComp = visit_DictComp = _visit_comp
    visit_GeneratorExp = _visit_comp

    # comprehension misuse
    def visit_Call(self, node: ast.Call) -> None:
        func = node.func
        if isinstance(func, ast.Name) and len(node.args) == 1 and not node.keywords:
            arg = node.args[0]
            if func.id == "list" and isinstance(arg, ast.GeneratorExp):
                self.add("C400", node)
            elif func.id == "list" and isinstance(arg, ast.ListComp):
                self.add("C411", node)
            elif func.id == "set" and isinstance(arg, ast.ListComp):
                self.add("C403", node)
            elif func.id == "dict" and isinstance(arg, ast.ListComp) \
                    and isinstance(arg.elt, ast.Tuple) and len(arg.elt.elts) == 2:
                self.add("C404", node)
        self.generic_visit(node)

    # ternary / boolean patterns
    def visit_IfExp(self, node: ast.IfExp) -> None:
        if _is_const(node.body, True) and _is_const(node.orelse, False):
            self.add("SIM210", node)
        elif _is_const(node.body, False) and _is_const(node.orelse, True):
            self.add("SIM211", node)
        self.generic_visit(node)

    def visit_If(self, node: ast.If) -> None:
        body = _single_name_assign(node.body)
        orelse = _single_name_assign(node.orelse)
        if body and orelse and body[0].id == orelse[0].id:
            ternary = (f"{body[0].id} = {ast.unparse(body[1])} if "
                       f"{ast.unparse(node.test)} else {ast.unparse(orelse[1])}")
            message = (f"SIM108 Use ternary operator '{ternary}' "
                       "instead of if-else-block")
            if len(message) <= 79 and not self._is_elif_continuation(node):
                self.add("SIM108", node, ternary)
        for child in node.orelse:
            if isinstance(child, ast.If):
                child._covweave_parent = node  # type: ignore[attr-defined]
        self.generic_visit(node)

    @staticmethod
    def _is_elif_continuation(node: ast.If) -> bool:
        parent = getattr(node, "_covweave_parent", None)
        if parent is None or parent.orelse != [node]:
            return False
        return any(isinstance(s, ast.Assign) and any(
            isinstance(t, ast.Name) and t.id == _single_name_assign(node.body)[0].id
            for t in s.targets) for s in parent.body)


def _single_name_assign(body: list[ast.stmt]):
    if len(body) != 1 or not isinstance(body[0], ast.Assign):
        return None
    stmt = body[0]
    if len(stmt.targets) != 1 or not isinstance(stmt.targets[0], ast.Name):
        return None
    return stmt.targets[0], stmt.value
