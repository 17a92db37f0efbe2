"""Minimal config-document language: the YAML subset of block maps, block
sequences, flow lists of scalars, scalars, and comments.

Deliberately excluded: anchors, aliases, tags, flow maps, block scalars, and
multi-document streams; encountering any of them is a parse error. Errors
carry the offending line number. ``dumps`` emits documents that ``loads``
round-trips exactly.
"""

from __future__ import annotations

import re

from .errors import ParseError

_INT_RE = re.compile(r"^[-+]?\d+$")
_FLOAT_RE = re.compile(r"^[-+]?(\d+\.\d*|\.\d+|\d+)([eE][-+]?\d+)?$")
_PLAIN_KEY_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.-]*$")
_NEEDS_QUOTE = set(":#[]{}&*!|>'\"%@`,")


class _Line:
    __slots__ = ("indent", "content", "number")

    def __init__(self, indent: int, content: str, number: int):
        self.indent = indent
        self.content = content
        self.number = number


def _strip_comment(raw: str, number: int) -> str:
    quote = None
    escaped = False
    for i, ch in enumerate(raw):
        if quote:
            if escaped:
                escaped = False
            elif quote == '"' and ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "#" and (i == 0 or raw[i - 1] in " \t"):
            return raw[:i]
    if quote:
        raise ParseError("unterminated quoted string", number)
    return raw


def _scan(text: str) -> list[_Line]:
    lines = []
    for number, raw in enumerate(text.splitlines(), start=1):
        if "\t" in raw[: len(raw) - len(raw.lstrip())]:
            raise ParseError("tabs are not allowed in indentation", number)
        stripped = _strip_comment(raw, number).rstrip()
        if not stripped.strip():
            continue
        indent = len(stripped) - len(stripped.lstrip(" "))
        content = stripped.lstrip(" ")
        if content.startswith("---") or content.startswith("..."):
            raise ParseError("multi-document markers are not supported", number)
        lines.append(_Line(indent, content, number))
    return lines


def loads(text: str):
    """Parse a document into dicts, lists, and scalars."""
    lines = _scan(text)
    if not lines:
        return {}
    value, next_index = _parse_block(lines, 0, len(lines))
    if next_index != len(lines):
        raise ParseError("unexpected de-indentation", lines[next_index].number)
    return value


def _parse_block(lines: list[_Line], start: int, end: int):
    indent = lines[start].indent
    if lines[start].content == "-" or lines[start].content.startswith("- "):
        return _parse_sequence(lines, start, end, indent)
    return _parse_mapping(lines, start, end, indent)


def _block_end(lines, start, end, indent) -> int:
    i = start
    while i < end and lines[i].indent > indent:
        i += 1
    return i


def _parse_mapping(lines, start, end, indent):
    result: dict = {}
    i = start
    while i < end:
        line = lines[i]
        if line.indent < indent:
            break
        if line.indent > indent:
            raise ParseError("unexpected indentation", line.number)
        if line.content == "-" or line.content.startswith("- "):
            raise ParseError("sequence item inside a mapping", line.number)
        key, rest = _split_key(line.content, line.number)
        if key in result:
            raise ParseError(f"duplicate key {key!r}", line.number)
        nested_end = _block_end(lines, i + 1, end, indent)
        if rest:
            value = _parse_scalar(rest, line.number)
            if nested_end != i + 1:
                raise ParseError(f"value for {key!r} cannot combine inline and nested forms",
                                 lines[i + 1].number)
            result[key] = value
            i += 1
        elif nested_end == i + 1:
            result[key] = None
            i += 1
        else:
            value, consumed = _parse_block(lines, i + 1, nested_end)
            if consumed != nested_end:
                raise ParseError("unexpected de-indentation", lines[consumed].number)
            result[key] = value
            i = nested_end
    return result, i


def _parse_sequence(lines, start, end, indent):
    result: list = []
    i = start
    while i < end:
        line = lines[i]
        if line.indent < indent:
            break
        if line.indent > indent:
            raise ParseError("unexpected indentation", line.number)
        if not (line.content == "-" or line.content.startswith("- ")):
            raise ParseError("expected a sequence item", line.number)
        rest = line.content[1:].lstrip()
        item_indent = indent + 2
        nested_end = _block_end(lines, i + 1, end, indent)
        if not rest:
            if nested_end == i + 1:
                result.append(None)
            else:
                value, consumed = _parse_block(lines, i + 1, nested_end)
                if consumed != nested_end:
                    raise ParseError("unexpected de-indentation", lines[consumed].number)
                result.append(value)
            i = nested_end
            continue
        if _is_key_value(rest):
            # map item whose first entry shares the dash line
            virtual = [_Line(item_indent, rest, line.number)] + lines[i + 1 : nested_end]
            value, consumed = _parse_mapping(virtual, 0, len(virtual), item_indent)
            if consumed != len(virtual):
                raise ParseError("unexpected de-indentation", virtual[consumed].number)
            result.append(value)
        else:
            if nested_end != i + 1:
                raise ParseError("scalar sequence item cannot have a nested block",
                                 lines[i + 1].number)
            result.append(_parse_scalar(rest, line.number))
        i = nested_end
    return result, i


def _is_key_value(content: str) -> bool:
    try:
        _split_key(content, 0)
        return True
    except ParseError:
        return False


def _split_key(content: str, number: int) -> tuple[str, str]:
    if content.startswith(("'", '"')):
        key, rest_index = _read_quoted(content, number)
        rest = content[rest_index:].lstrip()
        if not rest.startswith(":"):
            raise ParseError("quoted key must be followed by ':'", number)
        return key, rest[1:].strip()
    for i, ch in enumerate(content):
        if ch == ":" and (i + 1 == len(content) or content[i + 1] in " \t"):
            key = content[:i].strip()
            if not key:
                raise ParseError("empty mapping key", number)
            return key, content[i + 1 :].strip()
    raise ParseError(f"expected 'key: value', got {content!r}", number)


def _read_quoted(s: str, number: int) -> tuple[str, int]:
    quote = s[0]
    out = []
    i = 1
    while i < len(s):
        ch = s[i]
        if quote == '"' and ch == "\\" and i + 1 < len(s):
            esc = s[i + 1]
            out.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc, esc))
            i += 2
            continue
        if ch == quote:
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise ParseError("unterminated quoted string", number)


def _parse_scalar(s: str, number: int):
    s = s.strip()
    if s == "" or s in ("null", "~"):
        return None
    first = s[0]
    if first in "&*":
        raise ParseError("anchors and aliases are not supported", number)
    if first == "!":
        raise ParseError("tags are not supported", number)
    if first in "|>":
        raise ParseError("block scalars are not supported", number)
    if first == "{":
        raise ParseError("flow mappings are not supported", number)
    if first == "[":
        return _parse_flow_list(s, number)
    if first in "'\"":
        value, consumed = _read_quoted(s, number)
        if s[consumed:].strip():
            raise ParseError("trailing content after quoted scalar", number)
        return value
    if s == "true":
        return True
    if s == "false":
        return False
    if _INT_RE.match(s):
        return int(s)
    if _FLOAT_RE.match(s):
        return float(s)
    return s


def _parse_flow_list(s: str, number: int):
    if not s.endswith("]"):
        raise ParseError("unterminated flow list", number)
    body = s[1:-1].strip()
    if not body:
        return []
    items = []
    quote = None
    escaped = False
    token = []
    for ch in body:
        if quote:
            token.append(ch)
            if escaped:
                escaped = False
            elif quote == '"' and ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            token.append(ch)
        elif ch == "[":
            raise ParseError("nested flow lists are not supported", number)
        elif ch == ",":
            items.append("".join(token))
            token = []
        else:
            token.append(ch)
    items.append("".join(token))
    return [_parse_scalar(item, number) for item in items]


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def dumps(value) -> str:
    if not isinstance(value, dict):
        raise ParseError("only mapping documents can be serialized")
    out: list[str] = []
    _dump_mapping(value, 0, out)
    return "\n".join(out) + "\n"


def _dump_mapping(mapping: dict, indent: int, out: list[str]) -> None:
    pad = " " * indent
    for key, value in mapping.items():
        label = _format_key(key)
        if isinstance(value, dict):
            if not value:
                raise ParseError(f"cannot serialize empty mapping under {key!r}")
            out.append(f"{pad}{label}:")
            _dump_mapping(value, indent + 2, out)
        elif isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
            out.append(f"{pad}{label}:")
            for item in value:
                _dump_sequence_item(item, indent + 2, out)
        else:
            out.append(f"{pad}{label}: {_format_scalar_or_flow(value)}")


def _dump_sequence_item(item: dict, indent: int, out: list[str]) -> None:
    pad = " " * indent
    first = True
    for key, value in item.items():
        label = _format_key(key)
        lead = f"{pad}- " if first else f"{pad}  "
        if isinstance(value, dict):
            if not value:
                raise ParseError(f"cannot serialize empty mapping under {key!r}")
            out.append(f"{lead}{label}:")
            _dump_mapping(value, indent + 4, out)
        elif isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
            raise ParseError("nested sequences of mappings are not supported")
        else:
            out.append(f"{lead}{label}: {_format_scalar_or_flow(value)}")
        first = False
    if first:
        raise ParseError("cannot serialize an empty mapping item")


def _format_scalar_or_flow(value) -> str:
    if isinstance(value, list):
        return "[" + ", ".join(_format_scalar(v) for v in value) + "]"
    return _format_scalar(value)


def _format_scalar(value) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return _format_string(value)
    raise ParseError(f"unserializable value of type {type(value).__name__}")


_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t"}


def _format_string(s: str) -> str:
    if s and not _needs_quoting(s):
        return s
    out = ['"']
    for ch in s:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 32 or ch in "\x7f\x85  ":
            raise ParseError(f"unserializable control character {ch!r} in string")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _needs_quoting(s: str) -> bool:
    if s != s.strip() or s in ("true", "false", "null", "~"):
        return True
    if _INT_RE.match(s) or _FLOAT_RE.match(s):
        return True
    if s.startswith("- ") or s == "-" or s.startswith("---") or s.startswith("..."):
        return True
    if any(ch in _NEEDS_QUOTE or ord(ch) < 32 or ch in "\x7f\x85  " for ch in s):
        return True
    if ": " in s or s.endswith(":"):
        return True
    return False


def _format_key(key) -> str:
    if not isinstance(key, str):
        raise ParseError(f"mapping keys must be strings, got {type(key).__name__}")
    if _PLAIN_KEY_RE.match(key) and not _needs_quoting(key):
        return key
    escaped = key.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'
