"""Lenient HTML parsing and serialization on top of the stdlib tokenizer.

Model responses arrive with missing or implied tags, so tree construction
follows the forgiving rules browsers use: there is always a single <html>
root with <head> and <body> children, head-only elements seen before body
content land in <head>, stray end tags are dropped, void elements never
nest, and elements with optional end tags (p, li, td, ...) close when an
incompatible sibling opens. Attributes, text, and comments are preserved
so a parsed document can be serialized back without structural loss.
"""

from __future__ import annotations

from html import escape
from html.parser import HTMLParser
from typing import Iterator, Optional, Union

VOID_ELEMENTS = frozenset(
    {
        "area", "base", "br", "col", "embed", "hr", "img", "input",
        "link", "meta", "param", "source", "track", "wbr",
    }
)

RAW_TEXT_ELEMENTS = frozenset({"script", "style"})

# Elements that belong in <head> when seen before any body content.
HEAD_CONTENT = frozenset({"base", "link", "meta", "noscript", "script", "style", "title"})

_P_CLOSERS = frozenset(
    {
        "address", "article", "aside", "blockquote", "details", "div", "dl",
        "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2",
        "h3", "h4", "h5", "h6", "header", "hgroup", "hr", "main", "menu",
        "nav", "ol", "p", "pre", "section", "table", "ul",
    }
)

# An open element whose tag is a key here is implicitly closed when a
# start tag from its value set arrives.
_CLOSED_BY = {
    "p": _P_CLOSERS,
    "li": frozenset({"li"}),
    "dt": frozenset({"dt", "dd"}),
    "dd": frozenset({"dt", "dd"}),
    "tr": frozenset({"tr"}),
    "td": frozenset({"td", "th", "tr"}),
    "th": frozenset({"td", "th", "tr"}),
    "thead": frozenset({"tbody", "tfoot"}),
    "tbody": frozenset({"tbody", "tfoot"}),
    "option": frozenset({"option", "optgroup"}),
}

_EMPTY: frozenset = frozenset()


class Text:
    __slots__ = ("data",)

    def __init__(self, data: str):
        self.data = data

    def __eq__(self, other):
        return isinstance(other, Text) and self.data == other.data

    def __repr__(self):
        return f"Text({self.data!r})"


class Comment:
    __slots__ = ("data",)

    def __init__(self, data: str):
        self.data = data

    def __eq__(self, other):
        return isinstance(other, Comment) and self.data == other.data

    def __repr__(self):
        return f"Comment({self.data!r})"


Node = Union["Element", Text, Comment]


class Element:
    __slots__ = ("tag", "attrs", "children")

    def __init__(self, tag: str, attrs: Optional[dict] = None, children: Optional[list] = None):
        self.tag = tag
        self.attrs: dict[str, Optional[str]] = attrs or {}
        self.children: list[Node] = children or []

    def append(self, node: Node) -> None:
        self.children.append(node)

    def child_elements(self) -> list["Element"]:
        return [c for c in self.children if isinstance(c, Element)]

    def iter_elements(self) -> Iterator["Element"]:
        """Depth-first iteration over this element and its descendants."""
        stack = [self]
        while stack:
            el = stack.pop()
            yield el
            stack.extend(reversed(el.child_elements()))

    def find_all(self, tag: Optional[str] = None, attr: Optional[str] = None) -> list["Element"]:
        out = []
        for el in self.iter_elements():
            if tag is not None and el.tag != tag:
                continue
            if attr is not None and attr not in el.attrs:
                continue
            out.append(el)
        return out

    def get_text(self) -> str:
        parts = []
        for child in self.children:
            if isinstance(child, Text):
                parts.append(child.data)
            elif isinstance(child, Element):
                parts.append(child.get_text())
        return "".join(parts)

    def __eq__(self, other):
        return (
            isinstance(other, Element)
            and self.tag == other.tag
            and self.attrs == other.attrs
            and self.children == other.children
        )

    def __repr__(self):
        return f"Element({self.tag!r}, attrs={self.attrs!r}, children={len(self.children)})"


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.html = Element("html")
        self.head = Element("head")
        self.body = Element("body")
        self.html.children = [self.head, self.body]
        self._stack: list[Element] = []
        self._in_body = False

    def _target(self) -> Element:
        if self._stack:
            return self._stack[-1]
        return self.body if self._in_body else self.head

    def handle_starttag(self, tag, attrs):
        if tag == "html":
            for name, value in attrs:
                self.html.attrs.setdefault(name, value)
            return
        if tag == "head":
            return
        if tag == "body":
            self._in_body = True
            for name, value in attrs:
                self.body.attrs.setdefault(name, value)
            return
        if not self._stack and not self._in_body and tag not in HEAD_CONTENT:
            self._in_body = True
        if tag not in VOID_ELEMENTS:
            while self._stack and tag in _CLOSED_BY.get(self._stack[-1].tag, _EMPTY):
                self._stack.pop()
        element = Element(tag, {name: value for name, value in attrs})
        self._target().append(element)
        if tag not in VOID_ELEMENTS:
            self._stack.append(element)

    def handle_startendtag(self, tag, attrs):
        if tag in ("html", "head", "body"):
            self.handle_starttag(tag, attrs)
            return
        if not self._stack and not self._in_body and tag not in HEAD_CONTENT:
            self._in_body = True
        element = Element(tag, {name: value for name, value in attrs})
        self._target().append(element)

    def handle_endtag(self, tag):
        if tag == "html":
            self._stack.clear()
            return
        if tag == "head":
            self._in_body = True
            return
        if tag == "body":
            self._in_body = True
            self._stack.clear()
            return
        for i in range(len(self._stack) - 1, -1, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                return
        # Unmatched end tag: drop it.

    def handle_data(self, data):
        if not self._stack:
            if not data.strip():
                return
            self._in_body = True
        self._target().append(Text(data))

    def handle_comment(self, data):
        self._target().append(Comment(data))

    def handle_decl(self, decl):
        pass

    def unknown_decl(self, data):
        pass


def parse_document(source: str) -> Element:
    """Parse HTML into a normalized tree rooted at <html>.

    The returned root always has exactly two element children, <head>
    and <body>, regardless of how fragmentary the input was.
    """
    builder = _TreeBuilder()
    builder.feed(source)
    builder.close()
    return builder.html


def document_body(root: Element) -> Element:
    return root.children[1]  # type: ignore[return-value]


def document_head(root: Element) -> Element:
    return root.children[0]  # type: ignore[return-value]


def _serialize_into(node: Node, out: list, raw: bool) -> None:
    if isinstance(node, Text):
        out.append(node.data if raw else escape(node.data, quote=False))
        return
    if isinstance(node, Comment):
        out.append(f"<!--{node.data}-->")
        return
    out.append("<")
    out.append(node.tag)
    for name, value in node.attrs.items():
        if value is None:
            out.append(f" {name}")
        else:
            out.append(f' {name}="{escape(value)}"')
    out.append(">")
    if node.tag in VOID_ELEMENTS:
        return
    child_raw = node.tag in RAW_TEXT_ELEMENTS
    for child in node.children:
        _serialize_into(child, out, child_raw)
    out.append(f"</{node.tag}>")


def serialize(node: Node) -> str:
    out: list = []
    _serialize_into(node, out, raw=False)
    return "".join(out)


def serialize_children(element: Element) -> str:
    out: list = []
    raw = element.tag in RAW_TEXT_ELEMENTS
    for child in element.children:
        _serialize_into(child, out, raw)
    return "".join(out)


def serialize_document(root: Element) -> str:
    return "<!DOCTYPE html>\n" + serialize(root)
