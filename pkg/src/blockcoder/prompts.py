"""Prompt template assets: loading, versioning, and fragment wrapping.

Templates live as package data so prompt text is an inspectable,
versioned artifact rather than a string literal; each template's version
id (a content digest) is recorded in the run report. The first line of a
prompt template is the system message, the rest is the user message.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources

FULL_VARIANT = "full"
SIMPLIFIED_VARIANT = "simplified"
PROMPT_VARIANTS = (FULL_VARIANT, SIMPLIFIED_VARIANT)

BODY_SLOT = "<!-- Your task is to fill this area -->"

_TEMPLATE_FILES = {
    "page_skeleton": "page_skeleton.html",
    "block_full": "block_prompt_full.txt",
    "block_simplified": "block_prompt_simplified.txt",
    "assembly": "assembly_prompt.txt",
}


@lru_cache(maxsize=None)
def template_text(name: str) -> str:
    try:
        filename = _TEMPLATE_FILES[name]
    except KeyError:
        raise KeyError(f"unknown template {name!r}") from None
    return (resources.files("blockcoder") / "templates" / filename).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def template_version(name: str) -> str:
    return hashlib.sha256(template_text(name).encode("utf-8")).hexdigest()[:12]


def prompt_versions() -> dict:
    return {name: template_version(name) for name in _TEMPLATE_FILES}


def page_skeleton() -> str:
    return template_text("page_skeleton")


def block_prompt(variant: str) -> str:
    if variant == FULL_VARIANT:
        return template_text("block_full")
    if variant == SIMPLIFIED_VARIANT:
        return template_text("block_simplified")
    raise ValueError(f"unknown prompt variant {variant!r}")


def assembly_prompt() -> str:
    return template_text("assembly")


def split_prompt(text: str) -> tuple[str, str]:
    """Split a template into (system message, user message)."""
    first, _, rest = text.partition("\n")
    return first.strip(), rest.lstrip("\n")


def wrap_fragment(fragment: str, body_style: str | None = None) -> str:
    """Embed an HTML fragment into the fixed page skeleton."""
    page = page_skeleton().replace(BODY_SLOT, fragment)
    if body_style is not None:
        page = page.replace("<body>", f'<body style="{body_style}">', 1)
    return page
