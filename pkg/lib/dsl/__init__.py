"""The .ppl protocol description language."""

from dsl.parser import ParseResult, SourceFile, parse
from dsl.printer import spec_to_text

__all__ = ["ParseResult", "SourceFile", "parse", "spec_to_text"]
