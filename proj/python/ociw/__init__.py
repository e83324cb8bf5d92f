"""Object-centric instruction augmentation workbench.

Thin python surface over the C++ core: instruction augmentation and
parse-back, bounding-box rendering, 8-way direction classification,
instruction paraphrasing, gridworld instance sampling, and the built-in
verification suites. Scenes, tasks, and structured parses travel as JSON
strings so the module has no python-side dependencies.
"""

from ._core import (
    ConfigError,
    Error,
    IoError,
    NumericError,
    ParseError,
    UsageError,
    ValidationError,
    augment,
    classify_offset,
    paraphrase,
    parse,
    render_bbox,
    sample_instance,
    selftest,
)

__all__ = [
    "ConfigError",
    "Error",
    "IoError",
    "NumericError",
    "ParseError",
    "UsageError",
    "ValidationError",
    "augment",
    "classify_offset",
    "paraphrase",
    "parse",
    "render_bbox",
    "sample_instance",
    "selftest",
]

__version__ = "0.1.0"
