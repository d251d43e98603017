"""Proper compensation rules for self-interested experts: propriety and
participation checks, robustness bounds under bias uncertainty, curvature-
matched cost design, and sequential market runs."""

from ._core import *  # noqa: F401,F403
