"""Execution-feedback code ranking pipeline.

Executes candidate programs against unit tests, distills the interpreter's
output into templated feedback, trains a small multi-task ranker
(classification + feedback generation) under three parameter-sharing
strategies, and ranks candidates by predicted correctness without running
any code at ranking time.
"""

__version__ = "0.1.0"
