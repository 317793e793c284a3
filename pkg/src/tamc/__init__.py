"""tamc: a timed-automata model checker with environment abstraction trees."""

__version__ = "0.1.0"
REPORT_SCHEMA = 1
