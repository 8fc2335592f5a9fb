"""Limited attention to inflation: attention choice, panel estimation of
attention, a New Keynesian economy with a lower bound on the policy rate,
and optimal commitment policy under limited attention."""

__version__ = "0.1.0"

# bumped whenever a CSV header written by the command line tool changes
CSV_SCHEMA_VERSION = 1
