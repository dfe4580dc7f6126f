"""Two-stage retrieve-then-generate pipeline for discharge summary sections.

The pipeline segments a discharge note into named sections, extracts clinical
concepts (problems, treatments, tests) from a configurable subset of them,
reconstructs a budgeted generator input per target section, generates the
"Brief Hospital Course" and "Discharge Instructions" texts through a pluggable
backend, and scores the output with a battery of text metrics.
"""

__version__ = "0.1.0"
