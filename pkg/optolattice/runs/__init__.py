"""
Result tables and run directories.
"""

from optolattice.runs.run_manager import ResultTable, RunManager

__all__ = ["ResultTable", "RunManager"]
