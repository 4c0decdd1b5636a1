from boltzgap.sweep.records import HEADER, ResultRecord, emit, load
from boltzgap.sweep.manager import SweepManager, run
from boltzgap.sweep.summary import summarize

__all__ = ["HEADER", "ResultRecord", "SweepManager", "emit", "load", "run", "summarize"]
