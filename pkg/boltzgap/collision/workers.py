"""
Block-parallel execution for matrix assembly.

Each task computes one independent piece of the matrix and returns it; the
caller places results in task order, so the assembled matrix does not depend
on the worker count. Workers receive the (read-only) assembly context once
through the pool initializer.

Pools never fork: sweeps may call map_blocks from several threads at once, and
a forked child inherits whatever locks those threads hold (logging handlers
among them). Workers start from forkserver where the platform has it, spawn
otherwise, so the context and func must be picklable.
"""
import multiprocessing
from typing import Any, Callable, List, Sequence

_CONTEXT: Any = None


def pool_context():
    methods = multiprocessing.get_all_start_methods()
    return multiprocessing.get_context("forkserver" if "forkserver" in methods else "spawn")


def _init_worker(context):
    global _CONTEXT
    _CONTEXT = context


def _run(job):
    func, task = job
    return func(_CONTEXT, task)


def map_blocks(func: Callable[[Any, Any], Any], context: Any, tasks: Sequence[Any], threads: int = 1) -> List[Any]:
    """Serial when threads < 2, otherwise a process pool; results in task order."""
    if threads < 2 or len(tasks) < 2:
        return [func(context, t) for t in tasks]
    p = pool_context().Pool(min(threads, len(tasks)), initializer=_init_worker, initargs=(context,))
    try:
        # chunks sized so every worker sees several tasks
        chunksize = max(1, len(tasks) // (4 * threads))
        return p.map(_run, [(func, t) for t in tasks], chunksize=chunksize)
    finally:
        p.close()
        p.join()
