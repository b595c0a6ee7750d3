from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Optional, Sequence


class Worker:
    """Deferred call that captures its result or error instead of raising."""

    def __init__(self, fn: Callable[..., Any], *args: Any, **kwargs: Any) -> None:
        self.fn = fn
        self.args = args
        self.kwargs = kwargs
        self.result: Any = None
        self.error: Optional[BaseException] = None
        self.finished = False

    def run(self) -> "Worker":
        try:
            self.result = self.fn(*self.args, **self.kwargs)
        except Exception as e:
            self.error = e
        finally:
            self.finished = True
        return self


def run_all(workers: Sequence[Worker], max_workers: int = 1) -> List[Worker]:
    """Run every worker; the returned list keeps submission order."""
    if max_workers <= 1 or len(workers) <= 1:
        return [w.run() for w in workers]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda w: w.run(), workers))

