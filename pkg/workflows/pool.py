"""
Bounded worker pool for per-image work.
Results come back in input order whatever the scheduling.
"""
import asyncio
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


async def map_async(func: Callable[[T], R], items: Iterable[T], workers: int = 4) -> list[R]:
    """Run `func` over `items` in threads, at most `workers` at a time."""
    semaphore = asyncio.Semaphore(max(1, workers))

    async def run(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(func, item)

    return list(await asyncio.gather(*(run(item) for item in items)))


def map_ordered(func: Callable[[T], R], items: Iterable[T], workers: int = 4) -> list[R]:
    """Synchronous wrapper around `map_async`; not for use inside a running event loop."""
    return asyncio.run(map_async(func, items, workers))
