from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

from tqdm import tqdm

from src.config import settings

T = TypeVar("T")


def map_seeds(task: Callable[[int], T], seeds: Sequence[int], threads: int = settings.DEFAULT_THREADS,
              description: str = "seeds") -> list[T]:
    """
    Runs task(seed) on a bounded worker pool. Results come back in seed order
    whatever the completion order, so output is identical for any thread count.
    """
    ordered = sorted(seeds)
    show = settings.SHOW_PROGRESS
    if threads <= 1 or len(ordered) <= 1:
        return [task(seed) for seed in tqdm(ordered, desc=description, disable=not show)]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(tqdm(pool.map(task, ordered), total=len(ordered), desc=description, disable=not show))
    return results
