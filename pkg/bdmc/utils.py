import logging
import time
from concurrent.futures import ProcessPoolExecutor
from functools import wraps
from typing import Callable, ParamSpec, Sequence, TypeVar

logger = logging.getLogger(__name__)


R = TypeVar('R')
P = ParamSpec('P')
T = TypeVar('T')


def time_execution_sync(additional_text: str = '') -> Callable[[Callable[P, R]], Callable[P, R]]:
	def decorator(func: Callable[P, R]) -> Callable[P, R]:
		@wraps(func)
		def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
			start_time = time.time()
			result = func(*args, **kwargs)
			execution_time = time.time() - start_time
			logger.debug(f'{additional_text} Execution time: {execution_time:.2f} seconds')
			return result

		return wrapper

	return decorator


def run_indexed(func: Callable[[T], R], items: Sequence[T], n_workers: int = 1) -> list[R]:
	"""
	Map `func` over `items`, optionally on a bounded process pool.

	The returned list is always in item order, whatever order the workers finish in.
	`func` must be picklable (a module-level function or a functools.partial of one).
	"""
	if n_workers <= 1 or len(items) <= 1:
		return [func(item) for item in items]

	with ProcessPoolExecutor(max_workers=min(n_workers, len(items))) as pool:
		futures = [pool.submit(func, item) for item in items]
		return [future.result() for future in futures]
