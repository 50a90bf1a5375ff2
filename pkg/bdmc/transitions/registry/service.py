from typing import Callable, Iterable

from bdmc.transitions.registry.views import ConditionalCatalogue, RegisteredConditional
from bdmc.transitions.views import UnregisteredConditionalError


class ConditionalRegistry:
	"""Service for registering and looking up Gibbs conditionals"""

	def __init__(self):
		self.registry = ConditionalCatalogue()

	def conditional(
		self,
		kind: str,
		name: str,
		joint: Callable,
		description: str = '',
		discrete: bool = False,
		collapsed: bool = False,
	):
		"""Decorator for registering a conditional builder `(ctx, state, index) -> conditional`"""

		def decorator(func: Callable):
			entry = RegisteredConditional(
				kind=kind,
				name=name,
				description=description or (func.__doc__ or '').strip(),
				builder=func,
				joint=joint,
				discrete=discrete,
				collapsed=collapsed,
			)
			self.registry.conditionals[entry.key] = entry
			return func

		return decorator

	def get(self, kind: str, name: str) -> RegisteredConditional:
		try:
			return self.registry.conditionals[f'{kind}.{name}']
		except KeyError:
			raise UnregisteredConditionalError(f'no conditional registered for {kind}.{name}') from None

	def for_kind(self, kind: str) -> list[RegisteredConditional]:
		return [c for c in self.registry.conditionals.values() if c.kind == kind]

	def keys(self) -> list[str]:
		return list(self.registry.conditionals)

	def assert_covered(self, checked: Iterable[str]) -> None:
		"""Raise unless every registered conditional appears in `checked`"""
		missing = sorted(set(self.registry.conditionals) - set(checked))
		if missing:
			raise UnregisteredConditionalError(f'conditionals not covered by the consistency suite: {missing}')

	def get_description(self) -> str:
		return self.registry.get_description()
