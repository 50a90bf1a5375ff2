from typing import Callable, Dict

from pydantic import BaseModel, ConfigDict


class RegisteredConditional(BaseModel):
	"""One Gibbs conditional together with the joint it must be consistent with"""

	kind: str
	name: str
	description: str
	builder: Callable
	joint: Callable
	discrete: bool = False
	collapsed: bool = False

	model_config = ConfigDict(arbitrary_types_allowed=True)

	@property
	def key(self) -> str:
		return f'{self.kind}.{self.name}'

	def describe(self) -> str:
		flags = ', '.join(f for f, on in (('discrete', self.discrete), ('collapsed', self.collapsed)) if on)
		return f'{self.key}: {self.description}' + (f' ({flags})' if flags else '')


class ConditionalCatalogue(BaseModel):
	"""Every registered conditional, keyed by `kind.name`"""

	conditionals: Dict[str, RegisteredConditional] = {}

	def get_description(self) -> str:
		return '\n'.join(c.describe() for c in self.conditionals.values())
