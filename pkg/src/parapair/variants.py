"""The eight encoder-decoder ablation variants and their loss/sharing flags."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError

VARIANT_NAMES = ("EDL", "EDP", "EDG", "EDPG", "EDLP", "EDLPS", "EDLPG", "EDLPGS")


@dataclass(frozen=True)
class VariantSpec:
    name: str
    uses_local: bool
    uses_pairwise: bool
    adversarial_alternation: bool
    shared_discriminator: bool

    @property
    def uses_global(self):
        """Whether the discriminator pass and the pairwise loss are computed at all."""
        return self.uses_pairwise or self.adversarial_alternation

    @property
    def separate_discriminator(self):
        return self.uses_global and not self.shared_discriminator

    @property
    def code(self):
        return VARIANT_NAMES.index(self.name)


def variant(name) -> VariantSpec:
    """Flags follow the letters after ``ED``: L local, P pairwise, G alternation, S sharing."""
    if isinstance(name, VariantSpec):
        return name
    key = str(name).upper()
    if key not in VARIANT_NAMES:
        raise ContractError(f"unknown variant {name!r}; expected one of {', '.join(VARIANT_NAMES)}")
    tail = key[2:]
    return VariantSpec(key, "L" in tail, "P" in tail, "G" in tail, "S" in tail)


def variant_from_code(code):
    if not 0 <= code < len(VARIANT_NAMES):
        raise ContractError(f"variant code {code} out of range")
    return variant(VARIANT_NAMES[code])
