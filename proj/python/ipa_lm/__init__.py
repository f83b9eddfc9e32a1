"""Python access to the IPA language model core."""

from ._core import (
    GPTModel,
    LanguageModel,
    IPAModel,
    Tokenizer,
    gradcheck,
    load,
    param_count_gpt,
    param_count_ipa,
)

__all__ = [
    "GPTModel",
    "LanguageModel",
    "IPAModel",
    "Tokenizer",
    "gradcheck",
    "load",
    "param_count_gpt",
    "param_count_ipa",
]
