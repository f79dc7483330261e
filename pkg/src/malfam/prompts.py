"""Zero-shot classification prompt templates.

P0 is the baseline prompt used for the main runs; P1-P5 are the
alternative phrasings used in the prompt-sensitivity sweep and are kept
verbatim.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from malfam.corpus import SampleRecord
from malfam.errors import ConfigError

CODE_SLOT = "[truncated]"
IMPORTS_SLOT = "[API list]"
DEFAULT_MAX_INPUT_CHARS = 12000

_FAMILY_LIST = (
    "Trojan; Worm; Virus; Ransomware; Backdoor / Remote Access Trojan;\n"
    "Dropper; Downloader; Packed / Obfuscated Malware;\n"
    "Spyware / Infostealer; Bot / Botnet Client\n"
)
_TAIL = "Source code: [truncated]\nDetected imports: [API list]\nFamily:"

_BODIES = {
    "P0": (
        "Classify the following malware program into exactly ONE of these malware families:\n"
        + _FAMILY_LIST
        + "Respond with the family name only. Do not add explanations or any other text.\n"
        + _TAIL
    ),
    "P1": (
        "You are a malware analysis expert.\n"
        "Determine which malware family best describes the following program\n"
        "based on its behavior and functionality.\n"
        "Choose exactly ONE label from this list:\n"
        + _FAMILY_LIST
        + "Consider indicators such as persistence mechanisms, network\n"
        "communication, credential harvesting, payload delivery, encryption,\n"
        "and command-and-control behavior.\n"
        "Return ONLY the exact family name from the list above.\n"
        + _TAIL
    ),
    "P2": (
        "Classify the malware program below into exactly ONE of the following families:\n"
        + _FAMILY_LIST
        + "Use only the source code and API imports to make your decision.\n"
        "Output ONLY the family name. No explanation.\n"
        + _TAIL
    ),
    "P3": (
        "You are a threat intelligence analyst performing malware family attribution.\n"
        "Based on the program’s code structure, API usage, and inferred malicious\n"
        "intent, assign the most appropriate malware family.\n"
        "Select exactly ONE family from the list:\n"
        + _FAMILY_LIST
        + "Do not include explanations, qualifiers, or multiple labels.\n"
        + _TAIL
    ),
    "P4": (
        "You are classifying a malware sample into one family using strict\n"
        "decision rules.\n"
        "Rules:\n"
        "Choose exactly ONE family from the list below.\n"
        "Base your decision only on observable behavior inferred from the code\n"
        "and the APIs.\n"
        "Do not output anything except the family name.\n"
        "Malware families:\n"
        + _FAMILY_LIST
        + _TAIL
    ),
    "P5": (
        "You are a malware classification system.\n"
        "Your task is to distinguish between overlapping malware behaviors\n"
        "(e.g., Trojan vs Backdoor vs Spyware) and select the single most specific family.\n"
        "Choose exactly ONE label from the following list:\n"
        + _FAMILY_LIST
        + "Prefer the most behaviorally informative label when multiple families\n"
        "seem plausible.\n"
        "Return ONLY the family name.\n"
        + _TAIL
    ),
}

_TITLES = {
    "P0": "Baseline Prompt",
    "P1": "Behavior-Focused Analyst Prompt",
    "P2": "Minimalist Classification Prompt",
    "P3": "Threat-Intelligence Framing Prompt",
    "P4": "Decision-Rule Prompt",
    "P5": "Contrastive / Disambiguation Prompt",
}

_SLOTS = re.compile(re.escape(CODE_SLOT) + "|" + re.escape(IMPORTS_SLOT))


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    max_input_chars: int = DEFAULT_MAX_INPUT_CHARS
    title: str = ""

    def __post_init__(self):
        if self.body.count(CODE_SLOT) != 1 or self.body.count(IMPORTS_SLOT) != 1:
            raise ConfigError(f"prompt {self.id}: needs exactly one {CODE_SLOT} and one {IMPORTS_SLOT}")
        if not self.body.endswith("Family:"):
            raise ConfigError(f"prompt {self.id}: must end with 'Family:'")
        if self.max_input_chars <= 0:
            raise ConfigError(f"prompt {self.id}: max_input_chars must be positive")


PROMPT_IDS = tuple(_BODIES)
SWEEP_PROMPT_IDS = ("P1", "P2", "P3", "P4", "P5")


def get_template(prompt_id: str, max_input_chars: int = DEFAULT_MAX_INPUT_CHARS) -> PromptTemplate:
    try:
        body = _BODIES[prompt_id]
    except KeyError:
        raise ConfigError(f"unknown prompt id {prompt_id!r}; expected one of {', '.join(PROMPT_IDS)}") from None
    return PromptTemplate(prompt_id, body, max_input_chars, _TITLES[prompt_id])


def render_prompt(template: PromptTemplate, sample: SampleRecord) -> str:
    code = sample.source_code[: template.max_input_chars]
    imports = ", ".join(sample.api_imports) if sample.api_imports else "(none)"
    fill = {CODE_SLOT: code, IMPORTS_SLOT: imports}
    # One pass, so placeholder text inside the sample is never re-expanded.
    return _SLOTS.sub(lambda m: fill[m.group(0)], template.body)
