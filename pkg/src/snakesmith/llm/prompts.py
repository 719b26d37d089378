"""Prompt templates for every model-assisted task.

Each template puts labeled context sections first and the output format
last.  Instructions start with a stable ``TASK:`` marker so offline
backends can dispatch on it.  Prompts must stay free of absolute paths
and timestamps: replay fixtures are keyed by a hash of the full text.
"""

from __future__ import annotations

from importlib import resources

from .gateway import ChatExchange, PromptTemplate

SYSTEM_LINE = (
    "You convert recorded shell sessions and notebooks into Snakemake "
    "workflows. Follow the requested output format exactly."
)


def _asset(name: str) -> str:
    return resources.files("snakesmith.llm").joinpath("assets", name).read_text()


TEMPLATES: dict[str, PromptTemplate] = {}


def _register(template: PromptTemplate) -> PromptTemplate:
    TEMPLATES[template.id] = template
    return template


CLASSIFY_RELEVANCE = _register(PromptTemplate(
    id="classify_relevance",
    context_sections=[("Shell history", "${history}")],
    instruction=(
        "TASK: classify_relevance. Decide which commands belong in a data "
        "processing workflow. Commands that read, transform, or write data "
        "files are relevant; navigation, inspection, and version control "
        "commands are not."
    ),
    output_format=(
        'Return JSON only: {"relevant": [<zero-based indexes of relevant '
        "commands>]}"
    ),
))

DRAFT_RULES = _register(PromptTemplate(
    id="draft_rules",
    context_sections=[
        ("Relevant commands", "${commands}"),
        ("Existing workflow", "${workflow}"),
        ("Existing config", "${config}"),
        ("Example", "${example}"),
    ],
    instruction=(
        "TASK: draft_rules. Convert each command into one Snakemake rule. "
        "Name rules after the tool or script they run, declare every file "
        "the command reads as input and every file it creates as output, "
        "and keep the shell line faithful to the recorded command. When "
        "several commands differ only in a sample name, produce one rule "
        "with a {sample} wildcard; unroll bash loops with expand. A "
        "command joined by && is one logical step: prefer one rule for it. "
        "Echo a command's conda environment in the rule's conda field."
    ),
    output_format=(
        'Return JSON only: {"rules": [{"name": str, "input": [str], '
        '"output": [str], "params": {str: str}, "shell": str, '
        '"log": str?, "conda": str?}]}'
    ),
))

EXTRACT_CONFIG = _register(PromptTemplate(
    id="extract_config",
    context_sections=[
        ("Rules", "${rules}"),
        ("Existing config", "${config}"),
    ],
    instruction=(
        "TASK: extract_config. Find literal values in these rules that a "
        "user would want to tune: thread counts, reference paths, thresholds. "
        "Propose a snake_case key for each and quote the exact occurrence "
        "text to replace."
    ),
    output_format=(
        'Return JSON only: {"parameters": [{"key": str, "value": '
        '<scalar>, "occurrence": str}]}'
    ),
))

FIX_DIRECT = _register(PromptTemplate(
    id="fix_direct",
    context_sections=[
        ("Workflow", "${workflow}"),
        ("Validator findings", "${findings}"),
    ],
    instruction=(
        "TASK: fix_direct. Correct the workflow so the findings are "
        "resolved. Change as little as possible."
    ),
    output_format="Return the complete corrected workflow file, nothing else.",
))

FIX_ANALYZE = _register(PromptTemplate(
    id="fix_analyze",
    context_sections=[
        ("Workflow", "${workflow}"),
        ("Validator findings", "${findings}"),
    ],
    instruction=(
        "TASK: fix_analyze. Step back before editing: explain what the "
        "findings mean and lay out a short repair plan. Do not rewrite the "
        "workflow yet."
    ),
    output_format='Return JSON only: {"analysis": str, "plan": [str]}',
))

FIX_APPLY = _register(PromptTemplate(
    id="fix_apply",
    context_sections=[
        ("Workflow", "${workflow}"),
        ("Validator findings", "${findings}"),
        ("Analysis", "${analysis}"),
        ("Plan", "${plan}"),
    ],
    instruction=(
        "TASK: fix_apply. Carry out the plan above on the workflow."
    ),
    output_format="Return the complete corrected workflow file, nothing else.",
))

GENERATE_DOCS = _register(PromptTemplate(
    id="generate_docs",
    context_sections=[
        ("Workflow", "${workflow}"),
        ("Shell history", "${history}"),
    ],
    instruction=(
        "TASK: generate_docs. Write user documentation for this workflow: "
        "what it does overall, then one subsection per rule covering inputs, "
        "outputs, and the command. Use rule docstrings, file names, and the "
        "recorded history to explain intent."
    ),
    output_format="Return Markdown only.",
))

REFINE_RWSETS = _register(PromptTemplate(
    id="refine_rwsets",
    context_sections=[
        ("Cell source", "${source}"),
        ("Detected reads", "${reads}"),
        ("Detected writes", "${writes}"),
        ("Undefined names", "${undefined}"),
    ],
    instruction=(
        "TASK: refine_rwsets. The listed names come up undefined when the "
        "cell runs in isolation. Correct the detected sets: add a read or "
        "write the detector missed, or drop one it invented. Only propose "
        "adding names that appear in the cell source."
    ),
    output_format=(
        'Return JSON only: {"add_reads": [str], "drop_reads": [str], '
        '"add_writes": [str], "drop_writes": [str]}'
    ),
))

GENERATE_BLOCKS = _register(PromptTemplate(
    id="generate_blocks",
    context_sections=[
        ("Inputs", "${inputs}"),
        ("Outputs", "${outputs}"),
    ],
    instruction=(
        "TASK: generate_blocks. Write Python glue for a script that "
        "receives input paths then output paths as command-line "
        "arguments (each item's arg field is its position in "
        "sys.argv[1:]). The prefix must read every input into its "
        "variable using its format (tabular_text via pandas TSV, "
        "json_text via json, generic_binary via pickle). The suffix "
        "must create output directories and write every output "
        "variable in its format."
    ),
    output_format='Return JSON only: {"prefix": str, "suffix": str}',
))

ASSISTANT_CHAT = _register(PromptTemplate(
    id="assistant_chat",
    context_sections=[
        ("Workspace state", "${state}"),
        ("Conversation", "${conversation}"),
    ],
    instruction=(
        "TASK: assistant_chat. Answer the last user message. When the user "
        "asks you to change something, embed one command URI per action "
        "using the scheme snakemaker://<action>?<params> with actions "
        "set_setting, edit_history, print_rules, edit_dag, edit_code."
    ),
    output_format="Return plain text, with command URIs inline where needed.",
))


def build_exchange(template_id: str, **variables: str) -> ChatExchange:
    template = TEMPLATES[template_id]
    if template_id == "draft_rules" and "example" not in variables:
        variables["example"] = _asset("rule_example.txt")
    return ChatExchange().system(SYSTEM_LINE).user(template.render(variables))
