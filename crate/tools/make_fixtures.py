#!/usr/bin/env python3
"""Generate the synthetic fixture corpus under crates/cta/fixtures/corpus."""
import json
import os
import shutil

ROOT = os.path.join(os.path.dirname(__file__), "..", "crates", "cta", "fixtures", "corpus")


def jsonl(records):
    return "\n".join(json.dumps(r, ensure_ascii=False) for r in records) + "\n"


def think(text, tokens):
    return {"type": "think", "text": text, "tokens": tokens}


def tool(name, inp, output, tokens, exit_code=None):
    rec = {"type": "tool_call", "tool": name, "input": inp, "output": output, "tokens": tokens}
    if exit_code is not None:
        rec["exit_code"] = exit_code
    return rec


def write_bundle(name, files):
    bundle_dir = os.path.join(ROOT, name)
    os.makedirs(bundle_dir, exist_ok=True)
    for fname, content in files.items():
        with open(os.path.join(bundle_dir, fname), "w", encoding="utf-8") as fh:
            fh.write(content)


# --------------------------------------------------------------------------
# shellcheck-hardening: mid bucket, +18.2pp, ratio 0.90
# expected: 2 divergences (content mismatch on backup.sh, recovery
# unilateral on tests/backup.bats); fires: EP+SA on the first, SA+CB on the
# second.
# --------------------------------------------------------------------------

SKELETON = "#!/bin/bash\ntar -czf backup.tar.gz data/\n"
HARDENED = (
    "#!/bin/bash\n"
    "set -Eeuo pipefail\n"
    "trap cleanup EXIT\n"
    'if [ -z "${1:-}" ]; then exit 1; fi\n'
    "tar -czf backup.tar.gz data/\n"
)
UNGUARDED = (
    "#!/bin/bash\n"
    "# no strict mode\n"
    "tar -czf backup.tar.gz data/\n"
    'rm -rf "$TMP"\n'
)
BATS = (
    "#!/usr/bin/env bats\n"
    "# Author bats test files covering the failure paths and the happy path "
    "so regressions surface early.\n"
    '@test "backup fails without args" { run scripts/backup.sh; '
    '[ "$status" -ne 0 ]; }\n'
)

SHELL_SKILL = """# Defensive Shell Scripting

## Strict Mode

Enable strict mode at the top of every script:

```bash
set -Eeuo pipefail
```

## Cleanup Traps

1. Define a cleanup function for temporary files.
2. Register it with the trap builtin on EXIT.
3. Validate inputs before use.

## Test Scaffolding

Author bats test files covering the failure paths and the happy path so regressions surface early.
"""

shell_with = [
    {"type": "system", "subtype": "init"},
    think("Inspect the scripts directory layout first.", 40),
    tool("Read", {"path": "/workspace/proj/scripts"}, "backup.sh.bak", 40),
    think("Create the backup script skeleton.", 40),
    tool("Write", {"file_path": "/workspace/proj/scripts/backup.sh", "content": SKELETON}, "ok", 80),
    think("Harden the backup script and add strict mode.", 60),
    tool("Write", {"file_path": "/workspace/proj/scripts/backup.sh", "content": HARDENED}, "ok", 240),
    think("Author bats tests covering the failure paths.", 50),
    tool("Write", {"file_path": "/workspace/proj/tests/backup.bats", "content": BATS}, "ok", 150),
    tool("Bash", {"command": "pytest -q tests/"}, "11 passed", 100, exit_code=0),
    tool("Bash", {"command": "echo done"}, "done", 100, exit_code=0),
]

shell_without = [
    think("Inspect the scripts directory layout first.", 50),
    tool("Read", {"path": "/workspace/proj/scripts"}, "backup.sh.bak", 50),
    think("Create the backup script skeleton.", 50),
    tool("Write", {"file_path": "/workspace/proj/scripts/backup.sh", "content": SKELETON}, "ok", 100),
    think("Harden the backup script and add strict mode.", 100),
    tool("Write", {"file_path": "/workspace/proj/scripts/backup.sh", "content": UNGUARDED}, "ok", 350),
    tool("Bash", {"command": "pytest -q tests/"}, "3 failed, 8 passed", 300, exit_code=1),
]

write_bundle(
    "shellcheck-hardening",
    {
        "trace_with.jsonl": jsonl(shell_with),
        "trace_without.jsonl": jsonl(shell_without),
        "skill.md": SHELL_SKILL,
        "eval_report_with.json": json.dumps({"passed": 10, "total": 11}) + "\n",
        "eval_report_without.json": json.dumps({"passed": 8, "total": 11}) + "\n",
        "task.json": json.dumps(
            {
                "task_id": "shellcheck-hardening",
                "requirement_text": "Add a safe backup script at scripts/backup.sh that archives the data directory.",
                "file_operations": ["/workspace/proj/scripts/backup.sh"],
            },
            indent=2,
        )
        + "\n",
    },
)

# --------------------------------------------------------------------------
# prompt-suite: ceiling bucket, -20.0pp, ratio 1.09
# expected: 1 divergence (content mismatch on run_eval.py), zero SIP fires.
# --------------------------------------------------------------------------

CATALOG = json.dumps({"templates": ["summarize", "extract", "translate"]}, indent=2) + "\n"
RUNNER_WITH = "import json\nprint('running evaluation')\nrun_all()\n"
RUNNER_WITHOUT = "import json\nprint('running the evaluation')\nrun_all()\n"

PROMPT_SKILL = """# Prompt Suite Authoring

## Workflow

1. Draft the template catalog.
2. Wire the evaluation runner.
3. Commit and document the result.

Keep templates short and focused.
"""

prompt_with = [
    think("Set up the catalog and runner files.", 100),
    tool("Write", {"file_path": "/workspace/proj/src/templates.json", "content": CATALOG}, "ok", 300),
    think("Write the runner next.", 100),
    tool("Write", {"file_path": "/workspace/proj/src/run_eval.py", "content": RUNNER_WITH}, "ok", 300),
    tool("Bash", {"command": "pytest -q"}, "5 passed", 290, exit_code=0),
]

prompt_without = [
    think("Set up the catalog and runner files.", 100),
    tool("Write", {"file_path": "/workspace/proj/src/templates.json", "content": CATALOG}, "ok", 250),
    think("Write the runner next.", 100),
    tool("Write", {"file_path": "/workspace/proj/src/run_eval.py", "content": RUNNER_WITHOUT}, "ok", 250),
    tool("Bash", {"command": "pytest -q"}, "5 passed", 100, exit_code=0),
    think("Run the extra suite as well.", 100),
    tool("Bash", {"command": "pytest -q tests/extra"}, "2 passed", 100, exit_code=0),
]

write_bundle(
    "prompt-suite",
    {
        "trace_with.jsonl": jsonl(prompt_with),
        "trace_without.jsonl": jsonl(prompt_without),
        "skill.md": PROMPT_SKILL,
        "eval_report_with.json": json.dumps({"pass_rate": 0.80}) + "\n",
        "eval_report_without.json": json.dumps({"pass_rate": 1.0}) + "\n",
        "task.json": json.dumps(
            {
                "task_id": "prompt-suite",
                "requirement_text": "Create the prompt template catalog and evaluation runner under src/.",
                "file_operations": [
                    "/workspace/proj/src/templates.json",
                    "/workspace/proj/src/run_eval.py",
                ],
            },
            indent=2,
        )
        + "\n",
    },
)

# --------------------------------------------------------------------------
# csv-edge-cases: floor bucket, +0.0pp, ratio 2.60
# expected: 1 divergence (content mismatch on loader.py), one EP fire (0.7).
# --------------------------------------------------------------------------

BASIC = "def load(path):\n    rows = []\n    for line in open(path):\n        rows.append(line.split(','))\n    return rows\n"
GUARDED = (
    "def load(path):\n"
    "    rows = []\n"
    "    try:\n"
    "        for line in open(path):\n"
    "            if not line.strip():\n"
    "                continue\n"
    "            rows.append(line.split(','))\n"
    "    except OSError:\n"
    "        return []\n"
    "    assert rows is not None\n"
    "    return rows\n"
)
PADDED = (
    "def load(path):\n"
    "    rows = []\n"
    "    width = 0\n"
    "    try:\n"
    "        for line in open(path):\n"
    "            if not line.strip():\n"
    "                continue\n"
    "            cells = line.rstrip('\\n').split(',')\n"
    "            width = max(width, len(cells))\n"
    "            rows.append(cells)\n"
    "    except OSError:\n"
    "        return []\n"
    "    for row in rows:\n"
    "        row.extend([None] * (width - len(row)))\n"
    "    assert rows is not None\n"
    "    return rows\n"
)

CSV_SKILL = """# CSV Loader Hardening

## Edge Cases

- Empty files must yield an empty row list.
- Rows with a missing trailing field are padded before use.

Always wrap the parse loop in try/except and assert the result is well formed.
"""

csv_with = [
    think("Read the loader module first.", 50),
    tool("Read", {"file_path": "/workspace/proj/src/loader.py"}, "def load(path): pass", 50),
    think("Write the basic loader.", 50),
    tool("Write", {"file_path": "/workspace/proj/src/loader.py", "content": BASIC}, "ok", 150),
    think("Guard the parse loop against empty files.", 100),
    tool("Write", {"file_path": "/workspace/proj/src/loader.py", "content": GUARDED}, "ok", 350),
    tool("Bash", {"command": "pytest -q tests/test_loader.py"}, "3 failed, 3 passed", 200, exit_code=1),
    think("Fix the failing padding case.", 100),
    tool("Write", {"file_path": "/workspace/proj/src/loader.py", "content": PADDED}, "ok", 200),
    tool("Bash", {"command": "pytest -q tests/test_loader.py"}, "6 passed", 100, exit_code=0),
]

csv_without = [
    think("Read the loader module first.", 30),
    tool("Read", {"file_path": "/workspace/proj/src/loader.py"}, "def load(path): pass", 30),
    think("Write the basic loader.", 40),
    tool("Write", {"file_path": "/workspace/proj/src/loader.py", "content": BASIC}, "ok", 100),
    think("Guard the parse loop against empty files.", 50),
    tool("Write", {"file_path": "/workspace/proj/src/loader.py", "content": BASIC}, "ok", 150),
    tool("Bash", {"command": "pytest -q tests/test_loader.py"}, "3 failed, 3 passed", 100, exit_code=1),
]

write_bundle(
    "csv-edge-cases",
    {
        "trace_with.jsonl": jsonl(csv_with),
        "trace_without.jsonl": jsonl(csv_without),
        "skill.md": CSV_SKILL,
        "eval_report_with.json": json.dumps({"passed": 6, "total": 25, "pass_rate": 0.24}) + "\n",
        "eval_report_without.json": json.dumps({"passed": 6, "total": 25}) + "\n",
        "task.json": json.dumps(
            {
                "task_id": "csv-edge-cases",
                "requirement_text": "Harden the CSV loader in src/loader.py so malformed rows do not crash the pipeline.",
                "file_operations": ["/workspace/proj/src/loader.py"],
            },
            indent=2,
        )
        + "\n",
    },
)

print(f"fixtures written under {os.path.abspath(ROOT)}")
for name in sorted(os.listdir(ROOT)):
    print(" -", name)
