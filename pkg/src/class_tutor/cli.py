"""Command-line surface for the whole pipeline.

Subcommands: dataset generation (gen-scaffold, gen-dialogue), index
management (index build), dataset validation (validate), the HTTP service
(serve), a terminal chat REPL (chat) and rating reports (eval report).

Exit codes: 0 success, 1 validation failure, 2 IO/config error,
3 backend error. Every data-producing command supports ``--json`` for a
machine-readable summary on stdout.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import evalkit, retrieval
from .backend import BackendError, GENERATION_TEMPERATURE, TUTORING_TEMPERATURE, load_backend
from .datagen.jobs import GenerationJob, KIND_DIALOGUE, KIND_SCAFFOLD, load_dataset, run_job, validate_dataset
from .datagen.records import DatagenError, load_sections, parse_scaffold_response
from .engine import GuardrailConfig, RepairBudgetExhausted, SessionFinished, TutorEngine
from .protocol import ACTION_LABELS, EVALUATION_LABELS, EvaluationCode
from .template import TemplateVersion

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_BACKEND = 3


class CliFailure(click.ClickException):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliFailure(f"cannot read config {path}: {exc}", EXIT_IO)


def _resolve_backend(spec: str | None, config: dict, default_temperature: float | None = None):
    """Backend from the --backend spec, falling back to the config file.

    When the config file omits temperature, the caller's use-case default
    applies (diversity for generation, stability for tutoring).
    """
    if spec:
        try:
            return load_backend(spec)
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            raise CliFailure(f"cannot build backend from {spec!r}: {exc}", EXIT_IO)
    backend_cfg = config.get("backend")
    if backend_cfg:
        from .backend import BackendConfig, HttpBackend

        if default_temperature is not None and "temperature" not in backend_cfg:
            backend_cfg = {**backend_cfg, "temperature": default_temperature}
        return HttpBackend(BackendConfig.from_dict(backend_cfg))
    raise CliFailure("no backend configured (use --backend or a config file)", EXIT_IO)


def _guardrails(config: dict, **overrides) -> GuardrailConfig:
    base = dict(config.get("guardrails") or {})
    base.update({k: v for k, v in overrides.items() if v is not None})
    return GuardrailConfig.from_dict(base)


def _emit(summary: dict, as_json: bool, human: str) -> None:
    if as_json:
        click.echo(json.dumps(summary, ensure_ascii=False))
    else:
        click.echo(human)


@click.group()
def main():
    """Tutoring pipeline: datasets, retrieval index, service, chat, eval."""


@main.command("gen-scaffold")
@click.option("--sections", "sections_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--retries", default=1, show_default=True, type=int)
@click.option("--bloom", is_flag=True, help="Tag generated problems as Bloom Level 5.")
@click.option("--backend", "backend_spec", default=None, help="scripted:FILE | replay:TAPE | http:CONFIG")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--json", "as_json", is_flag=True)
def gen_scaffold(sections_path, out_path, retries, bloom, backend_spec, config_path, jobs, as_json):
    """Generate the problem-decomposition dataset from a sections file."""
    config = _load_config(config_path)
    backend = _resolve_backend(backend_spec, config, GENERATION_TEMPERATURE)
    try:
        sections = load_sections(sections_path)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliFailure(f"cannot read sections: {exc}", EXIT_IO)
    except DatagenError as exc:
        raise CliFailure(f"bad sections file: {exc}", EXIT_INVALID)
    job = GenerationJob(
        kind=KIND_SCAFFOLD,
        inputs=sections,
        output_path=Path(out_path),
        retries_per_item=retries,
        bloom=bloom,
        parallelism=jobs,
    )
    summary = run_job(job, backend)
    _emit(
        {"command": "gen-scaffold", **summary.to_dict()},
        as_json,
        f"gen-scaffold: {summary.ok} ok, {summary.failed} failed -> {summary.output_path}",
    )
    if summary.failed:
        sys.exit(EXIT_INVALID)


@main.command("gen-dialogue")
@click.option("--scaffold", "scaffold_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--template", "version", default="v2", type=click.Choice(["v1", "v2"]), show_default=True)
@click.option("--retries", default=1, show_default=True, type=int)
@click.option("--backend", "backend_spec", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--json", "as_json", is_flag=True)
def gen_dialogue(scaffold_path, out_path, version, retries, backend_spec, config_path, jobs, as_json):
    """Generate mock conversations from a scaffold dataset."""
    config = _load_config(config_path)
    backend = _resolve_backend(backend_spec, config, GENERATION_TEMPERATURE)
    try:
        records = load_dataset(scaffold_path)
    except (OSError, DatagenError) as exc:
        raise CliFailure(f"cannot read scaffold dataset: {exc}", EXIT_IO)
    inputs = []
    for record in records:
        if record.kind != KIND_SCAFFOLD:
            continue
        problem = parse_scaffold_response(json.dumps(record.payload, ensure_ascii=False))
        inputs.append((problem, record.id))
    if not inputs:
        raise CliFailure("scaffold dataset contains no scaffold records", EXIT_INVALID)
    job = GenerationJob(
        kind=KIND_DIALOGUE,
        inputs=inputs,
        output_path=Path(out_path),
        retries_per_item=retries,
        template_version=TemplateVersion(version),
        parallelism=jobs,
    )
    summary = run_job(job, backend)
    _emit(
        {"command": "gen-dialogue", **summary.to_dict()},
        as_json,
        f"gen-dialogue: {summary.ok} ok, {summary.failed} failed -> {summary.output_path}",
    )
    if summary.failed:
        sys.exit(EXIT_INVALID)


@main.group("index")
def index_group():
    """Build and inspect retrieval indexes."""


@index_group.command("build")
@click.option("--corpus", "corpus_paths", required=True, multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def index_build(corpus_paths, out_path, as_json):
    """Index plain-text corpus files (blank-line paragraphs, ## locators)."""
    try:
        text = "\n\n".join(Path(p).read_text(encoding="utf-8") for p in corpus_paths)
    except OSError as exc:
        raise CliFailure(f"cannot read corpus: {exc}", EXIT_IO)
    try:
        passages = retrieval.preprocess(text)
        index = retrieval.build_index(passages)
        retrieval.save_index(index, out_path)
    except retrieval.EmptyCorpus as exc:
        raise CliFailure(f"EmptyCorpus: {exc}", EXIT_IO)
    except OSError as exc:
        raise CliFailure(f"cannot write index: {exc}", EXIT_IO)
    _emit(
        {"command": "index-build", "passages": index.passage_count, "terms": len(index.postings), "output_path": str(out_path)},
        as_json,
        f"index build: {index.passage_count} passages, {len(index.postings)} terms -> {out_path}",
    )


@main.command("validate")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def validate_cmd(dataset_path, as_json):
    """Re-parse every record of a dataset; nonzero exit on any invalid one."""
    try:
        report = validate_dataset(dataset_path)
    except OSError as exc:
        raise CliFailure(f"cannot read dataset: {exc}", EXIT_IO)
    human_lines = [f"validate: {report.valid}/{report.total} records valid"]
    for issue in report.issues:
        human_lines.append(f"  line {issue.line}: {issue.error}")
    for line, code, message in report.advisories:
        human_lines.append(f"  line {line}: advisory {code}: {message}")
    _emit({"command": "validate", **report.to_dict()}, as_json, "\n".join(human_lines))
    if not report.ok:
        sys.exit(EXIT_INVALID)


@main.command("serve")
@click.option("--port", default=8700, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--index", "index_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", "backend_spec", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--allow-origin", default=None, help="CORS origin for the web UI.")
@click.option("--ui-dir", default=None, type=click.Path(file_okay=False), help="Static web UI assets to serve under /ui.")
@click.option("--debug", is_flag=True)
def serve(port, host, data_dir, index_path, backend_spec, config_path, allow_origin, ui_dir, debug):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    config = _load_config(config_path)
    backend = _resolve_backend(backend_spec, config, TUTORING_TEMPERATURE)
    index = None
    if index_path:
        try:
            index = retrieval.load_index(index_path)
        except retrieval.RetrievalError as exc:
            raise CliFailure(f"cannot load index: {exc}", EXIT_IO)
    app = create_app(
        data_dir=data_dir,
        backend=backend,
        index=index,
        guardrails=_guardrails(config),
        allow_origin=allow_origin,
        ui_dir=ui_dir,
        debug=debug,
    )
    uvicorn.run(app, host=host, port=port)


def _meta_line(meta: dict) -> str:
    evaluation = meta.get("evaluation", "?")
    actions = meta.get("actions", [])
    state = meta.get("state", "?")
    eval_label = EVALUATION_LABELS.get(EvaluationCode(evaluation), "?") if evaluation != "?" else "?"
    action_text = ",".join(f"{a} ({ACTION_LABELS.get(a, '?')})" for a in actions)
    parts = [f"eval={evaluation} [{eval_label}]", f"actions={action_text}", f"state={state}"]
    if meta.get("subproblem"):
        parts.append(f"subproblem={meta['subproblem']}")
    if meta.get("retrieved_locators"):
        parts.append("passages=" + ",".join(meta["retrieved_locators"]))
    return " | ".join(parts)


@main.command("chat")
@click.option("--problem-id", default=None)
@click.option("--problem", "problem_text", default=None)
@click.option("--server", default=None, help="Service base URL; when set the REPL is a thin HTTP client.")
@click.option("--data-dir", "data_dir", default=None, type=click.Path(file_okay=False), help="Problem store for --problem-id in local mode.")
@click.option("--backend", "backend_spec", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--index", "index_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--max-attempts", default=None, type=int)
@click.option("--max-repair-retries", default=None, type=int)
@click.option("--show-meta/--no-show-meta", default=True, show_default=True)
def chat(problem_id, problem_text, server, data_dir, backend_spec, config_path, index_path, max_attempts, max_repair_retries, show_meta):
    """Interactive tutoring REPL. /hint sends a plain "hint"; /quit exits."""
    if bool(problem_id) == bool(problem_text):
        raise CliFailure("provide exactly one of --problem-id or --problem", EXIT_IO)
    if server:
        _chat_remote(server, problem_id, problem_text, show_meta)
        return

    config = _load_config(config_path)
    backend = _resolve_backend(backend_spec, config, TUTORING_TEMPERATURE)
    index = None
    if index_path:
        index = retrieval.load_index(index_path)
    guardrails = _guardrails(config, max_attempts=max_attempts, max_repair_retries=max_repair_retries)
    engine = TutorEngine(backend, index=index, config=guardrails)

    if problem_id:
        if not data_dir:
            raise CliFailure("--problem-id in local mode needs --data-dir (or use --server)", EXIT_IO)
        from pathlib import Path as _Path

        from .service.store import ProblemStore, UnknownId

        try:
            problem = ProblemStore(_Path(data_dir)).get(problem_id)
        except UnknownId as exc:
            raise CliFailure(str(exc), EXIT_IO)
    else:
        problem = problem_text
    try:
        session, reply = engine.start_session(problem)
    except (RepairBudgetExhausted, BackendError) as exc:
        raise CliFailure(f"backend failure: {exc}", EXIT_BACKEND)
    _print_reply(reply.utterance, _reply_meta(reply), show_meta)

    while session.active:
        try:
            line = click.prompt("you", prompt_suffix="> ", default="", show_default=False)
        except (EOFError, click.Abort):
            break
        text = line.strip()
        if not text:
            continue
        if text == "/quit":
            break
        if text == "/hint":
            text = "hint"
        try:
            reply = engine.student_message(session, text)
        except SessionFinished:
            break
        except (RepairBudgetExhausted, BackendError) as exc:
            raise CliFailure(f"backend failure: {exc}", EXIT_BACKEND)
        _print_reply(reply.utterance, _reply_meta(reply), show_meta)
    if session.progress.terminal:
        click.echo("problem finished")


def _reply_meta(reply) -> dict:
    return {
        "evaluation": reply.turn.evaluation.value,
        "actions": list(reply.turn.actions),
        "state": reply.turn.state.value,
        "subproblem": reply.turn.subproblem,
        "retrieved_locators": [p.passage.locator for p in reply.retrieved],
    }


def _print_reply(utterance: str, meta: dict, show_meta: bool) -> None:
    click.echo(f"tutor> {utterance}")
    if show_meta:
        click.echo(click.style(f"  [{_meta_line(meta)}]", dim=True))


def _chat_remote(server: str, problem_id: str | None, problem_text: str | None, show_meta: bool) -> None:
    import httpx

    base = server.rstrip("/")
    body = {"problem_id": problem_id} if problem_id else {"problem_text": problem_text}
    with httpx.Client(timeout=300.0) as client:
        response = client.post(f"{base}/sessions", json=body)
        if response.status_code != 200:
            raise CliFailure(f"service error {response.status_code}: {response.text}", EXIT_BACKEND)
        data = response.json()
        session_id = data["session_id"]
        reply = data["reply"]
        _print_reply(reply["utterance"], reply["meta"], show_meta)
        terminal = reply["progress"]["terminal"]
        while not terminal:
            try:
                line = click.prompt("you", prompt_suffix="> ", default="", show_default=False)
            except (EOFError, click.Abort):
                return
            text = line.strip()
            if not text:
                continue
            if text == "/quit":
                return
            if text == "/hint":
                text = "hint"
            response = client.post(f"{base}/sessions/{session_id}/messages", json={"text": text})
            if response.status_code == 409:
                click.echo("session finished or busy")
                return
            if response.status_code != 200:
                raise CliFailure(f"service error {response.status_code}: {response.text}", EXIT_BACKEND)
            reply = response.json()
            _print_reply(reply["utterance"], reply["meta"], show_meta)
            terminal = reply["progress"]["terminal"]
        click.echo("problem finished")


@main.group("eval")
def eval_group():
    """Rating aggregation and reports."""


@eval_group.command("report")
@click.option("--ratings", "ratings_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def eval_report(ratings_path, out_path, as_json):
    """Aggregate a ratings file and write the markdown report."""
    try:
        records = evalkit.load_ratings(ratings_path)
    except OSError as exc:
        raise CliFailure(f"cannot read ratings: {exc}", EXIT_IO)
    except evalkit.EvalError as exc:
        raise CliFailure(f"bad ratings file: {exc}", EXIT_INVALID)
    try:
        report = evalkit.aggregate(records)
    except evalkit.NoRecords as exc:
        raise CliFailure(str(exc), EXIT_INVALID)
    rendered = evalkit.render_markdown(report)
    try:
        Path(out_path).write_text(rendered, encoding="utf-8")
    except OSError as exc:
        raise CliFailure(f"cannot write report: {exc}", EXIT_IO)
    _emit(
        {"command": "eval-report", "records": len(records), "output_path": str(out_path), "report": report.to_dict()},
        as_json,
        f"eval report: {len(records)} records -> {out_path}",
    )


if __name__ == "__main__":
    main()
