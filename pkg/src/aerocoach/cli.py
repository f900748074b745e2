"""Command-line entry point: one command per workflow.

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .config import load_config, resolve


class OperationalError(click.ClickException):
    exit_code = 1


def _fail(exc: Exception) -> "OperationalError":
    return OperationalError(f"{type(exc).__name__}: {exc}")


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Config file (JSON); env AEROCOACH_CONFIG also works.")
@click.pass_context
def main(ctx, config_path):
    """Real-time flight-training assistant: knowledge base, sessions, evaluation."""
    ctx.obj = load_config(config_path)


# --- knowledge base -----------------------------------------------------------


@main.group()
def kb():
    """Build and query the flight-knowledge index."""


@kb.command("build")
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False), required=False)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="kb.index",
              show_default=True, help="Index file to write.")
@click.option("--chunk-chars", type=int, default=None, help="Maximum characters per chunk.")
@click.pass_obj
def kb_build(config, corpus_dir, out_path, chunk_chars):
    """Embed a corpus directory (default: the bundled one) into an index."""
    from .knowledge_base import HashEmbedder, build_index, default_corpus_dir, load_corpus

    chunk_chars = resolve(config, "kb", "max_chunk_chars", chunk_chars, int)
    dim = resolve(config, "kb", "dimension", None, int)
    try:
        docs = load_corpus(corpus_dir or default_corpus_dir())
        index = build_index(docs, HashEmbedder(dim), max_chunk_chars=chunk_chars)
        index.save(out_path)
    except Exception as exc:
        raise _fail(exc)
    click.echo(f"indexed {len(docs)} documents into {len(index)} chunks -> {out_path}")


@kb.command("query")
@click.argument("text")
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False),
              default="kb.index", show_default=True)
@click.option("-k", type=int, default=None, help="Number of hits.")
@click.option("--tier", type=click.Choice(["basic", "aircraft_type", "mission_specific"]),
              default=None)
@click.option("--tag", "tags", multiple=True, help="Require a tag (repeatable).")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_obj
def kb_query(config, text, index_path, k, tier, tags, as_json):
    """Search the index for the closest knowledge chunks."""
    from .knowledge_base import FlatIndex, HashEmbedder

    k = resolve(config, "kb", "retrieval_k", k, int)
    try:
        index = FlatIndex.load(index_path)
        hits = index.search(HashEmbedder(index.dimension).embed(text), k,
                            tier=tier, require_tags=tags)
    except Exception as exc:
        raise _fail(exc)
    if as_json:
        click.echo(json.dumps(
            [{"rank": h.rank, "score": h.score, "chunk_id": h.chunk.chunk_id,
              "tier": h.chunk.tier, "text": h.chunk.text} for h in hits],
            indent=2))
        return
    for h in hits:
        click.echo(f"#{h.rank} [{h.score:+.3f}] {h.chunk.chunk_id} ({h.chunk.tier})")
        click.echo("    " + h.chunk.text.replace("\n", " ")[:160])


# --- calibration ---------------------------------------------------------------


@main.command()
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="profile.json",
              show_default=True)
@click.option("--subject", default="subject-1", show_default=True)
@click.option("--auto", is_flag=True, help="Write a stock profile without prompting.")
@click.option("--ceiling", type=float, default=20.0, show_default=True,
              help="Absolute current ceiling (mA).")
def calibrate(out_path, subject, auto, ceiling):
    """Record per-channel stimulation thresholds by ramping the current.

    Interactive mode steps each channel up in 0.5 mA increments; mark the
    first sensation (p), the first visible contraction (m), and the
    comfort limit (c) as the ramp climbs.
    """
    from .ems_control import CHANNELS, CalibrationProfile, ChannelCalibration, default_profile

    if auto:
        profile = default_profile(subject)
    else:
        channels = {}
        for channel in CHANNELS:
            click.echo(f"\nChannel {channel}: ramping from 0.5 mA in 0.5 mA steps.")
            perception = motion = comfort = None
            current = 0.0
            while comfort is None and current < ceiling:
                current = round(current + 0.5, 1)
                mark = click.prompt(
                    f"  {channel} @ {current:.1f} mA [n]othing/[p]erception/[m]otion/[c]omfort limit",
                    type=click.Choice(["n", "p", "m", "c"]),
                    default="n",
                    show_default=False,
                )
                if mark == "p" and perception is None:
                    perception = current
                elif mark == "m" and motion is None:
                    motion = current
                    perception = perception or round(max(0.5, current - 0.5), 1)
                elif mark == "c":
                    comfort = current
                    motion = motion or current
                    perception = perception or round(max(0.5, current - 0.5), 1)
            if comfort is None:
                raise OperationalError(f"channel {channel}: ramp hit the ceiling with no marks")
            channels[channel] = ChannelCalibration(perception, motion, comfort)
        try:
            profile = CalibrationProfile(subject_id=subject, channels=channels,
                                         ceiling_ma=ceiling)
        except Exception as exc:
            raise _fail(exc)
    profile.save(out_path)
    click.echo(f"calibration profile written to {out_path}")


# --- sessions -------------------------------------------------------------------


_SKILL_PRESETS = ("perfect", "default", "novice")


def _skill(name: str):
    from .flight_sim import NOVICE_SKILL, PERFECT_SKILL
    from .session_engine import DEFAULT_SKILL

    return {"perfect": PERFECT_SKILL, "default": DEFAULT_SKILL, "novice": NOVICE_SKILL}[name]


@main.command()
@click.option("--task", required=True,
              type=click.Choice(["straight_level", "takeoff_climb", "steep_turn",
                                 "deadstick_landing"]))
@click.option("--condition", type=click.Choice(["normal", "abnormal"]), default="normal",
              show_default=True)
@click.option("--variant", type=click.IntRange(0, 1), default=0, show_default=True)
@click.option("--backend", type=click.Choice(["oracle", "remote"]), default="oracle",
              show_default=True)
@click.option("--assist/--no-assist", default=True, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--skill", type=click.Choice(_SKILL_PRESETS), default="default",
              show_default=True)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Scenario JSON instead of the built-in one.")
@click.option("--telemetry", "telemetry_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="External telemetry lines instead of the simulator.")
@click.option("--profile", "profile_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Calibration profile JSON.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Log file [default: <task>_<condition>_v<variant>_seed<seed>.jsonl].")
@click.option("--json", "as_json", is_flag=True, help="Print a machine-readable summary.")
@click.pass_obj
def run(config, task, condition, variant, backend, assist, seed, skill, scenario_path,
        telemetry_path, profile_path, out_path, as_json):
    """Run one batch session and write its JSON-lines log."""
    from .ems_control import CalibrationProfile
    from .flight_sim import load_scenario
    from .session_engine import SessionConfig, run_session

    out_path = out_path or f"{task}_{condition}_v{variant}_seed{seed}.jsonl"
    try:
        session_config = SessionConfig(
            task_id=task,
            condition=condition,
            variant=variant,
            scenario=load_scenario(scenario_path) if scenario_path else None,
            telemetry_path=telemetry_path,
            backend=backend,
            backend_config=config.get("backend", {}),
            assist=assist,
            seed=seed,
            skill=_skill(skill),
            calibration=CalibrationProfile.load(profile_path) if profile_path else None,
            deadline_ms=float(resolve(config, "session", "deadline_ms", None, float)),
            correction_duration_ms=int(resolve(config, "ems", "correction_duration_ms", None, int)),
            prestart_duration_ms=int(resolve(config, "ems", "prestart_duration_ms", None, int)),
            device=resolve(config, "device", "address", None),
            log_path=out_path,
        )
        records = run_session(session_config)
    except Exception as exc:
        raise _fail(exc)
    passed = sum(r.verdict.overall for r in records)
    commands = sum(len(r.commands) for r in records)
    if as_json:
        click.echo(json.dumps({
            "log": out_path, "ticks": len(records), "verdict_pass": passed,
            "commands": commands,
        }))
    else:
        click.echo(f"{len(records)} ticks -> {out_path} "
                   f"(verdict pass {passed}/{len(records)}, {commands} EMS commands)")


@main.command()
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def replay(log_path, as_json):
    """Recompute reports and verdicts from a log; flag any divergence."""
    from .session_engine import replay as replay_log

    try:
        report = replay_log(log_path)
    except Exception as exc:
        raise _fail(exc)
    if as_json:
        click.echo(json.dumps({"records": report.record_count,
                               "mismatches": report.mismatches}))
    else:
        click.echo(f"{report.record_count} records, {len(report.mismatches)} mismatches")
        for m in report.mismatches[:20]:
            click.echo(f"  tick {m['tick']}: {m['kind']} — {m['detail']}")
    if not report.ok:
        sys.exit(1)


@main.command("eval")
@click.argument("log_paths", type=click.Path(exists=True, dir_okay=False), nargs=-1,
                required=True)
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(log_paths, as_json):
    """Score workflow correctness over one or more session logs."""
    from .eval_harness import score_log_files

    try:
        report = score_log_files(log_paths)
    except Exception as exc:
        raise _fail(exc)
    if as_json:
        click.echo(json.dumps(report.to_json(), indent=2))
    else:
        click.echo(report.table())


@main.command()
@click.option("--host", default=None, help="Bind address.")
@click.option("--port", type=int, default=None, help="Bind port.")
@click.option("--static", "static_dir", type=click.Path(file_okay=False), default=None,
              help="UI bundle directory to serve at /.")
@click.pass_obj
def serve(config, host, port, static_dir):
    """Run the gateway service (session control, live stream, UI hosting)."""
    import uvicorn

    from .gateway import create_app

    host = resolve(config, "gateway", "host", host)
    port = int(resolve(config, "gateway", "port", port, int))
    app = create_app(config, static_dir=static_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as exc:
        raise OperationalError(f"cannot bind {host}:{port}: {exc}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=9050, show_default=True)
def device(host, port):
    """Run the simulated stimulator device (frame-in, ack-out)."""
    import time as _time

    from .ems_device import SimulatedDevice

    try:
        dev = SimulatedDevice(host, port).start()
    except OSError as exc:
        raise OperationalError(f"cannot bind {host}:{port}: {exc}")
    click.echo(f"simulated device listening on tcp:{dev.host}:{dev.port}")
    try:
        while True:
            _time.sleep(0.5)
    except KeyboardInterrupt:
        dev.stop()


if __name__ == "__main__":
    main()
