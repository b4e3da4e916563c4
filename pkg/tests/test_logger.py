"""
Tests for the structured logger, its handlers and context binding
"""

import io
import json
from datetime import datetime, timedelta

import numpy as np
import pytest

from boussinesq_lab import Logger, logger
from boussinesq_lab import level as levels
from boussinesq_lab.exceptions import HandlerNotFoundError, InvalidLevelError, LabError
from boussinesq_lab.formatter import Formatter
from boussinesq_lab.handler import CallableHandler, FileHandler, StreamHandler
from boussinesq_lab.record import LogRecord, RunContext
from boussinesq_lab.utils import Serializer


def make_record(message="snapshot", level=levels.INFO, **extra):
    return LogRecord(
        elapsed=timedelta(seconds=1.5),
        exception=None,
        extra=extra,
        function="step",
        level=level,
        line=42,
        message=message,
        name="boussinesq_lab.boussinesq_solver",
        time=datetime(2024, 6, 11, 14, 30, 45),
        run=RunContext.from_extra(extra),
    )


class TestLevels:
    def test_diagnostic_sits_between_debug_and_info(self):
        assert levels.DEBUG < levels.DIAGNOSTIC < levels.INFO
        assert levels.DEFAULT_LEVELS["DIAGNOSTIC"].no == 15

    def test_unknown_level_raises(self):
        with pytest.raises(InvalidLevelError):
            Logger().add(io.StringIO(), level="VERBOSE")

    def test_level_by_number(self):
        assert Logger()._get_level(25) == levels.SUCCESS


class TestRunContext:
    def test_from_extra(self):
        ctx = RunContext.from_extra({"scenario": "euler_disc", "step": "40", "t": 0.08})
        assert ctx == RunContext("euler_disc", 40, 0.08)
        assert str(ctx) == "euler_disc step=40 t=0.0800"

    def test_empty_context_prints_dash(self):
        assert RunContext.from_extra({}).is_empty()
        assert str(RunContext()) == "-"


class TestFormatter:
    def test_fields_and_specs(self):
        text = Formatter("{level:<10}|{run}|{extra.n}|{message}").format(
            make_record(scenario="square_plateau", step=3, n=256)
        )
        assert text == "INFO      |square_plateau step=3|256|snapshot"

    def test_missing_field(self):
        assert Formatter("{extra.nope}").format(make_record()) == "<missing:extra.nope>"

    def test_time_strftime_and_escaped_braces(self):
        text = Formatter("{time:%H:%M} {{x}}").format(make_record())
        assert text == "14:30 {x}"


class TestSerializer:
    def test_numpy_and_non_finite_values(self):
        data = {"a": np.float64(0.5), "b": np.array([1, 2]), "c": float("inf"), "d": np.bool_(1)}
        assert json.loads(Serializer.dumps(data)) == {"a": 0.5, "b": [1, 2], "c": "inf", "d": True}

    def test_dumps_is_sorted(self):
        assert Serializer.dumps({"b": 1, "a": 2}) == '{"a": 2, "b": 1}'

    def test_record_serialization_carries_run(self):
        data = json.loads(Serializer.serialize(make_record(scenario="euler_disc", t=0.5)))
        assert data["run"] == {"scenario": "euler_disc", "step": None, "t": 0.5}
        assert data["level"] == {"name": "INFO", "no": 20}


class TestHandlers:
    def test_stream_handler_respects_level(self):
        stream = io.StringIO()
        handler = StreamHandler(stream, levels.WARNING, Formatter("{message}"))
        handler.emit(make_record("quiet"))
        handler.emit(make_record("loud", level=levels.ERROR))
        assert stream.getvalue() == "loud\n"

    def test_filter_predicate(self):
        out = []
        handler = CallableHandler(
            out.append,
            levels.TRACE,
            Formatter("{message}"),
            filter_func=lambda r: r.run.scenario == "a",
        )
        handler.emit(make_record("kept", scenario="a"))
        handler.emit(make_record("dropped", scenario="b"))
        assert out == ["kept"]

    def test_callable_sink_must_be_callable(self):
        with pytest.raises(TypeError):
            CallableHandler("not callable", levels.INFO, Formatter())

    def test_file_handler_write_mode(self, temp_dir):
        path = temp_dir / "runs" / "run.log"
        path.parent.mkdir()
        path.write_text("stale\n")
        handler = FileHandler(path, levels.DEBUG, Formatter("{message}"), mode="w")
        handler.emit(make_record("fresh"))
        handler.close()
        assert path.read_text() == "fresh\n"


class TestLogger:
    def test_add_and_remove(self):
        log = Logger()
        out = []
        handler_id = log.add(out.append, format="{message}")
        log.info("grid ready n={n}", n=64)
        log.remove(handler_id)
        log.info("after removal")
        assert out == ["grid ready n=64"]

    def test_remove_unknown_handler(self):
        with pytest.raises(HandlerNotFoundError):
            Logger().remove(999)

    def test_invalid_sink(self):
        with pytest.raises(ValueError):
            Logger().add(42)

    def test_bound_context_reaches_record(self):
        log = Logger()
        out = []
        log.add(lambda text: out.append(json.loads(text)), serialize=True)
        log.bind(scenario="square_plateau").bind(step=7, t=0.25).diagnostic("norms", ll=1.5)
        assert out[0]["run"] == {"scenario": "square_plateau", "step": 7, "t": 0.25}
        assert out[0]["extra"]["ll"] == 1.5
        assert out[0]["level"]["name"] == "DIAGNOSTIC"

    def test_contextualize_restores_extra(self):
        log = Logger()
        out = []
        log.add(out.append, format="{run}|{message}")
        with log.contextualize(scenario="euler_disc"):
            log.info("inside")
        log.info("outside")
        assert out == ["euler_disc|inside", "-|outside"]
        assert log.extra == {}

    def test_caller_module_and_disable(self):
        log = Logger()
        out = []
        log.add(out.append, format="{name}:{function}")
        log.info("x")
        assert out == [f"{__name__}:test_caller_module_and_disable"]
        log.disable(__name__)
        log.info("silenced")
        assert len(out) == 1
        log.enable(__name__)
        log.info("back")
        assert len(out) == 2

    def test_bad_template_never_raises(self):
        log = Logger()
        out = []
        log.add(out.append, format="{message}")
        log.info("{missing}", other=1)
        assert "FORMATTING ERROR" in out[0]

    def test_catch_logs_and_reraises(self):
        log = Logger()
        out = []
        log.add(out.append, format="{level}|{message}", backtrace=False)

        @log.catch(LabError, message="verb failed", reraise=True)
        def fail():
            raise LabError("boom")

        with pytest.raises(LabError):
            fail()
        assert out[0].startswith("ERROR|verb failed")
        assert "LabError: boom" in out[0]

    def test_catch_swallows_without_reraise(self):
        log = Logger()
        seen = []

        @log.catch(onerror=seen.append)
        def fail():
            raise ValueError("x")

        assert fail() is None
        assert isinstance(seen[0], ValueError)

    def test_global_logger_fixture(self, records):
        logger.warning("under-resolved", tail=2e-6)
        assert records[-1]["message"] == "under-resolved"
        assert records[-1]["extra"]["tail"] == 2e-6
