import logging
import pickle

from optolattice.error_handling import (
    ConfigError,
    ConvergenceError,
    ErrorHandler,
    ErrorSeverity,
    IntegrationError,
    OptolatticeError,
    PoleError,
    setup_logging,
)


def test_hierarchy():
    for cls in (ConfigError, ConvergenceError, IntegrationError, PoleError):
        assert issubclass(cls, OptolatticeError)


def test_errors_survive_pickling():
    error = ConvergenceError("delay continuation failed", residual=1e-3,
                             context={"tau": 3.6e-8})
    again = pickle.loads(pickle.dumps(error))
    assert type(again) is ConvergenceError
    assert str(again) == "delay continuation failed"
    assert again.residual == 1e-3
    assert again.context == {"tau": 3.6e-8}
    assert again.timestamp == error.timestamp


def test_to_record():
    error = ConvergenceError("no root", residual=2.5, context={"values": (1, 2)})
    record = ErrorHandler.to_record(error, {"command": "steady"})
    assert record == {
        "error": "ConvergenceError",
        "message": "no root",
        "context": {"values": [1, 2], "command": "steady"},
        "residual": 2.5,
    }
    plain = ErrorHandler.to_record(ValueError("bad"))
    assert plain == {"error": "ValueError", "message": "bad", "context": {}}


def test_error_handler_counts():
    handler = ErrorHandler("optolattice.test")
    handler.log_error(ConfigError("bad key", {"key": "x"}))
    handler.log_error(ConfigError("bad value"), severity=ErrorSeverity.HIGH)
    handler.log_error(PoleError("pole"), {"omega": 1.0}, severity=ErrorSeverity.LOW)
    summary = handler.get_error_summary()
    assert summary["total_errors"] == 3
    assert summary["error_counts"] == {"ConfigError": 2, "PoleError": 1}
    assert summary["recent_errors"][0]["context"] == {"key": "x"}
    assert summary["recent_errors"][2]["context"] == {"omega": 1.0}


def test_setup_logging(tmp_path):
    log_file = tmp_path / "run.log"
    handler = setup_logging("DEBUG", str(log_file))
    logger = logging.getLogger("optolattice")
    assert logger.level == logging.DEBUG
    assert len(logger.handlers) == 2
    logging.getLogger("optolattice.physics").debug("written")
    for h in logger.handlers:
        h.flush()
    assert "written" in log_file.read_text()
    assert isinstance(handler, ErrorHandler)
    setup_logging("WARNING")
    assert len(logger.handlers) == 1
