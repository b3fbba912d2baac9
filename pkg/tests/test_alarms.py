"""Tests for the alarm hierarchy and its machine-readable payloads"""

import json

import numpy as np
import pytest

from alarms import (
    ConfigError,
    DivergenceError,
    KTooSmallError,
    MethodDisagreementError,
    ModelConsistencyError,
    NumericalAlarm,
    PreconditionError,
    RDALabError,
    ReflectionConsistencyError,
    ResolutionError,
    StructuralAlarm,
    StructureError,
    TruncationError,
)


class TestExitCodes:
    """Each alarm family maps to its own exit status"""

    def test_config_error(self):
        assert ConfigError("bad").exit_code == 2

    @pytest.mark.parametrize("cls", [ResolutionError, TruncationError, PreconditionError])
    def test_numerical_alarms(self, cls):
        assert issubclass(cls, NumericalAlarm)
        assert cls("x").exit_code == 3

    @pytest.mark.parametrize("cls", [MethodDisagreementError, ModelConsistencyError,
                                     ReflectionConsistencyError, StructureError])
    def test_structural_alarms(self, cls):
        assert issubclass(cls, StructuralAlarm)
        assert cls("x").exit_code == 4

    def test_codes_are_distinct(self):
        classes = [ConfigError, DivergenceError, ResolutionError, KTooSmallError, TruncationError,
                   PreconditionError, MethodDisagreementError, ModelConsistencyError,
                   ReflectionConsistencyError, StructureError]
        codes = [cls.code for cls in classes]
        assert len(set(codes)) == len(codes)


class TestPayload:
    """payload() is JSON-ready and carries the details"""

    def test_config_error_location(self):
        e = ConfigError("unknown key 'foo'", path="run.cfg", line=3)
        assert e.message == "run.cfg:3: unknown key 'foo'"
        assert e.payload()['line'] == 3

    def test_divergence_details(self):
        e = DivergenceError("blew up", t=np.float64(0.25))
        payload = e.payload()
        assert payload['code'] == 'divergence'
        assert payload['t'] == 0.25
        json.dumps(payload)

    def test_k_too_small_carries_factor(self):
        e = KTooSmallError("factor too large", contraction_factor=0.8, K=4)
        assert e.payload()['contraction_factor'] == 0.8
        assert e.K == 4

    def test_base_class_catches_everything(self):
        with pytest.raises(RDALabError, match="shift"):
            raise StructureError("shift structure broken")
