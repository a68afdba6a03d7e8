from typing import Type

from errr.tree import exception as _e
from errr.tree import make_tree as _make_tree

_make_tree(
    globals(),
    EndonavError=_e(
        ConfigError=_e(
            UnknownConfigKeyError=_e("key"),
            ConfigValueError=_e("key"),
        ),
        GeometryError=_e(
            TreeFileError=_e("path"),
            TreeInvariantError=_e("branch", "sample"),
            MissingSegmentError=_e("segment"),
            ScaleRangeError=_e(),
            ZeroChordError=_e("branch"),
            AnatomyParameterError=_e(),
        ),
        DeviceError=_e(
            OutsideLumenError=_e("point"),
            TimeStepError=_e(),
        ),
        EnvError=_e(
            EpisodeFinishedError=_e(),
            TaskError=_e(),
        ),
        NetworkError=_e(
            ShapeMismatchError=_e(),
            CheckpointError=_e("path"),
        ),
        AgentError=_e(
            EmptyBufferError=_e(),
            PrefillError=_e("path", "line"),
            NumericalError=_e("losses"),
            UnknownAgentError=_e("kind"),
        ),
        HarnessError=_e(
            DegenerateSampleError=_e(),
            LengthMismatchError=_e(),
            IncompatibleRunsError=_e("runs"),
        ),
    ),
)

EndonavError: Type[Exception]
ConfigError: Type[EndonavError]
UnknownConfigKeyError: Type[ConfigError]
ConfigValueError: Type[ConfigError]
GeometryError: Type[EndonavError]
TreeFileError: Type[GeometryError]
TreeInvariantError: Type[GeometryError]
MissingSegmentError: Type[GeometryError]
ScaleRangeError: Type[GeometryError]
ZeroChordError: Type[GeometryError]
AnatomyParameterError: Type[GeometryError]
DeviceError: Type[EndonavError]
OutsideLumenError: Type[DeviceError]
TimeStepError: Type[DeviceError]
EnvError: Type[EndonavError]
EpisodeFinishedError: Type[EnvError]
TaskError: Type[EnvError]
NetworkError: Type[EndonavError]
ShapeMismatchError: Type[NetworkError]
CheckpointError: Type[NetworkError]
AgentError: Type[EndonavError]
EmptyBufferError: Type[AgentError]
PrefillError: Type[AgentError]
NumericalError: Type[AgentError]
UnknownAgentError: Type[AgentError]
HarnessError: Type[EndonavError]
DegenerateSampleError: Type[HarnessError]
LengthMismatchError: Type[HarnessError]
IncompatibleRunsError: Type[HarnessError]


class EndonavWarning(Warning):
    pass
