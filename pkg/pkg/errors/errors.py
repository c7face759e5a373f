"""
异常定义模块
四类异常分别对应命令行退出码 2/3/4/5
"""
from typing import Optional


class CausalSynthError(Exception):
    """所有库异常的基类"""
    exit_code = 1

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.message = message
        self.residual = residual

    def __str__(self) -> str:
        if self.residual is None:
            return self.message
        return f"{self.message} (residual={self.residual:.3e})"


class InputError(CausalSynthError):
    """输入格式或标签错误"""
    exit_code = 2


class PreconditionError(CausalSynthError):
    """前置条件不满足"""
    exit_code = 3


class NumericalError(CausalSynthError):
    """数值流程内部失败"""
    exit_code = 4


class ConstraintError(CausalSynthError):
    """维度约束不可满足"""
    exit_code = 5


class ParseError(InputError):
    pass


class InvalidDiagram(InputError):
    """扩展线路图校验失败，diagnostics 为诊断列表"""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class UnknownLabel(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NotUnitary(PreconditionError):
    pass


class WitnessMissing(PreconditionError):
    pass


class NoValidOrdering(PreconditionError):
    pass


class CommutatorTooLarge(PreconditionError):
    pass


class NotAChannel(NumericalError):
    pass


class RankNotOne(NumericalError):
    pass


class NotCompletable(NumericalError):
    pass


class NotFactorizable(NumericalError):
    pass


class NotAnAlgebra(NumericalError):
    pass


class NumericalDegeneracy(NumericalError):
    pass


class CommutantViolation(NumericalError):
    pass


class MultipleBlocks(NumericalError):
    pass


class DegenerateAfterRetries(NumericalError):
    pass


class DimensionConstraintViolated(ConstraintError):
    """violations 为 ConstraintViolation 列表"""

    def __init__(self, message: str, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])
