"""Exceptions for the shape kernel"""


class ValidationError(Exception):
    """Error for invalid arguments or configuration values (for example, N=0)"""
    pass


class NotFoundError(Exception):
    """Error for an input file, checkpoint or report that does not exist"""
    pass


class DataIntegrityError(Exception):
    """Error for input data that violates a structural requirement (for example, a mesh with holes)"""
    pass


class MeshFormatError(DataIntegrityError):
    """Error for a malformed OBJ record"""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class NumericalError(Exception):
    """Error for NaN/inf values or an ill-posed numerical problem"""
    pass


class RankDeficientError(NumericalError):
    """Error for a least-squares design matrix without full column rank"""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class DegenerateGeometryError(NumericalError):
    """Error for geometry where a quantity is undefined (for example, a normal in a flat region)"""
    pass
