class CCFException(Exception):
    """
    Base exception for our conditional cuckoo filter functions
    """


class CCFValueError(CCFException):
    """
    Something wrong with the filter configuration or call semantics
    """


class MalformedFilterError(CCFException):
    """
    The serialized filter has some sort of issue
    """


class InsertionFailedError(CCFException):
    """
    The filter could not store a row, even after rebuilding
    """

    def __init__(self, message: str, row=None):
        super().__init__(message)
        self.row = row


class UnsupportedQueryError(CCFException):
    """
    The filter variant cannot answer this kind of query
    """


class WorkloadError(CCFException):
    """
    Something went wrong loading or evaluating a workload
    """
