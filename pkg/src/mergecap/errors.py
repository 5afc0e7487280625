"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented codes: 2 usage/input, 3 data, 4 numeric.
"""


class MergecapError(Exception):
    exit_code = 3


class InputError(MergecapError):
    exit_code = 2


class MalformedLine(MergecapError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        msg = f"malformed line {line_no}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class MalformedCsv(MergecapError):
    pass


class ShapeMismatch(MergecapError, ValueError):
    pass


class IndexOutOfRange(MergecapError, IndexError):
    pass


class InvalidConfig(MergecapError, ValueError):
    exit_code = 2


class DuplicateId(MergecapError, ValueError):
    pass


class MissingFeature(MergecapError, KeyError):
    def __init__(self, image_id):
        self.image_id = image_id
        super().__init__(image_id)

    def __str__(self):
        return f"no feature vector for image id {self.image_id!r}"


class DimMismatch(MergecapError):
    pass


class VocabMismatch(MergecapError):
    pass


class CaptionTooLong(MergecapError, ValueError):
    pass


class CaptionTooShort(MergecapError, ValueError):
    pass


class EmptyCorpus(MergecapError, ValueError):
    pass


class UnknownPreset(MergecapError, ValueError):
    exit_code = 2


class NonFiniteLoss(MergecapError, ArithmeticError):
    exit_code = 4

    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")


# binary formats (feature store and checkpoint)


class FormatError(MergecapError):
    pass


class BadMagic(FormatError):
    pass


class BadVersion(FormatError):
    pass


class TruncatedRecord(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class ShapeHeaderMismatch(FormatError):
    pass
