class MidiVaeError(Exception):
    """
    Base class of every error raised by midivae.
    """
    pass

# MIDI parsing

class MidiParseError(MidiVaeError):
    """
    The byte sequence is not a readable Standard MIDI File.
    The byte offset where reading failed is kept in 'offset'.
    """
    def __init__(self, message: str, offset: int):
        super().__init__(f'{message} (byte offset {offset})')
        self.offset = offset

class MalformedHeader(MidiParseError):
    """
    The file does not start with a valid 'MThd' chunk of length >= 6.
    """
    pass

class UnsupportedFormat(MidiParseError):
    """
    SMF format 2 and SMPTE time division are not supported.
    """
    pass

class TruncatedChunk(MidiParseError):
    """
    A chunk or event runs past the end of the available bytes.
    """
    pass

class BadVarint(MidiParseError):
    """
    A variable-length quantity is longer than 4 bytes.
    """
    pass

class MalformedEvent(MidiParseError):
    """
    Running status with no previous status byte, or an undefined status byte.
    """
    pass

class InvalidDocument(MidiVaeError):
    """
    A MidiDocument violates its invariants and cannot be written.
    """
    pass

# Symbolic representation

class NoPlayableTracks(MidiVaeError):
    """
    Every track of the document is a drum track or holds no notes.
    """
    pass

class InvalidRoll(MidiVaeError):
    """
    A bar or song record violates the roll invariants.
    """
    pass

class DatasetSplitError(MidiVaeError):
    """
    Must provide a ratio in (0, 1) and enough songs for both partitions.
    """
    pass

class EmptyStyle(MidiVaeError):
    """
    A style ended up with no songs.
    """
    pass

# Compute core

class ShapeMismatch(MidiVaeError):
    """
    Array shapes do not agree with the parameters they are combined with.
    """
    pass

class InvalidParameter(MidiVaeError):
    """
    Must provide a valid value for the named parameter.
    """
    pass

class CheckpointError(MidiVaeError):
    """
    Checkpoint file is missing, has a bad magic string or an unknown version.
    """
    pass

# Model

class EmptyDataset(MidiVaeError):
    """
    Training or evaluation was given no bars.
    """
    pass

class TrainingDiverged(MidiVaeError):
    """
    The total loss became non-finite during training.
    """
    pass

class DegenerateStats(MidiVaeError):
    """
    Latent statistics need at least 2 encodings and a positive spread on every dimension.
    """
    pass

class StyleIndexError(MidiVaeError):
    """
    Must provide two different style indices below k.
    """
    pass

# Operator surface

class ConfigError(MidiVaeError):
    """
    Must provide a readable run config with valid keys and values.
    """
    pass

class StyleMismatch(MidiVaeError):
    """
    The requested style names do not match the styles the checkpoint was trained on.
    """
    pass

class UnwritablePath(MidiVaeError):
    """
    The output path cannot be written.
    """
    pass
