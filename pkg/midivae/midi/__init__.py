from .midi_io import (
    MidiDocument,
    MidiTrack,
    NoteEvent,
    TimeSignature,
    normalize,
    parse_midi,
    read_midi_file,
    write_midi,
    write_midi_file,
)
from .roll_codec import (
    BarSample,
    FrameSequence,
    RollConfig,
    SongRecord,
    StepSequence,
    StyleLabel,
    Voice,
    decode_song,
    encode_song,
    fold_pitch,
    output_ticks_per_quarter,
    quantize,
    reroll,
    select_voices,
    split_dataset,
    unit_to_velocity,
    unroll,
    unroll_batch,
    velocity_to_unit,
)
from .dataset import discover_styles, encode_corpus, load_cache, save_cache, style_names, summarize
