from .encoder import MusicEncoder, MusicEncoderConfig
from .features import (BEAT_CHANNEL, CHANNELS, LAYOUT, MusicFeatures, beats_from_features, click_times,
                       extract_features, read_wav, synth_click_track, write_wav)
