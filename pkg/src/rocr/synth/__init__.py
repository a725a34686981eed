from .dataset import (DatasetError, HW_MARKER, load_annotations, load_dataset, parse_annotation_line,
                      read_manifest, save_dataset, split_dataset, split_sizes)
from .font import CHARSET, UnsupportedCharacterError
from .generate import Annotation, Receipt, SynthConfig, generate_dataset, generate_receipt, render_text_line
from .rng import SplitMix64, derive_seed
