"""Attention encoder-decoder text-line recognition and handwriting verification."""
from .model import (RecognizerConfig, attend, attention_keys, decode_step, dense_block, encode_features,
                    init_decoder, init_recognizer, normalize_line, recognition_loss, recognize_line,
                    recognize_normalized, sequence_loss)
from .train import (exact_match_accuracy, line_image, receipt_line_samples, train_recognizer, transcribe_lines,
                    verify_lines)
from .vocab import EOS, HANDWRITING, PAD, SOS, SPECIALS, TokenSeq, Vocab, VocabError
