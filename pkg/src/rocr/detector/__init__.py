"""Fixed-width text proposal detector and line construction."""
from .detect import detect, format_detections, parse_detections
from .lines import TextLine, build_text_lines, line_rect, vertical_overlap
from .model import CTPN_HEIGHTS, DetectionHead, DetectorConfig, detector_forward, init_detector, network_input, scaled_heights
from .targets import (Proposal, Targets, anchor_center, assign_targets, decode, decode_proposals,
                      detection_loss, encode, nms, proposal_iou, vertical_iou)
from .train import evaluate_detector, prepare_sample, train_detector
