"""Barbell squat diagnosis and coaching toolkit.

Feature extraction from 2-D joint streams, rep segmentation, four trained
diagnosis heads over 12-channel tensors, Shapley channel selection, rep
grading, a synthetic labeled-squat generator, and a live/replay service.
"""

from .geometry import (FeatureFrame, JointFrame, Point2, body_thigh_angle,
                       bar_shift, centerline_x, dorsiflexion, extract_features,
                       knee_hip_ratio, torso_angle)
from .labels import SquatLabel
from .preprocess import (FeatureTensor, OutlierThresholds, RawClip, TENSOR_CHANNELS,
                         assemble_tensor, clip_to_tensor, detect_outliers, resample,
                         sanitize, split_dataset, transform)
from .diagnosis import DiagnosisPipeline, DiagnosisResult, GradedSquat, diagnose, grade, advise
from .session import SessionConfig, SessionEvent, SessionState, arm, run_session, step
from .training import (MODEL_SPECS, TrainConfig, TrainedModel, build_training_view,
                       confusion_counts, evaluate, f1_score, macro_f1, train)
from .attribution import (AttributionMap, ChannelScore, channel_scores, exact_shapley,
                          permutation_shapley, select_channels, shapley_attribute)
from .synthgen import (GenConfig, SyntheticClip, generate_clip, generate_corpus,
                       generate_session_stream, joint_synthesis, template_curves)
from .workflow import DEFAULT_CHOICES, corpus_to_tensors, train_all_models

__version__ = "0.1.0"
