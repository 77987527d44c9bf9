"""Speaker-dependent query-by-example keyword spotting."""

from .audio import AudioBuffer, FeatureMatrix, FramingConfig, load_wav, log_fbank, mfcc
from .dtw import SdtwResult, dtw_align, frame_distance, sdtw_search
from .fusion import FusionReport, fuse_embeddings, fuse_frame_templates
from .harness import EvalMetrics, build_dev_set, evaluate, generate_sv_trials, tune_thresholds
from .pipeline import DecisionRecord, PipelineConfig, detect, enroll
from .profile import EnrollmentProfile, Thresholds, load_profile, save_profile
from .qbef import read_features, write_features
from .speaker import calibrate, compute_eer, compute_min_dcf, sv_enroll, sv_score

__version__ = "0.1.0"
