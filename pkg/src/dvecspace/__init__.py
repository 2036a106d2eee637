"""Speaker-embedding (d-vector) spaces: features, encoder, analysis and
cross-lingual translation of speaker embeddings."""

from .errors import DvecError, ContainerError
from .features import AudioClip, MfccConfig, FeatureMatrix, frame_signal, mfcc
from .encoder import (
    Embedding,
    EncoderConfig,
    EncoderModel,
    embed,
    train,
    gradient_check,
    mean_embedding,
)
from .store import UtteranceRecord, SpeakerProfile, EmbeddingStore, build_profiles
from .analysis import (
    PcaModel,
    LdaModel,
    pca_fit,
    lda_fit,
    lda_predict,
    cosine_similarity,
    overlap_by_length,
)
from .tsne import TsneConfig, tsne
from .transform import (
    TranslationDelta,
    AccentSetting,
    compute_delta,
    translate,
    accent_sweep,
    transfer_report,
)

__version__ = "0.1.0"
