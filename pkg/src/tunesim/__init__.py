"""Two-stage contrastive music representation learning on synthetic data."""

from .config import (AudioEncoderConfig, EvalConfig, GeneratorConfig,
                     LossConfig, MelConfig, ProbeConfig, RunConfig,
                     TextEncoderConfig, TrainConfig, load_config)
from .errors import (CheckpointError, ConfigError, DataError, NumericError,
                     TunesimError)
from .datagen import (Corpus, EvalPair, MatchingRow, PairRow, PreferenceData,
                      RankingRow, SongSpec, TripletRow, generate_corpus,
                      generate_dataset, generate_preference_data, load_corpus)
from .melspec import compute_log_mel, mel_filterbank, num_frames
from .textproc import (TextDocument, Vocab, build_vocab, encode_document,
                       serialize_document, tokenize)
from .encoders import (AudioEncoder, FusionLayer, TextEncoder, TwoTowerModel,
                       build_model, conv_output_length)
from .losses import (LossReport, finetune_loss, info_nce_directional,
                     pretrain_loss, symmetric_info_nce)
from .checkpoint import (CheckpointBundle, apply_model_state, load_checkpoint,
                         save_checkpoint)
from .training import (FeatureSet, batch_indices, build_optimizer,
                       featurize_corpus, finetune, model_from_bundle,
                       pretrain, save_training_checkpoint)
from .evaluation import (EmbeddingStore, RankingReport, SeparationReport,
                         auc_score, distance_distribution, embed_corpus,
                         hr_at_k, linear_probe, ranking_auc, retrieval_top1)

__version__ = "0.1.0"
