"""Mixed-lingual pretraining for cross-lingual summarization, desk scale."""

from .corpus import (CorpusRecord, SyntheticSpec, generate_synthetic,
                     load_bundle, load_corpus, save_bundle, save_corpus,
                     subsample)
from .decoding import Hypothesis, beam_search, decode_corpus, greedy_decode
from .experiments import (ExperimentPlan, build_vocab, run_ablation,
                          run_low_resource, run_pipeline, validate_run_dir)
from .model import (ModelConfig, ModelParams, count_params, desk_scale_config,
                    forward, init_params, load_checkpoint, paper_scale_config,
                    save_checkpoint)
from .objectives import (MixWeights, ParallelPair, SummPair, TrainingExample,
                         control_prefix, corrupt_dae, corrupt_mlm, make_cmlm,
                         make_mt, make_summ, mix_tasks)
from .rouge import RougeScore, corpus_rouge, normalize, rouge_l, rouge_n
from .training import (BatchSpec, OptimizerState, ScheduleConfig, backward,
                       finetune_schedule, loss, lr_at, pretrain_schedule,
                       radam_step, run_training)
from .vocab import SpecialTokens, Vocabulary, train_vocab

__version__ = "0.1.0"
