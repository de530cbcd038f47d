"""Zero-shot anomaly detection with consistency-aware community filtering.

The package scores image patches by mutual nearest-neighbor distances,
detects groups of images that keep deceiving each other (consistent
anomalies) through burnout statistics on an image similarity graph, and
rescores against a filtered base so repeated defects stop masking each
other.
"""

from .errors import (AnomgraphError, ConfigError, DataError,
                     InternalInvariantError)
from .feature_io import (FeatureSet, GroundTruth, load_feature_set,
                         load_ground_truth, load_score_maps,
                         write_feature_set, write_ground_truth,
                         write_score_maps)
from .pooling import AggregatedFeatures, aggregate
from .scoring import (AggregatedIndex, DistanceIndex, ScreeningPlan,
                      build_aggregated_index, build_msr,
                      build_screening_plan, default_k, final_patch_scores,
                      interval_average_score, masked_interval_scores)
from .burnout import (EPS_DISTANCE, LinkPool, SuspiciousLinkSet,
                      build_link_pool, coverage_based_selection,
                      endurance_ratio, fixed_budget_selection, growth_rate,
                      growth_rates, weighted_endurance_ratio)
from .community import (CommunityPartition, SimilarityGraph,
                        analyze_partition, build_graph, community_density,
                        cpm_objective, detect_outlier_communities,
                        leiden_cpm, select_gamma)
from .filtering import (AnomalyScoreMap, ExclusionSet,
                        rescore_with_exclusions, targeted_filtering)
from .metrics import (EvalReport, aupro, auroc, average_precision,
                      capture_and_exclusion, evaluate, f1_max)
from .pipeline import PipelineConfig, RunResult, load_config, run, run_baseline
from .synth import PlantManifest, SynthConfig, generate

__version__ = "0.1.0"
