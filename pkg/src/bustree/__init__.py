"""Behavior-driven user segmentation trees.

Build a segmentation tree from categorical attributes and engagement logs by
greedily maximizing holdout NDCG, route users into segments (growing the tree
for unseen combinations), and serve per-segment or connection-aware top-k
behavior lists.
"""

__version__ = "0.1.0"

from .assign import (AssignmentResult, SegmentPath, assign_user, assign_users,
                     effective_node_id)
from .builder import (BuildError, BuildParams, BuildResult, LevelRecord,
                      StagingReport, TreeBuilder, build_tree)
from .data import (HOLDOUT, NULL, TRAINING, ActivityRule, AttributeSchema,
                   AttributeType, BucketRange, BucketSpec, BusError, DataError,
                   EngagementTable, UserClassification, UserRecord, UserTable,
                   bucketize, classify_users, load_engagements, load_schema,
                   load_users, save_schema)
from .evalbench import (HoldoutSummary, SweepReport, SweepRow, evaluate_tree,
                        n_valid_attributes, one_hot_baseline, planted_recovery,
                        segment_size_histogram, sweep)
from .kernels import BACKEND, available_backends
from .ranking import (RankedList, RewardReport, ndcg_at_k, segment_reward,
                      top_k_behaviors)
from .retrieval import (BlendConfig, CatalogError, NodeCatalog, StrippedTree,
                        build_catalog, load_catalog, recommend, route_users,
                        save_catalog, serving_table, strip_regress)
from .social import (ConnectionProfile, SocialError, SocialGraph,
                     connection_segments, load_edges, utility_rank)
from .synth import (AttrSpec, SynthConfig, SynthData, generate_synthetic,
                    make_novel_records)
from .tree import REGRESS, BusNode, BusTree, TreeError
from .treefile import TreeFormatError, load_tree, save_tree
