"""ficverify: consistency checks and allergen prediction for packaged-food
product data under EU Regulation 1169/2011 (FIC)."""

from .model import (
    ALLERGENS,
    Allergen,
    BasisUnit,
    ENERGY_TABLE,
    LabelSet,
    Nutrient,
    NutrientPanel,
    ProductRecord,
    REFERENCE_INTAKES,
    allergen_from_index,
    allergen_index,
)
from .rules import (
    ErrorId,
    Finding,
    RuleConfig,
    check_dataset,
    check_product,
    compute_energy_kcal,
    compute_energy_kj,
    error_cooccurrence,
)
from .metrics import (
    AlphaParams,
    ConfusionCounts,
    aggregate,
    allergen_cooccurrence,
    alpha_score,
    confusion,
    label_stats,
    precision_recall_f1,
)
from .textprep import (
    SparseVector,
    Vocabulary,
    build_vocabulary,
    dictionary_scan,
    extract_capitalized,
    normalize_ingredients,
    vectorize_bow,
    vectorize_tfidf,
)
from .learners import BinaryModel, TrainConfig, predict_proba, train
from .multilabel import (
    BinaryRelevanceModel,
    ChainModel,
    GivenOrder,
    OPTIMIZED_CHAIN_ORDER,
    OptimizedFixed,
    RandomPermutations,
    predict_binary_relevance,
    predict_chain,
    run_order_experiment,
    train_binary_relevance,
    train_chain,
)
from .ingest import MappingTable, load_mapping, parse_products

__version__ = "0.1.0"
