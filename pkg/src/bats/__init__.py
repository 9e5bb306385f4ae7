"""Single-fault Bayesian troubleshooter toolkit.

Authoring (cause trees, actions, questions with intuitively-directed
probabilities), compilation into a naive-Bayes network over the cause
indicator, and interactive expected-cost-of-repair troubleshooting sessions.
"""

from bats.compiler import CompiledNetwork, CompiledStep, compile_model
from bats.elicitation import (
    CellChange,
    FitReport,
    ReversedQuestion,
    Wish,
    WishOutcome,
    WishTable,
    action_solve_probability,
    aggregate_cause_probability,
    collapse_cause_tree,
    combine_costs,
    complete_binary_rows,
    fit_probabilities,
    reverse_general_question,
    slider_update,
    total_probability_residuals,
)
from bats.engine import (
    Evidence,
    Recommendation,
    Session,
    SimReport,
    Terminal,
    greedy_action_sequence,
    next_step,
    posterior,
    record_outcome,
    simulate,
    undo_last,
)
from bats.librarian import (
    Library,
    LibraryModule,
    instantiate_module,
    propagate_module_change,
    search_replace,
)
from bats.model import (
    Action,
    CauseDistribution,
    CauseNode,
    CostFactors,
    CostWeights,
    DependencyRule,
    ErrorConditionModel,
    GeneralQuestion,
    ModuleRef,
    Question,
    ShortcutQuestion,
    SymptomQuestion,
    ValidationReport,
    desugar_shortcut_question,
    validate_model,
)
from bats.persistence import (
    load_library,
    load_model,
    load_module,
    parse_model,
    save_model,
    save_module,
    save_network,
)

__version__ = "0.1.0"
