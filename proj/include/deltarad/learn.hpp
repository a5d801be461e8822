#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace deltarad {

/// Case-level feature matrix (row-major), binary SI labels, and the patient
/// id behind each case.
struct Dataset {
    std::vector<std::string> columns;
    std::vector<double> x;
    std::vector<int> labels;
    std::vector<std::string> groups;

    std::size_t n_rows() const { return labels.size(); }
    std::size_t n_cols() const { return columns.size(); }
    double at(std::size_t r, std::size_t c) const { return x[r * columns.size() + c]; }
    const double* row(std::size_t r) const { return x.data() + r * columns.size(); }

    void validate() const;
    Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

enum class SplitMode { Case, PatientGrouped };

/// Per-class random partition preserving class proportions within one case;
/// the test side gets ceil(fraction * N) cases. PatientGrouped keeps whole
/// patients on one side (test size then only approximates the target).
SplitIndices stratified_split(const Dataset& d, double test_fraction, std::uint64_t seed,
                              SplitMode mode = SplitMode::Case);

/// Disjoint folds covering all rows, per-fold class counts within 1 of
/// proportional.
std::vector<std::vector<std::size_t>> kfold_stratified(const Dataset& d, int k,
                                                       std::uint64_t seed);

struct ConfusionMatrix {
    std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
    std::size_t total() const { return tn + fp + fn + tp; }
};

struct ClassMetrics {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::size_t support = 0;
};

struct EvalReport {
    ConfusionMatrix confusion;
    ClassMetrics class0, class1;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
    double accuracy = 0.0;
    bool zero_division = false;  // some metric had an empty denominator
};

EvalReport evaluate(const std::vector<int>& predicted, const std::vector<int>& actual);

enum class ModelFamily { DT, RF, ADA, GBT, SVM };
std::string family_name(ModelFamily f);
ModelFamily parse_family(const std::string& name);

/// Axis-aligned binary tree in a flat array; `value` is the leaf payload
/// (class label for classification, additive weight for boosting).
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct TreeModel {
    std::vector<TreeNode> nodes;
    std::vector<double> importances;  // raw impurity/gain decrease per feature

    double predict_value(const double* row) const;
};

struct DecisionTreeParams {
    int max_depth = 10;
    int min_samples_leaf = 1;
    bool balanced_class_weights = true;
};

struct RandomForestParams {
    int n_trees = 100;
    int max_depth = 10;
    int min_samples_leaf = 1;
    bool bootstrap = true;
    int max_features = -1;  // -1: floor(sqrt(p))
    bool balanced_class_weights = true;
};

struct AdaBoostParams {
    int n_estimators = 100;
    int base_depth = 1;
    double learning_rate = 1.0;
    bool balanced_class_weights = true;
};

struct GbtParams {
    int n_rounds = 100;
    int max_depth = 3;
    double learning_rate = 0.1;
    double l2_lambda = 1.0;
    bool balanced_class_weights = true;
};

enum class SvmKernel { Linear, Rbf };

struct SvmParams {
    double c = 1.0;
    SvmKernel kernel = SvmKernel::Rbf;
    double gamma = -1.0;  // <= 0: scale heuristic 1 / (p * var)
    bool balanced_class_weights = true;
    double tol = 1e-3;
    long max_iter = 1000000;
    bool record_objective = false;
};

struct DecisionTreeModel {
    DecisionTreeParams params;
    TreeModel tree;
};

struct RandomForestModel {
    RandomForestParams params;
    std::vector<TreeModel> trees;
};

struct AdaBoostModel {
    AdaBoostParams params;
    std::vector<TreeModel> trees;
    std::vector<double> alphas;
    std::vector<double> round_errors;  // weighted error of each accepted round
};

struct GbtModel {
    GbtParams params;
    std::vector<TreeModel> trees;  // leaf values already scaled by the learning rate
    double base_score = 0.0;
    std::vector<double> train_loss;  // mean logistic loss after each round
};

struct SvmModel {
    SvmParams params;
    double gamma_used = 0.0;
    std::size_t n_sv = 0;
    std::size_t n_features = 0;
    std::vector<double> support_x;  // standardized, row-major n_sv x p
    std::vector<double> coef;       // alpha_i * y_i
    double bias = 0.0;
    std::vector<double> mean, scale;  // training standardization
    std::vector<double> objective_trace;  // dual objective per iteration when recorded
};

struct TrainedModel {
    ModelFamily family = ModelFamily::DT;
    std::vector<std::string> schema;  // training columns; order is part of the schema
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::variant<DecisionTreeModel, RandomForestModel, AdaBoostModel, GbtModel, SvmModel> impl;
};

TrainedModel train_decision_tree(const Dataset& d, const DecisionTreeParams& p);
TrainedModel train_random_forest(const Dataset& d, const RandomForestParams& p,
                                 std::uint64_t seed);
TrainedModel train_adaboost(const Dataset& d, const AdaBoostParams& p, std::uint64_t seed);
TrainedModel train_gradient_boosted_trees(const Dataset& d, const GbtParams& p,
                                          std::uint64_t seed);
TrainedModel train_svm(const Dataset& d, const SvmParams& p, std::uint64_t seed);

using ModelParams =
    std::variant<DecisionTreeParams, RandomForestParams, AdaBoostParams, GbtParams, SvmParams>;

TrainedModel train_family(ModelFamily family, const Dataset& d, const ModelParams& params,
                          std::uint64_t seed);
std::string describe_params(const ModelParams& params);

/// Predicts labels for the dataset; the dataset's column list must equal the
/// model's training schema, order included.
std::vector<int> predict(const TrainedModel& m, const Dataset& d);
std::vector<int> predict_rows(const TrainedModel& m, const Dataset& d,
                              const std::vector<std::size_t>& rows);

/// Full per-feature importance vector, non-negative, summing to 1 (all zero
/// for models that never split). SVM supports the linear kernel only.
std::vector<double> raw_importances(const TrainedModel& m);

/// Top-k (name, weight) pairs, weight descending, ties by name.
std::vector<std::pair<std::string, double>> feature_importances(const TrainedModel& m,
                                                                int top_k = 8);

/// Per-family randomized-search space; default_search_space gives the
/// stock ranges.
struct SearchSpace {
    ModelFamily family = ModelFamily::DT;
    std::pair<int, int> depth_range{2, 20};
    std::vector<int> min_samples_leaf{1, 2, 4};
    std::vector<int> n_trees{100, 200, 300, 400, 500};
    std::pair<int, int> rf_depth_range{3, 20};
    std::pair<int, int> estimators_range{50, 400};
    std::vector<double> ada_learning_rates{0.1, 0.5, 1.0};
    std::pair<int, int> rounds_range{50, 400};
    std::vector<double> gbt_learning_rates{0.05, 0.1, 0.3};
    std::vector<double> l2_lambdas{0.0, 1.0, 10.0};
    std::vector<int> gbt_depths{3};
    std::vector<double> svm_c{0.1, 1.0, 10.0, 100.0};
    std::vector<double> svm_gammas{-1.0, 0.01, 0.1};  // -1 encodes the scale heuristic
};

SearchSpace default_search_space(ModelFamily family);

struct SearchResult {
    ModelParams best_params;
    int best_index = 0;
    double best_score = 0.0;
    std::vector<ModelParams> candidates;
    std::vector<std::vector<double>> fold_scores;  // [candidate][fold], macro-F1
    std::vector<double> mean_scores;
};

/// Draws n seeded candidates, scores each by mean macro-F1 over stratified
/// k-fold CV (folds fixed once per search), returns the argmax; ties keep
/// the earliest draw.
SearchResult random_search(ModelFamily family, const SearchSpace& space, int n_iter, int k,
                           std::uint64_t seed, const Dataset& d);

/// Versioned little-endian binary container with embedded schema and seed.
void save_model(const TrainedModel& m, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace deltarad
