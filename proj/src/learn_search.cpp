#include <cmath>
#include <sstream>
#include <stdexcept>

#include "deltarad/learn.hpp"
#include "deltarad/rng.hpp"

namespace deltarad {

SearchSpace default_search_space(ModelFamily family) {
    SearchSpace s;
    s.family = family;
    return s;
}

namespace {

template <typename T>
T pick(const std::vector<T>& values, Rng& rng) {
    if (values.empty()) throw std::invalid_argument("random_search: empty value list in space");
    return values[rng.uniform_index(values.size())];
}

int pick_range(const std::pair<int, int>& range, Rng& rng) {
    if (range.second < range.first)
        throw std::invalid_argument("random_search: empty range in space");
    return static_cast<int>(rng.uniform_int(range.first, range.second));
}

ModelParams sample_params(ModelFamily family, const SearchSpace& space, Rng& rng) {
    switch (family) {
        case ModelFamily::DT: {
            DecisionTreeParams p;
            p.max_depth = pick_range(space.depth_range, rng);
            p.min_samples_leaf = pick(space.min_samples_leaf, rng);
            return p;
        }
        case ModelFamily::RF: {
            RandomForestParams p;
            p.n_trees = pick(space.n_trees, rng);
            p.max_depth = pick_range(space.rf_depth_range, rng);
            return p;
        }
        case ModelFamily::ADA: {
            AdaBoostParams p;
            p.n_estimators = pick_range(space.estimators_range, rng);
            p.learning_rate = pick(space.ada_learning_rates, rng);
            return p;
        }
        case ModelFamily::GBT: {
            GbtParams p;
            p.n_rounds = pick_range(space.rounds_range, rng);
            p.learning_rate = pick(space.gbt_learning_rates, rng);
            p.l2_lambda = pick(space.l2_lambdas, rng);
            p.max_depth = pick(space.gbt_depths, rng);
            return p;
        }
        default: {
            SvmParams p;
            p.c = pick(space.svm_c, rng);
            p.gamma = pick(space.svm_gammas, rng);
            return p;
        }
    }
}

}  // namespace

std::string describe_params(const ModelParams& params) {
    std::ostringstream os;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, DecisionTreeParams>)
                os << "depth=" << p.max_depth << " min_leaf=" << p.min_samples_leaf;
            else if constexpr (std::is_same_v<T, RandomForestParams>)
                os << "trees=" << p.n_trees << " depth=" << p.max_depth;
            else if constexpr (std::is_same_v<T, AdaBoostParams>)
                os << "estimators=" << p.n_estimators << " lr=" << p.learning_rate;
            else if constexpr (std::is_same_v<T, GbtParams>)
                os << "rounds=" << p.n_rounds << " lr=" << p.learning_rate
                   << " lambda=" << p.l2_lambda << " depth=" << p.max_depth;
            else
                os << "C=" << p.c << " gamma=" << (p.gamma <= 0 ? std::string("scale")
                                                                : std::to_string(p.gamma));
        },
        params);
    return os.str();
}

SearchResult random_search(ModelFamily family, const SearchSpace& space, int n_iter, int k,
                           std::uint64_t seed, const Dataset& d) {
    if (space.family != family)
        throw std::invalid_argument("random_search: space was built for family " +
                                    family_name(space.family) + ", not " + family_name(family));
    if (n_iter < 1) throw std::invalid_argument("random_search: n_iter must be >= 1");
    d.validate();

    // folds are fixed once per search so every candidate sees the same data
    const auto folds = kfold_stratified(d, k, derive_seed(seed, 0xCF));
    std::vector<std::vector<std::size_t>> train_rows(folds.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            train_rows[f].insert(train_rows[f].end(), folds[g].begin(), folds[g].end());
        }
    }

    SearchResult result;
    for (int it = 0; it < n_iter; ++it) {
        Rng rng(derive_seed(seed, 0xCA0 + it));
        const ModelParams params = sample_params(family, space, rng);
        std::vector<double> scores;
        double mean = 0.0;
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const Dataset train = d.subset(train_rows[f]);
            const Dataset test = d.subset(folds[f]);
            const TrainedModel model =
                train_family(family, train, params, derive_seed(seed, 0xF17 + it * 131 + f));
            const EvalReport report = evaluate(predict(model, test), test.labels);
            scores.push_back(report.macro_f1);
            mean += report.macro_f1;
        }
        mean /= static_cast<double>(folds.size());
        result.candidates.push_back(params);
        result.fold_scores.push_back(std::move(scores));
        result.mean_scores.push_back(mean);
        if (it == 0 || mean > result.best_score) {  // ties keep the earliest draw
            result.best_score = mean;
            result.best_index = it;
            result.best_params = params;
        }
    }
    return result;
}

}  // namespace deltarad
