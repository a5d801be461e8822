#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "deltarad/learn.hpp"
#include "deltarad/rng.hpp"

namespace deltarad {

void Dataset::validate() const {
    if (labels.size() != groups.size())
        throw std::invalid_argument("dataset: row count != group count");
    if (x.size() != labels.size() * columns.size())
        throw std::invalid_argument("dataset: matrix size does not match rows x columns");
    std::set<std::string> unique(columns.begin(), columns.end());
    if (unique.size() != columns.size())
        throw std::invalid_argument("dataset: duplicate column names");
    for (int y : labels)
        if (y != 0 && y != 1) throw std::invalid_argument("dataset: labels must be 0 or 1");
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite feature value");
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.columns = columns;
    out.x.reserve(rows.size() * columns.size());
    out.labels.reserve(rows.size());
    out.groups.reserve(rows.size());
    for (std::size_t r : rows) {
        out.x.insert(out.x.end(), row(r), row(r) + columns.size());
        out.labels.push_back(labels[r]);
        out.groups.push_back(groups[r]);
    }
    return out;
}

namespace {

std::array<std::vector<std::size_t>, 2> indices_by_class(const Dataset& d) {
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < d.n_rows(); ++i) by_class[d.labels[i]].push_back(i);
    return by_class;
}

SplitIndices grouped_split(const Dataset& d, double test_fraction, std::uint64_t seed) {
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        auto [it, inserted] = members.try_emplace(d.groups[i]);
        if (inserted) group_order.push_back(d.groups[i]);
        it->second.push_back(i);
    }
    Rng rng(derive_seed(seed, 0x6B0));
    rng.shuffle(group_order);

    const double target = test_fraction * static_cast<double>(d.n_rows());
    SplitIndices out;
    std::size_t test_count = 0;
    for (const auto& gid : group_order) {
        const auto& rows = members[gid];
        const double without = std::abs(static_cast<double>(test_count) - target);
        const double with = std::abs(static_cast<double>(test_count + rows.size()) - target);
        if (with < without) {
            out.test.insert(out.test.end(), rows.begin(), rows.end());
            test_count += rows.size();
        } else {
            out.train.insert(out.train.end(), rows.begin(), rows.end());
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    if (out.train.empty() || out.test.empty())
        throw std::invalid_argument("stratified_split: grouped split left one side empty");
    return out;
}

}  // namespace

SplitIndices stratified_split(const Dataset& d, double test_fraction, std::uint64_t seed,
                              SplitMode mode) {
    d.validate();
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
        throw std::invalid_argument("stratified_split: fraction must be in (0, 1)");
    if (mode == SplitMode::PatientGrouped) return grouped_split(d, test_fraction, seed);

    auto by_class = indices_by_class(d);
    for (int c = 0; c < 2; ++c)
        if (by_class[c].size() < 2)
            throw std::invalid_argument("stratified_split: class " + std::to_string(c) +
                                        " has fewer than 2 cases");

    const std::size_t n = d.n_rows();
    std::size_t n_test = static_cast<std::size_t>(
        std::ceil(test_fraction * static_cast<double>(n) - 1e-12));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    // floor per class, then largest fractional remainder
    std::array<std::size_t, 2> take{};
    std::array<double, 2> frac{};
    std::size_t assigned = 0;
    for (int c = 0; c < 2; ++c) {
        const double exact = test_fraction * static_cast<double>(by_class[c].size());
        take[c] = static_cast<std::size_t>(exact);
        frac[c] = exact - static_cast<double>(take[c]);
        take[c] = std::min(take[c], by_class[c].size() - 1);
        assigned += take[c];
    }
    while (assigned < n_test) {
        int pick = -1;
        for (int c = 0; c < 2; ++c) {
            if (take[c] >= by_class[c].size() - 1) continue;
            if (pick < 0 || frac[c] > frac[pick] ||
                (frac[c] == frac[pick] && by_class[c].size() > by_class[pick].size()))
                pick = c;
        }
        if (pick < 0) break;
        ++take[pick];
        frac[pick] -= 1.0;
        ++assigned;
    }

    SplitIndices out;
    for (int c = 0; c < 2; ++c) {
        Rng rng(derive_seed(seed, 0x57A7 + c));
        auto idx = by_class[c];
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < take[c] ? out.test : out.train).push_back(idx[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<std::vector<std::size_t>> kfold_stratified(const Dataset& d, int k,
                                                       std::uint64_t seed) {
    d.validate();
    if (k < 2) throw std::invalid_argument("kfold_stratified: k must be >= 2");
    auto by_class = indices_by_class(d);
    for (int c = 0; c < 2; ++c)
        if (!by_class[c].empty() && by_class[c].size() < static_cast<std::size_t>(k))
            throw std::invalid_argument("kfold_stratified: class " + std::to_string(c) +
                                        " has fewer cases than folds");

    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t dealt = 0;  // continuing the deal across classes keeps total
                            // fold sizes within 1 of N/k
    for (int c = 0; c < 2; ++c) {
        Rng rng(derive_seed(seed, 0xF01D + c));
        auto idx = by_class[c];
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i, ++dealt)
            folds[dealt % static_cast<std::size_t>(k)].push_back(idx[i]);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

}  // namespace deltarad
