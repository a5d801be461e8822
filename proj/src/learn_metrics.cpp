#include <stdexcept>

#include "deltarad/learn.hpp"

namespace deltarad {

namespace {

double ratio_or_zero(double num, double den, bool& flagged) {
    if (den == 0.0) {
        flagged = true;
        return 0.0;
    }
    return num / den;
}

}  // namespace

EvalReport evaluate(const std::vector<int>& predicted, const std::vector<int>& actual) {
    if (predicted.empty()) throw std::invalid_argument("evaluate: empty input");
    if (predicted.size() != actual.size())
        throw std::invalid_argument("evaluate: prediction/label length mismatch");

    EvalReport r;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const int p = predicted[i], a = actual[i];
        if ((p != 0 && p != 1) || (a != 0 && a != 1))
            throw std::invalid_argument("evaluate: labels must be 0 or 1");
        if (a == 1)
            (p == 1 ? r.confusion.tp : r.confusion.fn) += 1;
        else
            (p == 0 ? r.confusion.tn : r.confusion.fp) += 1;
    }

    const double tn = static_cast<double>(r.confusion.tn);
    const double fp = static_cast<double>(r.confusion.fp);
    const double fn = static_cast<double>(r.confusion.fn);
    const double tp = static_cast<double>(r.confusion.tp);

    bool& z = r.zero_division;
    r.class1.precision = ratio_or_zero(tp, tp + fp, z);
    r.class1.recall = ratio_or_zero(tp, tp + fn, z);
    r.class1.f1 = (r.class1.precision + r.class1.recall) > 0.0
                      ? 2.0 * r.class1.precision * r.class1.recall /
                            (r.class1.precision + r.class1.recall)
                      : 0.0;
    r.class1.support = r.confusion.tp + r.confusion.fn;

    r.class0.precision = ratio_or_zero(tn, tn + fn, z);
    r.class0.recall = ratio_or_zero(tn, tn + fp, z);
    r.class0.f1 = (r.class0.precision + r.class0.recall) > 0.0
                      ? 2.0 * r.class0.precision * r.class0.recall /
                            (r.class0.precision + r.class0.recall)
                      : 0.0;
    r.class0.support = r.confusion.tn + r.confusion.fp;

    r.macro_precision = (r.class0.precision + r.class1.precision) / 2.0;
    r.macro_recall = (r.class0.recall + r.class1.recall) / 2.0;
    r.macro_f1 = (r.class0.f1 + r.class1.f1) / 2.0;

    const double n = static_cast<double>(predicted.size());
    const double s0 = static_cast<double>(r.class0.support);
    const double s1 = static_cast<double>(r.class1.support);
    r.weighted_precision = (s0 * r.class0.precision + s1 * r.class1.precision) / n;
    r.weighted_recall = (s0 * r.class0.recall + s1 * r.class1.recall) / n;
    r.weighted_f1 = (s0 * r.class0.f1 + s1 * r.class1.f1) / n;
    r.accuracy = (tp + tn) / n;
    return r;
}

}  // namespace deltarad
