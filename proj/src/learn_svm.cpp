#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "learn_internal.hpp"

namespace deltarad {

namespace {

constexpr double kTau = 1e-12;

struct Standardizer {
    std::vector<double> mean, scale;

    static Standardizer fit(const Dataset& d) {
        const std::size_t n = d.n_rows(), p = d.n_cols();
        Standardizer s;
        s.mean.assign(p, 0.0);
        s.scale.assign(p, 1.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t f = 0; f < p; ++f) s.mean[f] += d.at(i, f);
        for (double& m : s.mean) m /= static_cast<double>(n);
        std::vector<double> var(p, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t f = 0; f < p; ++f) {
                const double dlt = d.at(i, f) - s.mean[f];
                var[f] += dlt * dlt;
            }
        for (std::size_t f = 0; f < p; ++f) {
            var[f] /= static_cast<double>(n);
            s.scale[f] = var[f] > 0.0 ? std::sqrt(var[f]) : 1.0;
        }
        return s;
    }
};

struct Kernel {
    SvmKernel kind;
    double gamma;
    std::size_t p;

    double operator()(const double* a, const double* b) const {
        if (kind == SvmKernel::Linear) {
            double dot = 0.0;
            for (std::size_t f = 0; f < p; ++f) dot += a[f] * b[f];
            return dot;
        }
        double d2 = 0.0;
        for (std::size_t f = 0; f < p; ++f) {
            const double diff = a[f] - b[f];
            d2 += diff * diff;
        }
        return std::exp(-gamma * d2);
    }
};

}  // namespace

double svm_decision_value(const SvmModel& model, const double* row) {
    const std::size_t p = model.n_features;
    std::vector<double> z(p);
    for (std::size_t f = 0; f < p; ++f) z[f] = (row[f] - model.mean[f]) / model.scale[f];
    const Kernel k{model.params.kernel, model.gamma_used, p};
    double f = model.bias;
    for (std::size_t s = 0; s < model.n_sv; ++s)
        f += model.coef[s] * k(z.data(), model.support_x.data() + s * p);
    return f;
}

TrainedModel train_svm(const Dataset& d, const SvmParams& p, std::uint64_t seed) {
    d.validate();
    const std::size_t n = d.n_rows(), nf = d.n_cols();
    if (n == 0) throw std::invalid_argument("train_svm: empty training set");
    {
        int first = d.labels[0];
        bool mixed = false;
        for (int y : d.labels) mixed |= y != first;
        if (!mixed) throw std::invalid_argument("train_svm: all labels identical");
    }

    const Standardizer std_ = Standardizer::fit(d);
    std::vector<double> xs(n * nf);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < nf; ++f)
            xs[i * nf + f] = (d.at(i, f) - std_.mean[f]) / std_.scale[f];

    double gamma = p.gamma;
    if (gamma <= 0.0) {
        // scale heuristic 1 / (p * var) on the standardized matrix
        double mean_all = 0.0;
        for (double v : xs) mean_all += v;
        mean_all /= static_cast<double>(xs.size());
        double var_all = 0.0;
        for (double v : xs) var_all += (v - mean_all) * (v - mean_all);
        var_all /= static_cast<double>(xs.size());
        gamma = var_all > 0.0 ? 1.0 / (static_cast<double>(nf) * var_all)
                              : 1.0 / static_cast<double>(nf);
    }
    const Kernel kernel{p.kernel, gamma, nf};

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = d.labels[i] == 1 ? 1.0 : -1.0;
    const auto cw = internal::class_weights(d.labels, p.balanced_class_weights);
    std::vector<double> box(n);
    for (std::size_t i = 0; i < n; ++i) box[i] = p.c * cw[d.labels[i]];

    // dense kernel cache; training sets here are desk-scale
    std::vector<double> K(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = kernel(xs.data() + i * nf, xs.data() + j * nf);
            K[i * n + j] = v;
            K[j * n + i] = v;
        }
    auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K[i * n + j]; };

    // SMO on the dual: min 1/2 a'Qa - e'a, 0 <= a <= C_i, y'a = 0
    std::vector<double> alpha(n, 0.0);
    std::vector<double> G(n, -1.0);
    std::vector<double> objective_trace;

    auto in_up = [&](std::size_t t) {
        return (y[t] > 0 && alpha[t] < box[t]) || (y[t] < 0 && alpha[t] > 0);
    };
    auto in_low = [&](std::size_t t) {
        return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < box[t]);
    };

    long iter = 0;
    double m_up = 0.0, m_low = 0.0;
    for (; iter < p.max_iter; ++iter) {
        // maximal violating pair
        std::size_t i = n, j = n;
        m_up = -std::numeric_limits<double>::infinity();
        m_low = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -y[t] * G[t];
            if (in_up(t) && v > m_up) {
                m_up = v;
                i = t;
            }
            if (in_low(t) && v < m_low) {
                m_low = v;
                j = t;
            }
        }
        if (i == n || j == n || m_up - m_low <= p.tol) break;

        const double old_ai = alpha[i], old_aj = alpha[j];
        if (y[i] != y[j]) {
            double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = diff;
                }
            } else {
                if (alpha[i] < 0) {
                    alpha[i] = 0;
                    alpha[j] = -diff;
                }
            }
            if (diff > box[i] - box[j]) {
                if (alpha[i] > box[i]) {
                    alpha[i] = box[i];
                    alpha[j] = box[i] - diff;
                }
            } else {
                if (alpha[j] > box[j]) {
                    alpha[j] = box[j];
                    alpha[i] = box[j] + diff;
                }
            }
        } else {
            double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > box[i]) {
                if (alpha[i] > box[i]) {
                    alpha[i] = box[i];
                    alpha[j] = sum - box[i];
                }
            } else {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = sum;
                }
            }
            if (sum > box[j]) {
                if (alpha[j] > box[j]) {
                    alpha[j] = box[j];
                    alpha[i] = sum - box[j];
                }
            } else {
                if (alpha[i] < 0) {
                    alpha[i] = 0;
                    alpha[j] = sum;
                }
            }
        }

        const double d_ai = alpha[i] - old_ai, d_aj = alpha[j] - old_aj;
        for (std::size_t t = 0; t < n; ++t) G[t] += Q(t, i) * d_ai + Q(t, j) * d_aj;

        if (p.record_objective) {
            double obj = 0.0;
            for (std::size_t t = 0; t < n; ++t) obj += alpha[t] * (G[t] - 1.0);
            objective_trace.push_back(obj / 2.0);
        }
    }

    // bias from the final violating-pair bounds; fall back to the finite
    // side when every alpha of one set sits on its bound
    double m_up_f = -std::numeric_limits<double>::infinity();
    double m_low_f = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
        const double v = -y[t] * G[t];
        if (in_up(t)) m_up_f = std::max(m_up_f, v);
        if (in_low(t)) m_low_f = std::min(m_low_f, v);
    }
    double bias = 0.0;
    if (std::isfinite(m_up_f) && std::isfinite(m_low_f)) bias = (m_up_f + m_low_f) / 2.0;
    else if (std::isfinite(m_up_f)) bias = m_up_f;
    else if (std::isfinite(m_low_f)) bias = m_low_f;

    SvmModel model;
    model.params = p;
    model.gamma_used = gamma;
    model.n_features = nf;
    model.mean = std_.mean;
    model.scale = std_.scale;
    model.bias = bias;
    model.objective_trace = std::move(objective_trace);
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 1e-12) {
            model.coef.push_back(alpha[i] * y[i]);
            model.support_x.insert(model.support_x.end(), xs.begin() + i * nf,
                                   xs.begin() + (i + 1) * nf);
            ++model.n_sv;
        }
    }

    TrainedModel m;
    m.family = ModelFamily::SVM;
    m.schema = d.columns;
    m.seed = seed;
    m.impl = std::move(model);
    return m;
}

}  // namespace deltarad
