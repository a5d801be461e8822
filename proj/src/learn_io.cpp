#include <cstring>
#include <fstream>
#include <stdexcept>

#include "deltarad/learn.hpp"

namespace deltarad {

namespace {

constexpr char kMagic[8] = {'D', 'R', 'M', 'O', 'D', 'E', 'L', '1'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
    std::ofstream os;

    explicit Writer(const std::string& path) : os(path, std::ios::binary | std::ios::trunc) {
        if (!os) throw std::runtime_error("cannot write model file: " + path);
    }
    void bytes(const void* p, std::size_t n) { os.write(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void i32(std::int32_t v) { bytes(&v, 4); }
    void i64(std::int64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f64v(const std::vector<double>& v) {
        u64(v.size());
        bytes(v.data(), v.size() * 8);
    }
};

struct Reader {
    std::ifstream is;
    std::string path;

    explicit Reader(const std::string& p) : is(p, std::ios::binary), path(p) {
        if (!is) throw std::runtime_error("cannot open model file: " + p);
    }
    void bytes(void* p, std::size_t n) {
        is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!is) throw std::runtime_error("truncated model file: " + path);
    }
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
    std::int32_t i32() { std::int32_t v; bytes(&v, 4); return v; }
    std::int64_t i64() { std::int64_t v; bytes(&v, 8); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    std::string str() {
        const auto n = u32();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    std::vector<double> f64v() {
        const auto n = u64();
        std::vector<double> v(n);
        bytes(v.data(), n * 8);
        return v;
    }
};

void write_tree(Writer& w, const TreeModel& t) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
        w.i32(n.feature);
        w.f64(n.threshold);
        w.i32(n.left);
        w.i32(n.right);
        w.f64(n.value);
    }
    w.f64v(t.importances);
}

TreeModel read_tree(Reader& r) {
    TreeModel t;
    const auto n = r.u32();
    t.nodes.resize(n);
    for (auto& node : t.nodes) {
        node.feature = r.i32();
        node.threshold = r.f64();
        node.left = r.i32();
        node.right = r.i32();
        node.value = r.f64();
    }
    t.importances = r.f64v();
    return t;
}

}  // namespace

void save_model(const TrainedModel& m, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, 8);
    w.u32(kVersion);
    w.u8(static_cast<std::uint8_t>(m.family));
    w.u64(m.seed);
    w.u64(m.config_hash);
    w.u32(static_cast<std::uint32_t>(m.schema.size()));
    for (const auto& s : m.schema) w.str(s);

    std::visit(
        [&](const auto& impl) {
            using T = std::decay_t<decltype(impl)>;
            if constexpr (std::is_same_v<T, DecisionTreeModel>) {
                w.i32(impl.params.max_depth);
                w.i32(impl.params.min_samples_leaf);
                w.u8(impl.params.balanced_class_weights);
                write_tree(w, impl.tree);
            } else if constexpr (std::is_same_v<T, RandomForestModel>) {
                w.i32(impl.params.n_trees);
                w.i32(impl.params.max_depth);
                w.i32(impl.params.min_samples_leaf);
                w.u8(impl.params.bootstrap);
                w.i32(impl.params.max_features);
                w.u8(impl.params.balanced_class_weights);
                w.u32(static_cast<std::uint32_t>(impl.trees.size()));
                for (const auto& t : impl.trees) write_tree(w, t);
            } else if constexpr (std::is_same_v<T, AdaBoostModel>) {
                w.i32(impl.params.n_estimators);
                w.i32(impl.params.base_depth);
                w.f64(impl.params.learning_rate);
                w.u8(impl.params.balanced_class_weights);
                w.u32(static_cast<std::uint32_t>(impl.trees.size()));
                for (const auto& t : impl.trees) write_tree(w, t);
                w.f64v(impl.alphas);
                w.f64v(impl.round_errors);
            } else if constexpr (std::is_same_v<T, GbtModel>) {
                w.i32(impl.params.n_rounds);
                w.i32(impl.params.max_depth);
                w.f64(impl.params.learning_rate);
                w.f64(impl.params.l2_lambda);
                w.u8(impl.params.balanced_class_weights);
                w.f64(impl.base_score);
                w.u32(static_cast<std::uint32_t>(impl.trees.size()));
                for (const auto& t : impl.trees) write_tree(w, t);
                w.f64v(impl.train_loss);
            } else {
                w.f64(impl.params.c);
                w.u8(impl.params.kernel == SvmKernel::Rbf);
                w.f64(impl.params.gamma);
                w.u8(impl.params.balanced_class_weights);
                w.f64(impl.params.tol);
                w.i64(impl.params.max_iter);
                w.f64(impl.gamma_used);
                w.u64(impl.n_sv);
                w.u64(impl.n_features);
                w.f64v(impl.support_x);
                w.f64v(impl.coef);
                w.f64(impl.bias);
                w.f64v(impl.mean);
                w.f64v(impl.scale);
            }
        },
        m.impl);
}

TrainedModel load_model(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a deltarad model file: " + path);
    if (r.u32() != kVersion) throw std::runtime_error("unsupported model version: " + path);

    TrainedModel m;
    m.family = static_cast<ModelFamily>(r.u8());
    m.seed = r.u64();
    m.config_hash = r.u64();
    const auto n_cols = r.u32();
    m.schema.reserve(n_cols);
    for (std::uint32_t i = 0; i < n_cols; ++i) m.schema.push_back(r.str());

    switch (m.family) {
        case ModelFamily::DT: {
            DecisionTreeModel impl;
            impl.params.max_depth = r.i32();
            impl.params.min_samples_leaf = r.i32();
            impl.params.balanced_class_weights = r.u8();
            impl.tree = read_tree(r);
            m.impl = std::move(impl);
            break;
        }
        case ModelFamily::RF: {
            RandomForestModel impl;
            impl.params.n_trees = r.i32();
            impl.params.max_depth = r.i32();
            impl.params.min_samples_leaf = r.i32();
            impl.params.bootstrap = r.u8();
            impl.params.max_features = r.i32();
            impl.params.balanced_class_weights = r.u8();
            const auto n = r.u32();
            for (std::uint32_t i = 0; i < n; ++i) impl.trees.push_back(read_tree(r));
            m.impl = std::move(impl);
            break;
        }
        case ModelFamily::ADA: {
            AdaBoostModel impl;
            impl.params.n_estimators = r.i32();
            impl.params.base_depth = r.i32();
            impl.params.learning_rate = r.f64();
            impl.params.balanced_class_weights = r.u8();
            const auto n = r.u32();
            for (std::uint32_t i = 0; i < n; ++i) impl.trees.push_back(read_tree(r));
            impl.alphas = r.f64v();
            impl.round_errors = r.f64v();
            m.impl = std::move(impl);
            break;
        }
        case ModelFamily::GBT: {
            GbtModel impl;
            impl.params.n_rounds = r.i32();
            impl.params.max_depth = r.i32();
            impl.params.learning_rate = r.f64();
            impl.params.l2_lambda = r.f64();
            impl.params.balanced_class_weights = r.u8();
            impl.base_score = r.f64();
            const auto n = r.u32();
            for (std::uint32_t i = 0; i < n; ++i) impl.trees.push_back(read_tree(r));
            impl.train_loss = r.f64v();
            m.impl = std::move(impl);
            break;
        }
        case ModelFamily::SVM: {
            SvmModel impl;
            impl.params.c = r.f64();
            impl.params.kernel = r.u8() ? SvmKernel::Rbf : SvmKernel::Linear;
            impl.params.gamma = r.f64();
            impl.params.balanced_class_weights = r.u8();
            impl.params.tol = r.f64();
            impl.params.max_iter = r.i64();
            impl.gamma_used = r.f64();
            impl.n_sv = r.u64();
            impl.n_features = r.u64();
            impl.support_x = r.f64v();
            impl.coef = r.f64v();
            impl.bias = r.f64();
            impl.mean = r.f64v();
            impl.scale = r.f64v();
            m.impl = std::move(impl);
            break;
        }
        default: throw std::runtime_error("corrupt model family tag: " + path);
    }
    return m;
}

}  // namespace deltarad
