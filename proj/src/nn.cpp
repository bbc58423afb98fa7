#include "mpv/nn.hpp"

#include <Eigen/Dense>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mpv/random.hpp"

namespace mpv::nn {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const Mat<T>>;

// Tensor positions in the fixed architecture order.
struct Layout {
    int blocks;
    int input_w() const { return 0; }
    int input_b() const { return 1; }
    int block_w(int b, int conv) const { return 2 + 4 * b + 2 * conv; }
    int block_b(int b, int conv) const { return 3 + 4 * b + 2 * conv; }
    int head() const { return 2 + 4 * blocks; }
    int policy_conv_w() const { return head(); }
    int policy_conv_b() const { return head() + 1; }
    int policy_fc_w() const { return head() + 2; }
    int policy_fc_b() const { return head() + 3; }
    int value_conv_w() const { return head() + 4; }
    int value_conv_b() const { return head() + 5; }
    int value_fc1_w() const { return head() + 6; }
    int value_fc1_b() const { return head() + 7; }
    int value_fc2_w() const { return head() + 8; }
    int value_fc2_b() const { return head() + 9; }
    int count() const { return head() + 10; }
};

// neighbor[k][p]: input point read by kernel tap k at output point p, or -1.
const std::vector<std::array<int, 9>>& neighbor_table(int n) {
    static const auto tables = [] {
        std::vector<std::vector<std::array<int, 9>>> t(kMaxBoardSize + 1);
        for (int size = 1; size <= kMaxBoardSize; ++size) {
            auto& tab = t[size];
            tab.resize(static_cast<std::size_t>(size * size));
            for (int p = 0; p < size * size; ++p) {
                int r = p / size, c = p % size;
                for (int k = 0; k < 9; ++k) {
                    int rr = r + k / 3 - 1, cc = c + k % 3 - 1;
                    tab[p][k] = (rr < 0 || rr >= size || cc < 0 || cc >= size) ? -1 : rr * size + cc;
                }
            }
        }
        return t;
    }();
    return tables[n];
}

template <typename T>
Mat<T> im2col(const Mat<T>& in, int n, int batch) {
    const int n2 = n * n;
    const auto& nb = neighbor_table(n);
    Mat<T> col = Mat<T>::Zero(in.rows() * 9, static_cast<Eigen::Index>(batch) * n2);
    for (Eigen::Index c = 0; c < in.rows(); ++c) {
        for (int b = 0; b < batch; ++b) {
            const T* src = in.row(c).data() + b * n2;
            for (int k = 0; k < 9; ++k) {
                T* dst = col.row(c * 9 + k).data() + b * n2;
                for (int p = 0; p < n2; ++p) {
                    int q = nb[p][k];
                    if (q >= 0) dst[p] = src[q];
                }
            }
        }
    }
    return col;
}

template <typename T>
Mat<T> col2im(const Mat<T>& col, int channels, int n, int batch) {
    const int n2 = n * n;
    const auto& nb = neighbor_table(n);
    Mat<T> out = Mat<T>::Zero(channels, static_cast<Eigen::Index>(batch) * n2);
    for (int c = 0; c < channels; ++c) {
        for (int b = 0; b < batch; ++b) {
            T* dst = out.row(c).data() + b * n2;
            for (int k = 0; k < 9; ++k) {
                const T* src = col.row(c * 9 + k).data() + b * n2;
                for (int p = 0; p < n2; ++p) {
                    int q = nb[p][k];
                    if (q >= 0) dst[q] += src[p];
                }
            }
        }
    }
    return out;
}

template <typename T>
void relu(Mat<T>& m) {
    m = m.cwiseMax(T(0));
}

// [C][B*n2] -> [C*n2][B]
template <typename T>
Mat<T> to_flat(const Mat<T>& m, int n2, int batch) {
    Mat<T> out(m.rows() * n2, batch);
    for (Eigen::Index c = 0; c < m.rows(); ++c)
        for (int b = 0; b < batch; ++b)
            for (int p = 0; p < n2; ++p) out(c * n2 + p, b) = m(c, b * n2 + p);
    return out;
}

template <typename T>
Mat<T> from_flat(const Mat<T>& m, int channels, int n2, int batch) {
    Mat<T> out(channels, static_cast<Eigen::Index>(batch) * n2);
    for (int c = 0; c < channels; ++c)
        for (int b = 0; b < batch; ++b)
            for (int p = 0; p < n2; ++p) out(c, b * n2 + p) = m(c * n2 + p, b);
    return out;
}

template <typename T>
struct Weights {
    const Parameters<T>& params;

    ConstMapMat<T> mat(int i) const {
        const auto& t = params.tensors[i];
        Eigen::Index rows = t.shape[0];
        Eigen::Index cols = t.shape.size() > 1 ? t.shape[1] : 1;
        return ConstMapMat<T>(t.data.data(), rows, cols);
    }
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> vec(int i) const {
        const auto& t = params.tensors[i];
        return {t.data.data(), static_cast<Eigen::Index>(t.data.size())};
    }
};

template <typename T>
struct BlockCache {
    Mat<T> col1;  // im2col of block input
    Mat<T> h1;    // after first conv + ReLU
    Mat<T> col2;  // im2col of h1
    Mat<T> out;   // after skip add + ReLU
};

template <typename T>
struct Cache {
    int batch = 0;
    int n = 0;
    int n2 = 0;
    Mat<T> col_in;
    Mat<T> a0;
    std::vector<BlockCache<T>> blocks;
    Mat<T> trunk;  // final trunk activation
    Mat<T> pflat;  // policy conv after ReLU, flattened [2*n2][B]
    Mat<T> logits; // [n2][B]
    Mat<T> mask;   // [n2][B], 1 on legal points
    Mat<T> vflat;  // [n2][B]
    Mat<T> vh;     // [hidden][B]
    Eigen::Matrix<T, Eigen::Dynamic, 1> value;
    Mat<T> log_policy;  // masked log-softmax; -inf-free, 0 on illegal
    Mat<T> policy;      // [n2][B]
};

template <typename T>
Cache<T> run_forward(const Parameters<T>& params, const std::vector<FeaturePlanes>& states) {
    const NetworkConfig& cfg = params.config;
    const Layout L{cfg.blocks};
    const int n = cfg.board_size;
    const int n2 = n * n;
    const int batch = static_cast<int>(states.size());
    if (static_cast<int>(params.tensors.size()) != L.count()) throw std::invalid_argument("forward: malformed parameters");
    Weights<T> W{params};

    Cache<T> c;
    c.batch = batch;
    c.n = n;
    c.n2 = n2;
    Mat<T> x = Mat<T>::Zero(FeaturePlanes::kPlanes, static_cast<Eigen::Index>(batch) * n2);
    c.mask = Mat<T>::Zero(n2, batch);
    for (int b = 0; b < batch; ++b) {
        const auto& f = states[b];
        if (f.size != n || static_cast<int>(f.bits.size()) != FeaturePlanes::kPlanes * n2) {
            throw std::invalid_argument("forward: feature planes do not match the network board size");
        }
        for (int k = 0; k < FeaturePlanes::kPlanes; ++k)
            for (int p = 0; p < n2; ++p) x(k, b * n2 + p) = static_cast<T>(f.bits[k * n2 + p]);
        for (int p = 0; p < n2; ++p) c.mask(p, b) = static_cast<T>(f.bits[2 * n2 + p]);
    }

    c.col_in = im2col<T>(x, n, batch);
    c.a0 = W.mat(L.input_w()) * c.col_in;
    c.a0.colwise() += W.vec(L.input_b());
    relu<T>(c.a0);

    const Mat<T>* a = &c.a0;
    c.blocks.resize(static_cast<std::size_t>(cfg.blocks));
    for (int i = 0; i < cfg.blocks; ++i) {
        auto& bc = c.blocks[i];
        bc.col1 = im2col<T>(*a, n, batch);
        bc.h1 = W.mat(L.block_w(i, 0)) * bc.col1;
        bc.h1.colwise() += W.vec(L.block_b(i, 0));
        relu<T>(bc.h1);
        bc.col2 = im2col<T>(bc.h1, n, batch);
        bc.out = W.mat(L.block_w(i, 1)) * bc.col2;
        bc.out.colwise() += W.vec(L.block_b(i, 1));
        bc.out += *a;
        relu<T>(bc.out);
        a = &bc.out;
    }
    c.trunk = *a;

    Mat<T> pc = W.mat(L.policy_conv_w()) * c.trunk;
    pc.colwise() += W.vec(L.policy_conv_b());
    relu<T>(pc);
    c.pflat = to_flat<T>(pc, n2, batch);
    c.logits = W.mat(L.policy_fc_w()) * c.pflat;
    c.logits.colwise() += W.vec(L.policy_fc_b());

    Mat<T> vc = W.mat(L.value_conv_w()) * c.trunk;
    vc.colwise() += W.vec(L.value_conv_b());
    relu<T>(vc);
    c.vflat = to_flat<T>(vc, n2, batch);
    c.vh = W.mat(L.value_fc1_w()) * c.vflat;
    c.vh.colwise() += W.vec(L.value_fc1_b());
    relu<T>(c.vh);
    Mat<T> u = W.mat(L.value_fc2_w()) * c.vh;
    c.value.resize(batch);
    const T bias = W.vec(L.value_fc2_b())(0);
    for (int b = 0; b < batch; ++b) c.value(b) = std::tanh(u(0, b) + bias);

    c.policy = Mat<T>::Zero(n2, batch);
    c.log_policy = Mat<T>::Zero(n2, batch);
    for (int b = 0; b < batch; ++b) {
        T mx = -std::numeric_limits<T>::infinity();
        for (int p = 0; p < n2; ++p)
            if (c.mask(p, b) > 0) mx = std::max(mx, c.logits(p, b));
        if (!std::isfinite(mx)) continue;
        T sum = 0;
        for (int p = 0; p < n2; ++p)
            if (c.mask(p, b) > 0) sum += std::exp(c.logits(p, b) - mx);
        const T log_sum = std::log(sum);
        for (int p = 0; p < n2; ++p) {
            if (c.mask(p, b) > 0) {
                c.log_policy(p, b) = c.logits(p, b) - mx - log_sum;
                c.policy(p, b) = std::exp(c.log_policy(p, b));
            }
        }
    }
    return c;
}

template <typename T>
LossBreakdown<T> loss_from_cache(const Parameters<T>& params, const Cache<T>& c, const TrainingBatch& batch) {
    LossBreakdown<T> out;
    const T inv = T(1) / static_cast<T>(c.batch);
    for (int b = 0; b < c.batch; ++b) {
        T d = static_cast<T>(batch.outcomes[b]) - c.value(b);
        out.value += d * d * inv;
        for (int p = 0; p < c.n2; ++p) {
            T pi = static_cast<T>(batch.policies[b][p]);
            if (pi != T(0)) out.policy -= pi * c.log_policy(p, b) * inv;
        }
    }
    out.l2 = static_cast<T>(params.config.l2) * params.squared_norm();
    return out;
}

void check_batch(const TrainingBatch& batch, const NetworkConfig& cfg) {
    batch.validate();
    if (batch.board_size != cfg.board_size) throw std::invalid_argument("batch board size does not match network");
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("model file truncated while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void NetworkConfig::validate() const {
    if (board_size < 1 || board_size > kMaxBoardSize) throw std::invalid_argument("network board_size must be in 1..9");
    if (filters < 4) throw std::invalid_argument("network filters must be >= 4");
    if (blocks < 1) throw std::invalid_argument("network blocks must be >= 1");
    if (value_hidden < 1) throw std::invalid_argument("network value_hidden must be >= 1");
    if (!(l2 >= 0.0) || !std::isfinite(l2)) throw std::invalid_argument("network l2 must be finite and >= 0");
}

void TrainingBatch::validate() const {
    const std::size_t n2 = static_cast<std::size_t>(board_size) * board_size;
    if (states.empty()) throw std::invalid_argument("empty training batch");
    if (policies.size() != states.size() || outcomes.size() != states.size()) {
        throw std::invalid_argument("training batch fields have different lengths");
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (policies[i].size() != n2) throw std::invalid_argument("training policy has wrong length");
        double sum = 0;
        for (float v : policies[i]) sum += v;
        if (std::abs(sum - 1.0) > 1e-4) throw std::invalid_argument("training policy does not sum to 1");
        if (std::abs(outcomes[i]) > 1.0f) throw std::invalid_argument("training outcome outside [-1, 1]");
    }
}

template <typename T>
Parameters<T> Parameters<T>::zeros(const NetworkConfig& config) {
    config.validate();
    const int x = config.filters;
    const int n2 = config.board_size * config.board_size;
    const int h = config.value_hidden;
    Parameters<T> p;
    p.config = config;
    auto add = [&p](std::string name, std::vector<int> shape) {
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        p.tensors.push_back(Tensor<T>{std::move(name), std::move(shape), std::vector<T>(count, T(0))});
    };
    add("input.conv.w", {x, 4 * 9});
    add("input.conv.b", {x});
    for (int b = 0; b < config.blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b);
        add(prefix + ".conv1.w", {x, x * 9});
        add(prefix + ".conv1.b", {x});
        add(prefix + ".conv2.w", {x, x * 9});
        add(prefix + ".conv2.b", {x});
    }
    add("policy.conv.w", {2, x});
    add("policy.conv.b", {2});
    add("policy.fc.w", {n2, 2 * n2});
    add("policy.fc.b", {n2});
    add("value.conv.w", {1, x});
    add("value.conv.b", {1});
    add("value.fc1.w", {h, n2});
    add("value.fc1.b", {h});
    add("value.fc2.w", {1, h});
    add("value.fc2.b", {1});
    return p;
}

template <typename T>
Parameters<T> Parameters<T>::random(const NetworkConfig& config, std::uint64_t seed) {
    Parameters<T> p = zeros(config);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& t : p.tensors) {
        if (t.shape.size() < 2) continue;  // biases stay zero
        const double stddev = std::sqrt(2.0 / static_cast<double>(t.shape[1]));
        for (auto& v : t.data) v = static_cast<T>(normal(rng) * stddev);
    }
    return p;
}

template <typename T>
std::size_t Parameters<T>::count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.data.size();
    return n;
}

template <typename T>
T Parameters<T>::squared_norm() const {
    T s = 0;
    for (const auto& t : tensors)
        for (T v : t.data) s += v * v;
    return s;
}

template <typename T>
bool Parameters<T>::all_finite() const {
    for (const auto& t : tensors)
        for (T v : t.data)
            if (!std::isfinite(v)) return false;
    return true;
}

template <typename T>
std::uint64_t Parameters<T>::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tensors) {
        for (T v : t.data) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, &v, sizeof(T));
            h = mix64(h ^ bits);
        }
    }
    return h;
}

template <typename T>
Prediction<T> forward(const Parameters<T>& params, const std::vector<FeaturePlanes>& states) {
    Cache<T> c = run_forward(params, states);
    Prediction<T> out;
    for (int b = 0; b < c.batch; ++b) {
        std::vector<T> pol(static_cast<std::size_t>(c.n2)), lg(static_cast<std::size_t>(c.n2));
        for (int p = 0; p < c.n2; ++p) {
            pol[p] = c.policy(p, b);
            lg[p] = c.logits(p, b);
        }
        out.policy.push_back(std::move(pol));
        out.logits.push_back(std::move(lg));
        out.value.push_back(c.value(b));
    }
    return out;
}

template <typename T>
PVOutput to_pv_output(const Prediction<T>& pred, std::size_t index) {
    PVOutput out;
    out.policy.assign(pred.policy[index].begin(), pred.policy[index].end());
    out.value = static_cast<float>(pred.value[index]);
    return out;
}

template <typename T>
LossBreakdown<T> loss(const Parameters<T>& params, const TrainingBatch& batch) {
    check_batch(batch, params.config);
    Cache<T> c = run_forward(params, batch.states);
    return loss_from_cache(params, c, batch);
}

template <typename T>
LossAndGradients<T> backward(const Parameters<T>& params, const TrainingBatch& batch) {
    check_batch(batch, params.config);
    const NetworkConfig& cfg = params.config;
    const Layout L{cfg.blocks};
    Cache<T> c = run_forward(params, batch.states);
    const int n = c.n, n2 = c.n2, B = c.batch, x = cfg.filters;
    Weights<T> W{params};

    LossAndGradients<T> out;
    out.loss = loss_from_cache(params, c, batch);
    out.grads = Gradients<T>::zeros(cfg);
    auto grad_mat = [&out](int i) {
        auto& t = out.grads.tensors[i];
        Eigen::Index cols = t.shape.size() > 1 ? t.shape[1] : 1;
        return MapMat<T>(t.data.data(), t.shape[0], cols);
    };

    const T inv = T(1) / static_cast<T>(B);

    // Policy head: d(-pi . log p)/d logit = p * sum(pi) - pi on legal points.
    Mat<T> dlogits = Mat<T>::Zero(n2, B);
    for (int b = 0; b < B; ++b) {
        T pi_sum = 0;
        for (int p = 0; p < n2; ++p) pi_sum += static_cast<T>(batch.policies[b][p]);
        for (int p = 0; p < n2; ++p) {
            if (c.mask(p, b) > 0) dlogits(p, b) = (c.policy(p, b) * pi_sum - static_cast<T>(batch.policies[b][p])) * inv;
        }
    }
    grad_mat(L.policy_fc_w()) = dlogits * c.pflat.transpose();
    grad_mat(L.policy_fc_b()) = dlogits.rowwise().sum();
    Mat<T> dpflat = (W.mat(L.policy_fc_w()).transpose() * dlogits).cwiseProduct((c.pflat.array() > T(0)).template cast<T>().matrix());
    Mat<T> dpc = from_flat<T>(dpflat, 2, n2, B);
    grad_mat(L.policy_conv_w()) = dpc * c.trunk.transpose();
    grad_mat(L.policy_conv_b()) = dpc.rowwise().sum();
    Mat<T> dtrunk = W.mat(L.policy_conv_w()).transpose() * dpc;

    // Value head.
    Mat<T> du(1, B);
    for (int b = 0; b < B; ++b) {
        T v = c.value(b);
        du(0, b) = T(-2) * (static_cast<T>(batch.outcomes[b]) - v) * (T(1) - v * v) * inv;
    }
    grad_mat(L.value_fc2_w()) = du * c.vh.transpose();
    grad_mat(L.value_fc2_b())(0, 0) = du.sum();
    Mat<T> dvh = (W.mat(L.value_fc2_w()).transpose() * du).cwiseProduct((c.vh.array() > T(0)).template cast<T>().matrix());
    grad_mat(L.value_fc1_w()) = dvh * c.vflat.transpose();
    grad_mat(L.value_fc1_b()) = dvh.rowwise().sum();
    Mat<T> dvflat = (W.mat(L.value_fc1_w()).transpose() * dvh).cwiseProduct((c.vflat.array() > T(0)).template cast<T>().matrix());
    Mat<T> dvc = from_flat<T>(dvflat, 1, n2, B);
    grad_mat(L.value_conv_w()) = dvc * c.trunk.transpose();
    grad_mat(L.value_conv_b())(0, 0) = dvc.sum();
    dtrunk += W.mat(L.value_conv_w()).transpose() * dvc;

    // Residual tower, last block first.
    Mat<T> da = dtrunk;
    for (int i = cfg.blocks - 1; i >= 0; --i) {
        const auto& bc = c.blocks[i];
        Mat<T> dh2 = da.cwiseProduct((bc.out.array() > T(0)).template cast<T>().matrix());
        grad_mat(L.block_w(i, 1)) = dh2 * bc.col2.transpose();
        grad_mat(L.block_b(i, 1)) = dh2.rowwise().sum();
        Mat<T> dh1 = col2im<T>(W.mat(L.block_w(i, 1)).transpose() * dh2, x, n, B);
        dh1 = dh1.cwiseProduct((bc.h1.array() > T(0)).template cast<T>().matrix());
        grad_mat(L.block_w(i, 0)) = dh1 * bc.col1.transpose();
        grad_mat(L.block_b(i, 0)) = dh1.rowwise().sum();
        Mat<T> din = col2im<T>(W.mat(L.block_w(i, 0)).transpose() * dh1, x, n, B);
        din += dh2;
        da = std::move(din);
    }

    Mat<T> dz0 = da.cwiseProduct((c.a0.array() > T(0)).template cast<T>().matrix());
    grad_mat(L.input_w()) = dz0 * c.col_in.transpose();
    grad_mat(L.input_b()) = dz0.rowwise().sum();

    const T two_c = T(2) * static_cast<T>(cfg.l2);
    if (two_c != T(0)) {
        for (std::size_t t = 0; t < params.tensors.size(); ++t) {
            auto& g = out.grads.tensors[t].data;
            const auto& w = params.tensors[t].data;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += two_c * w[k];
        }
    }
    return out;
}

template <typename T>
Parameters<T> sgd_step(const Parameters<T>& params, const Gradients<T>& grads, double learning_rate) {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("sgd_step: learning rate must be >= 0");
    if (!grads.all_finite()) throw std::invalid_argument("sgd_step: non-finite gradient");
    if (grads.tensors.size() != params.tensors.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
    Parameters<T> out = params;
    const T lr = static_cast<T>(learning_rate);
    for (std::size_t t = 0; t < out.tensors.size(); ++t) {
        auto& w = out.tensors[t].data;
        const auto& g = grads.tensors[t].data;
        if (g.size() != w.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
    }
    return out;
}

void MomentumSgd::step(Parameters<float>& params, const Gradients<float>& grads, double learning_rate) {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("MomentumSgd: learning rate must be >= 0");
    if (!grads.all_finite()) throw std::invalid_argument("MomentumSgd: non-finite gradient");
    if (velocity_.size() != params.tensors.size()) {
        velocity_.clear();
        for (const auto& t : params.tensors) velocity_.emplace_back(t.data.size(), 0.0f);
    }
    const auto mu = static_cast<float>(momentum_);
    const auto lr = static_cast<float>(learning_rate);
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        auto& w = params.tensors[t].data;
        auto& v = velocity_[t];
        const auto& g = grads.tensors[t].data;
        for (std::size_t k = 0; k < w.size(); ++k) {
            v[k] = mu * v[k] + g[k];
            w[k] -= lr * v[k];
        }
    }
}

void save_params(const Parameters<float>& params, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open model file for writing: " + path.string());
    const auto& cfg = params.config;
    os.write("MPVN", 4);
    write_u32(os, kModelVersion);
    write_u32(os, static_cast<std::uint32_t>(cfg.board_size));
    write_u32(os, static_cast<std::uint32_t>(cfg.filters));
    write_u32(os, static_cast<std::uint32_t>(cfg.blocks));
    write_u32(os, static_cast<std::uint32_t>(cfg.value_hidden));
    const auto l2_bits = std::bit_cast<std::uint64_t>(cfg.l2);
    write_u32(os, static_cast<std::uint32_t>(l2_bits));
    write_u32(os, static_cast<std::uint32_t>(l2_bits >> 32));
    for (const auto& t : params.tensors)
        for (float v : t.data) write_u32(os, std::bit_cast<std::uint32_t>(v));
    if (!os) throw std::runtime_error("failed writing model file: " + path.string());
}

Parameters<float> load_params(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open model file: " + path.string());
    char magic[4];
    if (!is.read(magic, 4)) throw std::runtime_error("model file truncated while reading magic");
    if (std::memcmp(magic, "MPVN", 4) != 0) throw std::runtime_error("not a model file (bad magic): " + path.string());
    std::uint32_t version = read_u32(is, "version");
    if (version != kModelVersion) throw std::runtime_error("unsupported model file version " + std::to_string(version));
    NetworkConfig cfg;
    cfg.board_size = static_cast<int>(read_u32(is, "board_size"));
    cfg.filters = static_cast<int>(read_u32(is, "filters"));
    cfg.blocks = static_cast<int>(read_u32(is, "blocks"));
    cfg.value_hidden = static_cast<int>(read_u32(is, "value_hidden"));
    const std::uint64_t l2_lo = read_u32(is, "l2");
    const std::uint64_t l2_hi = read_u32(is, "l2");
    cfg.l2 = std::bit_cast<double>(l2_lo | (l2_hi << 32));
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("model file has an invalid configuration: ") + e.what());
    }
    Parameters<float> p = Parameters<float>::zeros(cfg);
    for (auto& t : p.tensors)
        for (float& v : t.data) v = std::bit_cast<float>(read_u32(is, t.name));
    if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("model file has trailing data: " + path.string());
    return p;
}

Parameters<float> load_params(const std::filesystem::path& path, const NetworkConfig& expected) {
    Parameters<float> p = load_params(path);
    const auto& c = p.config;
    if (c.board_size != expected.board_size || c.filters != expected.filters || c.blocks != expected.blocks ||
        c.value_hidden != expected.value_hidden) {
        throw std::runtime_error("model shape mismatch: file has board " + std::to_string(c.board_size) + " f(" +
                                 std::to_string(c.filters) + "," + std::to_string(c.blocks) + ") hidden " +
                                 std::to_string(c.value_hidden) + ", expected board " +
                                 std::to_string(expected.board_size) + " f(" + std::to_string(expected.filters) + "," +
                                 std::to_string(expected.blocks) + ") hidden " + std::to_string(expected.value_hidden));
    }
    return p;
}

NetworkEvaluator::NetworkEvaluator(std::shared_ptr<const Parameters<float>> params, NetShape reference, std::string label)
    : params_(std::move(params)), label_(std::move(label)) {
    if (!params_) throw std::invalid_argument("NetworkEvaluator: null parameters");
    cost_ = cost_of(params_->config.shape(), reference);
}

PVOutput NetworkEvaluator::do_evaluate(const Position& p, std::uint64_t) const {
    if (p.size() != params_->config.board_size) throw std::invalid_argument("NetworkEvaluator: board size mismatch");
    std::vector<FeaturePlanes> states{p.features()};
    return to_pv_output(forward(*params_, states), 0);
}

template struct Parameters<float>;
template struct Parameters<double>;
template Prediction<float> forward(const Parameters<float>&, const std::vector<FeaturePlanes>&);
template Prediction<double> forward(const Parameters<double>&, const std::vector<FeaturePlanes>&);
template PVOutput to_pv_output(const Prediction<float>&, std::size_t);
template PVOutput to_pv_output(const Prediction<double>&, std::size_t);
template LossBreakdown<float> loss(const Parameters<float>&, const TrainingBatch&);
template LossBreakdown<double> loss(const Parameters<double>&, const TrainingBatch&);
template LossAndGradients<float> backward(const Parameters<float>&, const TrainingBatch&);
template LossAndGradients<double> backward(const Parameters<double>&, const TrainingBatch&);
template Parameters<float> sgd_step(const Parameters<float>&, const Gradients<float>&, double);
template Parameters<double> sgd_step(const Parameters<double>&, const Gradients<double>&, double);

}  // namespace mpv::nn
