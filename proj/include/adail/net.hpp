#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "adail/common.hpp"
#include "adail/rng.hpp"
#include "adail/tensor.hpp"

namespace adail {

struct SubnetSpec {
  std::string prefix;          // entry names are "<prefix>w0", "<prefix>b0", ...
  std::vector<int> widths;     // input, hidden..., output
};

// Named, ordered collection of learnable arrays. One ParamNet may hold
// several stacked MLPs distinguished by name prefix (e.g. a shared trunk
// plus two heads).
struct ParamNet {
  std::vector<std::pair<std::string, Mat>> entries;
  std::vector<SubnetSpec> specs;

  bool has(const std::string& name) const {
    for (auto& e : entries)
      if (e.first == name) return true;
    return false;
  }

  Mat& at(const std::string& name) {
    for (auto& e : entries)
      if (e.first == name) return e.second;
    throw std::out_of_range("ParamNet: no entry named '" + name + "'");
  }

  const Mat& at(const std::string& name) const {
    for (auto& e : entries)
      if (e.first == name) return e.second;
    throw std::out_of_range("ParamNet: no entry named '" + name + "'");
  }

  void add(const std::string& name, Mat value) {
    if (has(name))
      throw std::invalid_argument("ParamNet: duplicate entry '" + name + "'");
    entries.emplace_back(name, std::move(value));
  }

  const SubnetSpec& spec(const std::string& prefix) const {
    for (auto& s : specs)
      if (s.prefix == prefix) return s;
    throw std::out_of_range("ParamNet: no subnet '" + prefix + "'");
  }
};

// Glorot-uniform weights, zero biases, tanh hidden layers assumed.
inline void init_mlp(ParamNet& net, const std::string& prefix,
                     const std::vector<int>& widths, rng::Stream& rs) {
  if (widths.size() < 2)
    throw std::invalid_argument("init_mlp: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    int in = widths[l], out = widths[l + 1];
    double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Mat w(in, out);
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < out; ++j) w(i, j) = rs.uniform(-bound, bound);
    net.add(prefix + "w" + std::to_string(l), std::move(w));
    net.add(prefix + "b" + std::to_string(l), Mat::Zero(1, out));
  }
  net.specs.push_back({prefix, widths});
}

// Graph-building forward pass: tanh on hidden layers, linear output.
// Input is batch-rows x features; returns batch-rows x output width.
inline Node* mlp_forward(Graph& g, const ParamNet& net,
                         const std::string& prefix, Node* x) {
  const SubnetSpec& sp = net.spec(prefix);
  Node* h = x;
  for (std::size_t l = 0; l + 1 < sp.widths.size(); ++l) {
    std::string wn = prefix + "w" + std::to_string(l);
    const Mat& w = net.at(wn);
    if (h->cols() != w.rows())
      throw std::invalid_argument("layer " + wn + ": input width " +
                                  std::to_string(h->cols()) + " != expected " +
                                  std::to_string(w.rows()));
    Node* wl = g.leaf(wn, w);
    Node* bl = g.leaf(prefix + "b" + std::to_string(l),
                      net.at(prefix + "b" + std::to_string(l)));
    h = g.add(g.matmul(h, wl), bl);
    if (l + 2 < sp.widths.size()) h = g.tanh_(h);
  }
  return h;
}

// Plain (graph-free) forward for rollouts and evaluation.
inline Mat mlp_apply_batch(const ParamNet& net, const std::string& prefix,
                           const Mat& x) {
  const SubnetSpec& sp = net.spec(prefix);
  Mat h = x;
  for (std::size_t l = 0; l + 1 < sp.widths.size(); ++l) {
    const Mat& w = net.at(prefix + "w" + std::to_string(l));
    if (h.cols() != w.rows())
      throw std::invalid_argument("layer " + prefix + "w" + std::to_string(l) +
                                  ": input width " + std::to_string(h.cols()) +
                                  " != expected " + std::to_string(w.rows()));
    h = (h * w).rowwise() + net.at(prefix + "b" + std::to_string(l)).row(0);
    if (l + 2 < sp.widths.size()) h = h.array().tanh();
  }
  return h;
}

inline RowVec mlp_apply(const ParamNet& net, const std::string& prefix,
                        const RowVec& x) {
  return mlp_apply_batch(net, prefix, x);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step_count = 0;
  std::map<std::string, Mat> m;
  std::map<std::string, Mat> v;
};

// One Adam update. Gradients may cover any subset of the net's entries;
// parameters without gradients are left untouched. Non-finite gradients
// abort before any state is modified.
inline void adam_step(ParamNet& net, const GradMap& grads, AdamState& st) {
  for (auto& [name, g] : grads) {
    if (!net.has(name))
      throw std::invalid_argument("adam_step: gradient for unknown parameter '" +
                                  name + "'");
    if (!all_finite(g))
      throw std::runtime_error("adam_step: non-finite gradient for parameter '" +
                               name + "'");
  }
  st.step_count += 1;
  double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (auto& [name, g] : grads) {
    Mat& p = net.at(name);
    auto mi = st.m.find(name);
    if (mi == st.m.end()) {
      st.m[name] = Mat::Zero(p.rows(), p.cols());
      st.v[name] = Mat::Zero(p.rows(), p.cols());
      mi = st.m.find(name);
    }
    Mat& m = mi->second;
    Mat& v = st.v[name];
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseProduct(g);
    Mat mh = m / bc1;
    Mat vh = v / bc2;
    p.array() -= st.lr * mh.array() / (vh.array().sqrt() + st.eps);
  }
}

// ---------------------------------------------------------------------------
// Distribution heads

struct GaussianHead {
  RowVec mean;
  RowVec std;
};

inline GaussianHead gaussian_head(const RowVec& net_out, const RowVec& log_std) {
  if (net_out.size() != log_std.size())
    throw std::invalid_argument("gaussian_head: log_std length mismatch");
  return {net_out, log_std.array().exp()};
}

inline double gaussian_logp(const RowVec& a, const RowVec& mean,
                            const RowVec& std) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  double lp = -0.5 * kLog2Pi * static_cast<double>(a.size());
  for (int i = 0; i < a.size(); ++i) {
    double z = (a(i) - mean(i)) / std(i);
    lp += -0.5 * z * z - std::log(std(i));
  }
  return lp;
}

// Per-row Gaussian log density of fixed actions under (mean, exp(log_std)).
// mean: B x d node, log_std: 1 x d node, actions: B x d constant.
inline Node* gaussian_logp_node(Graph& g, Node* mean, Node* log_std,
                                const Mat& actions) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  int d = static_cast<int>(actions.cols());
  Node* diff = g.sub(g.constant(actions), mean);
  Node* inv_std = g.exp_(g.neg(log_std));     // 1 x d
  Node* z = g.mul(diff, inv_std);             // row broadcast
  Node* q = g.scale(g.row_sum(g.square(z)), -0.5);  // B x 1
  Node* sls = g.sum(log_std);                 // 1 x 1
  Node* lp = g.add(q, g.neg(sls));            // broadcast 1x1 over rows
  return g.add_scalar(lp, -0.5 * kLog2Pi * d);
}

// Per-row log probability of chosen discrete actions given logits.
inline Node* categorical_logp_node(Graph& g, Node* logits,
                                   const std::vector<int>& actions) {
  return g.gather_cols(g.log_softmax(logits), actions);
}

inline double categorical_logp(const RowVec& logits, int action) {
  double m = logits.maxCoeff();
  double lse = std::log((logits.array() - m).exp().sum()) + m;
  return logits(action) - lse;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "ADAILCK1", u32 entry count, then per entry
// {u32 name length, name bytes, u32 rank, u32 dims..., f32 little-endian
// payload in row-major order}. Values are stored as 32-bit floats.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated integer");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(os, u);
}

inline float get_f32(std::istream& is) {
  std::uint32_t u = get_u32(is);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace detail

inline void save_arrays(const std::string& path,
                        const std::vector<std::pair<std::string, Mat>>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write("ADAILCK1", 8);
  detail::put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (auto& [name, m] : entries) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, 2);
    detail::put_u32(os, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j)
        detail::put_f32(os, static_cast<float>(m(i, j)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline std::vector<std::pair<std::string, Mat>> load_arrays(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "ADAILCK1", 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t count = detail::get_u32(is);
  std::vector<std::pair<std::string, Mat>> out;
  out.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    std::uint32_t nlen = detail::get_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    std::uint32_t rank = detail::get_u32(is);
    if (rank != 1 && rank != 2)
      throw std::runtime_error("checkpoint: unsupported rank in " + path);
    std::uint32_t rows = 1, cols;
    if (rank == 2) {
      rows = detail::get_u32(is);
      cols = detail::get_u32(is);
    } else {
      cols = detail::get_u32(is);
    }
    Mat m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j)
        m(i, j) = static_cast<double>(detail::get_f32(is));
    if (!is) throw std::runtime_error("checkpoint: truncated payload in " + path);
    out.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

inline void save_paramnet(const std::string& path, const ParamNet& net,
                          const std::vector<std::pair<std::string, Mat>>& extra =
                              {}) {
  auto entries = net.entries;
  entries.insert(entries.end(), extra.begin(), extra.end());
  save_arrays(path, entries);
}

// Loads array values into an existing net (shapes must match). Entries in
// the file that the net does not own are returned to the caller.
inline std::vector<std::pair<std::string, Mat>> load_paramnet(
    const std::string& path, ParamNet& net) {
  auto arrays = load_arrays(path);
  std::vector<std::pair<std::string, Mat>> extra;
  for (auto& [name, m] : arrays) {
    if (net.has(name)) {
      Mat& dst = net.at(name);
      if (dst.rows() != m.rows() || dst.cols() != m.cols())
        throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                                 "' in " + path);
      dst = m;
    } else {
      extra.emplace_back(name, std::move(m));
    }
  }
  return extra;
}

}  // namespace adail
