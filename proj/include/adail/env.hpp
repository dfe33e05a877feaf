#pragma once

#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adail/common.hpp"
#include "adail/grid.hpp"
#include "adail/rng.hpp"

namespace adail {

// Ground-truth dynamics parameterization of one environment instance.
struct DynParams {
  std::string family_id;
  Vec values;
};

enum class ActionKind { categorical, continuous };

// A parameterized environment class: parameter ranges define the sampling
// prior p(c), source_values the domain demonstrations come from.
struct EnvFamily {
  std::string family_id;
  std::vector<std::string> param_names;
  std::vector<std::pair<double, double>> param_ranges;
  Vec source_values;
  int obs_dim = 0;
  int act_dim = 0;
  ActionKind action_kind = ActionKind::continuous;
  int horizon = 0;
  double discount = 0.99;
  double action_clip = 0.0;  // continuous actions clipped to +/- this

  int param_count() const { return static_cast<int>(param_names.size()); }

  DynParams source_params() const { return {family_id, source_values}; }

  bool in_range(const Vec& v) const {
    for (int i = 0; i < param_count(); ++i)
      if (v(i) < param_ranges[i].first || v(i) > param_ranges[i].second)
        return false;
    return true;
  }

  // affine map of each parameter onto [-1, 1]; collapsed ranges map to 0
  Vec normalize(const Vec& v) const {
    Vec n(param_count());
    for (int i = 0; i < param_count(); ++i) {
      auto [lo, hi] = param_ranges[i];
      n(i) = hi > lo ? 2.0 * (v(i) - lo) / (hi - lo) - 1.0 : 0.0;
    }
    return n;
  }

  Vec denormalize(const Vec& n) const {
    Vec v(param_count());
    for (int i = 0; i < param_count(); ++i) {
      auto [lo, hi] = param_ranges[i];
      v(i) = lo + (n(i) + 1.0) * 0.5 * (hi - lo);
    }
    return v;
  }

  // zero-centered action encoding for discriminator / posterior inputs
  Vec encode_action(const Vec& a) const {
    if (action_kind == ActionKind::categorical) {
      Vec e(1);
      e(0) = 2.0 * a(0) - 1.0;
      return e;
    }
    return a / action_clip;
  }

  GridSpec default_grid(int cells = 13) const {
    GridSpec g;
    for (int i = 0; i < param_count(); ++i)
      g.axes.push_back(
          {param_names[i], param_ranges[i].first, param_ranges[i].second, cells});
    return g;
  }

  std::vector<int> source_cell(const GridSpec& g) const {
    return g.index_of(source_values);
  }

  static EnvFamily cartpole() {
    EnvFamily f;
    f.family_id = "cartpole";
    f.param_names = {"Fm"};
    f.param_ranges = {{-1.0, 1.0}};
    f.source_values = Vec::Constant(1, 1.0);
    f.obs_dim = 4;
    f.act_dim = 1;
    f.action_kind = ActionKind::categorical;
    f.horizon = 200;
    f.discount = 0.99;
    return f;
  }

  static EnvFamily puck() {
    EnvFamily f;
    f.family_id = "puck";
    f.param_names = {"Gx", "Fr"};
    f.param_ranges = {{-5.0, 5.0}, {0.0, 4.0}};
    f.source_values = Vec::Zero(2);
    f.source_values(1) = 1.0;
    f.obs_dim = 4;
    f.act_dim = 2;
    f.action_kind = ActionKind::continuous;
    f.horizon = 100;
    f.discount = 0.99;
    f.action_clip = 10.0;
    return f;
  }

  static const EnvFamily& get(const std::string& id) {
    static const EnvFamily cp = cartpole();
    static const EnvFamily pk = puck();
    if (id == "cartpole") return cp;
    if (id == "puck") return pk;
    throw std::invalid_argument("unknown environment family '" + id + "'");
  }
};

struct StepOut {
  Vec s_next;
  double r_true = 0.0;
  bool done = false;
};

// Classic cart-pole with scalable, sign-flippable force magnitude.
// State (x, x_dot, theta, theta_dot); Euler integration, dt = 0.02.
inline StepOut cartpole_step(const Vec& s, int action, double fm) {
  constexpr double kGravity = 9.8;
  constexpr double kMassCart = 1.0;
  constexpr double kMassPole = 0.1;
  constexpr double kTotalMass = kMassCart + kMassPole;
  constexpr double kHalfLength = 0.5;
  constexpr double kPoleMassLength = kMassPole * kHalfLength;
  constexpr double kBaseForce = 10.0;
  constexpr double kDt = 0.02;
  constexpr double kThetaLimit = 12.0 * 3.14159265358979323846 / 180.0;
  constexpr double kXLimit = 2.4;

  double force = (2.0 * action - 1.0) * kBaseForce * fm;
  double x = s(0), x_dot = s(1), theta = s(2), theta_dot = s(3);
  double cos_t = std::cos(theta), sin_t = std::sin(theta);
  double temp =
      (force + kPoleMassLength * theta_dot * theta_dot * sin_t) / kTotalMass;
  double theta_acc =
      (kGravity * sin_t - cos_t * temp) /
      (kHalfLength * (4.0 / 3.0 - kMassPole * cos_t * cos_t / kTotalMass));
  double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;

  Vec next(4);
  next(0) = x + kDt * x_dot;
  next(1) = x_dot + kDt * x_acc;
  next(2) = theta + kDt * theta_dot;
  next(3) = theta_dot + kDt * theta_acc;

  bool failed = std::abs(next(0)) > kXLimit || std::abs(next(2)) > kThetaLimit;
  return {next, 1.0, failed};
}

inline double cartpole_force(int action, double fm) {
  return (2.0 * action - 1.0) * 10.0 * fm;
}

// Point mass on a plane under lateral gravity Gx and linear friction Fr.
// State (px, py, vx, vy); semi-implicit Euler, dt = 0.05.
inline StepOut puck_step(const Vec& s, const Vec& a, double gx, double fr) {
  constexpr double kDt = 0.05;
  constexpr double kClip = 10.0;
  Vec ac = a.cwiseMax(-kClip).cwiseMin(kClip);
  Vec next(4);
  next(2) = s(2) + kDt * (ac(0) + gx - fr * s(2));
  next(3) = s(3) + kDt * (ac(1) - fr * s(3));
  next(0) = s(0) + kDt * next(2);
  next(1) = s(1) + kDt * next(3);
  if (!next.allFinite())
    throw std::runtime_error("puck_step: non-finite state");
  double pos = std::sqrt(next(0) * next(0) + next(1) * next(1));
  double r = -pos - 0.01 * ac.squaredNorm();
  return {next, r, false};
}

// One environment instance. Same (family, params, seed) and identical
// action sequences produce identical trajectories.
class Env {
 public:
  Env(const EnvFamily& family, DynParams params, bool allow_out_of_range = false)
      : family_(&family), params_(std::move(params)) {
    if (params_.family_id != family.family_id)
      throw std::invalid_argument("Env: params for family '" + params_.family_id +
                                  "' used with family '" + family.family_id + "'");
    if (!allow_out_of_range && !family.in_range(params_.values))
      throw std::invalid_argument("Env: dynamics parameters out of range for '" +
                                  family.family_id + "'");
  }

  const EnvFamily& family() const { return *family_; }
  const DynParams& params() const { return params_; }
  const Vec& state() const { return state_; }
  int step_index() const { return t_; }
  bool done() const { return done_; }

  void poison_true_reward(bool on) { poison_ = on; }

  Vec reset(rng::Stream& rs) {
    t_ = 0;
    done_ = false;
    if (family_->family_id == "cartpole") {
      state_ = Vec(4);
      for (int i = 0; i < 4; ++i) state_(i) = rs.uniform(-0.05, 0.05);
    } else {
      state_ = Vec::Zero(4);
      state_(0) = rs.uniform(-2.0, 2.0);
      state_(1) = rs.uniform(-2.0, 2.0);
    }
    return state_;
  }

  Vec reset(std::uint64_t seed) {
    rng::Stream rs(seed);
    return reset(rs);
  }

  StepOut step(const Vec& action) {
    if (done_)
      throw std::logic_error("Env::step: environment episode already done");
    StepOut out;
    if (family_->family_id == "cartpole") {
      out = cartpole_step(state_, static_cast<int>(action(0)), params_.values(0));
    } else {
      out = puck_step(state_, action, params_.values(0), params_.values(1));
    }
    state_ = out.s_next;
    ++t_;
    if (t_ >= family_->horizon) out.done = true;
    done_ = out.done;
    if (poison_) out.r_true = std::numeric_limits<double>::quiet_NaN();
    return out;
  }

 private:
  const EnvFamily* family_;
  DynParams params_;
  Vec state_;
  int t_ = 0;
  bool done_ = true;  // must reset before stepping
  bool poison_ = false;
};

inline Env generate_env(const EnvFamily& family, const DynParams& c,
                        bool allow_out_of_range = false) {
  return Env(family, c, allow_out_of_range);
}

// Uniform draw from the family prior, rejecting cells covered by an
// optional blackout mask.
inline DynParams sample_dynamics(const EnvFamily& family, rng::Stream& rs,
                                 const BlackoutMask* mask = nullptr) {
  if (mask && mask->all_masked())
    throw std::invalid_argument("sample_dynamics: blackout mask covers entire range");
  for (int attempt = 0; attempt < 100000; ++attempt) {
    Vec v(family.param_count());
    for (int i = 0; i < family.param_count(); ++i)
      v(i) = rs.uniform(family.param_ranges[i].first, family.param_ranges[i].second);
    if (!mask || !mask->value_masked(v)) return {family.family_id, v};
  }
  throw std::runtime_error("sample_dynamics: rejection sampling failed");
}

// One recorded environment interaction.
struct Transition {
  Vec s;
  Vec a;
  Vec s_next;
  double r_true = 0.0;
  bool done = false;
  double logp = 0.0;
  DynParams c_true;
};

// ---------------------------------------------------------------------------
// Demonstrations. The file holds no reward column by design; imitation
// learners must work from states and actions alone.

struct DemoSet {
  std::string family_id;
  Vec source_values;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<std::vector<Transition>> episodes;
  Normalizer obs_norm;  // frozen observation statistics from expert training

  int transition_count() const {
    int n = 0;
    for (auto& e : episodes) n += static_cast<int>(e.size());
    return n;
  }
};

namespace detail {

inline std::string join_g17(const Vec& v, char sep = ';') {
  std::string s;
  for (int i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += fmt_g17(v(i));
  }
  return s;
}

inline Vec parse_vec(const std::string& s, char sep = ';') {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep))
    if (!tok.empty()) vals.push_back(std::stod(tok));
  Vec v(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
  return v;
}

}  // namespace detail

inline void write_demos(const std::string& path, const DemoSet& d) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_demos: cannot write " + path);
  os << "#adail-demos family=" << d.family_id
     << " source=" << detail::join_g17(d.source_values)
     << " obs_dim=" << d.obs_dim << " act_dim=" << d.act_dim
     << " episodes=" << d.episodes.size()
     << " obs_mean=" << detail::join_g17(d.obs_norm.mean)
     << " obs_std=" << detail::join_g17(d.obs_norm.std) << "\n";
  for (std::size_t ep = 0; ep < d.episodes.size(); ++ep) {
    int t = 0;
    for (const Transition& tr : d.episodes[ep]) {
      os << ep << ',' << t++;
      for (int i = 0; i < tr.s.size(); ++i) os << ',' << fmt_g17(tr.s(i));
      for (int i = 0; i < tr.a.size(); ++i) os << ',' << fmt_g17(tr.a(i));
      for (int i = 0; i < tr.s_next.size(); ++i) os << ',' << fmt_g17(tr.s_next(i));
      os << ',' << (tr.done ? 1 : 0) << "\n";
    }
  }
}

inline DemoSet read_demos(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_demos: cannot read " + path);
  std::string header;
  std::getline(is, header);
  if (header.rfind("#adail-demos", 0) != 0)
    throw std::runtime_error("read_demos: bad header in " + path);
  DemoSet d;
  std::size_t n_episodes = 0;
  std::stringstream hs(header);
  std::string tok;
  hs >> tok;  // #adail-demos
  while (hs >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "family") d.family_id = val;
    else if (key == "source") d.source_values = detail::parse_vec(val);
    else if (key == "obs_dim") d.obs_dim = std::stoi(val);
    else if (key == "act_dim") d.act_dim = std::stoi(val);
    else if (key == "episodes") n_episodes = std::stoul(val);
    else if (key == "obs_mean") d.obs_norm.mean = detail::parse_vec(val);
    else if (key == "obs_std") d.obs_norm.std = detail::parse_vec(val);
  }
  d.episodes.resize(n_episodes);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> cols;
    while (std::getline(ls, cell, ',')) cols.push_back(std::stod(cell));
    std::size_t want = 2 + 2 * d.obs_dim + d.act_dim + 1;
    if (cols.size() != want)
      throw std::runtime_error("read_demos: malformed row in " + path);
    std::size_t ep = static_cast<std::size_t>(cols[0]);
    if (ep >= d.episodes.size())
      throw std::runtime_error("read_demos: episode id out of range");
    Transition tr;
    int at = 2;
    tr.s = Vec(d.obs_dim);
    for (int i = 0; i < d.obs_dim; ++i) tr.s(i) = cols[at++];
    tr.a = Vec(d.act_dim);
    for (int i = 0; i < d.act_dim; ++i) tr.a(i) = cols[at++];
    tr.s_next = Vec(d.obs_dim);
    for (int i = 0; i < d.obs_dim; ++i) tr.s_next(i) = cols[at++];
    tr.done = cols[at] != 0.0;
    tr.c_true = {d.family_id, d.source_values};
    d.episodes[ep].push_back(std::move(tr));
  }
  return d;
}

}  // namespace adail
