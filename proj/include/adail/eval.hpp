#pragma once

#include <json.hpp>

#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "adail/policy.hpp"
#include "adail/posterior.hpp"

namespace adail {

// Per-cell statistic over a lattice of dynamics parameters; the paper-style
// result artifact. Masked cells are excluded from training-time sampling
// but still evaluated here.
struct Heatmap {
  std::string family_id;
  std::vector<Axis> axes;  // 1 or 2
  std::vector<double> mean;    // flat, axis 0 fastest
  std::vector<double> stdev;   // across episodes within the cell
  std::vector<char> masked;
  int episodes_per_cell = 0;
  std::string kind = "return";  // return | rmse

  int cells() const {
    int n = 1;
    for (auto& a : axes) n *= a.cells;
    return n;
  }
  GridSpec grid() const { return GridSpec{axes}; }

  double grid_mean() const {
    double s = 0.0;
    for (double v : mean) s += v;
    return s / static_cast<double>(mean.size());
  }
  // population std of cell means
  double grid_std() const {
    double m = grid_mean(), s = 0.0;
    for (double v : mean) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(mean.size()));
  }
  double masked_mean(bool inside) const {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < mean.size(); ++i)
      if ((masked[i] != 0) == inside) {
        s += mean[i];
        ++n;
      }
    return n ? s / n : 0.0;
  }
};

namespace detail {

// One deterministic-action evaluation episode; optionally records the
// denormalized per-step posterior predictions.
inline double eval_episode(const Policy& policy, const EnvFamily& fam,
                           const DynParams& c, ContextMode ctx_mode,
                           const PredictorPair* predictor, double ema_beta,
                           std::uint64_t seed, std::vector<Vec>* preds_out) {
  rng::Stream rs(seed);
  Env env = generate_env(fam, c, true);
  Vec s = env.reset(rs);
  Vec ctx(0);
  OnlineEstimate est =
      OnlineEstimate::make(predictor ? predictor->dim : 0, ema_beta);
  switch (ctx_mode) {
    case ContextMode::none:
      break;
    case ContextMode::true_params:
      ctx = fam.normalize(c.values);
      break;
    case ContextMode::random:
      ctx = Vec(policy.context_dim);
      for (int i = 0; i < policy.context_dim; ++i) ctx(i) = rs.uniform(-1.0, 1.0);
      break;
    case ContextMode::posterior:
      if (!predictor)
        throw std::invalid_argument("grid_eval: posterior context requires a predictor");
      est.update(predictor->prime(s));
      ctx = est.context();
      break;
  }
  double ret = 0.0;
  while (!env.done()) {
    ActResult act = policy.act(s, ctx, rs, true);
    StepOut out = env.step(act.action);
    ret += out.r_true;
    if (ctx_mode == ContextMode::posterior || preds_out) {
      Vec pred = predictor->step(s, act.action, out.s_next);
      if (preds_out) preds_out->push_back(fam.denormalize(pred));
      if (ctx_mode == ContextMode::posterior) {
        est.update(pred);
        ctx = est.context();
      }
    }
    s = out.s_next;
  }
  return ret;
}

template <class CellFn>
inline void for_each_cell(int cells, int workers, CellFn fn) {
  if (workers <= 1) {
    for (int f = 0; f < cells; ++f) fn(f);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([=] {
      for (int f = w; f < cells; f += workers) fn(f);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

// Mean and std of undiscounted episode return per grid cell. Per-cell
// episode seeds derive from (seed, cell, episode), so results do not depend
// on evaluation order or worker count.
inline Heatmap grid_eval(const Policy& policy, const EnvFamily& fam,
                         const GridSpec& grid, ContextMode ctx_source,
                         const PredictorPair* predictor, int episodes_per_cell,
                         std::uint64_t seed, const BlackoutMask* mask = nullptr,
                         int workers = 1, double ema_beta = 0.9) {
  if (ctx_source == ContextMode::posterior && !predictor)
    throw std::invalid_argument("grid_eval: posterior context requires a predictor");
  Heatmap h;
  h.family_id = fam.family_id;
  h.axes = grid.axes;
  h.episodes_per_cell = episodes_per_cell;
  h.kind = "return";
  int n = grid.total_cells();
  h.mean.assign(n, 0.0);
  h.stdev.assign(n, 0.0);
  h.masked.assign(n, 0);
  if (mask)
    for (int f = 0; f < n; ++f) h.masked[f] = mask->cell_masked(f) ? 1 : 0;

  detail::for_each_cell(n, workers, [&](int f) {
    DynParams c{fam.family_id, grid.cell_center(f)};
    double sum = 0.0, sumsq = 0.0;
    for (int ep = 0; ep < episodes_per_cell; ++ep) {
      double ret = detail::eval_episode(
          policy, fam, c, ctx_source, predictor, ema_beta,
          rng::derive(seed, "eval-cell", static_cast<std::uint64_t>(f),
                      static_cast<std::uint64_t>(ep)),
          nullptr);
      sum += ret;
      sumsq += ret * ret;
    }
    double m = sum / episodes_per_cell;
    h.mean[f] = m;
    h.stdev[f] = std::sqrt(std::max(0.0, sumsq / episodes_per_cell - m * m));
  });
  return h;
}

// Root-mean-square error of denormalized per-step posterior predictions
// against the cell's true parameters, rolled out under posterior context.
inline Heatmap posterior_rmse_grid(const PredictorPair& predictor,
                                   const Policy& policy, const EnvFamily& fam,
                                   const GridSpec& grid, int episodes_per_cell,
                                   std::uint64_t seed,
                                   const BlackoutMask* mask = nullptr,
                                   int workers = 1, double ema_beta = 0.9) {
  Heatmap h;
  h.family_id = fam.family_id;
  h.axes = grid.axes;
  h.episodes_per_cell = episodes_per_cell;
  h.kind = "rmse";
  int n = grid.total_cells();
  h.mean.assign(n, 0.0);
  h.stdev.assign(n, 0.0);
  h.masked.assign(n, 0);
  if (mask)
    for (int f = 0; f < n; ++f) h.masked[f] = mask->cell_masked(f) ? 1 : 0;

  detail::for_each_cell(n, workers, [&](int f) {
    DynParams c{fam.family_id, grid.cell_center(f)};
    double sum = 0.0, sumsq = 0.0;
    for (int ep = 0; ep < episodes_per_cell; ++ep) {
      std::vector<Vec> preds;
      detail::eval_episode(policy, fam, c, ContextMode::posterior, &predictor,
                           ema_beta,
                           rng::derive(seed, "rmse-cell", static_cast<std::uint64_t>(f),
                                       static_cast<std::uint64_t>(ep)),
                           &preds);
      double se = 0.0;
      long long cnt = 0;
      for (const Vec& p : preds) {
        se += (p - c.values).squaredNorm();
        cnt += c.values.size();
      }
      double rmse = cnt ? std::sqrt(se / static_cast<double>(cnt)) : 0.0;
      sum += rmse;
      sumsq += rmse * rmse;
    }
    double m = sum / episodes_per_cell;
    h.mean[f] = m;
    h.stdev[f] = std::sqrt(std::max(0.0, sumsq / episodes_per_cell - m * m));
  });
  return h;
}

// Per-parameter RMSE in raw units over every grid cell.
inline Vec posterior_rmse_per_param(const PredictorPair& predictor,
                                    const Policy& policy, const EnvFamily& fam,
                                    const GridSpec& grid, int episodes_per_cell,
                                    std::uint64_t seed, double ema_beta = 0.9) {
  Vec se = Vec::Zero(fam.param_count());
  long long count = 0;
  for (int f = 0; f < grid.total_cells(); ++f) {
    DynParams c{fam.family_id, grid.cell_center(f)};
    for (int ep = 0; ep < episodes_per_cell; ++ep) {
      std::vector<Vec> preds;
      detail::eval_episode(policy, fam, c, ContextMode::posterior, &predictor,
                           ema_beta,
                           rng::derive(seed, "rmse-cell", static_cast<std::uint64_t>(f),
                                       static_cast<std::uint64_t>(ep)),
                           &preds);
      for (const Vec& p : preds) {
        se += (p - c.values).cwiseAbs2();
        ++count;
      }
    }
  }
  return (se / static_cast<double>(std::max<long long>(1, count))).cwiseSqrt();
}

// ---------------------------------------------------------------------------
// Artifacts: CSV (+ meta line), portable pixmap, JSON sidecar.

namespace detail {

inline void viridis(double t, unsigned char* rgb) {
  static const int anchors[9][3] = {
      {68, 1, 84},    {71, 44, 122},  {59, 81, 139},  {44, 113, 142},
      {33, 144, 141}, {39, 173, 129}, {92, 200, 99},  {170, 220, 50},
      {253, 231, 37}};
  t = std::min(1.0, std::max(0.0, t));
  double x = t * 8.0;
  int lo = std::min(7, static_cast<int>(x));
  double w = x - lo;
  for (int ch = 0; ch < 3; ++ch)
    rgb[ch] = static_cast<unsigned char>(
        std::lround((1.0 - w) * anchors[lo][ch] + w * anchors[lo + 1][ch]));
}

}  // namespace detail

// CSV rows are `p1,p2,mean,std,masked` under one `#` metadata line; the
// image is a binary PPM with one block per cell and outlined masked cells.
inline void write_heatmap(const Heatmap& h, const std::string& path_base,
                          int block_size = 32) {
  GridSpec grid = h.grid();
  {  // csv
    std::ofstream os(path_base + ".csv");
    if (!os) throw std::runtime_error("write_heatmap: cannot write " + path_base + ".csv");
    os << "# family=" << h.family_id << " kind=" << h.kind
       << " episodes_per_cell=" << h.episodes_per_cell << " axes=";
    for (std::size_t d = 0; d < h.axes.size(); ++d) {
      if (d) os << "|";
      os << h.axes[d].name << ":" << fmt_g17(h.axes[d].lo) << ":"
         << fmt_g17(h.axes[d].hi) << ":" << h.axes[d].cells;
    }
    os << "\n";
    os << "p1,p2,mean,std,masked\n";
    for (int f = 0; f < h.cells(); ++f) {
      Vec c = grid.cell_center(f);
      os << fmt_g17(c(0)) << ',' << fmt_g17(c.size() > 1 ? c(1) : 0.0) << ','
         << fmt_g17(h.mean[f]) << ',' << fmt_g17(h.stdev[f]) << ','
         << int(h.masked[f]) << "\n";
    }
  }
  {  // ppm image
    int cx = h.axes[0].cells;
    int cy = h.axes.size() > 1 ? h.axes[1].cells : 1;
    int w = cx * block_size, ht = cy * block_size;
    std::vector<unsigned char> img(static_cast<std::size_t>(w) * ht * 3, 0);
    double vmin = h.mean[0], vmax = h.mean[0];
    for (double v : h.mean) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    double span = vmax > vmin ? vmax - vmin : 1.0;
    for (int f = 0; f < h.cells(); ++f) {
      int ix = f % cx, iy = (cy > 1) ? f / cx : 0;
      unsigned char rgb[3];
      detail::viridis((h.mean[f] - vmin) / span, rgb);
      int top = (cy - 1 - iy) * block_size;  // high parameter values on top
      int left = ix * block_size;
      for (int y = 0; y < block_size; ++y)
        for (int x = 0; x < block_size; ++x) {
          bool border = h.masked[f] && (y < 2 || y >= block_size - 2 ||
                                        x < 2 || x >= block_size - 2);
          std::size_t at =
              (static_cast<std::size_t>(top + y) * w + (left + x)) * 3;
          if (border) {
            img[at] = 255;
            img[at + 1] = 40;
            img[at + 2] = 40;
          } else {
            img[at] = rgb[0];
            img[at + 1] = rgb[1];
            img[at + 2] = rgb[2];
          }
        }
    }
    std::ofstream os(path_base + ".ppm", std::ios::binary);
    os << "P6\n" << w << " " << ht << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.data()),
             static_cast<std::streamsize>(img.size()));
  }
  {  // json sidecar with the grid aggregate
    nlohmann::json j;
    j["family"] = h.family_id;
    j["kind"] = h.kind;
    j["episodes_per_cell"] = h.episodes_per_cell;
    j["block_size"] = block_size;
    j["cells"] = h.cells();
    j["masked_cells"] = 0;
    int mc = 0;
    for (char m : h.masked) mc += (m != 0);
    j["masked_cells"] = mc;
    j["mean_across_cells"] = h.grid_mean();
    j["std_across_cells"] = h.grid_std();  // population std of cell means
    nlohmann::json axes = nlohmann::json::array();
    for (auto& a : h.axes)
      axes.push_back({{"name", a.name}, {"lo", a.lo}, {"hi", a.hi}, {"cells", a.cells}});
    j["axes"] = axes;
    std::ofstream os(path_base + ".json");
    os << j.dump(2) << "\n";
  }
}

inline Heatmap read_heatmap_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_heatmap_csv: cannot read " + path);
  std::string meta;
  std::getline(is, meta);
  if (meta.rfind("# ", 0) != 0)
    throw std::runtime_error("read_heatmap_csv: missing metadata line");
  Heatmap h;
  std::stringstream ms(meta.substr(2));
  std::string tok;
  while (ms >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "family") h.family_id = val;
    else if (key == "kind") h.kind = val;
    else if (key == "episodes_per_cell") h.episodes_per_cell = std::stoi(val);
    else if (key == "axes") {
      std::stringstream as(val);
      std::string axis;
      while (std::getline(as, axis, '|')) {
        std::stringstream fs(axis);
        std::string name, lo, hi, cells;
        std::getline(fs, name, ':');
        std::getline(fs, lo, ':');
        std::getline(fs, hi, ':');
        std::getline(fs, cells, ':');
        h.axes.push_back({name, std::stod(lo), std::stod(hi), std::stoi(cells)});
      }
    }
  }
  std::string header;
  std::getline(is, header);
  int n = h.cells();
  h.mean.assign(n, 0.0);
  h.stdev.assign(n, 0.0);
  h.masked.assign(n, 0);
  std::string line;
  int f = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (f >= n) throw std::runtime_error("read_heatmap_csv: too many rows");
    std::stringstream ls(line);
    std::string cell;
    std::vector<std::string> cols;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() != 5) throw std::runtime_error("read_heatmap_csv: bad row");
    h.mean[f] = std::stod(cols[2]);
    h.stdev[f] = std::stod(cols[3]);
    h.masked[f] = static_cast<char>(std::stoi(cols[4]));
    ++f;
  }
  if (f != n) throw std::runtime_error("read_heatmap_csv: row count mismatch");
  return h;
}

}  // namespace adail
