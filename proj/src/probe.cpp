/*
 * Copyright 2026 The Myna Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "myna/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "myna/error.hpp"
#include "myna/random.hpp"

namespace myna::probe {
namespace {

constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

std::size_t split_slot(Split s) { return static_cast<std::size_t>(s); }

struct Moments {
  std::vector<double> m, v;
  explicit Moments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_update(std::vector<double>& w, const std::vector<double>& g, Moments& mom, double lr, std::uint64_t t) {
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    mom.m[i] = kBeta1 * mom.m[i] + (1.0 - kBeta1) * g[i];
    mom.v[i] = kBeta2 * mom.v[i] + (1.0 - kBeta2) * g[i] * g[i];
    w[i] -= lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + kAdamEps);
  }
}

// out[n, o] = x[n, i] * w[i, o] + b[o]
void affine(const std::vector<double>& x, std::size_t n, std::size_t in, const std::vector<double>& w,
            const std::vector<double>& b, std::size_t out_dim, std::vector<double>& out) {
  out.assign(n * out_dim, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double* o = out.data() + r * out_dim;
    std::copy(b.begin(), b.end(), o);
    const double* xr = x.data() + r * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      const double* wr = w.data() + k * out_dim;
      for (std::size_t c = 0; c < out_dim; ++c) o[c] += xv * wr[c];
    }
  }
}

// gw[i, o] = x^T d + 2 * l2 * w ; gb[o] = sum_n d
void affine_grad(const std::vector<double>& x, const std::vector<double>& d, std::size_t n, std::size_t in,
                 std::size_t out_dim, const std::vector<double>& w, double l2, std::vector<double>& gw,
                 std::vector<double>& gb) {
  gw.assign(in * out_dim, 0.0);
  gb.assign(out_dim, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* dr = d.data() + r * out_dim;
    const double* xr = x.data() + r * in;
    for (std::size_t c = 0; c < out_dim; ++c) gb[c] += dr[c];
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      double* g = gw.data() + k * out_dim;
      for (std::size_t c = 0; c < out_dim; ++c) g[c] += xv * dr[c];
    }
  }
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += 2.0 * l2 * w[i];
}

// U(-1/sqrt(in), 1/sqrt(in)), the usual default for linear layers.
void fan_in_uniform(std::vector<double>& w, std::size_t in, std::size_t out, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(in));
  w.resize(in * out);
  for (double& v : w) v = a * (2.0 * uniform01(rng) - 1.0);
}

// d(loss)/d(logits) for the task loss, averaged over the batch.
void loss_grad(TaskKind kind, const std::vector<double>& z, const metrics::Matrix& y,
               const std::vector<std::size_t>& label_rows, std::size_t out, std::vector<double>& d) {
  const std::size_t n = label_rows.size();
  d.assign(n * out, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* zr = z.data() + r * out;
    double* dr = d.data() + r * out;
    const std::size_t lr = label_rows[r];
    switch (kind) {
      case TaskKind::kMulticlass:
      case TaskKind::kKey: {
        const double mx = *std::max_element(zr, zr + out);
        double sum = 0.0;
        for (std::size_t c = 0; c < out; ++c) sum += std::exp(zr[c] - mx);
        for (std::size_t c = 0; c < out; ++c) dr[c] = std::exp(zr[c] - mx) / sum * inv_n;
        dr[static_cast<std::size_t>(y.at(lr, 0))] -= inv_n;
        break;
      }
      case TaskKind::kMultilabel: {
        const double scale = inv_n / static_cast<double>(out);
        for (std::size_t c = 0; c < out; ++c) dr[c] = (1.0 / (1.0 + std::exp(-zr[c])) - y.at(lr, c)) * scale;
        break;
      }
      case TaskKind::kRegression: {
        const double scale = 2.0 * inv_n / static_cast<double>(out);
        for (std::size_t c = 0; c < out; ++c) dr[c] = (zr[c] - y.at(lr, c)) * scale;
        break;
      }
    }
  }
}

void require_two_classes(const Task& task, const metrics::Matrix& y) {
  if (task.kind() == TaskKind::kRegression) return;
  if (task.kind() == TaskKind::kMultilabel) {
    for (std::size_t c = 0; c < y.cols; ++c) {
      bool pos = false, neg = false;
      for (std::size_t r = 0; r < y.rows; ++r) (y.at(r, c) > 0.5 ? pos : neg) = true;
      if (pos && neg) return;
    }
    throw TaskError("every tag has a single class in the train split");
  }
  std::set<double> seen(y.data.begin(), y.data.end());
  if (seen.size() < 2) throw TaskError("train split holds a single class");
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::vector<ProbeConfig> enumerate_grid(const GridSpec& spec) {
  std::vector<ProbeConfig> out;
  for (bool st : spec.standardize)
    for (const auto& model : spec.model)
      for (std::size_t batch : spec.batch)
        for (double lr : spec.lr)
          for (double dropout : spec.dropout)
            for (double l2 : spec.l2) out.push_back(ProbeConfig{st, model, batch, lr, dropout, l2});
  return out;
}

std::vector<ProbeConfig> enumerate_grid() { return enumerate_grid(GridSpec{}); }

Task::Task(TaskKind kind, std::size_t rows, std::size_t dim, std::vector<float> features, metrics::Matrix labels,
           std::size_t num_outputs, std::vector<std::size_t> train, std::vector<std::size_t> valid,
           std::vector<std::size_t> test)
    : kind_(kind),
      rows_(rows),
      dim_(dim),
      features_(std::move(features)),
      labels_(std::move(labels)),
      num_outputs_(num_outputs),
      train_(std::move(train)),
      valid_(std::move(valid)),
      test_(std::move(test)),
      reads_(new std::atomic<std::size_t>[3]{}) {
  if (features_.size() != rows_ * dim_) throw ShapeError("task features do not match rows x dim");
}

const std::vector<std::size_t>& Task::indices(Split split) const {
  switch (split) {
    case Split::kTrain: return train_;
    case Split::kValid: return valid_;
    case Split::kTest: return test_;
  }
  return train_;
}

metrics::Matrix Task::labels_of(Split split) const {
  reads_[split_slot(split)].fetch_add(1);
  const auto& idx = indices(split);
  metrics::Matrix out{idx.size(), labels_.cols, {}};
  out.data.reserve(idx.size() * labels_.cols);
  for (std::size_t i : idx)
    for (std::size_t c = 0; c < labels_.cols; ++c) out.data.push_back(labels_.at(i, c));
  return out;
}

std::size_t Task::label_reads(Split split) const { return reads_[split_slot(split)].load(); }

void Task::validate() const {
  if (labels_.rows != rows_) throw ValidationError("labels and features differ in row count");
  const bool class_task = kind_ == TaskKind::kMulticlass || kind_ == TaskKind::kKey;
  if (class_task) {
    if (labels_.cols != 1) throw ValidationError("class labels must be a single column");
    for (double v : labels_.data) {
      if (v < 0 || v != std::floor(v) || static_cast<std::size_t>(v) >= num_outputs_)
        throw ValidationError("class label out of range");
    }
  } else if (labels_.cols != num_outputs_) {
    throw ValidationError("label width does not match task outputs");
  }
  std::vector<unsigned char> owner(rows_, 0);
  const char* names[3] = {"train", "valid", "test"};
  for (int s = 0; s < 3; ++s) {
    const auto& idx = indices(static_cast<Split>(s));
    if (idx.empty()) throw ValidationError(std::string(names[s]) + " split is empty");
    for (std::size_t i : idx) {
      if (i >= rows_) throw ValidationError(std::string(names[s]) + " split index out of range");
      if (owner[i]) throw ValidationError("row " + std::to_string(i) + " appears in more than one split position");
      owner[i] = static_cast<unsigned char>(s + 1);
    }
  }
}

metrics::Matrix ProbeModel::predict(const Task& task, const std::vector<std::size_t>& rows) const {
  const std::size_t n = rows.size();
  std::vector<double> x(n * in);
  for (std::size_t r = 0; r < n; ++r) {
    const float* f = task.row(rows[r]);
    for (std::size_t k = 0; k < in; ++k) x[r * in + k] = (f[k] - mean[k]) * inv_std[k];
  }
  std::vector<double> h, z;
  if (hidden == 0) {
    affine(x, n, in, w1, b1, out, z);
  } else {
    affine(x, n, in, w1, b1, hidden, h);
    for (double& v : h) v = std::max(v, 0.0);
    affine(h, n, hidden, w2, b2, out, z);
  }
  return metrics::Matrix{n, out, std::move(z)};
}

CellResult train_probe(const Task& task, const ProbeConfig& cfg, std::uint64_t seed, const TrainLimits& limits) {
  if (cfg.model != "linear" && cfg.model != "mlp") throw ConfigError("probe model must be linear or mlp");
  if (cfg.batch == 0) throw ParameterError("probe batch must be positive");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ParameterError("probe dropout must lie in [0, 1)");
  const auto& train_rows = task.indices(Split::kTrain);
  const auto& valid_rows = task.indices(Split::kValid);
  if (train_rows.empty() || valid_rows.empty()) throw ValidationError("probe needs non-empty train and valid splits");
  const metrics::Matrix y_train = task.labels_of(Split::kTrain);
  require_two_classes(task, y_train);
  const metrics::Matrix y_valid = task.labels_of(Split::kValid);

  Rng rng = derive_rng(seed, 0x9B0BE);
  ProbeModel model;
  model.config = cfg;
  model.in = task.dim();
  model.out = task.num_outputs();
  model.hidden = cfg.model == "mlp" ? kHiddenUnits : 0;
  model.mean.assign(model.in, 0.0);
  model.inv_std.assign(model.in, 1.0);
  if (cfg.standardize) {
    std::vector<double> sq(model.in, 0.0);
    for (std::size_t i : train_rows) {
      const float* f = task.row(i);
      for (std::size_t k = 0; k < model.in; ++k) {
        model.mean[k] += f[k];
        sq[k] += static_cast<double>(f[k]) * f[k];
      }
    }
    const double n = static_cast<double>(train_rows.size());
    for (std::size_t k = 0; k < model.in; ++k) {
      model.mean[k] /= n;
      const double var = std::max(0.0, sq[k] / n - model.mean[k] * model.mean[k]);
      model.inv_std[k] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }
  const std::size_t first_out = model.hidden ? model.hidden : model.out;
  fan_in_uniform(model.w1, model.in, first_out, rng);
  model.b1.assign(first_out, 0.0);
  if (model.hidden) {
    fan_in_uniform(model.w2, model.hidden, model.out, rng);
    model.b2.assign(model.out, 0.0);
  }
  Moments mw1(model.w1.size()), mb1(model.b1.size()), mw2(model.w2.size()), mb2(model.b2.size());

  const std::string primary = metrics::primary_metric(task.kind());
  CellResult result;
  result.config = cfg;
  result.valid_metric = -std::numeric_limits<double>::infinity();
  result.model = model;
  bool improved_once = false;
  std::size_t since_best = 0;
  std::uint64_t t = 0;
  const double keep = 1.0 - cfg.dropout;

  std::vector<std::size_t> order(train_rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> x, h, z, d, dh, gw1, gb1, gw2, gb2;
  std::vector<std::size_t> label_rows;
  for (std::size_t epoch = 1; epoch <= limits.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - start);
      x.assign(n * model.in, 0.0);
      label_rows.resize(n);
      for (std::size_t r = 0; r < n; ++r) {
        label_rows[r] = order[start + r];
        const float* f = task.row(train_rows[label_rows[r]]);
        for (std::size_t k = 0; k < model.in; ++k) {
          if (cfg.dropout > 0.0 && uniform01(rng) < cfg.dropout) continue;
          x[r * model.in + k] = (f[k] - model.mean[k]) * model.inv_std[k] / keep;
        }
      }
      ++t;
      if (!model.hidden) {
        affine(x, n, model.in, model.w1, model.b1, model.out, z);
        loss_grad(task.kind(), z, y_train, label_rows, model.out, d);
        affine_grad(x, d, n, model.in, model.out, model.w1, cfg.l2, gw1, gb1);
      } else {
        affine(x, n, model.in, model.w1, model.b1, model.hidden, h);
        for (double& v : h) v = std::max(v, 0.0);
        affine(h, n, model.hidden, model.w2, model.b2, model.out, z);
        loss_grad(task.kind(), z, y_train, label_rows, model.out, d);
        affine_grad(h, d, n, model.hidden, model.out, model.w2, cfg.l2, gw2, gb2);
        dh.assign(n * model.hidden, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < model.hidden; ++j) {
            if (h[r * model.hidden + j] <= 0.0) continue;
            const double* w = model.w2.data() + j * model.out;
            const double* dr = d.data() + r * model.out;
            double acc = 0.0;
            for (std::size_t c = 0; c < model.out; ++c) acc += w[c] * dr[c];
            dh[r * model.hidden + j] = acc;
          }
        }
        affine_grad(x, dh, n, model.in, model.hidden, model.w1, cfg.l2, gw1, gb1);
        adam_update(model.w2, gw2, mw2, cfg.lr, t);
        adam_update(model.b2, gb2, mb2, cfg.lr, t);
      }
      adam_update(model.w1, gw1, mw1, cfg.lr, t);
      adam_update(model.b1, gb1, mb1, cfg.lr, t);
    }
    result.epochs = epoch;
    const double metric = metrics::compute(task.kind(), model.predict(task, valid_rows), y_valid, false).at(primary);
    if (metric > result.valid_metric) {
      result.valid_metric = metric;
      result.best_epoch = epoch;
      result.model = model;
      improved_once = true;
      since_best = 0;
    } else if (++since_best >= limits.patience) {
      break;
    }
  }
  if (!improved_once) {
    // Metric never finite: keep the final weights.
    result.model = model;
    result.valid_metric = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

std::size_t select_best(const std::vector<double>& valid_metrics) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < valid_metrics.size(); ++i) {
    if (valid_metrics[i] > valid_metrics[best] || (std::isnan(valid_metrics[best]) && !std::isnan(valid_metrics[i])))
      best = i;
  }
  return best;
}

ProbeResult run_grid(const Task& task, const std::vector<ProbeConfig>& grid, const GridOptions& options) {
  if (grid.empty()) throw ConfigError("probe grid is empty");
  task.validate();
  const std::size_t test_reads_before = task.label_reads(Split::kTest);

  ProbeResult result;
  result.rows.resize(grid.size());
  std::vector<double> valid(grid.size());
  // Only the running winner's weights are retained; the order (metric, then
  // lowest index) makes the choice independent of completion order.
  std::mutex mu;
  std::size_t best_index = grid.size();
  ProbeModel best_model;
  std::exception_ptr failure;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      try {
        CellResult cell = train_probe(task, grid[i], splitmix64(options.seed ^ (0xC0FFEEULL + i)), options.limits);
        std::lock_guard<std::mutex> lock(mu);
        result.rows[i] = GridRow{grid[i], cell.valid_metric, cell.epochs};
        valid[i] = cell.valid_metric;
        const bool better = best_index == grid.size() ||
                            cell.valid_metric > valid[best_index] ||
                            (cell.valid_metric == valid[best_index] && i < best_index) ||
                            (std::isnan(valid[best_index]) && (!std::isnan(cell.valid_metric) || i < best_index));
        if (better) {
          best_index = i;
          best_model = std::move(cell.model);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        next.store(grid.size());
        return;
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, grid.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  result.best_index = select_best(valid);
  if (result.best_index != best_index) throw ContractError("grid winner bookkeeping diverged");
  result.best = grid[result.best_index];
  result.valid_metric = valid[result.best_index];
  result.test_reads_during_selection = task.label_reads(Split::kTest) - test_reads_before;

  const auto& test_rows = task.indices(Split::kTest);
  result.test_metrics = metrics::compute(task.kind(), best_model.predict(task, test_rows), task.labels_of(Split::kTest));
  return result;
}

std::string results_csv(const ProbeResult& result) {
  std::ostringstream out;
  out << "config_id,standardize,model,batch,lr,dropout,l2,valid_metric";
  for (const auto& [name, value] : result.test_metrics) out << ",test_" << name;
  out << '\n';
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& row = result.rows[i];
    const auto& c = row.config;
    out << i << ',' << (c.standardize ? "on" : "off") << ',' << c.model << ',' << c.batch << ',' << fmt_double(c.lr)
        << ',' << fmt_double(c.dropout) << ',' << fmt_double(c.l2) << ',' << fmt_double(row.valid_metric);
    for (const auto& [name, value] : result.test_metrics) {
      out << ',';
      if (i == result.best_index) out << fmt_double(value);
    }
    out << '\n';
  }
  return out.str();
}

io::TensorTable feature_table(const std::vector<float>& features, std::size_t dim, const metrics::Matrix& labels,
                              const std::vector<std::size_t>& train, const std::vector<std::size_t>& valid,
                              const std::vector<std::size_t>& test, const std::string& blob) {
  io::TensorTable table;
  table.blob = blob;
  const std::uint64_t n = dim ? features.size() / dim : 0;
  table.add("features", {n, dim}, features);
  std::vector<float> y(labels.data.begin(), labels.data.end());
  table.add("labels", {labels.rows, labels.cols}, std::move(y));
  auto as_float = [](const std::vector<std::size_t>& idx) {
    return std::vector<float>(idx.begin(), idx.end());
  };
  table.add("split_train", {train.size()}, as_float(train));
  table.add("split_valid", {valid.size()}, as_float(valid));
  table.add("split_test", {test.size()}, as_float(test));
  return table;
}

Task task_from_table(const io::TensorTable& table, TaskKind kind, const std::string& features_name) {
  const auto& f = table.at(features_name);
  const auto& l = table.at("labels");
  if (f.shape.size() != 2) throw FormatError(features_name + " must be a matrix");
  if (l.shape.size() != 2) throw FormatError("labels must be a matrix");
  metrics::Matrix labels{l.shape[0], l.shape[1], std::vector<double>(l.data.begin(), l.data.end())};
  auto indices = [&](const char* name) {
    std::vector<std::size_t> out;
    for (float v : table.at(name).data) {
      if (v < 0 || v != std::floor(v)) throw ValidationError(std::string(name) + " holds a non-index value");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  };
  std::size_t outputs = labels.cols;
  if (kind == TaskKind::kKey) {
    outputs = metrics::kNumKeys;
  } else if (kind == TaskKind::kMulticlass) {
    double mx = 0.0;
    for (double v : labels.data) mx = std::max(mx, v);
    outputs = std::max<std::size_t>(2, static_cast<std::size_t>(mx) + 1);
  }
  return Task(kind, f.shape[0], f.shape[1], f.data, std::move(labels), outputs, indices("split_train"),
              indices("split_valid"), indices("split_test"));
}

}  // namespace myna::probe
