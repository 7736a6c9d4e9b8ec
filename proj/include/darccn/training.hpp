#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "darccn/model.hpp"
#include "darccn/registry.hpp"

namespace darccn::nn {

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

// Mean over stages of the MSE between each stage's estimate and the clean
// spectrum, averaged over the batch. Supervising every stage keeps the
// recursion from collapsing onto its last iteration.
inline Var multistage_mse(const std::vector<std::vector<Var>>& stages,
                          const std::vector<Tensor>& targets) {
  if (stages.empty() || stages[0].size() != targets.size())
    throw std::invalid_argument("multistage_mse: stage/target mismatch");
  Var acc;
  for (const auto& stage : stages)
    for (std::size_t k = 0; k < targets.size(); ++k) {
      Var term = mean_sq_diff(stage[k], targets[k]);
      acc = acc.defined() ? add(acc, term) : term;
    }
  const double n = static_cast<double>(stages.size() * targets.size());
  return affine(acc, 1.0 / n, 0.0);
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParamRegistry& reg, AdamConfig cfg) : reg_(&reg), cfg_(cfg) {
    for (const auto& e : reg.entries())
      if (e.trainable) {
        m_.emplace_back(e.var.value().dims());
        v_.emplace_back(e.var.value().dims());
        names_.push_back(e.name);
      }
  }

  double& lr() { return cfg_.lr; }
  double lr_value() const { return cfg_.lr; }
  long step_count() const { return t_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t slot = 0;
    for (const auto& e : reg_->entries()) {
      if (!e.trainable) continue;
      Tensor& m = m_[slot];
      Tensor& v = v_[slot];
      ++slot;
      Tensor& p = e.var.value();
      const Tensor& g = e.var.grad();
      const bool has_grad = !g.empty();
      for (long i = 0; i < p.numel(); ++i) {
        const double gi = has_grad ? g[static_cast<std::size_t>(i)] : 0.0;
        double& mi = m[static_cast<std::size_t>(i)];
        double& vi = v[static_cast<std::size_t>(i)];
        mi = cfg_.beta1 * mi + (1.0 - cfg_.beta1) * gi;
        vi = cfg_.beta2 * vi + (1.0 - cfg_.beta2) * gi * gi;
        p[static_cast<std::size_t>(i)] -=
            cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
      }
    }
  }

  // moments ride along in checkpoints as extra tensors
  void export_state(std::vector<std::pair<std::string, Tensor>>& out) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      out.emplace_back("adam.m." + names_[i], m_[i]);
      out.emplace_back("adam.v." + names_[i], v_[i]);
    }
  }

  void import_state(const std::vector<std::pair<std::string, Tensor>>& in, long step_count) {
    std::size_t matched = 0;
    for (const auto& [name, t] : in) {
      for (std::size_t i = 0; i < names_.size(); ++i) {
        if (name == "adam.m." + names_[i]) {
          require_shape(t, m_[i].dims(), name.c_str());
          m_[i] = t;
          ++matched;
        } else if (name == "adam.v." + names_[i]) {
          require_shape(t, v_[i].dims(), name.c_str());
          v_[i] = t;
          ++matched;
        }
      }
    }
    if (matched != 2 * names_.size())
      throw protocol_error("checkpoint: optimizer state does not cover every parameter");
    t_ = step_count;
  }

 private:
  const ParamRegistry* reg_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::vector<std::string> names_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// learning-rate schedule
// ---------------------------------------------------------------------------

// Validation-driven: any epoch that fails to improve the best value extends a
// bad streak; the third consecutive miss halves the rate, the fifth stops the
// run. An improvement resets the streak, so a later plateau can halve again.
struct ScheduleState {
  double best_val = std::numeric_limits<double>::infinity();
  long bad_streak = 0;
};

enum class ScheduleAction { keep, halve, stop };

inline ScheduleAction schedule_update(ScheduleState& st, double val) {
  if (!std::isfinite(val)) throw divergence_error("validation loss is not finite");
  if (val < st.best_val) {
    st.best_val = val;
    st.bad_streak = 0;
    return ScheduleAction::keep;
  }
  ++st.bad_streak;
  if (st.bad_streak == 3) return ScheduleAction::halve;
  if (st.bad_streak >= 5) return ScheduleAction::stop;
  return ScheduleAction::keep;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainPair {
  std::vector<double> noisy, clean;
};

struct TrainConfig {
  long epochs = 100;
  long batch_size = 4;
  double lr = 2e-4;
  std::uint64_t seed = 7;
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;
};

struct EpochRecord {
  long epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  long epochs_run = 0;
  double best_val = 0.0;
  bool stopped_early = false;
  std::vector<EpochRecord> history;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw io_error("cannot open for writing: " + tmp.string());
    os << content;
    if (!os) throw io_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("rename failed: " + path.string());
}

}  // namespace detail

class Trainer {
 public:
  Trainer(Darccn& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)) {
    if (cfg_.out_dir.empty()) throw std::invalid_argument("train: output directory required");
    if (cfg_.batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
    std::filesystem::create_directories(cfg_.out_dir);
  }

  std::filesystem::path checkpoint_path() const { return cfg_.out_dir / "checkpoint.bin"; }
  std::filesystem::path sidecar_path() const { return cfg_.out_dir / "checkpoint.meta"; }
  std::filesystem::path best_path() const { return cfg_.out_dir / "best.bin"; }
  std::filesystem::path history_path() const { return cfg_.out_dir / "history.csv"; }

  TrainResult run(const std::vector<TrainPair>& train, const std::vector<TrainPair>& val,
                  bool resume = false) {
    if (train.empty() || val.empty())
      throw std::invalid_argument("train: need at least one training and one validation pair");
    Adam adam(model_.registry(), AdamConfig{cfg_.lr});
    ScheduleState sched;
    Rng rng(derive_seed(cfg_.seed, 0xA11));
    long start_epoch = 0;
    long global_step = 0;
    std::vector<EpochRecord> history;

    if (resume) {
      WeightsFile wf = load_weights(checkpoint_path());
      ModelConfig saved = config_from_entries(wf.config);
      require_same_config(saved);
      auto extra = restore(wf, model_.registry(), true);
      Sidecar sc = read_sidecar();
      adam.import_state(extra, sc.step);
      adam.lr() = sc.lr;
      sched.best_val = sc.best_val;
      sched.bad_streak = sc.bad_streak;
      rng.set_state(sc.rng_state);
      start_epoch = sc.epoch + 1;
      global_step = sc.step;
      history = read_history(sc.epoch);
    }

    TrainResult result;
    result.history = history;
    for (long epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
      const double train_loss = run_train_epoch(train, adam, epoch, global_step);
      const double val_loss = run_validation(val);

      EpochRecord rec{epoch, train_loss, val_loss, adam.lr()};
      result.history.push_back(rec);
      write_history(result.history);

      const bool improved = val_loss < sched.best_val;
      if (improved) save_weights(best_path(), snapshot_model());
      const ScheduleAction action = schedule_update(sched, val_loss);
      if (action == ScheduleAction::halve) adam.lr() *= 0.5;

      save_checkpoint(adam, sched, rng, epoch, global_step);
      if (cfg_.log)
        (*cfg_.log) << "epoch " << epoch << " train_loss " << train_loss << " val_loss "
                    << val_loss << " lr " << adam.lr()
                    << (improved ? " *" : "") << "\n";

      result.epochs_run = epoch - start_epoch + 1;
      result.best_val = sched.best_val;
      if (action == ScheduleAction::stop) {
        result.stopped_early = true;
        break;
      }
    }
    if (result.history.empty())
      throw std::invalid_argument("train: epoch budget already consumed by the checkpoint");
    result.best_val = sched.best_val;
    return result;
  }

 private:
  struct Sidecar {
    long epoch = 0;
    long step = 0;
    double lr = 0.0;
    double best_val = 0.0;
    long bad_streak = 0;
    std::uint64_t rng_state = 0;
  };

  void require_same_config(const ModelConfig& saved) const {
    const ModelConfig& cur = model_.config();
    if (saved.win_len != cur.win_len || saved.stages != cur.stages ||
        saved.scale != cur.scale || saved.glu_blocks != cur.glu_blocks ||
        saved.glu_width != cur.glu_width || saved.glu_kernel != cur.glu_kernel ||
        saved.sample_rate != cur.sample_rate)
      throw protocol_error("checkpoint: model configuration mismatch");
  }

  std::pair<Tensor, Tensor> spectra(const TrainPair& p) const {
    const StftConfig& sc = model_.stft_config();
    Tensor X = signal::pack_features(signal::stft(p.noisy, sc));
    Tensor S = signal::pack_features(signal::stft(p.clean, sc));
    return {std::move(X), std::move(S)};
  }

  double run_train_epoch(const std::vector<TrainPair>& train, Adam& adam, long epoch,
                         long& global_step) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg_.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.next_below(i))]);

    double loss_sum = 0.0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg_.batch_size));
      std::vector<Var> Xs;
      std::vector<Tensor> targets;
      for (std::size_t i = pos; i < end; ++i) {
        auto [X, S] = spectra(train[order[i]]);
        Xs.emplace_back(std::move(X), false);
        targets.push_back(std::move(S));
      }
      auto stages = model_.forward(Xs, true);
      Var loss = multistage_mse(stages, targets);
      const double loss_value = loss.value()[0];
      if (!std::isfinite(loss_value)) throw divergence_error("training loss is not finite");
      model_.registry().zero_grads();
      backward(loss);
      adam.step();
      ++global_step;
      loss_sum += loss_value * static_cast<double>(end - pos);
    }
    return loss_sum / static_cast<double>(train.size());
  }

  double run_validation(const std::vector<TrainPair>& val) {
    NoGrad ng;
    double loss_sum = 0.0;
    for (const TrainPair& p : val) {
      auto [X, S] = spectra(p);
      auto stages = model_.forward({Var(std::move(X), false)}, false);
      loss_sum += multistage_mse(stages, {S}).value()[0];
    }
    const double v = loss_sum / static_cast<double>(val.size());
    if (!std::isfinite(v)) throw divergence_error("validation loss is not finite");
    return v;
  }

  WeightsFile snapshot_model() const {
    return snapshot(model_.registry(), config_entries(model_.config()));
  }

  void save_checkpoint(const Adam& adam, const ScheduleState& sched, const Rng& rng, long epoch,
                       long global_step) const {
    WeightsFile wf = snapshot_model();
    adam.export_state(wf.tensors);
    save_weights(checkpoint_path(), wf);
    std::ostringstream os;
    os << "epoch " << epoch << "\n";
    os << "step " << global_step << "\n";
    os << "lr " << detail::format_double(adam.lr_value()) << "\n";
    os << "best_val " << detail::format_double(sched.best_val) << "\n";
    os << "bad_streak " << sched.bad_streak << "\n";
    os << "rng_state " << rng.state() << "\n";
    detail::atomic_write_text(sidecar_path(), os.str());
  }

  Sidecar read_sidecar() const {
    std::ifstream is(sidecar_path());
    if (!is) throw io_error("cannot open: " + sidecar_path().string());
    Sidecar sc;
    std::string key;
    bool seen[6] = {};
    while (is >> key) {
      if (key == "epoch") is >> sc.epoch, seen[0] = true;
      else if (key == "step") is >> sc.step, seen[1] = true;
      else if (key == "lr") is >> sc.lr, seen[2] = true;
      else if (key == "best_val") is >> sc.best_val, seen[3] = true;
      else if (key == "bad_streak") is >> sc.bad_streak, seen[4] = true;
      else if (key == "rng_state") is >> sc.rng_state, seen[5] = true;
      else throw protocol_error("checkpoint sidecar: unknown key " + key);
      if (is.fail()) throw protocol_error("checkpoint sidecar: malformed value for " + key);
    }
    for (bool s : seen)
      if (!s) throw protocol_error("checkpoint sidecar: missing field");
    return sc;
  }

  void write_history(const std::vector<EpochRecord>& history) const {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss,lr\n";
    for (const auto& r : history)
      os << r.epoch << ',' << detail::format_double(r.train_loss) << ','
         << detail::format_double(r.val_loss) << ',' << detail::format_double(r.lr) << "\n";
    detail::atomic_write_text(history_path(), os.str());
  }

  std::vector<EpochRecord> read_history(long up_to_epoch) const {
    std::ifstream is(history_path());
    if (!is) throw io_error("cannot open: " + history_path().string());
    std::string line;
    if (!std::getline(is, line) || line != "epoch,train_loss,val_loss,lr")
      throw protocol_error("history file: bad header");
    std::vector<EpochRecord> out;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      EpochRecord r;
      char* end = nullptr;
      const char* s = line.c_str();
      r.epoch = std::strtol(s, &end, 10);
      if (*end != ',') throw protocol_error("history file: malformed row");
      r.train_loss = std::strtod(end + 1, &end);
      if (*end != ',') throw protocol_error("history file: malformed row");
      r.val_loss = std::strtod(end + 1, &end);
      if (*end != ',') throw protocol_error("history file: malformed row");
      r.lr = std::strtod(end + 1, &end);
      if (r.epoch <= up_to_epoch) out.push_back(r);
    }
    return out;
  }

  Darccn& model_;
  TrainConfig cfg_;
};

}  // namespace darccn::nn
