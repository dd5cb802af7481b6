#pragma once

// Stochastic trajectory engine: per-step update rules (jump / drift with a
// single uniform draw per step), trajectory and ensemble runners with
// counter-based seeding, signed ensemble statistics with explicit
// normalization, the mean-sign decay prediction, and the trace-fluctuation
// diagnostic.
//
// Determinism contract: (master_seed, n_traj, model, grid, policy) fix every
// output bit. Trajectory n draws from trajectory_stream(master_seed, n);
// ensemble reduction accumulates fixed-size blocks of trajectories in index
// order, so results are independent of the worker count.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "plqt/linops.hpp"
#include "plqt/model.hpp"
#include "plqt/rng.hpp"
#include "plqt/state.hpp"

namespace plqt {

/// Choice of jump rates r_i(t) > 0. The rates are free parameters of the
/// unraveling; they cancel in the ensemble average but shape single
/// trajectories.
struct RatePolicy {
  enum class Kind {
    norm_preserving_jumps,        // r_i = |gamma_i| ||L_i psi||^2 / ||psi||^2
    norm_preserving_drift_qubit,  // preset split for the 3-channel qubit model:
                                  // r_x = r_y = 1/4, r_z = (1 - tanh t)/2
    custom,
  };

  Kind kind = Kind::norm_preserving_jumps;
  std::function<std::vector<double>(const ComplexVector& psi, double t)> rate_fn;

  static RatePolicy norm_preserving_jumps() { return RatePolicy{}; }

  static RatePolicy norm_preserving_drift_qubit() {
    RatePolicy p;
    p.kind = Kind::norm_preserving_drift_qubit;
    return p;
  }

  static RatePolicy custom(std::function<std::vector<double>(const ComplexVector&, double)> fn) {
    RatePolicy p;
    p.kind = Kind::custom;
    p.rate_fn = std::move(fn);
    return p;
  }
};

/// Uniform time grid: n_steps steps of size dt from t_start, recording every
/// record_stride-th step (plus the initial point).
struct TimeGrid {
  double t_start = 0.0;
  double dt = 0.0;
  std::int64_t n_steps = 0;
  std::int64_t record_stride = 1;

  static TimeGrid uniform(double t_start, double dt, std::int64_t n_steps,
                          std::int64_t record_stride = 1) {
    if (dt <= 0.0) throw std::invalid_argument("TimeGrid: dt must be positive");
    if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
    if (record_stride < 1 || n_steps % record_stride != 0) {
      throw std::invalid_argument("TimeGrid: record_stride must divide n_steps");
    }
    return TimeGrid{t_start, dt, n_steps, record_stride};
  }

  std::int64_t n_recorded() const { return n_steps / record_stride + 1; }

  double time_at(std::int64_t record_index) const {
    return t_start + dt * static_cast<double>(record_index * record_stride);
  }

  std::vector<double> record_times() const {
    std::vector<double> out(static_cast<std::size_t>(n_recorded()));
    for (std::int64_t k = 0; k < n_recorded(); ++k) out[static_cast<std::size_t>(k)] = time_at(k);
    return out;
  }
};

/// Stored reduction of one trajectory: expectation values (unnormalized),
/// squared norm and sign at the recorded times, plus per-channel jump counts.
struct TrajectoryRecord {
  std::vector<double> grid;
  std::vector<std::vector<Complex>> observables;  // [observable][recorded time]
  std::vector<double> norm_sq;
  std::vector<int> sign;
  std::vector<std::int64_t> n_jumps;  // per channel
  std::uint64_t seed = 0;
  std::int64_t coarse_steps = 0;  // steps where sum_i r_i dt exceeded 0.1
};

/// Signed, normalized ensemble estimates on the recording grid.
/// mean[j][k] = sum_n s_n <psi_n|A_j|psi_n> / sum_n s_n <psi_n|psi_n>;
/// std_error is the standard error of the numerator divided by |N_signed/N|
/// (the normalization is treated as fixed, which is adequate while
/// |mean_sign| is not small). Times where the signed trace vanishes carry
/// NaN as an undefined-value marker.
struct EnsembleStatistics {
  std::vector<double> grid;
  std::vector<std::vector<Complex>> mean;
  std::vector<std::vector<double>> std_error;
  std::vector<double> mean_sign;
  std::vector<double> std_error_sign;
  std::vector<double> signed_trace;  // (1/N) sum_n s_n <psi_n|psi_n>
  std::int64_t n_traj = 0;
  std::vector<std::int64_t> total_jumps;  // per channel, summed over the ensemble
  std::int64_t coarse_steps = 0;
};

namespace detail {

/// Reusable per-trajectory buffers so the stepping loop does not allocate.
struct StepWorkspace {
  std::vector<JumpChannel> refreshed;
  std::vector<double> gammas;
  std::vector<double> rates;
  std::vector<ComplexVector> lpsi;  // L_i |psi>
  ComplexVector drift;
  ComplexVector hpsi;
  ComplexVector obs_tmp;
  ComplexMatrix hbuf;
};

inline const std::vector<JumpChannel>& active_channels(const PseudoLindbladModel& m,
                                                       const SignedState& st, StepWorkspace& ws) {
  if (!m.refresher) return m.channels;
  m.refresher(st.psi, st.t, ws.refreshed);
  return ws.refreshed;
}

inline void compute_rates(const std::vector<JumpChannel>& channels, const SignedState& st,
                          const RatePolicy& policy, StepWorkspace& ws) {
  const std::size_t n = channels.size();
  ws.rates.resize(n);
  switch (policy.kind) {
    case RatePolicy::Kind::norm_preserving_jumps: {
      const double norm_sq = st.psi.squaredNorm();
      for (std::size_t i = 0; i < n; ++i) {
        ws.rates[i] = std::abs(ws.gammas[i]) * ws.lpsi[i].squaredNorm() / norm_sq;
      }
      break;
    }
    case RatePolicy::Kind::norm_preserving_drift_qubit: {
      if (n != 3) {
        throw std::invalid_argument(
            "RatePolicy: norm_preserving_drift_qubit preset requires a 3-channel model");
      }
      ws.rates[0] = 0.25;
      ws.rates[1] = 0.25;
      ws.rates[2] = 0.5 * (1.0 - std::tanh(st.t));
      break;
    }
    case RatePolicy::Kind::custom: {
      ws.rates = policy.rate_fn(st.psi, st.t);
      if (ws.rates.size() != n) {
        throw std::invalid_argument("RatePolicy: custom rate function returned wrong arity");
      }
      break;
    }
  }
}

[[noreturn]] inline void throw_invalid_step(double t, double rate_dt_sum) {
  std::ostringstream msg;
  msg << "plqt_step: sum_i r_i dt = " << rate_dt_sum << " >= 1 at t = " << t
      << "; reduce the time step";
  throw std::runtime_error(msg.str());
}

/// One first-order step with a supplied uniform draw u in [0,1). Returns the
/// index of the channel that jumped, or -1 for the drift branch.
inline int step_once(SignedState& st, const PseudoLindbladModel& m, double dt,
                     const RatePolicy& policy, double u, StepWorkspace& ws,
                     std::int64_t* coarse_steps = nullptr) {
  const auto& channels = active_channels(m, st, ws);
  const std::size_t n = channels.size();
  ws.gammas.resize(n);
  if (ws.lpsi.size() != n) ws.lpsi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ws.gammas[i] = channels[i].gamma(st.t);
    ws.lpsi[i].resize(st.psi.size());
    ws.lpsi[i].noalias() = channels[i].L * st.psi;
  }
  compute_rates(channels, st, policy, ws);

  double rate_dt_sum = 0.0;
  for (double r : ws.rates) rate_dt_sum += r * dt;
  if (rate_dt_sum >= 1.0) throw_invalid_step(st.t, rate_dt_sum);
  if (rate_dt_sum > 0.1 && coarse_steps != nullptr) ++(*coarse_steps);

  // Channel selection: cumulative bins of width r_i dt in model order.
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += ws.rates[i] * dt;
    if (u < acc) {
      const double g = ws.gammas[i];
      if (g == 0.0 || ws.lpsi[i].squaredNorm() == 0.0) {
        std::ostringstream msg;
        msg << "plqt_step: jump sampled on dark channel '" << channels[i].label << "' (rate "
            << ws.rates[i] << ") at t = " << st.t;
        throw std::runtime_error(msg.str());
      }
      const double factor = std::sqrt(std::abs(g) / ws.rates[i]);
      st.psi = factor * ws.lpsi[i];
      if (g < 0.0) st.sign = -st.sign;
      st.t += dt;
      return static_cast<int>(i);
    }
  }

  // Drift branch: (1 - i dt H_eff) psi / sqrt(1 - dt sum_i r_i).
  const ComplexMatrix& h = m.hamiltonian.at(st.t, ws.hbuf);
  ws.hpsi.resize(st.psi.size());
  ws.hpsi.noalias() = h * st.psi;
  ws.drift = st.psi;
  ws.drift += Complex(0.0, -dt) * ws.hpsi;
  for (std::size_t i = 0; i < n; ++i) {
    if (ws.gammas[i] == 0.0) continue;
    ws.drift.noalias() -= (0.5 * dt * ws.gammas[i]) * (channels[i].L.adjoint() * ws.lpsi[i]);
  }
  st.psi.swap(ws.drift);
  st.psi *= 1.0 / std::sqrt(1.0 - rate_dt_sum);
  st.t += dt;
  return -1;
}

}  // namespace detail

/// Rates for every channel of the model at the state's time under the given
/// policy. Dark channels (L_i psi = 0) get rate 0 under the norm-preserving
/// jump choice.
inline std::vector<double> jump_rates(const PseudoLindbladModel& m, const SignedState& st,
                                      const RatePolicy& policy) {
  detail::StepWorkspace ws;
  const auto& channels = detail::active_channels(m, st, ws);
  const std::size_t n = channels.size();
  ws.gammas.resize(n);
  ws.lpsi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ws.gammas[i] = channels[i].gamma(st.t);
    ws.lpsi[i] = channels[i].L * st.psi;
  }
  detail::compute_rates(channels, st, policy, ws);
  return ws.rates;
}

/// Quantum jump through channel i with rate r_i:
/// psi' = sqrt(|gamma_i|) L_i psi / sqrt(r_i), sign' = sign(gamma_i) * sign.
/// Time is unchanged; the jump replaces the step's update.
inline SignedState apply_jump(const SignedState& st, const PseudoLindbladModel& m,
                              std::size_t channel_index, double rate) {
  if (channel_index >= m.channels.size()) {
    throw std::invalid_argument("apply_jump: channel index out of range");
  }
  if (rate <= 0.0) throw std::invalid_argument("apply_jump: rate must be positive");
  const auto& ch = m.channels[channel_index];
  const double g = ch.gamma(st.t);
  const ComplexVector lpsi = ch.L * st.psi;
  if (g == 0.0 || lpsi.squaredNorm() == 0.0) {
    std::ostringstream msg;
    msg << "apply_jump: jump on dark channel '" << ch.label << "' at t = " << st.t
        << " (rate/step inconsistency)";
    throw std::runtime_error(msg.str());
  }
  SignedState out;
  out.psi = std::sqrt(std::abs(g) / rate) * lpsi;
  out.sign = g < 0.0 ? -st.sign : st.sign;
  out.t = st.t;
  return out;
}

/// Deterministic drift: psi' = (1 - i dt H_eff(t)) psi / sqrt(1 - dt sum r).
inline SignedState drift_step(const SignedState& st, const PseudoLindbladModel& m, double dt,
                              const std::vector<double>& rates) {
  double rate_dt_sum = 0.0;
  for (double r : rates) rate_dt_sum += r * dt;
  if (rate_dt_sum >= 1.0) detail::throw_invalid_step(st.t, rate_dt_sum);
  const ComplexMatrix h_eff = effective_hamiltonian(m, st.t);
  SignedState out;
  out.psi = (st.psi + Complex(0.0, -dt) * (h_eff * st.psi)) / std::sqrt(1.0 - rate_dt_sum);
  out.sign = st.sign;
  out.t = st.t + dt;
  return out;
}

/// One stochastic step consuming exactly one uniform draw.
inline SignedState plqt_step(const SignedState& st, const PseudoLindbladModel& m, double dt,
                             const RatePolicy& policy, SplitMix64& rng) {
  SignedState out = st;
  detail::StepWorkspace ws;
  detail::step_once(out, m, dt, policy, rng.uniform(), ws);
  return out;
}

/// Runs one trajectory and records observables, squared norm and sign at the
/// grid's recording times (sample-and-hold after the step completes).
/// Identical inputs including the seed reproduce the record bit for bit.
inline TrajectoryRecord run_trajectory(const PseudoLindbladModel& m, const ComplexVector& psi0,
                                       int s0, const TimeGrid& grid,
                                       const std::vector<ComplexMatrix>& observables,
                                       const RatePolicy& policy, std::uint64_t seed) {
  SignedState st{psi0, s0, grid.t_start};
  validate_state(st);

  const std::size_t n_rec = static_cast<std::size_t>(grid.n_recorded());
  TrajectoryRecord rec;
  rec.seed = seed;
  rec.grid = grid.record_times();
  rec.observables.assign(observables.size(), std::vector<Complex>(n_rec));
  rec.norm_sq.resize(n_rec);
  rec.sign.resize(n_rec);
  rec.n_jumps.assign(m.channels.size(), 0);

  detail::StepWorkspace ws;
  auto record_point = [&](std::size_t k) {
    for (std::size_t j = 0; j < observables.size(); ++j) {
      ws.obs_tmp.resize(st.psi.size());
      ws.obs_tmp.noalias() = observables[j] * st.psi;
      rec.observables[j][k] = st.psi.dot(ws.obs_tmp);
    }
    rec.norm_sq[k] = st.psi.squaredNorm();
    rec.sign[k] = st.sign;
  };

  record_point(0);
  SplitMix64 rng(seed);
  for (std::int64_t step = 0; step < grid.n_steps; ++step) {
    const int jumped = detail::step_once(st, m, grid.dt, policy, rng.uniform(), ws,
                                         &rec.coarse_steps);
    if (jumped >= 0) ++rec.n_jumps[static_cast<std::size_t>(jumped)];
    if ((step + 1) % grid.record_stride == 0) {
      record_point(static_cast<std::size_t>((step + 1) / grid.record_stride));
    }
  }
  return rec;
}

namespace detail {

constexpr std::int64_t kEnsembleBlock = 256;

/// Per-block partial sums, accumulated in trajectory-index order.
struct BlockAccum {
  std::vector<Complex> sum_obs;     // [observable * n_rec + k]
  std::vector<double> sum_obs_sq;   // |s <A>|^2
  std::vector<double> sum_signed_norm;
  std::vector<double> sum_sign;
  std::vector<std::int64_t> jumps;
  std::int64_t coarse = 0;

  void init(std::size_t n_obs, std::size_t n_rec, std::size_t n_channels) {
    sum_obs.assign(n_obs * n_rec, Complex(0.0, 0.0));
    sum_obs_sq.assign(n_obs * n_rec, 0.0);
    sum_signed_norm.assign(n_rec, 0.0);
    sum_sign.assign(n_rec, 0.0);
    jumps.assign(n_channels, 0);
    coarse = 0;
  }

  void fold(const TrajectoryRecord& rec) {
    const std::size_t n_rec = rec.norm_sq.size();
    for (std::size_t k = 0; k < n_rec; ++k) {
      const double s = static_cast<double>(rec.sign[k]);
      sum_signed_norm[k] += s * rec.norm_sq[k];
      sum_sign[k] += s;
      for (std::size_t j = 0; j < rec.observables.size(); ++j) {
        const Complex x = s * rec.observables[j][k];
        sum_obs[j * n_rec + k] += x;
        sum_obs_sq[j * n_rec + k] += std::norm(x);
      }
    }
    for (std::size_t c = 0; c < rec.n_jumps.size(); ++c) jumps[c] += rec.n_jumps[c];
    coarse += rec.coarse_steps;
  }
};

/// Final reduction of block partials (in block order) into statistics.
inline EnsembleStatistics finalize_statistics(const std::vector<BlockAccum>& blocks,
                                              const TimeGrid& grid, std::size_t n_obs,
                                              std::size_t n_channels, std::int64_t n_traj) {
  const std::size_t n_rec = static_cast<std::size_t>(grid.n_recorded());
  std::vector<Complex> sum_obs(n_obs * n_rec, Complex(0.0, 0.0));
  std::vector<double> sum_obs_sq(n_obs * n_rec, 0.0);
  std::vector<double> sum_signed_norm(n_rec, 0.0);
  std::vector<double> sum_sign(n_rec, 0.0);
  std::vector<std::int64_t> jumps(n_channels, 0);
  std::int64_t coarse = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < sum_obs.size(); ++i) {
      sum_obs[i] += b.sum_obs[i];
      sum_obs_sq[i] += b.sum_obs_sq[i];
    }
    for (std::size_t k = 0; k < n_rec; ++k) {
      sum_signed_norm[k] += b.sum_signed_norm[k];
      sum_sign[k] += b.sum_sign[k];
    }
    for (std::size_t c = 0; c < n_channels; ++c) jumps[c] += b.jumps[c];
    coarse += b.coarse;
  }

  const double n = static_cast<double>(n_traj);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EnsembleStatistics stats;
  stats.grid = grid.record_times();
  stats.mean.assign(n_obs, std::vector<Complex>(n_rec));
  stats.std_error.assign(n_obs, std::vector<double>(n_rec));
  stats.mean_sign.resize(n_rec);
  stats.std_error_sign.resize(n_rec);
  stats.signed_trace.resize(n_rec);
  stats.n_traj = n_traj;
  stats.total_jumps = jumps;
  stats.coarse_steps = coarse;

  for (std::size_t k = 0; k < n_rec; ++k) {
    const double norm = sum_signed_norm[k];
    stats.signed_trace[k] = norm / n;
    const double ms = sum_sign[k] / n;
    stats.mean_sign[k] = ms;
    if (n_traj > 1) {
      const double var_s = std::max(0.0, (n - sum_sign[k] * sum_sign[k] / n) / (n - 1.0));
      stats.std_error_sign[k] = std::sqrt(var_s / n);
    } else {
      stats.std_error_sign[k] = 0.0;
    }
    for (std::size_t j = 0; j < n_obs; ++j) {
      const Complex num = sum_obs[j * n_rec + k];
      if (norm == 0.0) {
        stats.mean[j][k] = Complex(nan, nan);
        stats.std_error[j][k] = nan;
        continue;
      }
      stats.mean[j][k] = num / norm;
      if (n_traj > 1) {
        const double var =
            std::max(0.0, (sum_obs_sq[j * n_rec + k] - std::norm(num) / n) / (n - 1.0));
        stats.std_error[j][k] = std::sqrt(var / n) / std::abs(norm / n);
      } else {
        stats.std_error[j][k] = 0.0;
      }
    }
  }
  return stats;
}

}  // namespace detail

/// Runs an ensemble of N trajectories. Trajectory n uses the stream
/// trajectory_stream(master_seed, n); the reduction is the block-ordered sum
/// described above, so any worker count yields bit-identical statistics.
inline EnsembleStatistics run_ensemble(const PseudoLindbladModel& m, const ComplexVector& psi0,
                                       int s0, const TimeGrid& grid,
                                       const std::vector<ComplexMatrix>& observables,
                                       const RatePolicy& policy, std::int64_t n_traj,
                                       std::uint64_t master_seed, int workers = 1) {
  if (n_traj < 1) throw std::invalid_argument("run_ensemble: n_traj must be >= 1");
  if (workers < 1) throw std::invalid_argument("run_ensemble: workers must be >= 1");

  const std::size_t n_obs = observables.size();
  const std::size_t n_rec = static_cast<std::size_t>(grid.n_recorded());
  const std::int64_t n_blocks = (n_traj + detail::kEnsembleBlock - 1) / detail::kEnsembleBlock;
  std::vector<detail::BlockAccum> blocks(static_cast<std::size_t>(n_blocks));

  std::atomic<std::int64_t> next_block{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto work = [&]() {
    try {
      for (;;) {
        const std::int64_t b = next_block.fetch_add(1);
        if (b >= n_blocks) break;
        auto& accum = blocks[static_cast<std::size_t>(b)];
        accum.init(n_obs, n_rec, m.channels.size());
        const std::int64_t begin = b * detail::kEnsembleBlock;
        const std::int64_t end = std::min(n_traj, begin + detail::kEnsembleBlock);
        for (std::int64_t traj = begin; traj < end; ++traj) {
          accum.fold(run_trajectory(m, psi0, s0, grid, observables, policy,
                                    split_seed(master_seed, static_cast<std::uint64_t>(traj))));
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  const int n_workers = static_cast<int>(std::min<std::int64_t>(workers, n_blocks));
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  return detail::finalize_statistics(blocks, grid, n_obs, m.channels.size(), n_traj);
}

/// Mean-sign decay s(t) = exp(-2 int_0^t R) for a known sign-flip rate R(t),
/// integrated by the trapezoidal rule on the given times.
inline std::vector<double> predict_mean_sign(const std::function<double(double)>& sign_flip_rate,
                                             const std::vector<double>& times) {
  std::vector<double> out(times.size());
  if (times.empty()) return out;
  double integral = 0.0;
  double prev_t = times[0];
  double prev_r = sign_flip_rate(prev_t);
  if (prev_r < 0.0) throw std::invalid_argument("predict_mean_sign: R(t) must be non-negative");
  out[0] = 1.0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double t = times[k];
    const double r = sign_flip_rate(t);
    if (r < 0.0) throw std::invalid_argument("predict_mean_sign: R(t) must be non-negative");
    integral += 0.5 * (t - prev_t) * (prev_r + r);
    out[k] = std::exp(-2.0 * integral);
    prev_t = t;
    prev_r = r;
  }
  return out;
}

struct TraceDeviationRow {
  std::int64_t n_traj = 0;
  double max_deviation = 0.0;  // max_t |signed_trace - 1|
};

/// Runs ensembles of increasing size and reports the maximal deviation of
/// the signed trace from 1 over the grid. Ensemble j uses the sub-master
/// seed split_seed(master_seed, j).
inline std::vector<TraceDeviationRow> trace_deviation_diagnostic(
    const PseudoLindbladModel& m, const ComplexVector& psi0, const TimeGrid& grid,
    const RatePolicy& policy, const std::vector<std::int64_t>& ensemble_sizes,
    std::uint64_t master_seed, int workers = 1) {
  for (std::size_t j = 1; j < ensemble_sizes.size(); ++j) {
    if (ensemble_sizes[j] <= ensemble_sizes[j - 1]) {
      throw std::invalid_argument("trace_deviation_diagnostic: ensemble sizes must ascend");
    }
  }
  std::vector<TraceDeviationRow> rows;
  rows.reserve(ensemble_sizes.size());
  for (std::size_t j = 0; j < ensemble_sizes.size(); ++j) {
    const auto stats = run_ensemble(m, psi0, 1, grid, {}, policy, ensemble_sizes[j],
                                    split_seed(master_seed, j), workers);
    double dev = 0.0;
    for (double tr : stats.signed_trace) dev = std::max(dev, std::abs(tr - 1.0));
    rows.push_back(TraceDeviationRow{ensemble_sizes[j], dev});
  }
  return rows;
}

}  // namespace plqt
