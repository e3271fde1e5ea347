#include "hwsim/ctmc.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <thread>

#include "hwsim/rng.hpp"

namespace hwsim {

EventRates build_event_rates(const NetworkTopology& topo,
                             const ScaledParams& scaled, const IntVec& x,
                             const IntMat& z) {
  EventRates rates;
  rates.arrival = scaled.lambda_n;
  rates.service = Mat::Zero(topo.num_classes(), topo.num_pools());
  rates.abandon = Vec::Zero(topo.num_classes());
  const IntVec q = queue_of(x, z);
  for (auto [i, j] : topo.edges())
    rates.service(i, j) = scaled.mu_n(i, j) * static_cast<double>(z(i, j));
  for (int i = 0; i < topo.num_classes(); ++i)
    rates.abandon[i] = scaled.gamma_n[i] * static_cast<double>(q[i]);
  rates.total = rates.arrival.sum() + rates.service.sum() + rates.abandon.sum();
  return rates;
}

EmpiricalMeasure::EmpiricalMeasure(GridSpec spec, int num_classes, int num_pools)
    : spec_(spec), num_classes_(num_classes), num_pools_(num_pools) {}

void EmpiricalMeasure::add(const Vec& x_hat, const Control& u, double weight) {
  total_ += weight;
  std::vector<std::int32_t> key;
  key.reserve(num_classes_ + (spec_.include_u ? num_classes_ + num_pools_ : 0));
  for (int i = 0; i < num_classes_; ++i) {
    const double v = x_hat[i];
    if (v < -spec_.half_width || v >= spec_.half_width) {
      outside_ += weight;
      return;
    }
    key.push_back(static_cast<std::int32_t>(
        std::floor((v + spec_.half_width) / spec_.cell)));
  }
  if (spec_.include_u) {
    const auto nbins =
        static_cast<std::int32_t>(std::ceil(1.0 / spec_.u_cell));
    auto bin01 = [&](double v) {
      auto b = static_cast<std::int32_t>(std::floor(v / spec_.u_cell));
      return std::min(std::max(b, 0), nbins - 1);
    };
    for (int i = 0; i < num_classes_; ++i) key.push_back(bin01(u.uc[i]));
    for (int j = 0; j < num_pools_; ++j) key.push_back(bin01(u.us[j]));
  }
  cells_[key] += weight;
}

void EmpiricalMeasure::merge(const EmpiricalMeasure& other) {
  for (const auto& [key, w] : other.cells_) cells_[key] += w;
  outside_ += other.outside_;
  total_ += other.total_;
}

double EmpiricalMeasure::tv_distance(const EmpiricalMeasure& other) const {
  if (total_ <= 0 || other.total_ <= 0)
    throw Error(ErrorCode::DomainViolation, "empty empirical measure");
  if (spec_.half_width != other.spec_.half_width || spec_.cell != other.spec_.cell ||
      spec_.include_u != other.spec_.include_u || spec_.u_cell != other.spec_.u_cell)
    throw Error(ErrorCode::DomainViolation,
                "TV distance needs a shared histogram grid");
  double acc = 0.0;
  auto it1 = cells_.begin();
  auto it2 = other.cells_.begin();
  while (it1 != cells_.end() || it2 != other.cells_.end()) {
    if (it2 == other.cells_.end() ||
        (it1 != cells_.end() && it1->first < it2->first)) {
      acc += it1->second / total_;
      ++it1;
    } else if (it1 == cells_.end() || it2->first < it1->first) {
      acc += it2->second / other.total_;
      ++it2;
    } else {
      acc += std::abs(it1->second / total_ - it2->second / other.total_);
      ++it1;
      ++it2;
    }
  }
  acc += std::abs(outside_ / total_ - other.outside_ / other.total_);
  return 0.5 * acc;
}

Control control_parameterization(const NetworkTopology& topo,
                                 const ScaledParams& scaled, const IntVec& q,
                                 const IntVec& y) {
  (void)scaled;
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  Control u{Vec::Zero(I), Vec::Zero(J)};
  const auto qt = static_cast<double>(q.sum());
  const auto yt = static_cast<double>(y.sum());
  if (qt > 0)
    for (int i = 0; i < I; ++i) u.uc[i] = static_cast<double>(q[i]) / qt;
  else
    u.uc[I - 1] = 1.0;
  if (yt > 0)
    for (int j = 0; j < J; ++j) u.us[j] = static_cast<double>(y[j]) / yt;
  else
    u.us[J - 1] = 1.0;
  return u;
}

TailFit tail_decay_fit(const TailHistogram& hist) {
  if (hist.total <= 0 || hist.mass.empty())
    throw Error(ErrorCode::InsufficientTail, "no tail mass recorded");
  const double max_r =
      (static_cast<double>(hist.mass.rbegin()->first) + 1.0) * hist.bin_width;
  const int num_levels = 40;
  const double step = max_r / num_levels;
  std::vector<double> rs, log_ps;
  for (int k = 1; k < num_levels; ++k) {
    const double r = k * step;
    double above = 0.0;
    for (auto it = hist.mass.upper_bound(
             static_cast<std::int64_t>(std::floor(r / hist.bin_width)));
         it != hist.mass.end(); ++it)
      above += it->second;
    const double p = above / hist.total;
    if (p <= 0.0 || p >= 1.0) continue;
    rs.push_back(r);
    log_ps.push_back(std::log(p));
  }
  if (rs.size() < 10)
    throw Error(ErrorCode::InsufficientTail,
                "only " + std::to_string(rs.size()) +
                    " exceedance levels observed (need 10)");
  const LinearFit fit = fit_line(rs, log_ps);
  return TailFit{fit.slope, fit.r_squared, static_cast<int>(rs.size())};
}

namespace {

struct MomentTracker {
  std::vector<double> kappas;
  std::vector<double> acc_xhat, acc_qy, acc_q;
  double weight = 0.0;

  explicit MomentTracker(std::vector<double> ks)
      : kappas(std::move(ks)),
        acc_xhat(kappas.size(), 0.0),
        acc_qy(kappas.size(), 0.0),
        acc_q(kappas.size(), 0.0) {}

  void add(double dt, double norm2_xhat, double l1_q, double l1_y) {
    weight += dt;
    for (std::size_t k = 0; k < kappas.size(); ++k) {
      acc_xhat[k] += std::pow(norm2_xhat, kappas[k]) * dt;
      acc_qy[k] += std::pow(1.0 + l1_q + l1_y, kappas[k]) * dt;
      acc_q[k] += std::pow(1.0 + l1_q, kappas[k]) * dt;
    }
  }
};

}  // namespace

CtmcResult simulate_ctmc(const NetworkTopology& topo, const ScaledParams& scaled,
                         const FluidSolution& fluid,
                         const SchedulingPolicy& policy, const CostParams& costs,
                         const CtmcOptions& opts, const JwcRegion* region,
                         EmpiricalMeasure* hist) {
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  const double T = opts.horizon;
  const double burn_in = opts.burn_in_frac * T;
  const double rn = std::sqrt(static_cast<double>(scaled.n));

  IntVec x(I);
  if (opts.x0) {
    x = *opts.x0;
  } else {
    for (int i = 0; i < I; ++i)
      x[i] = std::llround(scaled.n * fluid.x_star[i]);
  }

  Philox rng(opts.seed, opts.stream);
  BatchMeans bm_cost(burn_in, T, opts.batches);
  BatchMeans bm_queue(burn_in, T, opts.batches);
  std::vector<BatchMeans> bm_pools;
  for (int j = 0; j < J; ++j) bm_pools.emplace_back(burn_in, T, opts.batches);
  MomentTracker moments(opts.kappas);

  CtmcResult out;
  out.n = scaled.n;
  out.horizon = T;
  out.seed = opts.seed;
  out.kappas = opts.kappas;
  out.x_hat0 = Vec(I);
  for (int i = 0; i < I; ++i)
    out.x_hat0[i] = (static_cast<double>(x[i]) - scaled.n * fluid.x_star[i]) / rn;
  if (opts.record_trace) out.trace = EventTrace{x, {}, 0.0};

  const std::int64_t N_total = scaled.N_n.sum();
  double t = 0.0;
  double time_in_region = 0.0;

  IntMat z = policy.decide(x);
  while (t < T) {
    const IntVec q = queue_of(x, z);
    const IntVec y = idleness_of(scaled, z);
    const std::int64_t q_total = q.sum();
    const std::int64_t y_total = y.sum();
    const bool in_region = region != nullptr && region->contains(x);

    if (opts.check_invariants) {
      // balance equations and edgewise work conservation, exactly
      bool ok = q.minCoeff() >= 0 && y.minCoeff() >= 0;
      if (ok)
        for (auto [i, j] : topo.edges())
          if (std::min(q[i], y[j]) != 0) {
            ok = false;
            break;
          }
      // queue/idleness identities against the total imbalance
      const std::int64_t imbalance = x.sum() - N_total;
      const std::int64_t theta = std::min(q_total, y_total);
      if (q_total != theta + std::max<std::int64_t>(imbalance, 0)) ok = false;
      if (y_total != theta + std::max<std::int64_t>(-imbalance, 0)) ok = false;
      if (!ok) ++out.invariant_violations;
      if (in_region && std::min(q_total, y_total) != 0)
        ++out.region_jwc_violations;
    }

    // diffusion-scaled observables, constant until the next event
    double norm1_xhat = 0.0;
    double norm2_sq = 0.0;
    for (int i = 0; i < I; ++i) {
      const double xi = (static_cast<double>(x[i]) - scaled.n * fluid.x_star[i]) / rn;
      norm1_xhat += std::abs(xi);
      norm2_sq += xi * xi;
    }
    const double l1_qhat = static_cast<double>(q_total) / rn;
    const double l1_yhat = static_cast<double>(y_total) / rn;
    double zhat_inf = 0.0;
    for (auto [i, j] : topo.edges())
      zhat_inf = std::max(
          zhat_inf, std::abs((static_cast<double>(z(i, j)) -
                              scaled.n * fluid.z_star(i, j)) / rn));
    out.max_norm_xhat = std::max(out.max_norm_xhat, norm1_xhat);
    out.lemma22_ratio =
        std::max(out.lemma22_ratio, std::max({l1_qhat, l1_yhat, zhat_inf}) /
                                        std::max(norm1_xhat, 1.0));

    double cost_now = 0.0, cost_queue_now = 0.0;
    Vec pool_now = Vec::Zero(J);
    for (int i = 0; i < I; ++i)
      cost_queue_now +=
          costs.xi[i] * std::pow(static_cast<double>(q[i]) / rn, costs.m);
    cost_now = cost_queue_now;
    for (int j = 0; j < J; ++j) {
      const double yj = static_cast<double>(y[j]) / rn;
      cost_now += costs.zeta[j] * std::pow(yj, costs.m);
      pool_now[j] = std::pow(yj, costs.m_tilde);
    }

    const EventRates rates = build_event_rates(topo, scaled, x, z);
    double dt = rates.total > 0 ? rng.exponential(rates.total) : (T - t);
    dt = std::min(dt, T - t);

    bm_cost.add(t, dt, cost_now);
    bm_queue.add(t, dt, cost_queue_now);
    for (int j = 0; j < J; ++j) bm_pools[j].add(t, dt, pool_now[j]);
    if (in_region) time_in_region += dt;
    if (t + dt > burn_in) {
      const double eff = std::min(t + dt, T) - std::max(t, burn_in);
      moments.add(eff, std::sqrt(norm2_sq), l1_qhat, l1_yhat);
      if (opts.collect_tail) {
        out.tail.total += eff;
        out.tail.mass[static_cast<std::int64_t>(
            std::floor(norm1_xhat / out.tail.bin_width))] += eff;
      }
      if (hist) {
        Vec x_hat(I);
        for (int i = 0; i < I; ++i)
          x_hat[i] =
              (static_cast<double>(x[i]) - scaled.n * fluid.x_star[i]) / rn;
        hist->add(x_hat, control_parameterization(topo, scaled, q, y), eff);
      }
    }

    t += dt;
    if (t >= T || rates.total <= 0) {
      if (out.trace) out.trace->trailing_dt = dt;
      break;
    }

    // pick the transition in a fixed category order
    double pick = rng.uniform() * rates.total;
    int cls = -1, pool = -1;
    EventTrace::EventKind kind = EventTrace::EventKind::Arrival;
    for (int i = 0; i < I && cls < 0; ++i)
      if ((pick -= rates.arrival[i]) < 0) {
        cls = i;
        kind = EventTrace::EventKind::Arrival;
      }
    if (cls < 0)
      for (auto [i, j] : topo.edges()) {
        if ((pick -= rates.service(i, j)) < 0) {
          cls = i;
          pool = j;
          kind = EventTrace::EventKind::Service;
          break;
        }
      }
    if (cls < 0)
      for (int i = 0; i < I && cls < 0; ++i)
        if ((pick -= rates.abandon[i]) < 0) {
          cls = i;
          kind = EventTrace::EventKind::Abandon;
        }
    if (cls < 0) {  // numerical slack lands on the last active category
      for (int i = I - 1; i >= 0; --i)
        if (rates.abandon[i] > 0 || rates.arrival[i] > 0) {
          cls = i;
          kind = rates.abandon[i] > 0 ? EventTrace::EventKind::Abandon
                                      : EventTrace::EventKind::Arrival;
          break;
        }
    }

    x[cls] += EventTrace::delta(kind);
    ++out.num_events;
    if (out.trace)
      out.trace->steps.push_back({dt, kind, static_cast<std::int16_t>(cls),
                                  static_cast<std::int16_t>(pool)});

    for (int i = 0; i < I; ++i) {
      const double dev =
          std::abs(static_cast<double>(x[i]) - scaled.n * fluid.x_star[i]);
      if (dev > opts.explosion_guard)
        throw Error(ErrorCode::StateExplosion,
                    "class " + std::to_string(i + 1) + " deviated by " +
                        std::to_string(dev) + " headcounts at t = " +
                        std::to_string(t));
    }
    z = policy.decide(x);
  }

  out.cost = bm_cost.estimate(opts.seed);
  out.cost_queue = bm_queue.estimate(opts.seed);
  out.cost_batches = bm_cost.batch_averages();
  out.cost_queue_batches = bm_queue.batch_averages();
  for (int j = 0; j < J; ++j) {
    out.cost_pools.push_back(bm_pools[j].estimate(opts.seed));
    out.cost_pool_batches.push_back(bm_pools[j].batch_averages());
  }
  out.frac_time_in_region = region ? time_in_region / T : 0.0;
  out.moment_xhat.assign(opts.kappas.size(), 0.0);
  out.moment_queue_idle.assign(opts.kappas.size(), 0.0);
  out.moment_queue.assign(opts.kappas.size(), 0.0);
  if (moments.weight > 0)
    for (std::size_t k = 0; k < opts.kappas.size(); ++k) {
      out.moment_xhat[k] = moments.acc_xhat[k] / moments.weight;
      out.moment_queue_idle[k] = moments.acc_qy[k] / moments.weight;
      out.moment_queue[k] = moments.acc_q[k] / moments.weight;
    }
  return out;
}

std::vector<CtmcResult> simulate_replications(
    const NetworkTopology& topo, const ScaledParams& scaled,
    const FluidSolution& fluid, const SchedulingPolicy& policy,
    const CostParams& costs, const CtmcOptions& base,
    const std::vector<std::uint64_t>& seeds, const JwcRegion* region,
    std::vector<EmpiricalMeasure>* hists) {
  std::vector<std::future<CtmcResult>> futures;
  futures.reserve(seeds.size());
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    futures.push_back(std::async(std::launch::async, [&, k]() {
      CtmcOptions opts = base;
      opts.seed = seeds[k];
      opts.stream = k;
      EmpiricalMeasure* h = hists ? &(*hists)[k] : nullptr;
      return simulate_ctmc(topo, scaled, fluid, policy, costs, opts, region, h);
    }));
  }
  std::vector<CtmcResult> results;
  results.reserve(seeds.size());
  for (auto& f : futures) results.push_back(f.get());
  return results;
}

EmpiricalMeasure empirical_measure(const NetworkTopology& topo,
                                   const ScaledParams& scaled,
                                   const FluidSolution& fluid,
                                   const SchedulingPolicy& policy,
                                   const EventTrace& trace, double horizon,
                                   double burn_in, const GridSpec& grid) {
  EmpiricalMeasure hist(grid, topo.num_classes(), topo.num_pools());
  const double rn = std::sqrt(static_cast<double>(scaled.n));
  IntVec x = trace.x0;
  double t = 0.0;
  auto visit = [&](double dt) {
    const double eff = std::min(t + dt, horizon) - std::max(t, burn_in);
    if (eff > 0) {
      const IntMat z = policy.decide(x);
      const IntVec q = queue_of(x, z);
      const IntVec y = idleness_of(scaled, z);
      Vec x_hat(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i)
        x_hat[i] = (static_cast<double>(x[i]) - scaled.n * fluid.x_star[i]) / rn;
      hist.add(x_hat, control_parameterization(topo, scaled, q, y), eff);
    }
    t += dt;
  };
  for (const auto& step : trace.steps) {
    visit(step.dt);
    x[step.cls] += EventTrace::delta(step.kind);
  }
  visit(trace.trailing_dt);
  return hist;
}

}  // namespace hwsim
