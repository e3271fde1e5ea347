#include "hwsim/diffusion.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hwsim/ctmc.hpp"
#include "hwsim/rng.hpp"

namespace hwsim {

MarkovControl MarkovControl::constant(Control u) {
  u.validate();
  MarkovControl mc;
  mc.kind_ = "constant";
  mc.fn_ = [u](const Vec&) { return u; };
  return mc;
}

MarkovControl MarkovControl::table(std::vector<Vec> points,
                                   std::vector<Control> controls) {
  if (points.empty() || points.size() != controls.size())
    throw Error(ErrorCode::ConfigError, "control table is empty or ragged");
  for (const auto& c : controls) c.validate();
  MarkovControl mc;
  mc.kind_ = "table";
  mc.fn_ = [pts = std::move(points), ctl = std::move(controls)](const Vec& x) {
    std::size_t best = 0;
    double best_d = (pts[0] - x).squaredNorm();
    for (std::size_t k = 1; k < pts.size(); ++k) {
      const double d = (pts[k] - x).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return ctl[best];
  };
  return mc;
}

MarkovControl MarkovControl::closed_form(std::function<Control(const Vec&)> fn,
                                         std::string label) {
  MarkovControl mc;
  mc.kind_ = std::move(label);
  mc.fn_ = std::move(fn);
  return mc;
}

MarkovControl MarkovControl::load_table(const std::string& path, int num_classes,
                                        int num_pools) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open control table " + path);
  std::vector<Vec> points;
  std::vector<Control> controls;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    for (auto& ch : line)
      if (ch == ':') ch = ' ';
    std::istringstream ls(line);
    Vec x(num_classes);
    Control u{Vec(num_classes), Vec(num_pools)};
    for (int k = 0; k < num_classes; ++k)
      if (!(ls >> x[k]))
        throw Error(ErrorCode::ConfigError,
                    path + ":" + std::to_string(lineno) + ": bad grid point");
    for (int k = 0; k < num_classes; ++k)
      if (!(ls >> u.uc[k]))
        throw Error(ErrorCode::ConfigError,
                    path + ":" + std::to_string(lineno) + ": bad u^c entry");
    for (int k = 0; k < num_pools; ++k)
      if (!(ls >> u.us[k]))
        throw Error(ErrorCode::ConfigError,
                    path + ":" + std::to_string(lineno) + ": bad u^s entry");
    points.push_back(std::move(x));
    controls.push_back(std::move(u));
  }
  return table(std::move(points), std::move(controls));
}

Control MarkovControl::operator()(const Vec& x_hat) const {
  Control u = fn_(x_hat);
  u.validate();
  return u;
}

DiffusionModel::DiffusionModel(const NetworkTopology& topo,
                               const LimitParams& limit,
                               const FluidSolution& fluid)
    : topo_(topo), limit_(limit) {
  ell_ = drift_offset(topo, limit, fluid);
  sigma_ = (2.0 * limit.lambda.array()).sqrt();
}

Vec DiffusionModel::drift(const Vec& x, const Control& u) const {
  return psi_drift(topo_, limit_, ell_, x, u);
}

namespace {

double weighted_sq_norm(const Vec& x, const Vec& beta) {
  return (beta.array() * x.array().square()).sum();
}

}  // namespace

double LyapunovSpec::value(const Vec& x) const {
  const double rho = weighted_sq_norm(x, beta);
  if (kind == Kind::Exponential)
    return std::exp(epsilon * rho / std::sqrt(1.0 + rho));
  if (rho >= 1.0) return std::pow(rho, kappa / 2.0);
  const double c = kappa * (kappa - 2.0) / 8.0;
  const double b = kappa * (4.0 - kappa) / 4.0;
  const double a = 1.0 - b - c;
  return a + b * rho + c * rho * rho;
}

Vec LyapunovSpec::gradient(const Vec& x) const {
  const double rho = weighted_sq_norm(x, beta);
  const Vec drho = 2.0 * (beta.array() * x.array()).matrix();
  if (kind == Kind::Exponential) {
    const double v = std::exp(epsilon * rho / std::sqrt(1.0 + rho));
    const double sp = (1.0 + rho / 2.0) * std::pow(1.0 + rho, -1.5);
    return (v * epsilon * sp) * drho;
  }
  if (rho >= 1.0) return (kappa / 2.0) * std::pow(rho, kappa / 2.0 - 1.0) * drho;
  const double c = kappa * (kappa - 2.0) / 8.0;
  const double b = kappa * (4.0 - kappa) / 4.0;
  return (b + 2.0 * c * rho) * drho;
}

Vec LyapunovSpec::hessian_diag(const Vec& x) const {
  const double rho = weighted_sq_norm(x, beta);
  const Vec drho = 2.0 * (beta.array() * x.array()).matrix();
  if (kind == Kind::Exponential) {
    const double v = std::exp(epsilon * rho / std::sqrt(1.0 + rho));
    const double sp = (1.0 + rho / 2.0) * std::pow(1.0 + rho, -1.5);
    const double spp = -(1.0 + rho / 4.0) * std::pow(1.0 + rho, -2.5);
    Vec h(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double d1 = drho[i];
      h[i] = v * (epsilon * spp * d1 * d1 + epsilon * sp * 2.0 * beta[i] +
                  epsilon * sp * d1 * epsilon * sp * d1);
    }
    return h;
  }
  double f1, f2;  // dV/drho and d2V/drho2
  if (rho >= 1.0) {
    f1 = (kappa / 2.0) * std::pow(rho, kappa / 2.0 - 1.0);
    f2 = (kappa / 2.0) * (kappa / 2.0 - 1.0) * std::pow(rho, kappa / 2.0 - 2.0);
  } else {
    const double c = kappa * (kappa - 2.0) / 8.0;
    const double b = kappa * (4.0 - kappa) / 4.0;
    f1 = b + 2.0 * c * rho;
    f2 = 2.0 * c;
  }
  Vec h(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d1 = drho[i];
    h[i] = f2 * d1 * d1 + f1 * 2.0 * beta[i];
  }
  return h;
}

bool in_cone(const Vec& x, double delta, bool plus_variant) {
  const double ex = x.sum();
  const double nx = x.norm();
  return plus_variant ? ex > delta * nx : std::abs(ex) > delta * nx;
}

double running_cost(const CostParams& costs, const Vec& x, const Control& u) {
  const double ex = x.sum();
  double r = 0.0;
  const double qp = std::pow(pos_part(ex), costs.m);
  const double ym = std::pow(neg_part(ex), costs.m);
  for (Eigen::Index i = 0; i < costs.xi.size(); ++i)
    r += costs.xi[i] * qp * std::pow(u.uc[i], costs.m);
  for (Eigen::Index j = 0; j < costs.zeta.size(); ++j)
    r += costs.zeta[j] * ym * std::pow(u.us[j], costs.m);
  return r;
}

double running_cost_queue(const CostParams& costs, const Vec& x,
                          const Control& u) {
  const double qp = std::pow(pos_part(x.sum()), costs.m);
  double r = 0.0;
  for (Eigen::Index i = 0; i < costs.xi.size(); ++i)
    r += costs.xi[i] * qp * std::pow(u.uc[i], costs.m);
  return r;
}

double running_cost_pool(const CostParams& costs, const Vec& x, const Control& u,
                         int j) {
  return std::pow(neg_part(x.sum()) * u.us[j], costs.m_tilde);
}

SdePathSummary simulate_sde(const DiffusionModel& model,
                            const MarkovControl& control, const Vec& x0,
                            const CostParams& costs, const SdeOptions& opts,
                            EmpiricalMeasure* hist) {
  if (opts.step <= 0) throw Error(ErrorCode::ConfigError, "step must be positive");
  const int I = model.dim();
  const int J = static_cast<int>(costs.zeta.size());
  const double burn_in = opts.burn_in_frac * opts.horizon;

  Philox rng(opts.seed, opts.stream);
  BatchMeans bm_cost(burn_in, opts.horizon, opts.batches);
  BatchMeans bm_queue(burn_in, opts.horizon, opts.batches);
  std::vector<BatchMeans> bm_pools;
  for (int j = 0; j < J; ++j) bm_pools.emplace_back(burn_in, opts.horizon, opts.batches);

  SdePathSummary out;
  out.horizon = opts.horizon;
  out.step = opts.step;
  out.seed = opts.seed;
  out.kappas = {1.0, 2.0, 4.0};
  std::vector<double> moment_int(out.kappas.size(), 0.0);
  double weight_total = 0.0;

  Vec x = x0;
  double t = 0.0;
  const double sqrt_h = std::sqrt(opts.step);
  while (t < opts.horizon) {
    const double h = std::min(opts.step, opts.horizon - t);
    const Control u = control(x);
    bm_cost.add(t, h, running_cost(costs, x, u));
    bm_queue.add(t, h, running_cost_queue(costs, x, u));
    for (int j = 0; j < J; ++j)
      bm_pools[j].add(t, h, running_cost_pool(costs, x, u, j));
    if (t >= burn_in) {
      const double nx = x.norm();
      for (std::size_t k = 0; k < out.kappas.size(); ++k)
        moment_int[k] += std::pow(nx, out.kappas[k]) * h;
      weight_total += h;
      if (hist) hist->add(x, u, h);
    }
    out.max_norm = std::max(out.max_norm, x.norm());

    const Vec b = model.drift(x, u);
    x += h * b;
    if (!opts.zero_noise) {
      // constant diffusion matrix; exact step scaling even on the final
      // truncated increment
      const double sh = (h == opts.step) ? sqrt_h : std::sqrt(h);
      for (int i = 0; i < I; ++i) x[i] += model.sigma()[i] * sh * rng.normal();
    }
    if (x.norm() > opts.blowup_guard)
      throw Error(ErrorCode::Blowup, "diffusion path left the guard ball at t = " +
                                         std::to_string(t));
    t += h;
  }

  out.cost = bm_cost.estimate(opts.seed);
  out.cost_queue = bm_queue.estimate(opts.seed);
  out.cost_batches = bm_cost.batch_averages();
  out.cost_queue_batches = bm_queue.batch_averages();
  for (int j = 0; j < J; ++j) {
    out.cost_pools.push_back(bm_pools[j].estimate(opts.seed));
    out.cost_pool_batches.push_back(bm_pools[j].batch_averages());
  }
  out.final_state = x;
  out.moment_averages.resize(out.kappas.size(), 0.0);
  if (weight_total > 0)
    for (std::size_t k = 0; k < out.kappas.size(); ++k)
      out.moment_averages[k] = moment_int[k] / weight_total;
  return out;
}

double generator_apply(const DiffusionModel& model,
                       const std::function<Vec(const Vec&)>& grad,
                       const std::function<Vec(const Vec&)>& hess_diag,
                       const Vec& x, const Control& u) {
  const Vec g = grad(x);
  const Vec h = hess_diag(x);
  const Vec b = model.drift(x, u);
  double out = 0.0;
  for (int i = 0; i < model.dim(); ++i)
    out += model.limit().lambda[i] * h[i] + b[i] * g[i];
  return out;
}

}  // namespace hwsim
