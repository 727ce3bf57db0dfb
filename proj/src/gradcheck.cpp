#include "comatch/gradcheck.hpp"

#include <cmath>

namespace comatch {

namespace {

double eval_scalar(const std::function<Tensor(Graph&, const std::vector<Tensor>&)>& f,
                   const NamedParams& params) {
  Graph g;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const auto& [name, t] : params) {
    (void)name;
    leaves.push_back(g.input(*t));
  }
  return f(g, leaves).item();
}

}  // namespace

GradCheckReport finite_diff_check(
    const std::function<Tensor(Graph&, const std::vector<Tensor>&)>& f,
    const NamedParams& params, double eps) {
  GradCheckReport report;

  // Analytic pass.
  Graph g;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const auto& [name, t] : params) {
    (void)name;
    leaves.push_back(g.input(*t));
  }
  Tensor out = f(g, leaves);
  g.backward(out);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Tensor& leaf : leaves) analytic.push_back(g.gradient(leaf));

  const double f0 = out.item();

  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::string& name = params[p].first;
    Tensor& t = *params[p].second;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.at(i);
      t.at(i) = saved + eps;
      const double fp = eval_scalar(f, params);
      t.at(i) = saved - eps;
      const double fm = eval_scalar(f, params);
      t.at(i) = saved;

      const double dplus = (fp - f0) / eps;
      const double dminus = (f0 - fm) / eps;
      // A kink inside [x-eps, x+eps] makes the one-sided slopes disagree by
      // O(1); smooth functions disagree by O(eps). Report and skip.
      const double slope_gap = std::fabs(dplus - dminus);
      if (slope_gap > 1e-3 * std::max({1.0, std::fabs(dplus), std::fabs(dminus)})) {
        report.excluded.emplace_back(name, i);
        continue;
      }

      const double gn = (fp - fm) / (2.0 * eps);
      const double ga = analytic[p].at(i);
      const double rel = std::fabs(ga - gn) / std::max({std::fabs(ga), std::fabs(gn), 1e-8});
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace comatch
