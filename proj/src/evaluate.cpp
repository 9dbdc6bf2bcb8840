#include "r0sys/analytic.hpp"
#include "r0sys/markov.hpp"

namespace r0sys::analytic {

namespace {

[[noreturn]] void unsupported(const QueueSpec& model, const char* transmission) {
  throw Error(ErrorKind::UnsupportedCombination, model_name(model) + " with " + transmission);
}

std::function<RiskReport(double)> exponential_base(const QueueSpec& model, double tol) {
  return std::visit(
      [tol](const auto& q) -> std::function<RiskReport(double)> {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, MM1>) {
          return [q](double a) { return mm1_r0(q.lambda, q.mu, a); };
        } else if constexpr (std::is_same_v<T, MMC>) {
          return [q](double a) { return mmc_r0(q.lambda, q.mu, q.c, a); };
        } else if constexpr (std::is_same_v<T, MMCK>) {
          return [q](double a) { return mmck_r0(q.lambda, q.mu, q.c, q.k, a); };
        } else if constexpr (std::is_same_v<T, PriorityMM1>) {
          return [q, tol](double a) { return markov::priority_r0(q.lambda_h, q.lambda_l, q.mu, a, tol); };
        } else if constexpr (std::is_same_v<T, Windows>) {
          return [q](double a) { return windows_r0(q.lambda_h, q.lambda_l, q.mu, a, q.f); };
        } else {
          return [q](double a) {
            require_valid(QueueSpec{q});
            return dmdm1_r0(q.m, q.mu, Exponential{a});
          };
        }
      },
      model);
}

}  // namespace

RiskReport evaluate(const QueueSpec& model, const TransmissionSpec& transmission, double tol) {
  require_valid(model);
  require_valid(transmission);
  if (const auto* e = std::get_if<Exponential>(&transmission)) return exponential_base(model, tol)(e->alpha);
  if (const auto* h = std::get_if<Hyperexponential>(&transmission)) {
    if (const auto* d = std::get_if<DmDm1>(&model)) return dmdm1_r0(d->m, d->mu, *h);
    return hyper_r0(exponential_base(model, tol), *h);
  }
  const auto* mm1 = std::get_if<MM1>(&model);
  if (const auto* p = std::get_if<PositionDependent>(&transmission)) {
    if (!mm1) unsupported(model, "position-dependent rates");
    return position_r0_mm1(mm1->lambda, mm1->mu, *p, tol);
  }
  const auto& d = std::get<DistanceThreshold>(transmission);
  if (!mm1) unsupported(model, "distance threshold");
  return distance_r0_mm1(mm1->lambda, mm1->mu, d.alpha, d.d);
}

}  // namespace r0sys::analytic
