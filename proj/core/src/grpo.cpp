#include "refrec/grpo.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "refrec/errors.hpp"

namespace refrec {

namespace {

constexpr double kSumTolerance = 1e-9;

void check_distribution(std::span<const double> v, const char* name) {
  double sum = 0.0;
  for (double x : v) {
    if (!std::isfinite(x) || x < 0.0) {
      throw InvalidInput(std::string(name) + " has a negative or non-finite entry");
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidInput(std::string(name) + " does not sum to 1");
  }
}

}  // namespace

void GrpoConfig::validate() const {
  if (!std::isfinite(kl_beta) || kl_beta < 0.0) {
    throw InvalidInput("kl_beta must be >= 0");
  }
  if (!std::isfinite(epsilon_std) || epsilon_std <= 0.0) {
    throw InvalidInput("epsilon_std must be > 0");
  }
}

void Group::validate() const {
  const std::size_t n = rewards.size();
  if (n < 2) {
    throw InvalidInput("a group needs at least two responses");
  }
  if (advantages.size() != n || logprob_current.size() != n || logprob_old.size() != n) {
    throw InvalidInput("group lists must share one length");
  }
}

std::vector<double> advantages(std::span<const double> rewards, double epsilon_std) {
  if (rewards.size() < 2) {
    throw InvalidInput("advantages need at least two rewards");
  }
  if (!std::isfinite(epsilon_std) || epsilon_std <= 0.0) {
    throw InvalidInput("epsilon_std must be > 0");
  }
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(ss / n);

  std::vector<double> out(rewards.size(), 0.0);
  if (std_dev < epsilon_std) {
    return out;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    out[i] = (rewards[i] - mean) / (std_dev + epsilon_std);
  }
  return out;
}

double surrogate(const Group& group, double kl, const GrpoConfig& cfg) {
  group.validate();
  cfg.validate();
  if (!std::isfinite(kl) || kl < 0.0) {
    throw InvalidInput("kl must be finite and >= 0");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < group.rewards.size(); ++i) {
    const double cur = group.logprob_current[i];
    const double old = group.logprob_old[i];
    if (!std::isfinite(cur) || !std::isfinite(old)) {
      throw InvalidInput("log-probabilities must be finite");
    }
    acc += std::exp(cur - old) * group.advantages[i];
  }
  return acc / static_cast<double>(group.rewards.size()) - cfg.kl_beta * kl;
}

double kl_categorical(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) {
    throw InvalidInput("KL arguments must be non-empty and of equal length");
  }
  check_distribution(p, "p");
  check_distribution(q, "q");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      throw InvalidInput("q has zero mass where p is positive");
    }
    kl += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can leave a tiny negative value for p ~= q.
  return kl < 0.0 ? 0.0 : kl;
}

}  // namespace refrec
