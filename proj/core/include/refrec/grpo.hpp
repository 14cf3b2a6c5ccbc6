#pragma once

#include <span>
#include <vector>

namespace refrec {

struct GrpoConfig {
  double kl_beta = 0.04;       // KL penalty coefficient
  double epsilon_std = 1e-8;   // degenerate-group guard

  void validate() const;
};

/// One sampled group of N >= 2 responses for a single query.
struct Group {
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> logprob_current;
  std::vector<double> logprob_old;

  /// Throws InvalidInput unless all four lists share a length N >= 2.
  void validate() const;
};

/// Group-relative advantages (R_i - mean) / (std + eps) with the population
/// standard deviation. A group whose spread is below eps gets all zeros.
std::vector<double> advantages(std::span<const double> rewards, double epsilon_std = 1e-8);

/// Surrogate objective to maximise:
/// (1/N) sum_i exp(lp_cur_i - lp_old_i) A_i - kl_beta * kl.
double surrogate(const Group& group, double kl, const GrpoConfig& cfg);

/// Exact KL(p || q) = sum p_i ln(p_i / q_i) with 0 ln 0 = 0.
double kl_categorical(std::span<const double> p, std::span<const double> q);

}  // namespace refrec
