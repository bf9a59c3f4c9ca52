#pragma once

#include <random>
#include <vector>

#include "oracles.hpp"
#include "seqdesign/trial.hpp"

namespace testing_support {

using namespace seqdesign;

// Random +-1 covariates and treatments for `rows` subjects with a response
// each, from a std::mt19937_64 stream independent of the library's Rng.
struct RandomTrial {
  std::vector<Covariates> Z;
  std::vector<int> t;
  std::vector<int> y;
};

inline RandomTrial random_trial(std::mt19937_64& gen, std::size_t rows, std::size_t s) {
  std::bernoulli_distribution coin(0.5);
  RandomTrial out;
  for (std::size_t r = 0; r < rows; ++r) {
    Covariates z(s);
    for (auto& v : z) v = coin(gen) ? 1 : -1;
    out.Z.push_back(z);
    out.t.push_back(coin(gen) ? 1 : -1);
    out.y.push_back(coin(gen) ? 1 : 0);
  }
  return out;
}

// State with every subject allocated and responded, via the initial-block
// path so no refits are needed per row.
inline TrialState state_from(const RandomTrial& trial, const ModelSpec& spec) {
  TrialState state(spec, CauchyPrior::defaults(spec));
  state.enroll_initial(trial.Z, trial.t);
  for (int y : trial.y) state.record_response(y);
  return state;
}

inline std::vector<oracle::Vec> oracle_rows(const RandomTrial& trial) {
  std::vector<oracle::Vec> rows;
  for (std::size_t r = 0; r < trial.t.size(); ++r) rows.push_back(oracle::row_main(trial.Z[r], trial.t[r]));
  return rows;
}

inline oracle::Vec to_vec(const Vector& v) { return oracle::Vec(v.data(), v.data() + v.size()); }

inline Vector to_eigen(const oracle::Vec& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Vector random_beta(std::mt19937_64& gen, std::size_t q, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Vector b(static_cast<Eigen::Index>(q));
  for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = u(gen);
  return b;
}

inline double rel_diff(double a, double b) {
  if (a == b) return 0.0;
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300});
}

}  // namespace testing_support
