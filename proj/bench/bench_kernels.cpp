// Serial vs OpenMP timings for the two parallel kernels: trajectory averaging
// and whole-study replication. Each pair must also agree bitwise.
//
// usage: bench_kernels [--quick]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "seqdesign/policy_pseudo.hpp"
#include "seqdesign/study_io.hpp"

using namespace seqdesign;

namespace {

template <class F>
double seconds(int repeats, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  for (int k = 0; k < repeats; ++k) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / repeats;
}

TrialState example_state(std::size_t i, Rng& rng) {
  const ModelSpec spec = ModelSpec::main_effects(1);
  TrialState state(spec, CauchyPrior::defaults(spec));
  std::vector<Covariates> Z;
  std::vector<int> t;
  for (std::size_t k = 0; k < i; ++k) {
    Z.push_back({rng.sign_with_prob(0.5)});
    t.push_back(rng.sign_with_prob(0.5));
  }
  state.enroll_initial(Z, t);
  for (std::size_t k = 0; k < i; ++k) state.record_response(rng.uniform() < 0.5 ? 1 : 0);
  return state;
}

std::string csv(const StudyConfig& config, const StudyResult& result) {
  std::ostringstream out;
  write_results_csv(out, result_table(config, result));
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  std::printf("threads available: %d\n", omp_get_max_threads());
  bool identical = true;

  Rng rng(2024);
  const TrialState state = example_state(20, rng);
  const Criterion te = Criterion::treatment_effect(state.spec());
  const Vector beta = state.beta_hat();
  for (int M : {10, 100, quick ? 100 : 1000}) {
    const auto paths = generate_trajectories(CovariateModel::dynamic({0.0}, {0.01}), 21, 100, M, rng);
    double par = 0, ser = 0;
    const int reps = quick ? 2 : 10;
    const double t_ser = seconds(reps, [&] { ser = average_objective_serial(state, {1}, 1, paths, beta, te); });
    const double t_par = seconds(reps, [&] { par = average_objective(state, {1}, 1, paths, beta, te); });
    identical = identical && std::memcmp(&par, &ser, sizeof par) == 0;
    std::printf("average_objective M=%-5d serial %8.3f ms  parallel %8.3f ms  speedup %.2fx\n", M, 1e3 * t_ser,
                1e3 * t_par, t_ser / t_par);
  }

  StudyConfig config = study_config_from_json(nlohmann::json::parse(R"({
    "n": 60, "n0": 10, "true_beta": [0, 1, 1],
    "covariate_model": {"kind": "dynamic", "intercept": [0], "slope": [0.01]},
    "policies": [{"kind": "myopic"}, {"kind": "nonmyopic", "horizon": 2, "dist": "correct"},
                 {"kind": "pseudo", "trajectories": 20, "dist": "correct"}]
  })"));
  config.replications = quick ? 2 : 8;
  StudyResult par, ser;
  const double t_ser = seconds(1, [&] { ser = run_study_serial(config); });
  const double t_par = seconds(1, [&] { par = run_study(config); });
  identical = identical && csv(config, par) == csv(config, ser);
  std::printf("run_study R=%-2d         serial %8.3f s   parallel %8.3f s   speedup %.2fx\n", config.replications,
              t_ser, t_par, t_ser / t_par);

  std::printf("parallel and serial results %s\n", identical ? "identical" : "DIFFER");
  return identical ? 0 : 1;
}
