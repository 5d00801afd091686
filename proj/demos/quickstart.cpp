// Evaluate a contractive RNN in parallel with DEER and compare against the
// sequential rollout, then ask whether a chaotic one would be worth it.

#include <cmath>
#include <cstdio>

#include "parseq/parseq.hpp"

int main() {
  using namespace parseq;

  const std::size_t D = 20, T = 1000;
  const auto rnn = mean_field_rnn(D, 0.8, T, 0);
  const Vec s0 = random_initial_state(D, 0);

  const Trajectory truth = sequential_rollout(rnn, s0, T);
  const SolverReport rep = deer_solve(rnn, s0, SolverConfig{});

  double err = 0.0;
  for (std::size_t i = 0; i < truth.states().data().size(); ++i)
    err = std::max(err, std::abs(truth.states().data()[i] - rep.final.states().data()[i]));
  std::printf("g=0.8: DEER converged=%d in %zu iterations, max |error| = %.2e\n", rep.converged, rep.iterations, err);

  for (double g : {0.8, 2.0}) {
    const auto model = mean_field_rnn(D, g, T, 0);
    const double lambda = trajectory_lle(model, sequential_rollout(model, s0, T));
    std::printf("g=%.1f: LLE = %+.3f, tilde_mu(T=%zu) = %.3g -> %s\n", g, lambda, T, tilde_mu(lambda, T),
                lambda < 0.0 ? "parallelizable" : "expect ~T iterations");
  }
}
