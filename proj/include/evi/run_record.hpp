#pragma once

#include <Eigen/Dense>
#include <vector>

namespace evi {

// One server iteration: transmit bits and predicted gains per agent, plus
// the oracle diagnostics of the broadcast weights.
struct IterationLog {
  int k = 0;
  std::vector<int> transmitted;  // one bit per agent
  std::vector<double> gains;     // NaN for triggers that estimate no gain
  double dist_to_opt = 0.0;      // |w_k - w*|
  double loss = 0.0;             // J(w_k)
};

// Full log of one trial of the inner loop.
struct RunRecord {
  std::vector<IterationLog> iterations;  // exactly `iterations` entries
  Eigen::VectorXd final_weights;         // w after the last update
  double final_loss = 0.0;               // J(w_N)
  double initial_loss = 0.0;             // J(w_0)
  double comm_rate = 0.0;                // transmissions / (agents * iterations)
  // Broadcast weights per iteration; only filled when requested.
  std::vector<Eigen::VectorXd> weight_path;

  int total_transmissions() const {
    int total = 0;
    for (const IterationLog& it : iterations) {
      for (int bit : it.transmitted) total += bit;
    }
    return total;
  }
};

}  // namespace evi
