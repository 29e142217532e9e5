#pragma once

#include <cstddef>
#include <span>

#include "eclab/agents.hpp"

namespace eclab {

struct MetricsRecord {
  long iteration = 0;
  double comacc_train = 0.0;
  double comacc_test = 0.0;
  double mean_log_prior_train = 0.0;
  double mean_log_prior_test = 0.0;
  double recon_loss = 0.0;
  double kl = 0.0;
  double beta = 0.0;
  double entropy = 0.0;
  double wall_seconds = 0.0;
};

/// Meanings are evaluated in chunks of this many rows.
inline constexpr std::size_t kEvalChunk = 1024;

/// Fraction of (meaning, draw) pairs reconstructed exactly from the greedy
/// message. `draws` only matters for RandomBranching.
template <typename T>
double comacc(const Sender<T>& sender, const Receiver<T>& receiver, std::span<const Meaning> meanings,
              Strategy strategy, Rng& eval_rng, int draws = 1);

/// Mean log P_prior of the greedy messages. Throws without a prior head.
template <typename T>
double mean_log_prior(const Sender<T>& sender, const Receiver<T>& receiver, std::span<const Meaning> meanings,
                      Strategy strategy, Rng& eval_rng);

}  // namespace eclab
