#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "eclab/adam.hpp"
#include "eclab/agents.hpp"

namespace eclab {

enum class BetaMode { Off, Rewo };

std::string to_string(BetaMode m);
BetaMode parse_beta_mode(const std::string& name);

/// Multiplicative constrained update of the KL weight:
/// beta <- clip(beta * exp(nu * (kappa - ema)), beta0, 1).
struct RewoConfig {
  double beta0 = 0.001;
  double kappa = 0.1;  // reconstruction-loss target, nats per meaning
  double nu = 0.01;
  double ema_decay = 0.99;
};

struct RewoState {
  RewoConfig config;
  double beta = 0.001;
  double loss_ema = 0.0;
  bool has_ema = false;
};

RewoState rewo_init(const RewoConfig& config);
RewoState rewo_update(RewoState state, double batch_mean_reconstruction_loss);

/// Kept iff the final beta reached `threshold` or higher.
inline constexpr double kKeepBetaThreshold = 0.95;
bool run_filter(double final_beta, double threshold = kKeepBetaThreshold);

/// Exponential moving average of the mean batch reward, seeded with the first
/// batch mean.
struct BaselineState {
  double decay = 0.95;
  double value = 0.0;
  bool initialized = false;
};

BaselineState baseline_update(BaselineState state, double batch_mean_reward);

/// Single-sample Monte-Carlo KL(S || P): mean(log S - log P).
double kl_estimate(std::span<const double> log_sender, std::span<const double> log_prior);

struct GameConfig {
  AgentConfig agent;
  BetaMode beta_mode = BetaMode::Off;
  double entropy_coef = 0.5;
  /// Divide each message's summed entropy by its length before the bonus.
  bool entropy_per_position = false;
  int batch_size = 8192;
  AdamConfig adam;  // learning rate and L2 both 1e-4
  RewoConfig rewo;
  double baseline_decay = 0.95;
};

struct StepStats {
  double recon_log_lik = 0.0;  // mean log R(x|m)
  double entropy = 0.0;        // mean summed per-position sender entropy
  double kl = 0.0;             // mean log S - log P (NaN without a prior head)
  double log_prior = 0.0;      // mean log P_prior(m)
  double beta = 0.0;
  double reward = 0.0;         // mean G
  double baseline = 0.0;       // value subtracted from G this batch
};

/// Sender surrogate loss whose gradient is the REINFORCE estimate plus the
/// entropy bonus: -mean((G - baseline) * log S) - coef * mean(H).
template <typename T>
Var<T> sender_surrogate(Var<T> log_sender, std::span<const double> rewards, double baseline, Var<T> entropy,
                        double entropy_coef);

template <typename T>
struct BatchResult {
  StepStats stats;
  std::vector<double> rewards;
  std::vector<Message> messages;
  std::vector<Tensor<T>> sender_grads;
  std::vector<Tensor<T>> receiver_grads;
};

/// Sender, receiver and their shared optimizer.
template <typename T>
class Game {
 public:
  Game(const MeaningSpace& space, const GameConfig& config, Rng& init);

  const GameConfig& config() const noexcept { return config_; }
  Sender<T>& sender() noexcept { return sender_; }
  const Sender<T>& sender() const noexcept { return sender_; }
  Receiver<T>& receiver() noexcept { return receiver_; }
  const Receiver<T>& receiver() const noexcept { return receiver_; }
  RewoState& rewo() noexcept { return rewo_; }
  const RewoState& rewo() const noexcept { return rewo_; }
  BaselineState& baseline() noexcept { return baseline_; }
  double beta() const noexcept { return config_.beta_mode == BetaMode::Rewo ? rewo_.beta : 0.0; }

  /// Forward and backward on one batch without touching any state.
  /// Receiver/prior maximize mean(log R + beta log P); the sender follows
  /// REINFORCE on G = log R - beta (log S - log P) treated as a constant.
  BatchResult<T> play_batch(std::span<const Meaning> batch, Rng& sender_rng, Rng& branching_rng) const;

  /// play_batch, then the baseline, Adam and REWO updates.
  StepStats train_step(std::span<const Meaning> batch, Rng& sender_rng, Rng& branching_rng);

 private:
  GameConfig config_;
  Sender<T> sender_;
  Receiver<T> receiver_;
  AdamState<T> sender_adam_;
  AdamState<T> receiver_adam_;
  RewoState rewo_;
  BaselineState baseline_;
};

extern template class Game<float>;
extern template class Game<double>;

}  // namespace eclab
