#include "eclab/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "eclab/ops.hpp"

namespace eclab {

std::string to_string(BetaMode m) { return m == BetaMode::Off ? "off" : "rewo"; }

BetaMode parse_beta_mode(const std::string& name) {
  if (name == "off") return BetaMode::Off;
  if (name == "rewo") return BetaMode::Rewo;
  throw Error("unknown beta mode '" + name + "' (expected off or rewo)");
}

RewoState rewo_init(const RewoConfig& config) {
  RewoState s;
  s.config = config;
  s.beta = config.beta0;
  return s;
}

RewoState rewo_update(RewoState state, double loss) {
  if (!std::isfinite(loss)) throw Error("rewo_update: non-finite reconstruction loss");
  const auto& c = state.config;
  state.loss_ema = state.has_ema ? c.ema_decay * state.loss_ema + (1.0 - c.ema_decay) * loss : loss;
  state.has_ema = true;
  state.beta = std::clamp(state.beta * std::exp(c.nu * (c.kappa - state.loss_ema)), c.beta0, 1.0);
  return state;
}

bool run_filter(double final_beta, double threshold) { return final_beta >= threshold; }

BaselineState baseline_update(BaselineState state, double mean_reward) {
  state.value = state.initialized ? state.decay * state.value + (1.0 - state.decay) * mean_reward : mean_reward;
  state.initialized = true;
  return state;
}

double kl_estimate(std::span<const double> log_sender, std::span<const double> log_prior) {
  if (log_sender.size() != log_prior.size()) {
    throw Error("kl_estimate: " + std::to_string(log_sender.size()) + " sender values vs " +
                std::to_string(log_prior.size()) + " prior values");
  }
  if (log_sender.empty()) throw Error("kl_estimate: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < log_sender.size(); ++i) acc += log_sender[i] - log_prior[i];
  return acc / static_cast<double>(log_sender.size());
}

template <typename T>
Var<T> sender_surrogate(Var<T> log_sender, std::span<const double> rewards, double baseline, Var<T> entropy,
                        double entropy_coef) {
  const std::size_t B = log_sender.rows();
  if (rewards.size() != B) throw Error("sender_surrogate: reward count does not match the batch");
  Tensor<T> advantage = Tensor<T>::matrix(B, 1);
  for (std::size_t b = 0; b < B; ++b) advantage[b] = static_cast<T>(rewards[b] - baseline);
  Var<T> pg = ops::mean(log_sender * log_sender.tape->constant(std::move(advantage)));
  Var<T> bonus = ops::scale(ops::mean(entropy), static_cast<T>(entropy_coef));
  return -(pg + bonus);
}

template <typename T>
Game<T>::Game(const MeaningSpace& space, const GameConfig& config, Rng& init)
    : config_(config), sender_(space, config.agent, init), receiver_(space, config.agent, init) {
  sender_adam_.config = config.adam;
  receiver_adam_.config = config.adam;
  rewo_ = rewo_init(config.rewo);
  baseline_.decay = config.baseline_decay;
}

template <typename T>
BatchResult<T> Game<T>::play_batch(std::span<const Meaning> batch, Rng& sender_rng, Rng& branching_rng) const {
  const std::size_t B = batch.size();
  const double beta = this->beta();
  Tape<T> tape;
  auto sp = sender_.params().bind(tape);
  auto rp = receiver_.params().bind(tape);

  auto state = sender_.encode(tape, sp, batch);
  auto emitted = sender_.emit(tape, sp, state, EmitMode::Sample, &sender_rng);
  std::vector<std::vector<int>> messages;
  messages.reserve(B);
  for (const auto& m : emitted.messages) messages.push_back(m.symbols);

  auto enc = receiver_.encode(tape, rp, messages, config_.agent.strategy, &branching_rng);
  Var<T> log_r = receiver_.reconstruct(tape, rp, enc.final, batch);
  std::optional<Var<T>> log_p;
  if (receiver_.has_prior()) log_p = receiver_.message_log_prior(tape, rp, messages, enc.reads);

  BatchResult<T> result;
  auto& st = result.stats;
  std::vector<double> lr(B), ls(B), lp(B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    lr[b] = static_cast<double>(log_r.value()[b]);
    ls[b] = emitted.messages[b].log_prob;
    if (log_p) lp[b] = static_cast<double>(log_p->value()[b]);
  }
  result.rewards.resize(B);
  double reward_sum = 0.0, lr_sum = 0.0, lp_sum = 0.0, h_sum = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    result.rewards[b] = lr[b] - (beta > 0.0 ? beta * (ls[b] - lp[b]) : 0.0);
    reward_sum += result.rewards[b];
    lr_sum += lr[b];
    lp_sum += lp[b];
    h_sum += emitted.messages[b].entropy;
  }
  const double n = static_cast<double>(B);
  st.recon_log_lik = lr_sum / n;
  st.entropy = h_sum / n;
  st.log_prior = log_p ? lp_sum / n : std::numeric_limits<double>::quiet_NaN();
  st.kl = log_p ? kl_estimate(ls, lp) : std::numeric_limits<double>::quiet_NaN();
  st.beta = beta;
  st.reward = reward_sum / n;
  st.baseline = baseline_.initialized ? baseline_.value : st.reward;

  Var<T> entropy = emitted.entropy;
  if (config_.entropy_per_position) {
    Tensor<T> inv_len = Tensor<T>::matrix(B, 1);
    for (std::size_t b = 0; b < B; ++b) inv_len[b] = T{1} / static_cast<T>(messages[b].size());
    entropy = entropy * tape.constant(std::move(inv_len));
  }
  Var<T> receiver_objective = log_r;
  if (log_p && config_.beta_mode == BetaMode::Rewo) receiver_objective = log_r + ops::scale(*log_p, static_cast<T>(beta));
  Var<T> loss = sender_surrogate(emitted.log_prob, result.rewards, st.baseline, entropy, config_.entropy_coef) -
                ops::mean(receiver_objective);
  if (!std::isfinite(static_cast<double>(loss.value().item()))) {
    std::ostringstream msg;
    msg << "play_batch: non-finite loss (mean log R = " << st.recon_log_lik << ", mean log S-log P = " << st.kl
        << ", beta = " << beta << ")";
    throw Error(msg.str());
  }
  tape.backward(loss);
  for (auto v : sp) result.sender_grads.push_back(tape.grad(v));
  for (auto v : rp) result.receiver_grads.push_back(tape.grad(v));
  result.messages = std::move(emitted.messages);
  return result;
}

template <typename T>
StepStats Game<T>::train_step(std::span<const Meaning> batch, Rng& sender_rng, Rng& branching_rng) {
  auto result = play_batch(batch, sender_rng, branching_rng);
  baseline_ = baseline_update(baseline_, result.stats.reward);
  adam_step<T>(sender_.params().values(), result.sender_grads, sender_adam_);
  adam_step<T>(receiver_.params().values(), result.receiver_grads, receiver_adam_);
  if (config_.beta_mode == BetaMode::Rewo) rewo_ = rewo_update(rewo_, -result.stats.recon_log_lik);
  return result.stats;
}

template Var<float> sender_surrogate<float>(Var<float>, std::span<const double>, double, Var<float>, double);
template Var<double> sender_surrogate<double>(Var<double>, std::span<const double>, double, Var<double>, double);
template class Game<float>;
template class Game<double>;

}  // namespace eclab
