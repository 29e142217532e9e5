#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "eclab/meanings.hpp"
#include "eclab/neural_stack.hpp"
#include "eclab/parameters.hpp"
#include "eclab/rng.hpp"

namespace eclab {

inline constexpr int kEos = 0;

enum class Strategy { Learned, LeftBranching, RandomBranching };
enum class RandomResample { PerStep, PerMessage };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);
std::string to_string(RandomResample r);
RandomResample parse_random_resample(const std::string& name);

struct AgentConfig {
  int vocab = 4;  // including EOS = 0
  int max_len = 8;
  int hidden = 512;
  int embedding = 32;
  int stack_width = 0;  // 0 means "same as hidden"
  StackCaps caps;
  Strategy strategy = Strategy::Learned;
  RandomResample resample = RandomResample::PerStep;
  bool prior_head = true;

  int width() const noexcept { return stack_width > 0 ? stack_width : hidden; }
};

/// Shape of the meaning space an agent is built for.
struct MeaningShape {
  MeaningKind kind = MeaningKind::AttrVal;
  int n_att = 0;
  int n_val = 0;
  int k = 0;
  int l_max = 0;

  static MeaningShape of(const MeaningSpace& space) {
    return {space.kind, space.n_att, space.n_val, space.k, space.l_max};
  }
};

/// A message as emitted or scored by the sender. Symbols stop at the first
/// EOS (kept) or at max_len without one.
struct Message {
  std::vector<int> symbols;
  std::vector<double> step_log_probs;
  double log_prob = 0.0;
  double entropy = 0.0;
};

template <typename T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

/// Single-layer LSTM cell; gate order i, f, g, o in one fused weight.
template <typename T>
struct LstmCell {
  std::size_t weight = 0;  // [input + hidden, 4 * hidden]
  std::size_t bias = 0;    // [1, 4 * hidden]
  int input = 0;
  int hidden = 0;

  static LstmCell create(ParameterSet<T>& params, const std::string& name, int input, int hidden, Rng& rng);
  LstmState<T> step(std::span<const Var<T>> p, Var<T> x, const LstmState<T>& state) const;
};

enum class EmitMode { Sample, Greedy, Forced };

template <typename T>
struct SenderOutput {
  std::vector<Message> messages;
  Var<T> log_prob;  // [batch, 1], sum over emitted positions incl. EOS
  Var<T> entropy;   // [batch, 1], sum of per-position categorical entropies
};

template <typename T>
class Sender {
 public:
  Sender(const MeaningSpace& space, const AgentConfig& config, Rng& init);

  ParameterSet<T>& params() noexcept { return params_; }
  const ParameterSet<T>& params() const noexcept { return params_; }
  const AgentConfig& config() const noexcept { return config_; }

  /// Initial recurrent state from meanings (linear map of one-hots, or an
  /// LSTM over Dyck tokens starting from a learned state).
  LstmState<T> encode(Tape<T>& tape, std::span<const Var<T>> p, std::span<const Meaning> meanings) const;

  /// Autoregressive emission; `forced` supplies the messages in Forced mode
  /// and `rng` is required in Sample mode.
  SenderOutput<T> emit(Tape<T>& tape, std::span<const Var<T>> p, const LstmState<T>& state, EmitMode mode,
                       Rng* rng = nullptr, std::span<const std::vector<int>> forced = {}) const;

  /// Teacher-forced log S(m|x) per row, [batch, 1].
  Var<T> score(Tape<T>& tape, std::span<const Var<T>> p, const LstmState<T>& state,
               std::span<const std::vector<int>> messages) const;

 private:
  MeaningShape shape_;
  AgentConfig config_;
  ParameterSet<T> params_;
  std::size_t init_map_ = 0, init_bias_ = 0;      // attribute-value encoder
  std::size_t token_embedding_ = 0, init_h_ = 0, init_c_ = 0;  // Dyck encoder
  LstmCell<T> meaning_lstm_;
  std::size_t start_ = 0, symbol_embedding_ = 0, out_weight_ = 0, out_bias_ = 0;
  LstmCell<T> message_lstm_;
};

/// Directive projections bound to a tape: v = tanh(h Wv + bv) and the three
/// strength logits h Ws + bs, ordered (pop, push, read).
template <typename T>
struct DirectiveHead {
  Var<T> value_weight;
  Var<T> value_bias;
  Var<T> strength_weight;
  Var<T> strength_bias;
};

/// Per-step stack directives. This is the only place the strategies differ:
/// Learned scales sigmoids by the caps, LeftBranching fixes (1, 1, 1), and
/// RandomBranching draws each strength uniformly from [0, cap]. Fixed and
/// random strengths are constants. `fixed_draws` ([batch, 3]) replaces fresh
/// random draws when resampling per message.
template <typename T>
StackDirectives<T> make_directives(Tape<T>& tape, const DirectiveHead<T>& head, Strategy strategy, Var<T> hidden,
                                   Rng* rng, const StackCaps& caps, const Tensor<T>* fixed_draws = nullptr);

/// [batch, 3] uniform draws from [0, caps.pop] x [0, caps.push] x [0, caps.read].
template <typename T>
Tensor<T> draw_random_strengths(std::size_t batch, Rng& rng, const StackCaps& caps);

template <typename T>
struct ReceiverEncoding {
  LstmState<T> final;          // state after each row's last symbol
  std::vector<Var<T>> reads;   // r_0 (zeros) .. r_T, each [batch, width]
  std::vector<Var<T>> values;  // v_1 .. v_T
  std::vector<Tensor<T>> directives;  // per step, [batch, 3] = (u, d, r) before masking
  std::vector<std::size_t> lengths;
};

template <typename T>
class Receiver {
 public:
  Receiver(const MeaningSpace& space, const AgentConfig& config, Rng& init);

  ParameterSet<T>& params() noexcept { return params_; }
  const ParameterSet<T>& params() const noexcept { return params_; }
  const AgentConfig& config() const noexcept { return config_; }
  bool has_prior() const noexcept { return config_.prior_head; }

  /// Runs the Stack-LSTM controller over each message up to and including
  /// its terminating symbol.
  ReceiverEncoding<T> encode(Tape<T>& tape, std::span<const Var<T>> p, std::span<const std::vector<int>> messages,
                             Strategy strategy, Rng* rng) const;

  /// Teacher-forced log R(x|m).
  Var<T> reconstruct(Tape<T>& tape, std::span<const Var<T>> p, const LstmState<T>& final,
                     std::span<const Meaning> meanings) const;

  /// Argmax decode per row.
  std::vector<Meaning> decode(Tape<T>& tape, std::span<const Var<T>> p, const LstmState<T>& final) const;

  /// log P_prior(M_t | M_<t) from r_{t-1}: [batch, vocab], normalized.
  Var<T> prior_step(std::span<const Var<T>> p, Var<T> previous_read) const;

  /// sum_t log P_prior(m_t | m_<t) over emitted symbols incl. EOS, [batch, 1].
  Var<T> message_log_prior(Tape<T>& tape, std::span<const Var<T>> p, std::span<const std::vector<int>> messages,
                           std::span<const Var<T>> reads) const;

 private:
  MeaningShape shape_;
  AgentConfig config_;
  ParameterSet<T> params_;
  std::size_t symbol_embedding_ = 0;
  LstmCell<T> controller_;
  std::size_t value_weight_ = 0, value_bias_ = 0, strength_weight_ = 0, strength_bias_ = 0;
  std::size_t head_weight_ = 0, head_bias_ = 0;  // attribute-value heads
  std::size_t decoder_start_ = 0, decoder_embedding_ = 0, decoder_out_weight_ = 0, decoder_out_bias_ = 0;
  LstmCell<T> decoder_;
  std::size_t prior_weight_ = 0, prior_bias_ = 0;
};

extern template class Sender<float>;
extern template class Sender<double>;
extern template class Receiver<float>;
extern template class Receiver<double>;

}  // namespace eclab
